//! Data-parallel map helpers with a sequential fallback.
//!
//! Every output element is an independent function of the index, so the
//! parallel and sequential paths produce bit-identical results; callers rely
//! on that for the determinism contract. Small inputs run sequentially even
//! with the `parallel` feature on, since fork/join overhead dwarfs the work.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many elements a parallel map is not worth scheduling.
#[cfg(feature = "parallel")]
const PAR_CUTOFF: usize = 512;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n < PAR_CUTOFF {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    // cells are coarse-grained (attack simulations), always worth spreading
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    F: Fn(usize) -> Result<T, E>,
{
    (0..n).map(f).collect()
}

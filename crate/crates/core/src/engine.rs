//! Iterative reputation/ranking engine.
//!
//! Rankings are reputation-weighted averages of the ratings each item
//! received; reputations penalize a user's mean absolute discordance from
//! the current rankings:
//!
//! ```text
//! r_i = sum_{u in U_i} R_ui * c_u / sum_{u in U_i} c_u
//! c_u = 1 - (lambda / |I_u|) * sum_{i in I_u} |R_ui - r_i|
//! ```
//!
//! Alternating the two updates from `c_u = 1` converges at an exponential
//! rate; with `lambda` in ]0,1[ every reputation stays in ]0,1].
//!
//! Both update steps are data-parallel maps over immutable inputs. Each
//! output element accumulates its sum in a fixed index order, so results are
//! bit-identical regardless of thread count.

use thiserror::Error;

use crate::model::{ItemIdx, RatingsMatrix, UserIdx};
use crate::par;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("lambda must lie strictly between 0 and 1, got {0}")]
    InvalidLambda(f64),
    #[error("initial reputation must lie in ]0, 1], got {0}")]
    InvalidInitialReputation(f64),
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("convergence tolerance must be finite and non-negative, got {0}")]
    InvalidTolerance(f64),
    #[error("ratings matrix has no entries")]
    EmptyMatrix,
    #[error("user `{user}` has nonpositive reputation {value}")]
    NonPositiveReputation { user: String, value: f64 },
    #[error("user `{user}` rated items but has no reputation")]
    MissingReputation { user: String },
    #[error("item `{item}` has raters but no ranking")]
    MissingRanking { item: String },
    #[error("vector length {got} does not match matrix dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Parameters of the iterative scheme.
///
/// `convergence_tol = 0` disables early stopping, so the engine runs exactly
/// `max_iterations` rounds; see [`EngineConfig::exact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Discordance penalty, strictly between 0 and 1.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once the max per-user reputation change falls below this.
    pub convergence_tol: f64,
    pub initial_reputation: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            max_iterations: 100,
            convergence_tol: 1e-9,
            initial_reputation: 1.0,
        }
    }
}

impl EngineConfig {
    /// Runs exactly `iterations` rounds with no early stopping.
    pub fn exact(lambda: f64, iterations: usize) -> Self {
        Self {
            lambda,
            max_iterations: iterations,
            convergence_tol: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(EngineError::InvalidLambda(self.lambda));
        }
        if !(self.initial_reputation > 0.0 && self.initial_reputation <= 1.0) {
            return Err(EngineError::InvalidInitialReputation(self.initial_reputation));
        }
        if self.max_iterations == 0 {
            return Err(EngineError::NoIterations);
        }
        if !(self.convergence_tol >= 0.0 && self.convergence_tol.is_finite()) {
            return Err(EngineError::InvalidTolerance(self.convergence_tol));
        }
        Ok(())
    }
}

/// Per-user reputation, indexed like the matrix users. `None` marks a user
/// with no ratings, excluded from the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationVector {
    values: Vec<Option<f64>>,
}

impl ReputationVector {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, u: UserIdx) -> Option<f64> {
        self.values.get(u.0 as usize).copied().flatten()
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn iter_present(&self) -> impl Iterator<Item = (UserIdx, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(u, v)| v.map(|v| (UserIdx(u as u32), v)))
    }

    /// Users excluded from the scheme (no ratings, hence no reputation).
    pub fn without_reputation(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Per-item relevance score, indexed like the matrix items. `None` marks an
/// unrated item.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingVector {
    values: Vec<Option<f64>>,
}

impl RankingVector {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: ItemIdx) -> Option<f64> {
        self.values.get(i.0 as usize).copied().flatten()
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn iter_present(&self) -> impl Iterator<Item = (ItemIdx, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ItemIdx(i as u32), v)))
    }

    pub fn unrated(&self) -> Vec<ItemIdx> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(ItemIdx(i as u32)))
            .collect()
    }
}

pub struct ComputeOutcome {
    pub reputations: ReputationVector,
    pub rankings: RankingVector,
    pub iterations: usize,
}

fn check_reputations(matrix: &RatingsMatrix, c: &ReputationVector) -> Result<(), EngineError> {
    if c.len() != matrix.n_users() {
        return Err(EngineError::DimensionMismatch {
            expected: matrix.n_users(),
            got: c.len(),
        });
    }
    for (u, slot) in c.as_slice().iter().enumerate() {
        let user = UserIdx(u as u32);
        if matrix.ratings_of(user).is_empty() {
            continue;
        }
        match slot {
            Some(v) if *v > 0.0 => {}
            Some(v) => {
                return Err(EngineError::NonPositiveReputation {
                    user: matrix.user_id(user).to_owned(),
                    value: *v,
                })
            }
            None => {
                return Err(EngineError::MissingReputation {
                    user: matrix.user_id(user).to_owned(),
                })
            }
        }
    }
    Ok(())
}

/// Reputation-weighted average rating per item. Items nobody rated get no
/// ranking. Every rater must carry a strictly positive reputation.
pub fn update_rankings(
    matrix: &RatingsMatrix,
    c: &ReputationVector,
) -> Result<RankingVector, EngineError> {
    check_reputations(matrix, c)?;
    let reps = c.as_slice();
    let values = par::map_indexed(matrix.n_items(), |i| {
        let raters = matrix.raters_of(ItemIdx(i as u32));
        if raters.is_empty() {
            return None;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(u, rating) in raters {
            let w = reps[u.0 as usize].expect("validated rater reputation");
            num += rating * w;
            den += w;
        }
        Some(num / den)
    });
    Ok(RankingVector::new(values))
}

/// Discordance-penalized reputation per user. Users with no ratings get no
/// reputation; every rated item must carry a ranking.
pub fn update_reputations(
    matrix: &RatingsMatrix,
    rankings: &RankingVector,
    lambda: f64,
) -> Result<ReputationVector, EngineError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(EngineError::InvalidLambda(lambda));
    }
    if rankings.len() != matrix.n_items() {
        return Err(EngineError::DimensionMismatch {
            expected: matrix.n_items(),
            got: rankings.len(),
        });
    }
    for (i, slot) in rankings.as_slice().iter().enumerate() {
        let item = ItemIdx(i as u32);
        if slot.is_none() && !matrix.raters_of(item).is_empty() {
            return Err(EngineError::MissingRanking {
                item: matrix.item_id(item).to_owned(),
            });
        }
    }
    let ranks = rankings.as_slice();
    let values = par::map_indexed(matrix.n_users(), |u| {
        let ratings = matrix.ratings_of(UserIdx(u as u32));
        if ratings.is_empty() {
            return None;
        }
        let mut discord = 0.0;
        for &(i, rating) in ratings {
            let r = ranks[i.0 as usize].expect("validated item ranking");
            discord += (rating - r).abs();
        }
        Some(1.0 - lambda * discord / ratings.len() as f64)
    });
    Ok(ReputationVector::new(values))
}

/// Runs the alternating scheme from a uniform initial reputation until the
/// max per-user change drops below `convergence_tol` or `max_iterations` is
/// reached. Pure function of its inputs; repeated runs are bit-identical.
pub fn compute(matrix: &RatingsMatrix, cfg: &EngineConfig) -> Result<ComputeOutcome, EngineError> {
    cfg.validate()?;
    if matrix.n_entries() == 0 {
        return Err(EngineError::EmptyMatrix);
    }
    let mut reputations = ReputationVector::new(
        (0..matrix.n_users())
            .map(|u| {
                (!matrix.ratings_of(UserIdx(u as u32)).is_empty())
                    .then_some(cfg.initial_reputation)
            })
            .collect(),
    );
    let mut rankings = RankingVector::new(vec![None; matrix.n_items()]);
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        rankings = update_rankings(matrix, &reputations)?;
        let next = update_reputations(matrix, &rankings, cfg.lambda)?;
        let delta = max_change(&reputations, &next);
        reputations = next;
        iterations += 1;
        if delta < cfg.convergence_tol {
            break;
        }
    }
    Ok(ComputeOutcome {
        reputations,
        rankings,
        iterations,
    })
}

fn max_change(a: &ReputationVector, b: &ReputationVector) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some((x - y).abs()),
            _ => None,
        })
        .fold(0.0, f64::max)
}

/// Arithmetic-average baseline: every user weighs the same.
pub fn arithmetic_average(matrix: &RatingsMatrix) -> RankingVector {
    let values = par::map_indexed(matrix.n_items(), |i| {
        let raters = matrix.raters_of(ItemIdx(i as u32));
        if raters.is_empty() {
            return None;
        }
        let sum: f64 = raters.iter().map(|&(_, r)| r).sum();
        Some(sum / raters.len() as f64)
    });
    RankingVector::new(values)
}

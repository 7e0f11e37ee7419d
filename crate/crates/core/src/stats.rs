//! Evaluation statistics: disparate reputation, two-sample location test,
//! tie-corrected Kendall tau, and RMSE.

use thiserror::Error;

use crate::engine::{RankingVector, ReputationVector};
use crate::model::{AttributeSchema, GroupPartition, UserIdx};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("user index {0} has no reputation")]
    MissingReputation(u32),
    #[error("sample `{which}` has {got} values; at least {min} required")]
    SampleTooSmall {
        which: &'static str,
        got: usize,
        min: usize,
    },
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rankings share only {0} items; at least 2 required")]
    IntersectionTooSmall(usize),
    #[error("tau undefined: one ranking has all values tied")]
    DegenerateRanking,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

fn collect_group(
    c: &ReputationVector,
    group: &[UserIdx],
    which: &'static str,
) -> Result<Vec<f64>, StatsError> {
    if group.is_empty() {
        return Err(StatsError::EmptyGroup(which.to_owned()));
    }
    group
        .iter()
        .map(|&u| c.get(u).ok_or(StatsError::MissingReputation(u.0)))
        .collect()
}

/// Difference between the average reputations of two user groups,
/// `delta(a, b) = mu_a - mu_b`. Anti-commutes under argument swap.
pub fn disparate_reputation(
    c: &ReputationVector,
    group_a: &[UserIdx],
    group_b: &[UserIdx],
) -> Result<f64, StatsError> {
    let a = collect_group(c, group_a, "a")?;
    let b = collect_group(c, group_b, "b")?;
    Ok(mean(&a) - mean(&b))
}

/// Which two-sample t statistic the location test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LtVariant {
    /// Unequal-variance (Welch) statistic with Welch-Satterthwaite degrees
    /// of freedom. Default: group sizes and variances differ a lot here.
    #[default]
    Welch,
    /// Classic pooled-variance statistic with n_a + n_b - 2 degrees.
    PooledVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtResult {
    pub statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
}

/// Two-sample location test of equal means, two-sided. Rejects the null
/// when `p < alpha`.
pub fn location_test(
    sample_a: &[f64],
    sample_b: &[f64],
    alpha: f64,
) -> Result<LtResult, StatsError> {
    location_test_with(sample_a, sample_b, alpha, LtVariant::default())
}

pub fn location_test_with(
    sample_a: &[f64],
    sample_b: &[f64],
    alpha: f64,
    variant: LtVariant,
) -> Result<LtResult, StatsError> {
    if sample_a.len() < 2 {
        return Err(StatsError::SampleTooSmall {
            which: "a",
            got: sample_a.len(),
            min: 2,
        });
    }
    if sample_b.len() < 2 {
        return Err(StatsError::SampleTooSmall {
            which: "b",
            got: sample_b.len(),
            min: 2,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (ma, mb) = (mean(sample_a), mean(sample_b));
    let (va, vb) = (sample_variance(sample_a, ma), sample_variance(sample_b, mb));
    let diff = ma - mb;
    let (se2, df) = match variant {
        LtVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = if se2 == 0.0 {
                na + nb - 2.0
            } else {
                se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
            };
            (se2, df)
        }
        LtVariant::PooledVariance => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (pooled * (1.0 / na + 1.0 / nb), df)
        }
    };
    let (statistic, p_value) = if se2 == 0.0 {
        // No spread at all: equal means are a perfect null, different means
        // a sure rejection.
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = diff / se2.sqrt();
        (t, student_t_two_sided_p(t, df))
    };
    Ok(LtResult {
        statistic,
        degrees_of_freedom: df,
        p_value,
        reject: p_value < alpha,
        alpha,
    })
}

/// Two-sided p-value of a t statistic: `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Regularized incomplete beta function `I_x(a, b)` via the Lentz continued
/// fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-13 for
/// positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, c) in COEF.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// One upper-triangle cell of a disparate-reputation table.
#[derive(Debug, Clone, PartialEq)]
pub struct DrCell {
    pub a: usize,
    pub b: usize,
    pub delta: f64,
    /// `None` when either group is too small for the location test.
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
}

/// Pairwise disparate reputation with location-test decisions over the
/// groups of a partition, upper triangle in declared class order.
#[derive(Debug, Clone)]
pub struct DrMatrix {
    pub classes: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub cells: Vec<DrCell>,
    pub alpha: f64,
}

impl DrMatrix {
    pub fn cell(&self, a: usize, b: usize) -> Option<&DrCell> {
        self.cells.iter().find(|c| c.a == a && c.b == b)
    }
}

pub fn dr_matrix(
    c: &ReputationVector,
    partition: &GroupPartition,
    schema: &AttributeSchema,
    alpha: f64,
) -> Result<DrMatrix, StatsError> {
    if partition.n_groups() < 2 {
        return Err(StatsError::TooFewGroups(partition.n_groups()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    let mut classes = Vec::new();
    let mut group_sizes = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (key, members) in partition.groups() {
        classes.push(partition.key_labels(schema, key).join(" & "));
        group_sizes.push(members.len());
        samples.push(collect_group(c, members, "partition group")?);
    }
    let mut cells = Vec::new();
    for a in 0..samples.len() {
        for b in (a + 1)..samples.len() {
            let delta = mean(&samples[a]) - mean(&samples[b]);
            let lt = if samples[a].len() >= 2 && samples[b].len() >= 2 {
                Some(location_test(&samples[a], &samples[b], alpha)?)
            } else {
                None
            };
            cells.push(DrCell {
                a,
                b,
                delta,
                p_value: lt.map(|l| l.p_value),
                reject: lt.map(|l| l.reject),
            });
        }
    }
    Ok(DrMatrix {
        classes,
        group_sizes,
        cells,
        alpha,
    })
}

/// Tie-corrected Kendall rank correlation (tau-b) between two rankings,
/// computed over the items ranked in both.
pub fn kendall_tau(r1: &RankingVector, r2: &RankingVector) -> Result<f64, StatsError> {
    if r1.len() != r2.len() {
        return Err(StatsError::LengthMismatch(r1.len(), r2.len()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in r1.as_slice().iter().zip(r2.as_slice()) {
        if let (Some(a), Some(b)) = (a, b) {
            xs.push(*a);
            ys.push(*b);
        }
    }
    if xs.len() < 2 {
        return Err(StatsError::IntersectionTooSmall(xs.len()));
    }
    tau_b(&xs, &ys)
}

/// Tau-b on paired values: `(C - D) / sqrt((n0 - tx) (n0 - ty))` with tie
/// corrections, via Knight's O(n log n) algorithm.
pub fn tau_b(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::IntersectionTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&p, &q| xs[p].total_cmp(&xs[q]).then(ys[p].total_cmp(&ys[q])));

    let pairs = |t: u64| t * (t - 1) / 2;
    // Tied-in-x and tied-in-both pair counts from the (x, y)-sorted order.
    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in 1..n {
        let (prev, curr) = (order[w - 1], order[w]);
        if xs[curr] == xs[prev] {
            run_x += 1;
            if ys[curr] == ys[prev] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            run_x = 1;
            tied_xy += pairs(run_xy);
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    // Merge sort the y-sequence, counting strict inversions (= discordant
    // pairs; equal ys take the left element first and count nothing).
    let mut seq: Vec<f64> = order.iter().map(|&p| ys[p]).collect();
    let mut buf = vec![0.0f64; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = (mid + width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if seq[j] < seq[i] {
                    buf[k] = seq[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = seq[i];
                    i += 1;
                }
                k += 1;
            }
            while i < mid {
                buf[k] = seq[i];
                i += 1;
                k += 1;
            }
            while j < hi {
                buf[k] = seq[j];
                j += 1;
                k += 1;
            }
            seq[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in 1..n {
        if seq[w] == seq[w - 1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    let n0 = pairs(n as u64);
    if n0 == tied_x || n0 == tied_y {
        return Err(StatsError::DegenerateRanking);
    }
    let con_minus_dis = n0 as i64 - tied_x as i64 - tied_y as i64 + tied_xy as i64
        - 2 * swaps as i64;
    // symmetric tie structure (e.g. identical or reversed rankings) gets an
    // exact denominator, so tau is exactly +/-1 there
    let (d1, d2) = (n0 - tied_x, n0 - tied_y);
    let denominator = if d1 == d2 {
        d1 as f64
    } else {
        (d1 as f64).sqrt() * (d2 as f64).sqrt()
    };
    let tau = con_minus_dis as f64 / denominator;
    Ok(tau.clamp(-1.0, 1.0))
}

/// Root mean squared difference between two equal-length vectors.
pub fn rmse(u: &[f64], v: &[f64]) -> Result<f64, StatsError> {
    if u.len() != v.len() {
        return Err(StatsError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(StatsError::SampleTooSmall {
            which: "u",
            got: 0,
            min: 1,
        });
    }
    let ss: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / u.len() as f64).sqrt())
}

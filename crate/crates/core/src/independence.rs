//! Reputation independence: per-group recentring of reputations so that
//! their distributions become statistically indistinguishable across
//! demographic groups.
//!
//! For each group `l` of a partition, with mean `mu_l` and standard
//! deviation `sigma_l`, members are mapped through the positive affine
//! transform
//!
//! ```text
//! c'_u = mu + (c_u - mu_l) * sigma / sigma_l
//! ```
//!
//! where the targets are `mu = min_l mu_l` and `sigma = min_l sigma_l`.
//! Minimum targets keep the rescaled reputations inside ]0, 1]. After the
//! transform every group has mean `mu` and std `sigma`, so any union of
//! groups (in particular, the users of one class of one attribute, when the
//! partition keys every attribute jointly) also has mean `mu`: disparate
//! reputation vanishes for every class of every keyed attribute.
//!
//! Recentring a single attribute equalizes that attribute's classes only;
//! biases on other attributes survive. Keying the partition by the tuple of
//! all sensitive attributes (the meta-attribute partition) removes them all
//! at once.
//!
//! The literal moment definitions differ between sources (global vs. minimum
//! targets, population vs. sample std); [`RecenterOptions`] exposes both so
//! the defaults can be cross-checked. Defaults reproduce the worked
//! reference values used in the golden tests.

use thiserror::Error;

use crate::engine::{self, EngineError, RankingVector, ReputationVector};
use crate::model::{
    build_partition, AttributeSchema, GroupPartition, ModelError, RatingsMatrix, UserProfiles,
};

#[derive(Debug, Error)]
pub enum IndependenceError {
    #[error("partition has no groups")]
    EmptyPartition,
    #[error("group `{0}` has a member without a reputation")]
    MissingReputation(String),
    #[error(
        "recentred reputation {value} for user `{user}` escapes ]0, 1]; \
         input reputations violate the scheme's range"
    )]
    RangeViolation { user: String, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Which moments the recentring targets use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// `mu = min_l mu_l`, `sigma = min_l sigma_l` (over groups of size >= 2
    /// for the std). Keeps outputs in ]0, 1].
    #[default]
    MinOverGroups,
    /// Global mean/std of all covered users. Provided for sensitivity
    /// analysis; may push outputs outside ]0, 1].
    Global,
}

/// Divisor used for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdMode {
    /// Sample standard deviation (divisor n-1).
    #[default]
    Sample,
    /// Population standard deviation (divisor n).
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecenterOptions {
    pub targets: TargetMode,
    pub std: StdMode,
}

/// Per-group moments plus the recentring targets derived from them.
#[derive(Debug, Clone)]
pub struct GroupStats {
    groups: Vec<GroupStat>,
    target_mean: f64,
    target_std: f64,
}

#[derive(Debug, Clone)]
pub struct GroupStat {
    pub key: Vec<u16>,
    pub mean: f64,
    pub std: f64,
    pub size: usize,
    /// Size-1 group: std is 0 by convention and the scale is undefined.
    pub degenerate: bool,
}

impl GroupStats {
    pub fn groups(&self) -> &[GroupStat] {
        &self.groups
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_std(&self) -> f64 {
        self.target_std
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_with(values: &[f64], mean: f64, mode: StdMode) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let divisor = match mode {
        StdMode::Sample => (n - 1) as f64,
        StdMode::Population => n as f64,
    };
    (ss / divisor).sqrt()
}

fn group_values(
    c: &ReputationVector,
    partition: &GroupPartition,
    key: &[u16],
    members: &[crate::model::UserIdx],
) -> Result<Vec<f64>, IndependenceError> {
    members
        .iter()
        .map(|&u| {
            c.get(u).ok_or_else(|| {
                IndependenceError::MissingReputation(format!(
                    "{:?}@{:?}",
                    key,
                    partition.key_attributes()
                ))
            })
        })
        .collect()
}

/// Mean, std and size per group, plus the targets (minimum group mean;
/// minimum std over groups of size >= 2, so a singleton cannot collapse
/// everyone onto a point).
pub fn group_stats(
    c: &ReputationVector,
    partition: &GroupPartition,
) -> Result<GroupStats, IndependenceError> {
    group_stats_with(c, partition, RecenterOptions::default())
}

pub fn group_stats_with(
    c: &ReputationVector,
    partition: &GroupPartition,
    opts: RecenterOptions,
) -> Result<GroupStats, IndependenceError> {
    if partition.n_groups() == 0 {
        return Err(IndependenceError::EmptyPartition);
    }
    let mut groups = Vec::with_capacity(partition.n_groups());
    let mut all = Vec::new();
    for (key, members) in partition.groups() {
        let values = group_values(c, partition, key, members)?;
        let m = mean(&values);
        let s = std_with(&values, m, opts.std);
        groups.push(GroupStat {
            key: key.to_vec(),
            mean: m,
            std: s,
            size: values.len(),
            degenerate: values.len() < 2,
        });
        if opts.targets == TargetMode::Global {
            all.extend_from_slice(&values);
        }
    }
    let (target_mean, target_std) = match opts.targets {
        TargetMode::MinOverGroups => {
            let mean = groups.iter().map(|g| g.mean).fold(f64::INFINITY, f64::min);
            let std = groups
                .iter()
                .filter(|g| !g.degenerate)
                .map(|g| g.std)
                .fold(f64::INFINITY, f64::min);
            (mean, if std.is_finite() { std } else { 0.0 })
        }
        TargetMode::Global => {
            let m = mean(&all);
            (m, std_with(&all, m, opts.std))
        }
    };
    Ok(GroupStats {
        groups,
        target_mean,
        target_std,
    })
}

pub struct RecenterOutcome {
    pub reputations: ReputationVector,
    pub stats: GroupStats,
    /// Users with a reputation but outside every group (missing labels or
    /// filtered small groups): their reputation passes through unchanged.
    pub passed_through: usize,
    /// Groups whose std was zero (all-equal or singleton): every member was
    /// mapped to the target mean since no scale is defined.
    pub collapsed_groups: usize,
}

/// Applies the per-group affine recentring. Members of each group end up
/// with mean `target_mean` and std `target_std`; users outside every group
/// keep their reputation.
pub fn recenter(
    c: &ReputationVector,
    partition: &GroupPartition,
) -> Result<RecenterOutcome, IndependenceError> {
    recenter_with(c, partition, RecenterOptions::default())
}

pub fn recenter_with(
    c: &ReputationVector,
    partition: &GroupPartition,
    opts: RecenterOptions,
) -> Result<RecenterOutcome, IndependenceError> {
    let stats = group_stats_with(c, partition, opts)?;
    let mut values: Vec<Option<f64>> = c.as_slice().to_vec();
    let mut covered = 0usize;
    let mut collapsed_groups = 0usize;
    for ((key, members), stat) in partition.groups().zip(stats.groups()) {
        debug_assert_eq!(key, stat.key.as_slice());
        covered += members.len();
        if stat.std == 0.0 {
            // All-equal reputations (or a singleton): the scale is
            // undefined, so pin the whole group to the target mean.
            collapsed_groups += 1;
            if !stat.degenerate {
                log::warn!(
                    "group {:?} of {:?} has zero reputation spread; \
                     mapping {} members to the target mean",
                    key,
                    partition.key_attributes(),
                    members.len()
                );
            }
            for &u in members {
                values[u.0 as usize] = Some(stats.target_mean());
            }
            continue;
        }
        let scale = stats.target_std() / stat.std;
        for &u in members {
            let old = c.get(u).expect("checked by group_stats");
            values[u.0 as usize] = Some(stats.target_mean() + (old - stat.mean) * scale);
        }
    }
    let present = c.iter_present().count();
    let reputations = ReputationVector::new(values);
    for (u, v) in reputations.iter_present() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(IndependenceError::RangeViolation {
                user: format!("user index {}", u.0),
                value: v,
            });
        }
    }
    Ok(RecenterOutcome {
        reputations,
        stats,
        passed_through: present - covered.min(present),
        collapsed_groups,
    })
}

/// Recentres on a single attribute's class partition, then recomputes the
/// rankings with the adjusted reputations.
pub fn single_fair(
    matrix: &RatingsMatrix,
    c: &ReputationVector,
    schema: &AttributeSchema,
    profiles: &UserProfiles,
    attr: &str,
) -> Result<(ReputationVector, RankingVector), IndependenceError> {
    multi_fair(matrix, c, schema, profiles, &[attr.to_owned()], 1)
}

/// Recentres on the meta-attribute partition keyed by every attribute in
/// `attrs` jointly, then recomputes the rankings. After this, every class of
/// every keyed attribute has the same mean reputation (up to round-off).
pub fn multi_fair(
    matrix: &RatingsMatrix,
    c: &ReputationVector,
    schema: &AttributeSchema,
    profiles: &UserProfiles,
    attrs: &[String],
    min_group_size: usize,
) -> Result<(ReputationVector, RankingVector), IndependenceError> {
    let partition = build_partition(matrix, schema, profiles, attrs, min_group_size)?;
    let outcome = recenter(c, &partition)?;
    let rankings = engine::update_rankings(matrix, &outcome.reputations)?;
    Ok((outcome.reputations, rankings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{compute, EngineConfig};
    use crate::model::{ItemIdx, UserIdx};
    use crate::testdata::example1;
    use approx::assert_abs_diff_eq;

    const GOLDEN_REPUTATIONS: [f64; 6] = [0.9255, 0.9460, 0.9460, 0.9446, 0.8540, 0.9140];
    const RECENTRED_GENDER: [f64; 6] = [0.8690, 0.8895, 0.8895, 0.8881, 0.8769, 0.8911];
    const RERANKED_GENDER: [f64; 5] = [0.8001, 0.9006, 0.8667, 0.6335, 0.5003];

    fn golden() -> ReputationVector {
        ReputationVector::new(GOLDEN_REPUTATIONS.iter().map(|&v| Some(v)).collect())
    }

    #[test]
    fn gender_group_means() {
        let (matrix, schema, profiles) = example1();
        let p = build_partition(&matrix, &schema, &profiles, &["Gender".into()], 1).unwrap();
        let stats = group_stats(&golden(), &p).unwrap();
        assert_abs_diff_eq!(stats.groups()[0].mean, 0.9405, epsilon = 5e-4);
        assert_abs_diff_eq!(stats.groups()[1].mean, 0.8840, epsilon = 5e-4);
        assert_abs_diff_eq!(stats.target_mean(), 0.8840, epsilon = 5e-4);
    }

    #[test]
    fn meta_group_means() {
        let (matrix, schema, profiles) = example1();
        let p = build_partition(
            &matrix,
            &schema,
            &profiles,
            &["Gender".into(), "Age".into()],
            1,
        )
        .unwrap();
        let stats = group_stats(&golden(), &p).unwrap();
        let means: Vec<f64> = stats.groups().iter().map(|g| g.mean).collect();
        assert_abs_diff_eq!(means[0], 0.93575, epsilon = 1e-10);
        assert_abs_diff_eq!(means[1], 0.94530, epsilon = 1e-10);
        assert_abs_diff_eq!(means[2], 0.88400, epsilon = 1e-10);
        assert_abs_diff_eq!(stats.target_mean(), 0.8840, epsilon = 1e-10);
    }

    #[test]
    fn single_group_targets_are_global_moments() {
        let (matrix, schema, profiles) = example1();
        // Age has only ]0,40] users u1,u2,u5,u6 plus ]40,inf[ u3,u4; use a
        // degenerate one-class schema instead.
        let schema_one = AttributeSchema::new(vec![("all".into(), vec!["x".into()])]).unwrap();
        let mut all_profiles = UserProfiles::new();
        for u in 0..matrix.n_users() {
            all_profiles.insert(matrix.user_id(UserIdx(u as u32)), vec![Some(0)]);
        }
        let p = build_partition(&matrix, &schema_one, &all_profiles, &["all".into()], 1).unwrap();
        let stats = group_stats(&golden(), &p).unwrap();
        assert_eq!(stats.groups().len(), 1);
        assert_abs_diff_eq!(stats.target_mean(), stats.groups()[0].mean, epsilon = 0.0);
        assert_abs_diff_eq!(stats.target_std(), stats.groups()[0].std, epsilon = 0.0);
        // and recentring against it is the identity
        let out = recenter(&golden(), &p).unwrap();
        for (u, v) in out.reputations.iter_present() {
            assert_abs_diff_eq!(v, golden().get(u).unwrap(), epsilon = 1e-12);
        }
        let _ = schema;
        let _ = profiles;
    }

    #[test]
    fn golden_gender_recentring() {
        let (matrix, schema, profiles) = example1();
        let p = build_partition(&matrix, &schema, &profiles, &["Gender".into()], 1).unwrap();
        let out = recenter(&golden(), &p).unwrap();
        for (u, expected) in RECENTRED_GENDER.iter().enumerate() {
            assert_abs_diff_eq!(
                out.reputations.get(UserIdx(u as u32)).unwrap(),
                expected,
                epsilon = 5e-5
            );
        }
    }

    #[test]
    fn golden_gender_fair_rankings() {
        let (matrix, schema, profiles) = example1();
        let (c, r) = single_fair(&matrix, &golden(), &schema, &profiles, "Gender").unwrap();
        for (u, expected) in RECENTRED_GENDER.iter().enumerate() {
            assert_abs_diff_eq!(c.get(UserIdx(u as u32)).unwrap(), expected, epsilon = 5e-5);
        }
        for (i, expected) in RERANKED_GENDER.iter().enumerate() {
            assert_abs_diff_eq!(r.get(ItemIdx(i as u32)).unwrap(), expected, epsilon = 5e-5);
        }
    }

    #[test]
    fn residual_age_bias_after_gender_recentring() {
        let (matrix, schema, profiles) = example1();
        let (c, _) = single_fair(&matrix, &golden(), &schema, &profiles, "Gender").unwrap();
        let age = build_partition(&matrix, &schema, &profiles, &["Age".into()], 1).unwrap();
        let stats = group_stats(&c, &age).unwrap();
        let young = stats.groups()[0].mean;
        let old = stats.groups()[1].mean;
        assert_abs_diff_eq!(young, 0.8816, epsilon = 5e-4);
        assert_abs_diff_eq!(old, 0.8888, epsilon = 5e-4);
        assert_abs_diff_eq!(young - old, -0.0072, epsilon = 5e-4);
    }

    #[test]
    fn multi_fair_equalizes_every_marginal_class() {
        let (matrix, schema, profiles) = example1();
        let (c, _) = multi_fair(
            &matrix,
            &golden(),
            &schema,
            &profiles,
            &["Gender".into(), "Age".into()],
            1,
        )
        .unwrap();
        for attr in ["Gender", "Age"] {
            let p = build_partition(&matrix, &schema, &profiles, &[attr.into()], 1).unwrap();
            let stats = group_stats(&c, &p).unwrap();
            for g in stats.groups() {
                assert_abs_diff_eq!(g.mean, 0.8840, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn multi_fair_length_one_reduces_to_single_fair() {
        let (matrix, schema, profiles) = example1();
        let single = single_fair(&matrix, &golden(), &schema, &profiles, "Gender").unwrap();
        let multi = multi_fair(
            &matrix,
            &golden(),
            &schema,
            &profiles,
            &["Gender".into()],
            1,
        )
        .unwrap();
        assert_eq!(single.0, multi.0);
        assert_eq!(single.1, multi.1);
    }

    #[test]
    fn degenerate_single_class_attribute_is_identity() {
        let (matrix, _, _) = example1();
        let schema = AttributeSchema::new(vec![("all".into(), vec!["x".into()])]).unwrap();
        let mut profiles = UserProfiles::new();
        for u in 0..matrix.n_users() {
            profiles.insert(matrix.user_id(UserIdx(u as u32)), vec![Some(0)]);
        }
        let out = compute(&matrix, &EngineConfig::exact(0.5, 8)).unwrap();
        let (_, r) = single_fair(&matrix, &out.reputations, &schema, &profiles, "all").unwrap();
        // identity recentring reproduces the rerank of the final reputations
        let rerank = crate::engine::update_rankings(&matrix, &out.reputations).unwrap();
        for (i, v) in rerank.iter_present() {
            assert_abs_diff_eq!(r.get(i).unwrap(), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_spread_group_collapses_to_target_mean() {
        let schema =
            AttributeSchema::new(vec![("g".into(), vec!["a".into(), "b".into()])]).unwrap();
        let mut profiles = UserProfiles::new();
        for (u, cls) in [("u1", 0), ("u2", 0), ("u3", 1), ("u4", 1)] {
            profiles.insert(u, vec![Some(cls)]);
        }
        let matrix = RatingsMatrix::from_raw_entries(
            [("u1", "i", 5.0), ("u2", "i", 4.0), ("u3", "i", 3.0), ("u4", "i", 2.0)],
            5.0,
        )
        .unwrap();
        let c = ReputationVector::new(vec![Some(0.9), Some(0.9), Some(0.7), Some(0.8)]);
        let p = build_partition(&matrix, &schema, &profiles, &["g".into()], 1).unwrap();
        let out = recenter(&c, &p).unwrap();
        assert_eq!(out.collapsed_groups, 1);
        // group a had zero spread -> both members at the target mean
        assert_abs_diff_eq!(out.reputations.get(UserIdx(0)).unwrap(), 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(out.reputations.get(UserIdx(1)).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn uncovered_users_pass_through() {
        let schema =
            AttributeSchema::new(vec![("g".into(), vec!["a".into(), "b".into()])]).unwrap();
        let mut profiles = UserProfiles::new();
        profiles.insert("u1", vec![Some(0)]);
        profiles.insert("u2", vec![Some(0)]);
        profiles.insert("u3", vec![Some(1)]);
        profiles.insert("u4", vec![Some(1)]);
        profiles.insert("u5", vec![None]);
        let mut entries = Vec::new();
        for (k, u) in ["u1", "u2", "u3", "u4", "u5"].iter().enumerate() {
            entries.push((u.to_string(), "i".to_string(), (k + 1) as f64));
        }
        let matrix = RatingsMatrix::from_raw_entries(entries, 5.0).unwrap();
        let c = ReputationVector::new(vec![
            Some(0.9),
            Some(0.8),
            Some(0.7),
            Some(0.75),
            Some(0.5),
        ]);
        let p = build_partition(&matrix, &schema, &profiles, &["g".into()], 1).unwrap();
        let out = recenter(&c, &p).unwrap();
        assert_eq!(out.passed_through, 1);
        assert_eq!(out.reputations.get(UserIdx(4)), Some(0.5));
    }

    #[test]
    fn empty_partition_is_an_error() {
        let (matrix, schema, profiles) = example1();
        let p = build_partition(&matrix, &schema, &profiles, &["Gender".into()], 100).unwrap();
        assert!(matches!(
            group_stats(&golden(), &p),
            Err(IndependenceError::EmptyPartition)
        ));
    }
}

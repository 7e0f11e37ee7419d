//! Glue running the full method pipeline: engine iteration followed by an
//! optional independence post-processing step.

use std::fmt;

use thiserror::Error;

use crate::engine::{self, EngineConfig, EngineError, RankingVector, ReputationVector};
use crate::independence::{self, IndependenceError};
use crate::model::{AttributeSchema, ModelError, RatingsMatrix, UserProfiles};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("independence: {0}")]
    Independence(#[from] IndependenceError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
}

/// A ratings matrix together with the attribute schema and per-user
/// assignments it was ingested with.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: RatingsMatrix,
    pub schema: AttributeSchema,
    pub profiles: UserProfiles,
}

/// Reputation post-processing applied after the iterative scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mitigation {
    /// Raw reputations.
    None,
    /// Recentre on one attribute's classes.
    Single(String),
    /// Recentre one attribute at a time, in order. Kept as a baseline: it
    /// does not equalize earlier attributes.
    Sequential(Vec<String>),
    /// Recentre on the joint meta-attribute partition.
    Multi(Vec<String>),
}

impl fmt::Display for Mitigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mitigation::None => write!(f, "none"),
            Mitigation::Single(a) => write!(f, "single:{a}"),
            Mitigation::Sequential(attrs) => write!(f, "sequential:{}", attrs.join("+")),
            Mitigation::Multi(attrs) => write!(f, "multi:{}", attrs.join("+")),
        }
    }
}

/// Ranking method under evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    /// Plain arithmetic average of each item's ratings.
    ArithmeticAverage,
    /// Reputation-weighted scheme, optionally mitigated.
    Reputation(Mitigation),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ArithmeticAverage => write!(f, "aa"),
            Method::Reputation(Mitigation::None) => write!(f, "reputation"),
            Method::Reputation(m) => write!(f, "reputation+{m}"),
        }
    }
}

pub struct MethodOutcome {
    /// Final reputations; `None` for the arithmetic-average baseline.
    pub reputations: Option<ReputationVector>,
    pub rankings: RankingVector,
    /// Engine iterations executed (0 for the baseline).
    pub iterations: usize,
}

/// Applies a mitigation to already-computed reputations and reranks.
pub fn apply_mitigation(
    dataset: &Dataset,
    reputations: &ReputationVector,
    mitigation: &Mitigation,
    min_group_size: usize,
) -> Result<(ReputationVector, RankingVector), PipelineError> {
    let out = match mitigation {
        Mitigation::None => {
            let rankings = engine::update_rankings(&dataset.matrix, reputations)?;
            (reputations.clone(), rankings)
        }
        Mitigation::Single(attr) => independence::single_fair(
            &dataset.matrix,
            reputations,
            &dataset.schema,
            &dataset.profiles,
            attr,
        )?,
        Mitigation::Sequential(attrs) => {
            let mut current = reputations.clone();
            let mut rankings = engine::update_rankings(&dataset.matrix, &current)?;
            for attr in attrs {
                let (c, r) = independence::single_fair(
                    &dataset.matrix,
                    &current,
                    &dataset.schema,
                    &dataset.profiles,
                    attr,
                )?;
                current = c;
                rankings = r;
            }
            (current, rankings)
        }
        Mitigation::Multi(attrs) => independence::multi_fair(
            &dataset.matrix,
            reputations,
            &dataset.schema,
            &dataset.profiles,
            attrs,
            min_group_size,
        )?,
    };
    Ok(out)
}

/// Runs a ranking method end to end on a dataset.
pub fn run_method(
    dataset: &Dataset,
    cfg: &EngineConfig,
    method: &Method,
    min_group_size: usize,
) -> Result<MethodOutcome, PipelineError> {
    match method {
        Method::ArithmeticAverage => Ok(MethodOutcome {
            reputations: None,
            rankings: engine::arithmetic_average(&dataset.matrix),
            iterations: 0,
        }),
        Method::Reputation(mitigation) => {
            let out = engine::compute(&dataset.matrix, cfg)?;
            let (reputations, rankings) =
                apply_mitigation(dataset, &out.reputations, mitigation, min_group_size)?;
            Ok(MethodOutcome {
                reputations: Some(reputations),
                rankings,
                iterations: out.iterations,
            })
        }
    }
}

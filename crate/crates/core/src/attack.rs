//! Rating-attack simulation and robustness measurement.
//!
//! Attacks append synthetic rater profiles to a matrix; original entries are
//! never touched. Robustness is the Kendall tau between the rankings a
//! method produces on the clean and on the attacked matrix.
//!
//! Reproducibility: every attacker draws from its own ChaCha8 stream
//! (`seed_from_u64(rng_seed)` with `set_stream(attacker_ordinal)`), so an
//! attack is a pure function of its spec regardless of how many attackers
//! run or in which order. Within one stream the draw order is: side-set
//! items, then spam ratings (random-spam only), then attribute classes.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::model::{ItemIdx, ModelError};
use crate::par;
use crate::pipeline::{run_method, Dataset, Method, PipelineError};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack proportion must lie strictly between 0 and 1, got {0}")]
    InvalidProportion(f64),
    #[error("side set of {side} items does not fit a catalog of {items} (target excluded)")]
    SideSetTooLarge { side: usize, items: usize },
    #[error("attack kind `{0}` requires a target item")]
    TargetRequired(AttackKind),
    #[error("random spam takes no target item")]
    TargetForbidden,
    #[error("target item `{0}` not present in the matrix")]
    UnknownTarget(String),
    #[error("attack sweep needs non-empty kinds, proportions, methods and seeds")]
    EmptySweepAxis,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    /// Random whole-star ratings on a random item set.
    RandomSpam,
    /// Highest rating on the target, lowest on the side set.
    LoveHate,
    /// Lowest rating on the target, highest on the side set.
    HateLove,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AttackKind::RandomSpam => "random_spam",
            AttackKind::LoveHate => "love_hate",
            AttackKind::HateLove => "hate_love",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random_spam" | "random-spam" | "spam" => Ok(AttackKind::RandomSpam),
            "love_hate" | "love-hate" => Ok(AttackKind::LoveHate),
            "hate_love" | "hate-love" => Ok(AttackKind::HateLove),
            other => Err(format!("unknown attack kind `{other}`")),
        }
    }
}

/// Parameters of one attack instance.
///
/// The attacker count is `floor(proportion * baseline)` where the baseline
/// is the total number of existing ratings for random spam and the number of
/// voters of the target item for the targeted attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Target item id; required for love/hate and hate/love, forbidden for
    /// random spam.
    pub target_item: Option<String>,
    pub proportion: f64,
    /// Number of additional random items each attacker rates.
    pub side_set_size: usize,
    pub rng_seed: u64,
    /// Draw attribute classes for attackers so they participate in
    /// demographic partitions during mitigation. When false, attackers carry
    /// all-missing profiles and drop out of every partition.
    pub attacker_attributes: bool,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, proportion: f64, rng_seed: u64) -> Self {
        Self {
            kind,
            target_item: None,
            proportion,
            side_set_size: 10,
            rng_seed,
            attacker_attributes: true,
        }
    }

    pub fn with_target(mut self, target: impl Into<String>) -> Self {
        self.target_item = Some(target.into());
        self
    }
}

pub struct Injection {
    pub dataset: Dataset,
    pub attacker_ids: Vec<String>,
}

/// Most-voted item, ties broken by ascending item index. Used as the default
/// target for targeted attacks when none is configured.
pub fn most_voted_item(dataset: &Dataset) -> ItemIdx {
    let mut best = ItemIdx(0);
    let mut best_count = 0usize;
    for i in 0..dataset.matrix.n_items() {
        let count = dataset.matrix.raters_of(ItemIdx(i as u32)).len();
        if count > best_count {
            best = ItemIdx(i as u32);
            best_count = count;
        }
    }
    best
}

/// Appends `floor(proportion * baseline)` synthetic attackers to the
/// dataset. Original ratings and profiles are never modified.
pub fn inject(dataset: &Dataset, spec: &AttackSpec) -> Result<Injection, AttackError> {
    if !(spec.proportion > 0.0 && spec.proportion < 1.0) {
        return Err(AttackError::InvalidProportion(spec.proportion));
    }
    let matrix = &dataset.matrix;
    let n_items = matrix.n_items();
    let target = match (spec.kind, &spec.target_item) {
        (AttackKind::RandomSpam, Some(_)) => return Err(AttackError::TargetForbidden),
        (AttackKind::RandomSpam, None) => None,
        (kind, None) => return Err(AttackError::TargetRequired(kind)),
        (_, Some(id)) => Some(
            matrix
                .item_idx(id)
                .ok_or_else(|| AttackError::UnknownTarget(id.clone()))?,
        ),
    };
    if spec.side_set_size > n_items.saturating_sub(1) {
        return Err(AttackError::SideSetTooLarge {
            side: spec.side_set_size,
            items: n_items,
        });
    }
    let baseline = match target {
        None => matrix.n_entries(),
        Some(t) => matrix.raters_of(t).len(),
    };
    let n_attackers = (spec.proportion * baseline as f64).floor() as usize;
    if n_attackers == 0 {
        return Ok(Injection {
            dataset: dataset.clone(),
            attacker_ids: Vec::new(),
        });
    }

    let max_raw = matrix.max_raw_rating();
    let grid = (max_raw.round() as i64).max(1);
    let min_positive = 1.0 / max_raw;
    let mut additions = Vec::with_capacity(n_attackers);
    let mut profiles = dataset.profiles.clone();
    let mut attacker_ids = Vec::with_capacity(n_attackers);
    for k in 0..n_attackers {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        rng.set_stream(k as u64);
        let id = format!("attacker-{k:06}");

        // Side set: distinct items, excluding the target when there is one.
        let pool = n_items - usize::from(target.is_some());
        let side = rand::seq::index::sample(&mut rng, pool, spec.side_set_size);
        let mut ratings: Vec<(ItemIdx, f64)> = Vec::with_capacity(spec.side_set_size + 1);
        for raw_ix in side.iter() {
            let ix = match target {
                Some(t) if raw_ix as u32 >= t.0 => raw_ix as u32 + 1,
                _ => raw_ix as u32,
            };
            let value = match spec.kind {
                AttackKind::RandomSpam => rng.gen_range(1..=grid) as f64 / max_raw,
                AttackKind::LoveHate => min_positive,
                AttackKind::HateLove => 1.0,
            };
            ratings.push((ItemIdx(ix), value));
        }
        if let Some(t) = target {
            let value = match spec.kind {
                AttackKind::LoveHate => 1.0,
                AttackKind::HateLove => min_positive,
                AttackKind::RandomSpam => unreachable!(),
            };
            ratings.push((t, value));
        }

        let classes = if spec.attacker_attributes {
            dataset
                .schema
                .attributes()
                .iter()
                .map(|a| Some(rng.gen_range(0..a.classes.len()) as u16))
                .collect()
        } else {
            vec![None; dataset.schema.len()]
        };
        profiles.insert(&id, classes);
        additions.push((id.clone(), ratings));
        attacker_ids.push(id);
    }
    let matrix = matrix.with_additional_users(&additions)?;
    Ok(Injection {
        dataset: Dataset {
            matrix,
            schema: dataset.schema.clone(),
            profiles,
        },
        attacker_ids,
    })
}

/// Kendall tau between the rankings a method produces on the clean and on
/// the attacked dataset, over the shared item universe.
pub fn robustness(
    clean: &Dataset,
    attacked: &Dataset,
    cfg: &EngineConfig,
    method: &Method,
    min_group_size: usize,
) -> Result<f64, AttackError> {
    let clean_rankings = run_method(clean, cfg, method, min_group_size)?.rankings;
    let attacked_rankings = run_method(attacked, cfg, method, min_group_size)?.rankings;
    Ok(stats::kendall_tau(&clean_rankings, &attacked_rankings)?)
}

/// One attack axis of a sweep: a kind plus its fixed per-kind settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAttack {
    pub kind: AttackKind,
    /// Defaults to the most-voted item for the targeted kinds.
    pub target_item: Option<String>,
    pub side_set_size: usize,
    pub attacker_attributes: bool,
}

impl SweepAttack {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            target_item: None,
            side_set_size: 10,
            attacker_attributes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: AttackKind,
    pub proportion: f64,
    pub method: Method,
    pub seed: u64,
    pub tau: f64,
}

impl SweepRow {
    /// Delimiter-separated form: kind, proportion, method, seed, tau.
    pub fn to_delimited(&self, sep: char) -> String {
        format!(
            "{}{sep}{}{sep}{}{sep}{}{sep}{}",
            self.kind, self.proportion, self.method, self.seed, self.tau
        )
    }
}

/// Cartesian sweep over kinds x proportions x methods x seeds. Rows come
/// back in that nesting order with proportions ascending; cells run
/// independently (in parallel when enabled) and results are merged back in
/// deterministic order.
#[allow(clippy::too_many_arguments)]
pub fn attack_sweep(
    dataset: &Dataset,
    kinds: &[SweepAttack],
    proportions: &[f64],
    methods: &[Method],
    seeds: &[u64],
    cfg: &EngineConfig,
    min_group_size: usize,
) -> Result<Vec<SweepRow>, AttackError> {
    if kinds.is_empty() || proportions.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(AttackError::EmptySweepAxis);
    }
    let mut proportions = proportions.to_vec();
    proportions.sort_by(f64::total_cmp);

    let mut clean_rankings = Vec::with_capacity(methods.len());
    for method in methods {
        clean_rankings.push(run_method(dataset, cfg, method, min_group_size)?.rankings);
    }

    // cell = (kind, proportion, seed); each cell evaluates every method on
    // one attacked matrix.
    let mut cells = Vec::with_capacity(kinds.len() * proportions.len() * seeds.len());
    for k in 0..kinds.len() {
        for p in 0..proportions.len() {
            for s in 0..seeds.len() {
                cells.push((k, p, s));
            }
        }
    }
    let taus: Vec<Vec<f64>> = par::try_map_indexed(cells.len(), |ci| {
        let (k, p, s) = cells[ci];
        let sweep = &kinds[k];
        let spec = AttackSpec {
            kind: sweep.kind,
            target_item: resolve_target(dataset, sweep),
            proportion: proportions[p],
            side_set_size: sweep.side_set_size,
            rng_seed: seeds[s],
            attacker_attributes: sweep.attacker_attributes,
        };
        let injection = inject(dataset, &spec)?;
        let mut row = Vec::with_capacity(methods.len());
        for (m, method) in methods.iter().enumerate() {
            let attacked = run_method(&injection.dataset, cfg, method, min_group_size)?.rankings;
            row.push(stats::kendall_tau(&clean_rankings[m], &attacked)?);
        }
        Ok::<Vec<f64>, AttackError>(row)
    })?;

    let cell_index = |k: usize, p: usize, s: usize| (k * proportions.len() + p) * seeds.len() + s;
    let mut rows = Vec::with_capacity(cells.len() * methods.len());
    for (k, sweep) in kinds.iter().enumerate() {
        for (p, &proportion) in proportions.iter().enumerate() {
            for (m, method) in methods.iter().enumerate() {
                for (s, &seed) in seeds.iter().enumerate() {
                    rows.push(SweepRow {
                        kind: sweep.kind,
                        proportion,
                        method: method.clone(),
                        seed,
                        tau: taus[cell_index(k, p, s)][m],
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn resolve_target(dataset: &Dataset, sweep: &SweepAttack) -> Option<String> {
    match sweep.kind {
        AttackKind::RandomSpam => None,
        _ => Some(sweep.target_item.clone().unwrap_or_else(|| {
            dataset
                .matrix
                .item_id(most_voted_item(dataset))
                .to_owned()
        })),
    }
}

//! Flag parsing and config-file merging.
//!
//! Every long flag can also appear in a flat `key = value` config file
//! (one per line, `#` comments); command-line values win.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;

use reprank_core::attack::AttackKind;
use reprank_core::pipeline::Mitigation;

#[derive(Parser, Debug)]
#[command(
    name = "reprank",
    about = "Reputation-based ranking experiments: bias characterization, \
             attack robustness, and ranking quality",
    long_about = None
)]
pub struct Args {
    /// Flat key = value file supplying any flag; command line wins.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset layout: movielens | bookcrossing | inline.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Ratings file path.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Users / attributes file path.
    #[arg(long)]
    pub users: Option<PathBuf>,
    /// Country -> continent table (bookcrossing only).
    #[arg(long = "continent-table")]
    pub continent_table: Option<PathBuf>,
    /// Discordance penalty in ]0,1[.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Max engine iterations (exact count when --tol 0).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Convergence tolerance on the max reputation change.
    #[arg(long)]
    pub tol: Option<f64>,
    /// none | single[:attr] | sequential[:a,b,...] | multi[:a,b,...];
    /// bare forms take the attribute list from --attributes.
    #[arg(long)]
    pub mitigation: Option<String>,
    /// Comma-separated sensitive attributes to mitigate on / report
    /// (default: every schema attribute).
    #[arg(long)]
    pub attributes: Option<String>,
    /// Smallest meta-group kept by the joint partition.
    #[arg(long = "min-group-size")]
    pub min_group_size: Option<usize>,
    /// Comma-separated attack kinds: random_spam | love_hate | hate_love.
    #[arg(long)]
    pub attack: Option<String>,
    /// Target item id for the targeted attacks (default: most-voted item).
    #[arg(long = "attack-target")]
    pub attack_target: Option<String>,
    /// Comma-separated attacker proportions (default 0.05..0.45 step 0.05).
    #[arg(long = "attack-proportion")]
    pub attack_proportion: Option<String>,
    /// Random items each attacker rates besides the target.
    #[arg(long = "side-set-size")]
    pub side_set_size: Option<usize>,
    /// Held-out fraction for the quality evaluation (e.g. 0.1).
    #[arg(long)]
    pub split: Option<f64>,
    /// Location-test significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// RNG seed for splits and attacks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path (file for json, directory for csv-bundle).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// json | csv-bundle.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Movielens,
    Bookcrossing,
    Inline,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Movielens => "movielens",
            DatasetKind::Bookcrossing => "bookcrossing",
            DatasetKind::Inline => "inline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    CsvBundle,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub ratings: PathBuf,
    pub users: PathBuf,
    pub continent_table: Option<PathBuf>,
    pub lambda: f64,
    pub iterations: usize,
    pub tol: f64,
    pub mitigation: Mitigation,
    /// Attributes reported on (DR tables, group stats).
    pub attributes: Option<Vec<String>>,
    pub min_group_size: usize,
    pub attack: Vec<AttackKind>,
    pub attack_target: Option<String>,
    pub attack_proportions: Vec<f64>,
    pub side_set_size: usize,
    pub split: Option<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
}

fn read_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let mut map = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected `key = value`", path.display(), ln + 1))?;
        map.insert(key.trim().to_owned(), value.trim().to_owned());
    }
    Ok(map)
}

fn parse_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(str::to_owned)
        .collect()
}

fn parse_mitigation(spec: &str, attributes: Option<&[String]>) -> Result<Mitigation> {
    let (kind, inline_attrs) = match spec.split_once(':') {
        Some((k, rest)) => (k.trim(), Some(parse_list(rest))),
        None => (spec.trim(), None),
    };
    let attrs = || -> Result<Vec<String>> {
        if let Some(a) = &inline_attrs {
            if !a.is_empty() {
                return Ok(a.clone());
            }
        }
        match attributes {
            Some(a) if !a.is_empty() => Ok(a.to_vec()),
            _ => bail!("mitigation `{kind}` needs attributes (use --attributes or `{kind}:<a,b>`)"),
        }
    };
    match kind {
        "none" => Ok(Mitigation::None),
        "single" => {
            let attrs = attrs()?;
            if attrs.len() != 1 {
                bail!("single-attribute mitigation takes exactly one attribute, got {attrs:?}");
            }
            Ok(Mitigation::Single(attrs.into_iter().next().unwrap()))
        }
        "sequential" => Ok(Mitigation::Sequential(attrs()?)),
        "multi" => Ok(Mitigation::Multi(attrs()?)),
        other => bail!("unknown mitigation `{other}` (none | single | sequential | multi)"),
    }
}

impl Args {
    /// Merges command line over the config file and fills defaults.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => HashMap::new(),
        };
        macro_rules! merged {
            ($field:ident, $key:literal, $parse:expr) => {
                match self.$field {
                    Some(v) => Some(v),
                    None => file.get($key).map($parse).transpose()?,
                }
            };
        }
        let parse_f64 = |s: &String| -> Result<f64> {
            s.parse().with_context(|| format!("bad number `{s}`"))
        };
        let parse_usize = |s: &String| -> Result<usize> {
            s.parse().with_context(|| format!("bad count `{s}`"))
        };
        let parse_u64 = |s: &String| -> Result<u64> {
            s.parse().with_context(|| format!("bad seed `{s}`"))
        };
        let parse_path = |s: &String| -> Result<PathBuf> { Ok(PathBuf::from(s)) };
        let parse_string = |s: &String| -> Result<String> { Ok(s.clone()) };

        let dataset = merged!(dataset, "dataset", parse_string)
            .context("--dataset is required (movielens | bookcrossing | inline)")?;
        let dataset = match dataset.as_str() {
            "movielens" | "ml-1m" | "ml1m" => DatasetKind::Movielens,
            "bookcrossing" | "bx" => DatasetKind::Bookcrossing,
            "inline" => DatasetKind::Inline,
            other => bail!("unknown dataset `{other}`"),
        };
        let ratings = merged!(ratings, "ratings", parse_path).context("--ratings is required")?;
        let users = merged!(users, "users", parse_path).context("--users is required")?;
        let continent_table = merged!(continent_table, "continent-table", parse_path);
        if dataset == DatasetKind::Bookcrossing && continent_table.is_none() {
            bail!("--continent-table is required for the bookcrossing dataset");
        }
        let lambda = merged!(lambda, "lambda", parse_f64).unwrap_or(0.5);
        let iterations = merged!(iterations, "iterations", parse_usize).unwrap_or(100);
        let tol = merged!(tol, "tol", parse_f64).unwrap_or(1e-9);
        let attributes = merged!(attributes, "attributes", parse_string).map(|s| parse_list(&s));
        let mitigation_raw = merged!(mitigation, "mitigation", parse_string);
        let mitigation = match mitigation_raw {
            Some(spec) => parse_mitigation(&spec, attributes.as_deref())?,
            None => Mitigation::None,
        };
        let min_group_size = merged!(min_group_size, "min-group-size", parse_usize).unwrap_or(1);
        let attack = match merged!(attack, "attack", parse_string) {
            Some(s) => parse_list(&s)
                .iter()
                .map(|k| k.parse::<AttackKind>().map_err(anyhow::Error::msg))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let attack_target = merged!(attack_target, "attack-target", parse_string);
        let attack_proportions = match merged!(attack_proportion, "attack-proportion", parse_string)
        {
            Some(s) => parse_list(&s)
                .iter()
                .map(|p| parse_f64(p))
                .collect::<Result<Vec<_>>>()?,
            None => (1..=9).map(|k| k as f64 * 0.05).collect(),
        };
        let side_set_size = merged!(side_set_size, "side-set-size", parse_usize).unwrap_or(10);
        let split = merged!(split, "split", parse_f64);
        let alpha = merged!(alpha, "alpha", parse_f64).unwrap_or(0.05);
        let seed = merged!(seed, "seed", parse_u64).unwrap_or(0);
        let out = merged!(out, "out", parse_path).context("--out is required")?;
        let format = match merged!(format, "format", parse_string).as_deref() {
            None | Some("json") => OutputFormat::Json,
            Some("csv-bundle") | Some("csv") => OutputFormat::CsvBundle,
            Some(other) => bail!("unknown format `{other}` (json | csv-bundle)"),
        };
        Ok(ExperimentConfig {
            dataset,
            ratings,
            users,
            continent_table,
            lambda,
            iterations,
            tol,
            mitigation,
            attributes,
            min_group_size,
            attack,
            attack_target,
            attack_proportions,
            side_set_size,
            split,
            alpha,
            seed,
            out,
            format,
        })
    }
}

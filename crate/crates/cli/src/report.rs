//! Machine-readable experiment report and its two emitters.
//!
//! Reports are byte-stable under a fixed config and seed: no wall-clock
//! fields go into the files (timing is logged to stderr instead), all
//! tables are emitted in deterministic order.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub group_stats: Vec<GroupTable>,
    pub dr: Vec<DrTable>,
    pub quality: Option<QualityReport>,
    pub robustness: Option<Vec<RobustnessRow>>,
}

#[derive(Debug, Serialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub ratings_path: String,
    pub users_path: String,
    pub lambda: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub iterations_run: usize,
    pub mitigation: String,
    pub attributes: Vec<String>,
    pub min_group_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub max_raw_rating: f64,
    pub users_without_ratings: usize,
    /// Which recentring variant produced the mitigated numbers.
    pub recenter_variant: String,
    /// Users skipped by the mitigation partition (missing labels).
    pub mitigation_excluded_missing: Option<usize>,
    /// Users skipped because their meta-group fell under min_group_size.
    pub mitigation_excluded_small_groups: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct GroupTable {
    /// Partition key, e.g. "gender" or "gender x age".
    pub partition: String,
    pub target_mean: f64,
    pub target_std: f64,
    pub rows: Vec<GroupRow>,
}

/// Mean/std plus the five-number summary (box-whisker content).
#[derive(Debug, Serialize)]
pub struct GroupRow {
    pub classes: Vec<String>,
    pub size: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Serialize)]
pub struct DrTable {
    pub attribute: String,
    pub classes: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub alpha: f64,
    /// Upper triangle in class order.
    pub cells: Vec<DrCellOut>,
}

#[derive(Debug, Serialize)]
pub struct DrCellOut {
    pub class_a: String,
    pub class_b: String,
    pub delta: f64,
    /// Absent when a group is too small for the location test.
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct QualityReport {
    pub tau_vs_aa: f64,
    pub test_fraction: f64,
    /// RMSE between train-side rankings and held-out normalized ratings.
    pub rmse_test: f64,
    /// Same error rescaled to the raw rating scale.
    pub rmse_test_raw_scale: f64,
    pub test_entries_evaluated: usize,
    /// Held-out entries whose item was never ranked in training.
    pub excluded_test_entries: usize,
}

#[derive(Debug, Serialize)]
pub struct RobustnessRow {
    pub kind: String,
    pub proportion: f64,
    pub method: String,
    pub seed: u64,
    pub tau: f64,
}

/// Single-file JSON emitter.
pub fn write_json(report: &ExperimentReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Directory-of-tables emitter: meta.json plus group_stats.csv, dr_matrix.csv,
/// robustness_curve.csv and quality.csv with header rows.
pub fn write_csv_bundle(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut meta = serde_json::to_vec_pretty(&report.meta)?;
    meta.push(b'\n');
    std::fs::write(dir.join("meta.json"), meta)?;

    let write = |name: &str, content: Vec<u8>| -> Result<()> {
        std::fs::write(dir.join(name), content).with_context(|| format!("writing {name}"))
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "partition", "classes", "size", "mean", "std", "min", "q1", "median", "q3", "max",
        "target_mean", "target_std",
    ])?;
    for table in &report.group_stats {
        for row in &table.rows {
            w.write_record([
                table.partition.as_str(),
                &row.classes.join(" & "),
                &row.size.to_string(),
                &row.mean.to_string(),
                &row.std.to_string(),
                &row.min.to_string(),
                &row.q1.to_string(),
                &row.median.to_string(),
                &row.q3.to_string(),
                &row.max.to_string(),
                &table.target_mean.to_string(),
                &table.target_std.to_string(),
            ])?;
        }
    }
    write("group_stats.csv", w.into_inner()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attribute", "class_a", "class_b", "delta", "p_value", "reject"])?;
    for table in &report.dr {
        for cell in &table.cells {
            w.write_record([
                table.attribute.as_str(),
                &cell.class_a,
                &cell.class_b,
                &cell.delta.to_string(),
                &cell.p_value.map(|p| p.to_string()).unwrap_or_default(),
                &cell.reject.map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    write("dr_matrix.csv", w.into_inner()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "proportion", "method", "seed", "tau"])?;
    if let Some(rows) = &report.robustness {
        for row in rows {
            w.write_record([
                row.kind.as_str(),
                &row.proportion.to_string(),
                &row.method,
                &row.seed.to_string(),
                &row.tau.to_string(),
            ])?;
        }
    }
    write("robustness_curve.csv", w.into_inner()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "tau_vs_aa",
        "test_fraction",
        "rmse_test",
        "rmse_test_raw_scale",
        "test_entries_evaluated",
        "excluded_test_entries",
    ])?;
    if let Some(q) = &report.quality {
        w.write_record([
            q.tau_vs_aa.to_string(),
            q.test_fraction.to_string(),
            q.rmse_test.to_string(),
            q.rmse_test_raw_scale.to_string(),
            q.test_entries_evaluated.to_string(),
            q.excluded_test_entries.to_string(),
        ])?;
    }
    write("quality.csv", w.into_inner()?)?;
    Ok(())
}

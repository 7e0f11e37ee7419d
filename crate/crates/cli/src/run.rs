//! Experiment orchestration: ingest, iterate, mitigate, measure, report.

use anyhow::{bail, Context, Result};

use reprank_core::attack::{attack_sweep, AttackKind, SweepAttack};
use reprank_core::engine::{self, EngineConfig, RankingVector, ReputationVector};
use reprank_core::independence::group_stats;
use reprank_core::ingest::{
    holdout_split, parse_bookcrossing, parse_inline, parse_movielens, ContinentTable,
    SplitStrategy,
};
use reprank_core::model::{build_partition, GroupPartition, ItemIdx};
use reprank_core::pipeline::{apply_mitigation, Dataset, Method, Mitigation};
use reprank_core::stats::{dr_matrix, kendall_tau, rmse};

use crate::config::{DatasetKind, ExperimentConfig, OutputFormat};
use crate::report::{
    DrCellOut, DrTable, ExperimentReport, GroupRow, GroupTable, QualityReport, ReportMeta,
    RobustnessRow,
};

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = match cfg.dataset {
        DatasetKind::Movielens => parse_movielens(&cfg.ratings, &cfg.users)
            .context("data-ingest: parsing MovieLens-1M")?,
        DatasetKind::Bookcrossing => {
            let table_path = cfg.continent_table.as_ref().expect("validated in config");
            let table = ContinentTable::from_path(table_path)
                .context("data-ingest: reading continent table")?;
            parse_bookcrossing(&cfg.ratings, &cfg.users, &table)
                .context("data-ingest: parsing BookCrossing")?
        }
        DatasetKind::Inline => {
            parse_inline(&cfg.ratings, &cfg.users).context("data-ingest: parsing inline files")?
        }
    };
    Ok(ds)
}

/// Attributes to report on: configured list or the whole schema.
fn reporting_attributes(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<String>> {
    let attrs = match &cfg.attributes {
        Some(list) => list.clone(),
        None => ds.schema.attributes().iter().map(|a| a.name.clone()).collect(),
    };
    for a in &attrs {
        if ds.schema.attribute_index(a).is_none() {
            bail!("attribute `{a}` not in the {} schema", cfg.dataset.as_str());
        }
    }
    Ok(attrs)
}

fn five_number_summary(values: &mut Vec<f64>) -> (f64, f64, f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let quantile = |q: f64| -> f64 {
        // linear interpolation between order statistics
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        values[lo] + (values[hi] - values[lo]) * frac
    };
    (
        values[0],
        quantile(0.25),
        quantile(0.5),
        quantile(0.75),
        values[values.len() - 1],
    )
}

fn group_table(
    ds: &Dataset,
    partition: &GroupPartition,
    label: &str,
    c: &ReputationVector,
) -> Result<GroupTable> {
    let stats = group_stats(c, partition).context("independence: group statistics")?;
    let mut rows = Vec::new();
    for ((key, members), stat) in partition.groups().zip(stats.groups()) {
        let mut values: Vec<f64> = members.iter().filter_map(|&u| c.get(u)).collect();
        let (min, q1, median, q3, max) = five_number_summary(&mut values);
        rows.push(GroupRow {
            classes: partition
                .key_labels(&ds.schema, key)
                .into_iter()
                .map(str::to_owned)
                .collect(),
            size: stat.size,
            mean: stat.mean,
            std: stat.std,
            min,
            q1,
            median,
            q3,
            max,
        });
    }
    Ok(GroupTable {
        partition: label.to_owned(),
        target_mean: stats.target_mean(),
        target_std: stats.target_std(),
        rows,
    })
}

fn quality_eval(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    full_rankings: &RankingVector,
    test_fraction: f64,
) -> Result<QualityReport> {
    let aa = engine::arithmetic_average(&ds.matrix);
    let tau_vs_aa = kendall_tau(full_rankings, &aa).context("stats-metrics: tau vs AA")?;

    let (train, test) = holdout_split(
        &ds.matrix,
        test_fraction,
        cfg.seed,
        SplitStrategy::GlobalUniform,
    )
    .context("data-ingest: holdout split")?;
    let train_ds = Dataset {
        matrix: train,
        schema: ds.schema.clone(),
        profiles: ds.profiles.clone(),
    };
    let engine_cfg = engine_config(cfg);
    let train_out = reprank_core::pipeline::run_method(
        &train_ds,
        &engine_cfg,
        &Method::Reputation(cfg.mitigation.clone()),
        cfg.min_group_size,
    )
    .context("reputation-engine: training-side pipeline")?;

    let mut predicted = Vec::new();
    let mut observed = Vec::new();
    let mut excluded = 0usize;
    for (_, item, rating) in test.entries() {
        match train_out.rankings.get(item) {
            Some(r) => {
                predicted.push(r);
                observed.push(rating);
            }
            None => excluded += 1,
        }
    }
    let rmse_test = rmse(&predicted, &observed).context("stats-metrics: held-out RMSE")?;
    Ok(QualityReport {
        tau_vs_aa,
        test_fraction,
        rmse_test,
        rmse_test_raw_scale: rmse_test * ds.matrix.max_raw_rating(),
        test_entries_evaluated: predicted.len(),
        excluded_test_entries: excluded,
    })
}

fn engine_config(cfg: &ExperimentConfig) -> EngineConfig {
    EngineConfig {
        lambda: cfg.lambda,
        max_iterations: cfg.iterations,
        convergence_tol: cfg.tol,
        ..EngineConfig::default()
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let ds = load_dataset(cfg)?;
    let attributes = reporting_attributes(cfg, &ds)?;
    log::info!(
        "loaded {}: {} users, {} items, {} ratings",
        cfg.dataset.as_str(),
        ds.matrix.n_users(),
        ds.matrix.n_items(),
        ds.matrix.n_entries()
    );

    let engine_cfg = engine_config(cfg);
    engine_cfg.validate().context("reputation-engine: config")?;
    let out = engine::compute(&ds.matrix, &engine_cfg).context("reputation-engine: compute")?;
    let (reputations, rankings) =
        apply_mitigation(&ds, &out.reputations, &cfg.mitigation, cfg.min_group_size)
            .context("independence: mitigation")?;
    log::info!("engine converged in {} iterations", out.iterations);

    // partition bookkeeping for the meta table / meta counts
    let mitigation_attrs: Option<&[String]> = match &cfg.mitigation {
        Mitigation::None => None,
        Mitigation::Single(a) => Some(std::slice::from_ref(a)),
        Mitigation::Sequential(attrs) | Mitigation::Multi(attrs) => Some(attrs),
    };
    let (mut excluded_missing, mut excluded_small) = (None, None);
    let mut group_tables = Vec::new();
    if let Some(attrs) = mitigation_attrs {
        if attrs.len() >= 2 {
            let joint = build_partition(
                &ds.matrix,
                &ds.schema,
                &ds.profiles,
                attrs,
                cfg.min_group_size,
            )
            .context("core-model: joint partition")?;
            excluded_missing = Some(joint.excluded_missing());
            excluded_small = Some(joint.excluded_small_group());
            group_tables.push(group_table(&ds, &joint, &attrs.join(" x "), &reputations)?);
        }
    }
    let mut dr_tables = Vec::new();
    for attr in &attributes {
        let partition = build_partition(&ds.matrix, &ds.schema, &ds.profiles, &[attr.clone()], 1)
            .context("core-model: attribute partition")?;
        group_tables.push(group_table(&ds, &partition, attr, &reputations)?);
        if partition.n_groups() >= 2 {
            let dr = dr_matrix(&reputations, &partition, &ds.schema, cfg.alpha)
                .context("stats-metrics: DR matrix")?;
            dr_tables.push(DrTable {
                attribute: attr.clone(),
                classes: dr.classes.clone(),
                group_sizes: dr.group_sizes.clone(),
                alpha: dr.alpha,
                cells: dr
                    .cells
                    .iter()
                    .map(|cell| DrCellOut {
                        class_a: dr.classes[cell.a].clone(),
                        class_b: dr.classes[cell.b].clone(),
                        delta: cell.delta,
                        p_value: cell.p_value,
                        reject: cell.reject,
                    })
                    .collect(),
            });
        }
    }

    let quality = match cfg.split {
        Some(fraction) => Some(quality_eval(cfg, &ds, &rankings, fraction)?),
        None => None,
    };

    let robustness = if cfg.attack.is_empty() {
        None
    } else {
        let kinds: Vec<SweepAttack> = cfg
            .attack
            .iter()
            .map(|&kind| SweepAttack {
                kind,
                target_item: match kind {
                    AttackKind::RandomSpam => None,
                    _ => cfg.attack_target.clone(),
                },
                side_set_size: cfg.side_set_size,
                attacker_attributes: true,
            })
            .collect();
        let mut methods = vec![
            Method::ArithmeticAverage,
            Method::Reputation(Mitigation::None),
        ];
        if cfg.mitigation != Mitigation::None {
            methods.push(Method::Reputation(cfg.mitigation.clone()));
        }
        let rows = attack_sweep(
            &ds,
            &kinds,
            &cfg.attack_proportions,
            &methods,
            &[cfg.seed],
            &engine_cfg,
            cfg.min_group_size,
        )
        .context("attack-sim: sweep")?;
        Some(
            rows.into_iter()
                .map(|r| RobustnessRow {
                    kind: r.kind.to_string(),
                    proportion: r.proportion,
                    method: r.method.to_string(),
                    seed: r.seed,
                    tau: r.tau,
                })
                .collect(),
        )
    };

    // unrated items only occur on split halves; full-matrix runs rank all
    debug_assert_eq!(rankings.unrated().len(), {
        (0..ds.matrix.n_items())
            .filter(|&i| ds.matrix.raters_of(ItemIdx(i as u32)).is_empty())
            .count()
    });

    Ok(ExperimentReport {
        meta: ReportMeta {
            dataset: cfg.dataset.as_str().to_owned(),
            ratings_path: cfg.ratings.display().to_string(),
            users_path: cfg.users.display().to_string(),
            lambda: cfg.lambda,
            max_iterations: cfg.iterations,
            convergence_tol: cfg.tol,
            iterations_run: out.iterations,
            mitigation: cfg.mitigation.to_string(),
            attributes,
            min_group_size: cfg.min_group_size,
            alpha: cfg.alpha,
            seed: cfg.seed,
            n_users: ds.matrix.n_users(),
            n_items: ds.matrix.n_items(),
            n_ratings: ds.matrix.n_entries(),
            max_raw_rating: ds.matrix.max_raw_rating(),
            users_without_ratings: ds.matrix.users_without_ratings(),
            recenter_variant: "min-targets-sample-std".to_owned(),
            mitigation_excluded_missing: excluded_missing,
            mitigation_excluded_small_groups: excluded_small,
        },
        group_stats: group_tables,
        dr: dr_tables,
        quality,
        robustness,
    })
}

pub fn execute(cfg: &ExperimentConfig) -> Result<()> {
    let report = run(cfg)?;
    match cfg.format {
        OutputFormat::Json => crate::report::write_json(&report, &cfg.out)?,
        OutputFormat::CsvBundle => crate::report::write_csv_bundle(&report, &cfg.out)?,
    }
    log::info!("report written to {}", cfg.out.display());
    Ok(())
}

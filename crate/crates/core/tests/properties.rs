//! Property tests for the model, engine, independence and stats invariants.

use proptest::prelude::*;

use reprank_core::engine::{
    arithmetic_average, compute, update_rankings, update_reputations, EngineConfig,
    RankingVector, ReputationVector,
};
use reprank_core::independence::{group_stats, multi_fair, recenter};
use reprank_core::model::{
    build_partition, AttributeSchema, ItemIdx, RatingsMatrix, UserIdx, UserProfiles,
};
use reprank_core::stats::{disparate_reputation, rmse, tau_b};

#[derive(Debug, Clone)]
struct Instance {
    entries: Vec<(String, String, f64)>,
    n_users: usize,
    n_items: usize,
    classes: Vec<Vec<u16>>, // per user, per attribute
    n_classes: Vec<u16>,
    lambda: f64,
}

fn instance_strategy(max_users: usize, max_items: usize) -> impl Strategy<Value = Instance> {
    (
        2..=max_users,
        2..=max_items,
        proptest::collection::vec(1u8..=5, 1..200),
        proptest::collection::vec(2u16..=4, 1..=3),
        0.05f64..0.95,
        any::<u64>(),
    )
        .prop_map(|(n_users, n_items, stars, n_classes, lambda, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut entries = Vec::new();
            let mut star_ix = 0usize;
            let mut next_star = |rng: &mut rand_chacha::ChaCha8Rng| {
                let s = if star_ix < stars.len() {
                    stars[star_ix]
                } else {
                    rng.gen_range(1..=5)
                };
                star_ix += 1;
                s as f64
            };
            for u in 0..n_users {
                // every user rates at least one item
                let forced = rng.gen_range(0..n_items);
                for i in 0..n_items {
                    if i == forced || rng.gen_bool(0.35) {
                        entries.push((format!("u{u}"), format!("i{i}"), next_star(&mut rng)));
                    }
                }
            }
            let classes = (0..n_users)
                .map(|_| {
                    n_classes
                        .iter()
                        .map(|&s| rng.gen_range(0..s))
                        .collect::<Vec<u16>>()
                })
                .collect();
            Instance {
                entries,
                n_users,
                n_items,
                classes,
                n_classes,
                lambda,
            }
        })
}

fn build(inst: &Instance) -> (RatingsMatrix, AttributeSchema, UserProfiles) {
    let matrix = RatingsMatrix::from_raw_entries(inst.entries.clone(), 5.0).unwrap();
    let schema = AttributeSchema::new(
        inst.n_classes
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                (
                    format!("attr{j}"),
                    (0..s).map(|c| format!("c{c}")).collect::<Vec<_>>(),
                )
            })
            .collect(),
    )
    .unwrap();
    let mut profiles = UserProfiles::new();
    for (u, row) in inst.classes.iter().enumerate() {
        // profile rows map by the matrix's id, which follows entry order;
        // index by name to stay robust
        profiles.insert(&format!("u{u}"), row.iter().map(|&c| Some(c)).collect());
    }
    (matrix, schema, profiles)
}

fn attr_names(schema: &AttributeSchema) -> Vec<String> {
    schema.attributes().iter().map(|a| a.name.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_is_disjoint_and_covering(inst in instance_strategy(24, 8)) {
        let (matrix, schema, profiles) = build(&inst);
        let attrs = attr_names(&schema);
        let p = build_partition(&matrix, &schema, &profiles, &attrs, 1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (_, members) in p.groups() {
            for &u in members {
                prop_assert!(seen.insert(u), "user in two groups");
            }
        }
        // all users fully labeled -> full coverage
        prop_assert_eq!(seen.len(), matrix.n_users());
        // determinism: same inputs give the identical group map
        let q = build_partition(&matrix, &schema, &profiles, &attrs, 1).unwrap();
        let collect = |p: &reprank_core::model::GroupPartition| {
            p.groups()
                .map(|(k, m)| (k.to_vec(), m.to_vec()))
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(collect(&p), collect(&q));
    }

    #[test]
    fn engine_bounds_hold_at_every_iteration(inst in instance_strategy(16, 6)) {
        let (matrix, _, _) = build(&inst);
        let mut c = ReputationVector::new(vec![Some(1.0); matrix.n_users()]);
        let mut deltas = Vec::new();
        for _ in 0..8 {
            let r = update_rankings(&matrix, &c).unwrap();
            // every ranking sits inside the span of its item's ratings
            for (i, value) in r.iter_present() {
                let ratings: Vec<f64> =
                    matrix.raters_of(i).iter().map(|&(_, x)| x).collect();
                let lo = ratings.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ratings.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(value >= lo - 1e-12 && value <= hi + 1e-12);
            }
            let next = update_reputations(&matrix, &r, inst.lambda).unwrap();
            for (_, v) in next.iter_present() {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
            let delta = c
                .iter_present()
                .map(|(u, x)| (x - next.get(u).unwrap()).abs())
                .fold(0.0, f64::max);
            deltas.push(delta);
            c = next;
        }
        // contraction after the first iteration, modulo float noise
        for w in deltas[1..].windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15, "deltas not contracting: {:?}", deltas);
        }
        if deltas[0] > 0.0 {
            prop_assert!(
                deltas[7] / deltas[0] < 0.1,
                "slow convergence: {:?}",
                deltas
            );
        }
    }

    #[test]
    fn compute_is_deterministic(inst in instance_strategy(16, 6)) {
        let (matrix, _, _) = build(&inst);
        let cfg = EngineConfig {
            lambda: inst.lambda,
            ..EngineConfig::default()
        };
        let a = compute(&matrix, &cfg).unwrap();
        let b = compute(&matrix, &cfg).unwrap();
        prop_assert_eq!(a.reputations.as_slice(), b.reputations.as_slice());
        prop_assert_eq!(a.rankings.as_slice(), b.rankings.as_slice());
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn permuting_users_permutes_reputations(inst in instance_strategy(12, 6)) {
        let (matrix, _, _) = build(&inst);
        let cfg = EngineConfig {
            lambda: inst.lambda,
            max_iterations: 20,
            ..EngineConfig::default()
        };
        let base = compute(&matrix, &cfg).unwrap();
        // feed the entries in reversed user order: ids map to new indices
        let mut reversed = inst.entries.clone();
        reversed.reverse();
        let permuted = RatingsMatrix::from_raw_entries(reversed, 5.0).unwrap();
        let out = compute(&permuted, &cfg).unwrap();
        for u in 0..matrix.n_users() {
            let id = matrix.user_id(UserIdx(u as u32));
            let pu = permuted.user_idx(id).unwrap();
            let (a, b) = (base.reputations.get(UserIdx(u as u32)), out.reputations.get(pu));
            prop_assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
        for i in 0..matrix.n_items() {
            let id = matrix.item_id(ItemIdx(i as u32));
            let pi = permuted.item_idx(id).unwrap();
            let (a, b) = (base.rankings.get(ItemIdx(i as u32)), out.rankings.get(pi));
            prop_assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_recentring_zeroes_every_marginal(inst in instance_strategy(24, 8)) {
        let (matrix, schema, profiles) = build(&inst);
        let cfg = EngineConfig {
            lambda: inst.lambda,
            ..EngineConfig::default()
        };
        let out = compute(&matrix, &cfg).unwrap();
        let attrs = attr_names(&schema);
        let (c, _) = multi_fair(&matrix, &out.reputations, &schema, &profiles, &attrs, 1)
            .unwrap();
        for (j, attr) in attrs.iter().enumerate() {
            let p = build_partition(&matrix, &schema, &profiles, &[attr.clone()], 1).unwrap();
            let stats = group_stats(&c, &p).unwrap();
            for pair in stats.groups().windows(2) {
                prop_assert!(
                    (pair[0].mean - pair[1].mean).abs() <= 1e-10,
                    "attr {j} marginal means differ: {} vs {}",
                    pair[0].mean,
                    pair[1].mean
                );
            }
        }
        for (_, v) in c.iter_present() {
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn recentring_preserves_group_order_and_is_idempotent(inst in instance_strategy(20, 8)) {
        let (matrix, schema, profiles) = build(&inst);
        let cfg = EngineConfig {
            lambda: inst.lambda,
            ..EngineConfig::default()
        };
        let out = compute(&matrix, &cfg).unwrap();
        let attrs = attr_names(&schema);
        let p = build_partition(&matrix, &schema, &profiles, &attrs, 1).unwrap();
        let once = recenter(&out.reputations, &p).unwrap();
        // within-group order preserved (positive affine map)
        for (_, members) in p.groups() {
            let argsort = |c: &ReputationVector| {
                let mut ix: Vec<usize> = (0..members.len()).collect();
                ix.sort_by(|&a, &b| {
                    c.get(members[a])
                        .unwrap()
                        .total_cmp(&c.get(members[b]).unwrap())
                });
                ix
            };
            prop_assert_eq!(argsort(&out.reputations), argsort(&once.reputations));
        }
        // applying again changes nothing (up to float round-off)
        let twice = recenter(&once.reputations, &p).unwrap();
        for (u, v) in twice.reputations.iter_present() {
            prop_assert!((v - once.reputations.get(u).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn dr_anticommutes_and_is_bounded(inst in instance_strategy(16, 6)) {
        let (matrix, schema, profiles) = build(&inst);
        let out = compute(
            &matrix,
            &EngineConfig {
                lambda: inst.lambda,
                ..EngineConfig::default()
            },
        )
        .unwrap();
        let p = build_partition(&matrix, &schema, &profiles, &["attr0".into()], 1).unwrap();
        let groups: Vec<Vec<UserIdx>> = p.groups().map(|(_, m)| m.to_vec()).collect();
        if groups.len() >= 2 {
            let d = disparate_reputation(&out.reputations, &groups[0], &groups[1]).unwrap();
            let back = disparate_reputation(&out.reputations, &groups[1], &groups[0]).unwrap();
            prop_assert_eq!(d, -back);
            let bound = 1.0 - matrix.delta_r() * inst.lambda;
            prop_assert!(d.abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn tau_depends_only_on_induced_order(values in proptest::collection::vec(0.0f64..1.0, 3..24)) {
        let n = values.len() / 2 * 2;
        let xs = &values[..n / 2];
        let ys = &values[n / 2..n];
        let strictly_monotone = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|x| (3.0 * x + 1.0).exp()).collect()
        };
        if let Ok(t) = tau_b(xs, ys) {
            let t2 = tau_b(&strictly_monotone(xs), &strictly_monotone(ys)).unwrap();
            prop_assert!((t - t2).abs() < 1e-12, "{t} vs {t2}");
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert_eq!(tau_b(xs, xs).unwrap(), 1.0);
        }
    }

    #[test]
    fn rmse_is_a_symmetric_premetric(
        u in proptest::collection::vec(0.0f64..1.0, 1..32),
        shift in 0.0f64..0.5,
    ) {
        let v: Vec<f64> = u.iter().map(|x| x + shift).collect();
        let a = rmse(&u, &v).unwrap();
        let b = rmse(&v, &u).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
        prop_assert_eq!(rmse(&u, &u).unwrap(), 0.0);
        if shift > 0.0 {
            prop_assert!(a > 0.0);
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_and_single_thread_agree_bitwise() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    let mut entries = Vec::new();
    for u in 0..300 {
        for i in 0..80 {
            if rng.gen_bool(0.2) || i == u % 80 {
                entries.push((format!("u{u}"), format!("i{i}"), rng.gen_range(1..=5) as f64));
            }
        }
    }
    let matrix = RatingsMatrix::from_raw_entries(entries, 5.0).unwrap();
    let cfg = EngineConfig::default();
    let wide = compute(&matrix, &cfg).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let narrow = single.install(|| compute(&matrix, &cfg).unwrap());
    assert_eq!(wide.reputations.as_slice(), narrow.reputations.as_slice());
    assert_eq!(wide.rankings.as_slice(), narrow.rankings.as_slice());
    let aa_wide = arithmetic_average(&matrix);
    let aa_narrow = single.install(|| arithmetic_average(&matrix));
    assert_eq!(aa_wide.as_slice(), aa_narrow.as_slice());
}

#[test]
fn ranking_vector_reports_unrated_items() {
    let matrix =
        RatingsMatrix::from_raw_entries([("u1", "i1", 3.0), ("u2", "i2", 4.0)], 5.0).unwrap();
    let rankings = RankingVector::new(vec![Some(0.6), None]);
    assert_eq!(rankings.unrated(), vec![ItemIdx(1)]);
    let _ = matrix;
}

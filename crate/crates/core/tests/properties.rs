mod common;

use benchcert_core::audit::{bayes_error, certifiable_fraction, residual_ambiguity};
use benchcert_core::completion::{completion_curve, delta_q, updated_residual, CompletionPolicy, Probe, ProbePool};
use benchcert_core::fiber::{build_fibers, FiberKey, FiberPartition, FiberRule};
use benchcert_core::geometry::{certify_interval, CandidateBound, ResponseGeometry};
use benchcert_core::replay::{
    calibrate, clopper_pearson_zero, replay_split, AcquisitionOracle, CalibrationMode, CalibrationRule, Route,
};
use benchcert_core::risk::{empirical_bayes_risk, expected_value_of_information, LossMatrix};
use benchcert_core::{ActionAlphabet, CandidateTable, EvidenceColumn};
use common::{discrete_table, naive_audit, normal_equation_projection};
use proptest::prelude::*;

fn token_rows(max_n: usize, arity: usize) -> impl Strategy<Value = (Vec<Vec<String>>, Vec<usize>)> {
    (1..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), arity), n),
            prop::collection::vec(0usize..2, n),
        )
            .prop_map(|(rows, labels)| {
                (
                    rows.into_iter().map(|r| r.into_iter().map(String::from).collect()).collect(),
                    labels,
                )
            })
    })
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Dimension, independent benchmark vectors, a redundant mixing, k★ and a probe q.
fn geometry_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (3usize..=16).prop_flat_map(|n| {
        (1..n).prop_flat_map(move |r| {
            (
                prop::collection::vec(vec_strategy(n), r),
                prop::collection::vec(vec_strategy(r), 0..3),
                vec_strategy(n),
                vec_strategy(n),
            )
                .prop_map(|(basis, mixes, k, q)| {
                    let mut probes = basis.clone();
                    for m in mixes {
                        let mut v = vec![0.0; basis[0].len()];
                        for (c, b) in m.iter().zip(&basis) {
                            v.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
                        }
                        probes.push(v);
                    }
                    (basis, probes, k, q)
                })
        })
    })
}

fn well_conditioned(basis: &[Vec<f64>]) -> bool {
    // Reject near-dependent draws so the normal-equation oracle stays accurate.
    let g = ResponseGeometry::with_default_tolerance(basis, &basis[0]);
    matches!(g, Ok(ref g) if g.rank() == basis.len())
        && basis.iter().enumerate().all(|(i, b)| {
            let others: Vec<Vec<f64>> = basis.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if others.is_empty() {
                return nb > 1e-3;
            }
            let h = ResponseGeometry::with_default_tolerance(&others, b).unwrap();
            h.residual_norm() > 1e-3 * nb.max(1e-300)
        })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn exact_fibers_match_naive_enumeration((rows, labels) in token_rows(12, 2)) {
        let table = discrete_table(&rows, &labels);
        let p = build_fibers(&table, FiberRule::ExactPattern).unwrap();
        let oracle = naive_audit(&rows, &labels);
        let (cert, amb) = certifiable_fraction(&p, &labels).unwrap();
        prop_assert_eq!(cert, oracle.cert);
        prop_assert_eq!(amb, oracle.amb);
        prop_assert!((bayes_error(&p, &labels).unwrap() - oracle.err).abs() < 1e-12);
        match (residual_ambiguity(&p, &labels).unwrap(), oracle.rho) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn partition_groups_cover_each_candidate_once((rows, labels) in token_rows(30, 3)) {
        let table = discrete_table(&rows, &labels);
        let p = build_fibers(&table, FiberRule::ExactPattern).unwrap();
        let mut seen = vec![0usize; rows.len()];
        for members in p.groups().unwrap().values() {
            for &i in members {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn merging_fibers_never_helps((rows, labels) in token_rows(20, 2), a in 0usize..9, b in 0usize..9) {
        let table = discrete_table(&rows, &labels);
        let p = build_fibers(&table, FiberRule::ExactPattern).unwrap();
        let keys: Vec<FiberKey> = p.groups().unwrap().keys().cloned().collect();
        let (ka, kb) = (&keys[a % keys.len()], &keys[b % keys.len()]);
        let merged_keys = p
            .keys_by_candidate()
            .unwrap()
            .into_iter()
            .map(|k| if &k == kb { ka.clone() } else { k })
            .collect();
        let merged = FiberPartition::from_keys(FiberRule::ExactPattern, merged_keys);
        prop_assert!(certifiable_fraction(&merged, &labels).unwrap().0 <= certifiable_fraction(&p, &labels).unwrap().0);
        prop_assert!(bayes_error(&merged, &labels).unwrap() >= bayes_error(&p, &labels).unwrap());
    }

    #[test]
    fn bayes_error_at_most_half_the_ambiguous_mass((rows, labels) in token_rows(30, 2)) {
        let table = discrete_table(&rows, &labels);
        let p = build_fibers(&table, FiberRule::ExactPattern).unwrap();
        let (_, amb) = certifiable_fraction(&p, &labels).unwrap();
        prop_assert!(bayes_error(&p, &labels).unwrap() <= 0.5 * amb + 1e-15);
    }

    #[test]
    fn finer_nested_quantiles_never_lower_cert(
        b1 in 1usize..5,
        mult in 1usize..4,
        per_bin in 1usize..4,
        seed_labels in prop::collection::vec(0usize..2, 60),
        jitter in prop::collection::vec(0.0f64..1.0, 60),
    ) {
        let b2 = b1 * mult;
        let n = b2 * per_bin;
        prop_assume!(n <= 60);
        // Distinct values in a shuffled order.
        let mut values: Vec<(f64, usize)> = (0..n).map(|i| (jitter[i], i)).collect();
        values.sort_by(|x, y| x.0.total_cmp(&y.0));
        let vals: Vec<f64> = values.iter().map(|(_, i)| *i as f64).collect();
        let labels = seed_labels[..n].to_vec();
        let table = CandidateTable::new(
            (0..n).map(|i| format!("c{i}")).collect(),
            vec![EvidenceColumn::Continuous { name: "e".into(), values: vals }],
        ).unwrap().with_label_indices(ActionAlphabet::binary(), labels.clone()).unwrap();
        let coarse = build_fibers(&table, FiberRule::Quantile { bins_per_dim: b1 }).unwrap();
        let fine = build_fibers(&table, FiberRule::Quantile { bins_per_dim: b2 }).unwrap();
        prop_assert!(certifiable_fraction(&fine, &labels).unwrap().0 >= certifiable_fraction(&coarse, &labels).unwrap().0);
    }

    #[test]
    fn projection_matches_normal_equations((basis, probes, k, q) in geometry_case()) {
        prop_assume!(well_conditioned(&basis) && norm(&k) > 1e-3 && norm(&q) > 1e-3);
        let geom = ResponseGeometry::with_default_tolerance(&probes, &k).unwrap();
        prop_assert_eq!(geom.rank(), basis.len());
        let pk = geom.project(&k);
        let oracle = normal_equation_projection(&basis, &k);
        for (a, b) in pk.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8);
        }
        // Idempotence.
        let ppk = geom.project(&pk);
        for (a, b) in pk.iter().zip(&ppk) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        // Pythagoras.
        let g = geom.residual_norm();
        prop_assert!((norm(&k).powi(2) - (norm(&pk).powi(2) + g * g)).abs() < 1e-8);
        // Basis invariance under an invertible mix (unit lower-triangular).
        let mut mixed = basis.clone();
        for i in 1..mixed.len() {
            let prev = mixed[i - 1].clone();
            mixed[i].iter_mut().zip(&prev).for_each(|(x, y)| *x += 0.5 * y);
        }
        let geom2 = ResponseGeometry::with_default_tolerance(&mixed, &k).unwrap();
        prop_assert!((geom2.residual_norm() - g).abs() < 1e-8);
    }

    #[test]
    fn delta_decomposes_residual((basis, probes, k, q) in geometry_case(), c in prop::sample::select(vec![-3.0, -0.5, 0.25, 2.0])) {
        prop_assume!(well_conditioned(&basis) && norm(&k) > 1e-3 && norm(&q) > 1e-3);
        let geom = ResponseGeometry::with_default_tolerance(&probes, &k).unwrap();
        let g = geom.residual_norm();
        let d = delta_q(&geom, &q).unwrap();
        prop_assert!(d >= 0.0 && d <= g * g + 1e-12);
        let gq = updated_residual(&geom, &q).unwrap();
        prop_assert!((d + gq * gq - g * g).abs() < 1e-8);
        let rebuilt = geom.with_probe(&q).unwrap().residual_norm();
        prop_assert!((g * g - rebuilt * rebuilt - d).abs() < 1e-8);
        let scaled: Vec<f64> = q.iter().map(|x| c * x).collect();
        prop_assert!((delta_q(&geom, &scaled).unwrap() - d).abs() < 1e-10);
        prop_assert!((delta_q(&geom, &k).unwrap() - g * g).abs() < 1e-10);
    }

    #[test]
    fn certificate_class_is_scale_invariant(
        y in -2.0f64..2.0, delta in 0.0f64..0.5, radius in 0.0f64..2.0, g in 0.0f64..1.0, tau in -1.0f64..1.0,
        c in prop::sample::select(vec![0.5, 2.0, 4.0]),
    ) {
        let base = certify_interval(CandidateBound::new(y, delta, radius).unwrap(), g, tau);
        let scaled = certify_interval(CandidateBound::new(c * y, c * delta, radius).unwrap(), c * g, c * tau);
        // Dyadic scales keep every product exact, so the comparison is exact too.
        prop_assert_eq!(base.class, scaled.class);
    }

    #[test]
    fn certified_fraction_nonincreasing_in_g(
        ys in prop::collection::vec(-2.0f64..2.0, 1..40), radius in 0.0f64..2.0, tau in -0.5f64..0.5,
        g1 in 0.0f64..1.0, dg in 0.0f64..1.0,
    ) {
        let count = |g: f64| ys.iter().filter(|&&y| certify_interval(CandidateBound::new(y, 0.0, radius).unwrap(), g, tau).class.is_certified()).count();
        prop_assert!(count(g1 + dg) <= count(g1));
    }

    #[test]
    fn orthonormal_pool_completes_within_codimension(n in 3usize..9, r_frac in 0.1f64..0.9, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = ((n as f64 * r_frac) as usize).clamp(1, n - 1);
        let mut gauss = |m: usize| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let benchmark: Vec<Vec<f64>> = (0..r).map(|_| gauss(n)).collect();
        let k = gauss(n);
        let rot = ResponseGeometry::with_default_tolerance(&(0..n).map(|_| gauss(n)).collect::<Vec<_>>(), &k).unwrap();
        let pool = ProbePool::new(
            rot.basis().columns().iter().enumerate().map(|(i, v)| Probe { id: format!("p{i:02}"), vector: v.clone(), cost: 1.0 }).collect(),
        ).unwrap();
        prop_assume!(pool.len() == n);
        let geom = ResponseGeometry::with_default_tolerance(&benchmark, &k).unwrap();
        let budgets: Vec<f64> = (0..=n).map(|b| b as f64).collect();
        let curve = completion_curve(&geom, &pool, CompletionPolicy::ResidualGreedy, &|_| Ok(0.0), &budgets, None).unwrap();
        let first_zero = curve.steps.iter().position(|s| s.residual_norm == 0.0).map(|i| i + 1);
        prop_assert!(matches!(first_zero, Some(s) if s <= n - geom.rank()), "steps {:?}", first_zero);
    }

    #[test]
    fn evi_is_nonnegative_and_additive_on_chains((rows, labels) in token_rows(25, 3), w01 in 0.1f64..5.0, w10 in 0.1f64..5.0) {
        let key = |depth: usize| -> FiberPartition {
            FiberPartition::from_keys(FiberRule::ExactPattern, rows.iter().map(|r| FiberKey::Tokens(r[..depth].to_vec())).collect())
        };
        let (a, b, c) = (key(1), key(2), key(3));
        let loss = LossMatrix::new(vec![vec![0.0, w01], vec![w10, 0.0]]).unwrap();
        let ab = expected_value_of_information(&a, &b, &labels, &loss).unwrap();
        let bc = expected_value_of_information(&b, &c, &labels, &loss).unwrap();
        let ac = expected_value_of_information(&a, &c, &labels, &loss).unwrap();
        prop_assert!(ab >= 0.0 && bc >= 0.0);
        prop_assert!((ac - ab - bc).abs() < 1e-12);
        let zero_one = empirical_bayes_risk(&c, &labels, &LossMatrix::zero_one(2)).unwrap();
        prop_assert!((zero_one - bayes_error(&c, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_monotone(n in 1usize..500, d1 in 0.001f64..0.5, dd in 0.001f64..0.4) {
        prop_assert!(clopper_pearson_zero(n + 1, d1).unwrap() < clopper_pearson_zero(n, d1).unwrap());
        prop_assert!(clopper_pearson_zero(n, d1 + dd).unwrap() < clopper_pearson_zero(n, d1).unwrap());
    }

    #[test]
    fn replay_is_conservative_and_monotone_in_support(
        (rows, labels) in token_rows(60, 1),
        (hrows, hlabels) in token_rows(40, 1),
        s1 in 1usize..6, ds in 0usize..6,
    ) {
        let cal = discrete_table(&rows, &labels);
        let held = discrete_table(&hrows, &hlabels);
        let rule = |m| CalibrationRule { min_support: m, mode: CalibrationMode::Unanimity };
        let lo = calibrate(&cal, FiberRule::ExactPattern, rule(s1)).unwrap();
        let hi = calibrate(&cal, FiberRule::ExactPattern, rule(s1 + ds)).unwrap();
        prop_assert!(hi.certified_fiber_count() <= lo.certified_fiber_count());

        let (plan, out) = replay_split(&cal, &held, FiberRule::ExactPattern, rule(s1), AcquisitionOracle::Exact, 0, 9).unwrap();
        prop_assert_eq!(out.decided_immediately + out.deferred, hrows.len());
        prop_assert_eq!(out.false_after, out.false_after_certified);
        let mut expected = 0;
        for (d, &t) in plan.decisions.iter().zip(&hlabels) {
            if d.route == Route::Certified && d.action.as_deref() != Some(if t == 1 { "1" } else { "0" }) {
                expected += 1;
            }
        }
        prop_assert_eq!(out.false_after, expected);
        let again = replay_split(&cal, &held, FiberRule::ExactPattern, rule(s1), AcquisitionOracle::Exact, 0, 9).unwrap();
        prop_assert_eq!(serde_json::to_string(&out).unwrap(), serde_json::to_string(&again.1).unwrap());
    }
}

#[test]
fn neighbourhood_risk_examples() {
    use benchcert_core::audit::neighbourhood_decision_risk;
    let full = |n: usize| FiberPartition {
        rule: FiberRule::NearestNeighbour { k: n },
        n,
        grouping: benchcert_core::Grouping::Neighbourhood(vec![(0..n).collect(); n]),
    };
    assert_eq!(neighbourhood_decision_risk(&full(2), &[1, 0]).unwrap().risk, 0.5);
    assert!((neighbourhood_decision_risk(&full(3), &[1, 1, 0]).unwrap().risk - 1.0 / 3.0).abs() < 1e-15);
}

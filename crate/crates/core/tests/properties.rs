mod common;

use common::{emd_axiom_violation, m_ll_oracle, random_ag, random_bundle, random_distribution, random_pair};
use hetgl2r::groundtruth::importance_score;
use hetgl2r::metrics::{diff, kendall_tau, kendall_tau_naive, ndcg_at_k, RankingPair};
use hetgl2r::network::example_network;
use hetgl2r::pipeline::walk_law_battery;
use hetgl2r::tripgraph::{build_trip_graph, normalize_kernels, Graphs};
use hetgl2r::walk::markov::propagation_identity;
use hetgl2r::walk::WalkConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn trip_graph_matches_path_enumeration(seed in any::<u64>()) {
        let b = random_bundle(seed, 50);
        let tg = build_trip_graph(&b, 2.0).unwrap();
        let oracle = m_ll_oracle(&b, 2.0);
        let err = (&tg.m_ll - &oracle).mapv(f64::abs).fold(0.0f64, |a, &v| a.max(v));
        prop_assert!(err < 1e-12, "max error {err:e}");
        for (p, path) in b.paths.iter().enumerate() {
            prop_assert_eq!(tg.m_op[[path.od, p]], path.share);
            for s in 0..b.network.len() {
                let on = path.segments.contains(&s);
                prop_assert_eq!(tg.m_pl[[p, s]], if on { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn larger_decay_base_only_shrinks_gapped_entries(seed in any::<u64>()) {
        let b = random_bundle(seed, 30);
        let m2 = build_trip_graph(&b, 2.0).unwrap().m_ll;
        let m3 = build_trip_graph(&b, 3.0).unwrap().m_ll;
        let n = b.network.len();
        let mut adjacent = ndarray::Array2::<f64>::zeros((n, n));
        for p in &b.paths {
            for w in p.segments.windows(2) {
                adjacent[[w[0], w[1]]] += 1.0;
            }
        }
        for ((i, j), &v2) in m2.indexed_iter() {
            let v3 = m3[[i, j]];
            if v2 == adjacent[[i, j]] {
                prop_assert_eq!(v3, v2);
            } else {
                prop_assert!(v3 < v2, "entry ({i},{j}) {v3} !< {v2}");
            }
        }
    }

    #[test]
    fn normalized_kernel_rows_sum_to_one_or_zero(seed in any::<u64>()) {
        let b = random_bundle(seed, 40);
        let k = normalize_kernels(&build_trip_graph(&b, 2.0).unwrap());
        for m in [&k.m_pl_row, &k.m_ll_row] {
            for r in m.rows() {
                let s = r.sum();
                prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
            }
        }
        for c in k.m_pl_col.columns() {
            let s = c.sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_step_attribute_walk_equals_propagation_operator(seed in any::<u64>()) {
        let id = propagation_identity(&random_ag(seed));
        prop_assert!(id.unnormalized < 1e-12, "{:e}", id.unnormalized);
        prop_assert!(id.normalized < 1e-12, "{:e}", id.normalized);
    }

    #[test]
    fn fast_kendall_equals_pairwise_count(seed in any::<u64>(), n in 2usize..200) {
        let p = random_pair(&mut ChaCha8Rng::seed_from_u64(seed), n);
        prop_assert!((kendall_tau(&p) - kendall_tau_naive(&p)).abs() < 1e-12);
    }

    #[test]
    fn kendall_extremes(seed in any::<u64>(), n in 2usize..100) {
        let p = random_pair(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let same = RankingPair::from_scores(p.ids.clone(), p.gt_scores.clone(), p.gt_scores.clone()).unwrap();
        let neg: Vec<f64> = p.gt_scores.iter().map(|v| -v).collect();
        let rev = RankingPair::from_scores(p.ids.clone(), p.gt_scores.clone(), neg).unwrap();
        prop_assert_eq!(kendall_tau(&same), 1.0);
        prop_assert_eq!(kendall_tau(&rev), -1.0);
    }

    #[test]
    fn position_metrics_ignore_monotone_transforms(seed in any::<u64>(), n in 2usize..60) {
        let p = random_pair(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let warped: Vec<f64> = p.pred_scores.iter().map(|v| (0.3 * v).exp() + 5.0).collect();
        let q = RankingPair::from_scores(p.ids.clone(), p.gt_scores.clone(), warped).unwrap();
        prop_assert_eq!(kendall_tau(&p), kendall_tau(&q));
        prop_assert_eq!(diff(&p), diff(&q));
        prop_assert_eq!(ndcg_at_k(&p, n), ndcg_at_k(&q, n));
    }

    #[test]
    fn emd_is_a_metric(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_distribution(&mut rng, n);
        let q = random_distribution(&mut rng, n);
        let r = random_distribution(&mut rng, n);
        prop_assert_eq!(emd_axiom_violation(&p, &q, &r), None);
    }

    #[test]
    fn importance_grows_with_gamma(
        n in proptest::collection::vec(0usize..20, 1..15),
        g1 in 0.01f64..1.0,
        g2 in 0.01f64..1.0,
    ) {
        let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
        let t = n.len();
        let a = importance_score(&n, lo, t);
        let b = importance_score(&n, hi, t);
        prop_assert!(a <= b);
        if lo < hi && n.iter().any(|&c| c > 0) {
            prop_assert!(a < b);
        }
    }
}

#[test]
fn sampled_walk_steps_follow_the_analytic_mixture() {
    let g = Graphs::build(&example_network(), 2.0).unwrap();
    for alpha in [0.3, 0.6, 0.9] {
        let cfg = WalkConfig {
            alpha,
            seed: 21,
            ..WalkConfig::default()
        };
        let p = walk_law_battery(&g, &cfg, 5, 50_000, 21);
        assert!(p > 1e-3, "alpha {alpha}: min p {p}");
    }
}

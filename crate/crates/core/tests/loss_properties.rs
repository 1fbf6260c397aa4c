mod common;

use common::{random_connected_graph, random_simplex, rng};
use proptest::prelude::*;
use rand::Rng;
use tvgnn::autodiff::{Tape, Tensor};
use tvgnn::graph::Graph;
use tvgnn::losses::{an_loss_value, beta, gtv_loss_raw, tvgnn_loss, TvLossConfig};

fn loss_parts(g: &Graph, s: &Tensor, rho: Option<f64>) -> (f64, f64) {
    let mut tape = Tape::new();
    let sn = tape.constant(s.clone());
    let cfg = TvLossConfig {
        rho,
        ..TvLossConfig::new(1.0, 1.0)
    };
    let (_, report) = tvgnn_loss(&mut tape, g, sn, &cfg).unwrap();
    (report.get("gtv").unwrap(), report.get("an").unwrap())
}

fn hard(n: usize, k: usize, cluster: impl Fn(usize) -> usize) -> Tensor {
    let mut s = Tensor::zeros(&[n, k]);
    for i in 0..n {
        s.set(i, cluster(i), 1.0);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn both_terms_stay_in_unit_interval(seed in any::<u64>(), n in 3usize..30, k in 2usize..6, rho_frac in 0.0f64..1.0) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, n, 1, 0.2);
        let s = random_simplex(&mut r, n, k);
        let rho = 1.0 + rho_frac * (k as f64 - 2.0);
        let (gtv, an) = loss_parts(&g, &s, Some(rho));
        prop_assert!((0.0..=1.0).contains(&gtv), "gtv {gtv}");
        prop_assert!((0.0..=1.0).contains(&an), "an {an}");
    }

    #[test]
    fn degenerate_assignments_score_one(n in 3usize..40, k in 2usize..8, which in 0usize..8) {
        let g = Graph::from_edges(n, &(0..n - 1).map(|i| (i, i + 1, 1.0)).collect::<Vec<_>>(), Tensor::zeros(&[n, 1])).unwrap();
        let collapsed = hard(n, k, |_| which % k);
        let uniform = Tensor::filled(&[n, k], 1.0 / k as f64);
        for s in [collapsed, uniform] {
            let (_, an) = loss_parts(&g, &s, None);
            prop_assert!((an - 1.0).abs() <= 1e-9, "{an}");
        }
    }

    #[test]
    fn balanced_hard_partition_scores_zero(k in 2usize..7, per in 1usize..8, seed in any::<u64>()) {
        let n = k * per;
        let mut r = rng(seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        for i in (1..n).rev() {
            labels.swap(i, r.random_range(0..=i));
        }
        let s = hard(n, k, |i| labels[i]);
        let an = an_loss_value(&s, (k - 1) as f64).unwrap();
        prop_assert!((1.0 - an / beta(n, k, (k - 1) as f64)).abs() <= 1e-9);
    }

    #[test]
    fn gtv_matches_edge_double_loop(seed in any::<u64>(), n in 2usize..10, k in 1usize..4) {
        let mut r = rng(seed);
        let edges = common::random_connected_edges(&mut r, n, 0.3, true);
        let g = Graph::from_edges(n, &edges, Tensor::zeros(&[n, 1])).unwrap();
        let s = random_simplex(&mut r, n, k);
        let mut tape = Tape::new();
        let sn = tape.constant(s.clone());
        let got = gtv_loss_raw(&mut tape, &g, sn).unwrap();
        let mut dense = vec![vec![0.0; n]; n];
        for &(i, j, w) in &edges {
            dense[i][j] += w;
            dense[j][i] += w;
        }
        let mut want = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for c in 0..k {
                    want += dense[i][j] * (s.get(i, c) - s.get(j, c)).abs();
                }
            }
        }
        prop_assert!((tape.value(got).item() - want).abs() <= 1e-12 * want.max(1.0));
    }
}

use itertools::Itertools;
use proptest::prelude::*;
use tvgnn::autodiff::Tensor;
use tvgnn::graph::Graph;
use tvgnn::metrics::{accuracy, cut_value, kuhn_munkres, nmi};

fn exhaustive_best(m: &[Vec<i64>]) -> (i64, Vec<usize>) {
    let n = m.len();
    let mut best: Option<(i64, Vec<usize>)> = None;
    for p in (0..n).permutations(n) {
        let mass: i64 = p.iter().enumerate().map(|(r, &c)| m[r][c]).sum();
        if best.as_ref().is_none_or(|b| mass > b.0) {
            best = Some((mass, p));
        }
    }
    best.unwrap_or((0, Vec::new()))
}

fn partition(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..k, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matching_agrees_with_brute_force(k in 1usize..6, seed in proptest::collection::vec(0i64..6, 36)) {
        let m: Vec<Vec<i64>> = (0..k).map(|r| seed[r * 6..r * 6 + k].to_vec()).collect();
        let p = kuhn_munkres(&m).unwrap();
        let (mass, first) = exhaustive_best(&m);
        prop_assert_eq!(p.iter().enumerate().map(|(r, &c)| m[r][c]).sum::<i64>(), mass);
        prop_assert_eq!(p, first);
    }

    #[test]
    fn nmi_is_symmetric_and_bounded(a in partition(20, 4), b in partition(20, 3)) {
        let ab = nmi(&a, &b).unwrap();
        prop_assert_eq!(ab, nmi(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn scores_ignore_cluster_names(a in partition(15, 4), shift in 1usize..4) {
        let renamed: Vec<usize> = a.iter().map(|&c| (c + shift) % 4).collect();
        let want = if a.iter().all_equal() { 0.0 } else { 1.0 };
        let got = nmi(&a, &renamed).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert_eq!(accuracy(&a, &renamed).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_accuracy_is_majority_share(labels in partition(12, 3)) {
        let acc = accuracy(&labels, &vec![0; labels.len()]).unwrap();
        let majority = *labels.iter().counts().values().max().unwrap();
        prop_assert_eq!(acc, majority as f64 / 12.0);
    }

    #[test]
    fn two_way_cut_is_a_quarter_of_the_quadratic_form(
        n in 2usize..12,
        weights in proptest::collection::vec(0u8..3, 66),
        side in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let mut edges = Vec::new();
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                if weights[idx] > 0 {
                    edges.push((i, j, weights[idx] as f64));
                }
                idx += 1;
            }
        }
        let g = Graph::from_edges(n, &edges, Tensor::zeros(&[n, 1])).unwrap();
        let p: Vec<usize> = side[..n].iter().map(|&b| usize::from(b)).collect();
        let z: Vec<f64> = p.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
        let mut lap = vec![vec![0.0; n]; n];
        for &(i, j, w) in &edges {
            lap[i][j] -= w;
            lap[j][i] -= w;
            lap[i][i] += w;
            lap[j][j] += w;
        }
        let quad: f64 = (0..n).map(|i| z[i] * (0..n).map(|j| lap[i][j] * z[j]).sum::<f64>()).sum();
        let r = cut_value(&g, &p, 2).unwrap();
        prop_assert_eq!(r.cuts[0], quad / 4.0);
        prop_assert_eq!(r.cuts[1], quad / 4.0);
    }
}

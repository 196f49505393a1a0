use lfstl::network::{residual_delta_estimate, BoxSampler, DriftTerm, Primitive};
use lfstl::{
    build_barrier, build_psi_chain, parse_formula, ChainOrder, ClassK, Dynamics, EnvelopeInit,
    Graph, Order,
};
use proptest::prelude::*;

/// Random connected Laplacian: a spanning path plus extra edges, positive
/// weights.
fn arb_laplacian() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..7).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.2f64..2.0, n - 1),
            prop::collection::vec((0..n, 0..n, 0.2f64..2.0), 0..n),
        )
            .prop_map(|(n, path, extra)| {
                let mut l = vec![vec![0.0; n]; n];
                let mut link = |i: usize, j: usize, w: f64| {
                    if i != j && l[i][j] == 0.0 {
                        l[i][j] = -w;
                        l[j][i] = -w;
                    }
                };
                for (i, w) in path.into_iter().enumerate() {
                    link(i, i + 1, w);
                }
                for (i, j, w) in extra {
                    link(i, j, w);
                }
                for (i, row) in l.iter_mut().enumerate() {
                    row[i] = 0.0;
                    row[i] = -row.iter().sum::<f64>();
                }
                l
            })
    })
}

fn mat_vec(l: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    l.iter()
        .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

proptest! {
    #[test]
    fn drift_matches_laplacian_product(l in arb_laplacian(), seed in prop::collection::vec(-5.0f64..5.0, 12)) {
        let n = l.len();
        let first = Dynamics::from_laplacian(Order::First, &l, 1.0).unwrap();
        let x = &seed[..n];
        let want: Vec<f64> = mat_vec(&l, x).iter().map(|v| -v).collect();
        let got = first.drift(x).unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }

        let second = Dynamics::from_laplacian(Order::Second, &l, 1.0).unwrap();
        let x = &seed[..2 * n];
        let z: Vec<f64> = (0..n).map(|i| x[i] + x[n + i]).collect();
        let acc = mat_vec(&l, &z);
        let got = second.drift(x).unwrap();
        for i in 0..n {
            prop_assert!((got[i] - x[n + i]).abs() < 1e-12);
            prop_assert!((got[n + i] + acc[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn drift_is_the_sum_of_local_and_coupling_parts(l in arb_laplacian(), seed in prop::collection::vec(-5.0f64..5.0, 12)) {
        let n = l.len();
        let d = Dynamics::from_laplacian(Order::Second, &l, 1.0).unwrap();
        let x = &seed[..2 * n];
        let mut sum = vec![0.0; 2 * n];
        for i in 0..n {
            for (k, v) in d.local_drift(x, i).unwrap().into_iter().enumerate() {
                sum[k] += v;
            }
            for j in d.graph.neighbors(i) {
                for (k, v) in d.coupling_drift(x, i, j).unwrap().into_iter().enumerate() {
                    sum[k] += v;
                }
            }
        }
        let full = d.drift(x).unwrap();
        for (a, b) in sum.iter().zip(&full) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_respects_edges(l in arb_laplacian(), seed in prop::collection::vec(-5.0f64..5.0, 6), bump in -3.0f64..3.0) {
        let n = l.len();
        let d = Dynamics::from_laplacian(Order::First, &l, 1.0).unwrap();
        let x = &seed[..n];
        let base = d.drift(x).unwrap();
        for j in 0..n {
            let mut y = x.to_vec();
            y[j] += bump;
            let moved = d.drift(&y).unwrap();
            for i in (0..n).filter(|&i| i != j && !d.graph.has_edge(i, j)) {
                prop_assert_eq!(moved[i], base[i]);
            }
        }
    }

    #[test]
    fn delta_estimate_is_monotone_in_sample_count(seed in 0u64..1000, a in 1usize..200, b in 1usize..200) {
        let (d, c) = path_chain();
        let sampler = BoxSampler { lo: vec![-2.0; 3], hi: vec![2.0; 3], t_lo: 0.0, t_hi: 9.0, seed };
        let (lo, hi) = (a.min(b), a.max(b));
        let e_lo = residual_delta_estimate(&d, &c, &sampler, lo).unwrap();
        let e_hi = residual_delta_estimate(&d, &c, &sampler, hi).unwrap();
        prop_assert!(e_hi >= e_lo);
    }
}

/// Path 1 - 2 - 3 with the leader at the end: agent 1 is a non-neighbour.
fn path_chain() -> (Dynamics, lfstl::PsiChain) {
    let l = vec![
        vec![1.0, -1.0, 0.0],
        vec![-1.0, 2.0, -1.0],
        vec![0.0, -1.0, 1.0],
    ];
    let d = Dynamics::from_laplacian(Order::First, &l, 1.0).unwrap();
    let f = parse_formula("G[0,10](x2 - x1 <= 5) AND F[0,10](x2 + x3 >= -1)").unwrap();
    let b = build_barrier(&f, d.layout(), 4.0, 0.0, &EnvelopeInit::Fixed(-0.5), 0.0).unwrap();
    let c = build_psi_chain(b, ChainOrder::One, ClassK::Linear { slope: 1.0 }, d.clone()).unwrap();
    (d, c)
}

#[test]
fn delta_estimate_matches_dense_grid() {
    let (d, c) = path_chain();
    let t = 3.0;
    let residual_at = |x: &[f64]| {
        let (_, r) = d.split_drift(x).unwrap();
        let g = c.evaluate(x, t).unwrap().grad;
        g.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>().abs()
    };
    let m = 40;
    let mut grid_max = 0.0f64;
    for i in 0..=m {
        for j in 0..=m {
            for k in 0..=m {
                let s = |q: usize| -2.0 + 4.0 * q as f64 / m as f64;
                grid_max = grid_max.max(residual_at(&[s(i), s(j), s(k)]));
            }
        }
    }
    let sampler = BoxSampler {
        lo: vec![-2.0; 3],
        hi: vec![2.0; 3],
        t_lo: t,
        t_hi: t,
        seed: 5,
    };
    let est = residual_delta_estimate(&d, &c, &sampler, 20_000).unwrap();
    assert!(est <= grid_max * 1.0001);
    assert!(est >= 0.95 * grid_max, "estimate {est} vs grid {grid_max}");
}

#[test]
fn star_topology_has_no_residual() {
    let l = vec![
        vec![1.0, 0.0, -1.0],
        vec![0.0, 1.0, -1.0],
        vec![-1.0, -1.0, 2.0],
    ];
    let d = Dynamics::from_laplacian(Order::First, &l, 1.0).unwrap();
    let f = parse_formula("G[0,10](x2 - x1 <= 5)").unwrap();
    let b = build_barrier(&f, d.layout(), 4.0, 0.0, &EnvelopeInit::Fixed(0.0), 0.0).unwrap();
    let c = build_psi_chain(b, ChainOrder::One, ClassK::Linear { slope: 1.0 }, d.clone()).unwrap();
    let sampler = BoxSampler {
        lo: vec![-5.0; 3],
        hi: vec![5.0; 3],
        t_lo: 0.0,
        t_hi: 9.0,
        seed: 1,
    };
    assert_eq!(residual_delta_estimate(&d, &c, &sampler, 500).unwrap(), 0.0);
}

#[test]
fn experiment_input_column() {
    let l = vec![
        vec![1.0, 0.0, -1.0],
        vec![0.0, 1.0, -1.0],
        vec![0.0, 0.0, 0.0],
    ];
    let d = Dynamics::from_laplacian(Order::Second, &l, 1.0).unwrap();
    assert_eq!(
        d.input_direction(&[0.3; 6]).unwrap(),
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
    );
    let x = [1.0, 2.0, 3.0, -1.0, 0.5, 2.0];
    // drift = (v, -L (p + v))
    let z = [0.0, 2.5, 5.0];
    let want = [-1.0, 0.5, 2.0, -(z[0] - z[2]), -(z[1] - z[2]), 0.0];
    assert_eq!(d.drift(&x).unwrap(), want);

    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let first = Dynamics::new(g, Order::First, vec![], 3.0).unwrap();
    let col = first.input_direction(&[0.0, 0.0]).unwrap();
    assert_eq!(col, vec![0.0, 3.0]);
    assert_eq!(col.iter().filter(|v| **v != 0.0).count(), 1);
}

#[test]
fn saturated_coupling_clamps_the_difference() {
    let g = Graph::new(2, &[(0, 1)]).unwrap();
    let t = DriftTerm {
        agent: 0,
        source: 1,
        weight: 2.0,
        primitive: Primitive::Saturated { limit: 0.5 },
    };
    let d = Dynamics::new(g, Order::First, vec![t], 1.0).unwrap();
    assert_eq!(d.drift(&[0.0, 3.0]).unwrap(), vec![1.0, 0.0]);
    assert_eq!(d.drift(&[0.0, 0.2]).unwrap(), vec![0.4, 0.0]);
}

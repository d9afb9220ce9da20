use gmc_core::autodiff::Graph;
use gmc_core::graph::{
    chebyshev_stack, chebyshev_stack_var, knn_graph, laplacians, similarity_graph, Edge,
    LaplacianSet, PopulationGraph, SubjectMeta,
};
use gmc_core::{GmcError, Tensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn edge_set(g: &PopulationGraph) -> Vec<(usize, usize, f64)> {
    g.edges().iter().map(|e| (e.u, e.v, e.weight)).collect()
}

fn path3() -> PopulationGraph {
    PopulationGraph::from_edges(
        3,
        &[
            Edge {
                u: 0,
                v: 1,
                weight: 1.0,
            },
            Edge {
                u: 1,
                v: 2,
                weight: 1.0,
            },
        ],
    )
    .unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, m: usize, density: f64) -> PopulationGraph {
    let mut a = Tensor::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            if rng.gen_bool(density) {
                let w = rng.gen_range(0.1..3.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    PopulationGraph::from_adjacency(a).unwrap()
}

fn eigenvalues(t: &Tensor) -> Vec<f64> {
    let m = DMatrix::from_row_slice(t.rows(), t.cols(), t.data());
    m.symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Power-basis coefficients of the first six Chebyshev polynomials.
const CHEBYSHEV: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [-1.0, 0.0, 2.0, 0.0, 0.0, 0.0],
    [0.0, -3.0, 0.0, 4.0, 0.0, 0.0],
    [1.0, 0.0, -8.0, 0.0, 8.0, 0.0],
    [0.0, 5.0, 0.0, -20.0, 0.0, 16.0],
];

/// `T_k(L̃) x` as an explicit matrix polynomial `Σ_j c_kj L̃^j x`.
fn chebyshev_by_polynomial(scaled: &Tensor, x: &Tensor, k: usize) -> Tensor {
    let n = scaled.rows();
    let l = DMatrix::from_row_slice(n, n, scaled.data());
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut poly = DMatrix::<f64>::zeros(n, n);
    for c in CHEBYSHEV[k] {
        poly += &power * c;
        power = &power * &l;
    }
    let out = poly * DMatrix::from_row_slice(x.rows(), x.cols(), x.data());
    Tensor::from_fn(out.nrows(), out.ncols(), |i, j| out[(i, j)])
}

#[test]
fn knn_links_each_age_to_its_nearest() {
    let g = knn_graph(&[60.0, 61.0, 70.0], 1).unwrap();
    assert_eq!(edge_set(&g), vec![(0, 1, 1.0), (1, 2, 1.0)]);
}

#[test]
fn knn_ties_go_to_lowest_index() {
    let g = knn_graph(&[70.0; 5], 1).unwrap();
    let expected: Vec<(usize, usize, f64)> = (1..5).map(|v| (0, v, 1.0)).collect();
    assert_eq!(edge_set(&g), expected);
}

#[test]
fn knn_with_all_neighbours_is_complete() {
    let ages = [63.0, 71.5, 68.0, 80.0, 59.0];
    let g = knn_graph(&ages, 4).unwrap();
    assert_eq!(g.edges().len(), 10);
}

#[test]
fn knn_rejects_bad_k() {
    assert!(matches!(
        knn_graph(&[1.0, 2.0], 0),
        Err(GmcError::Parameter { .. })
    ));
    assert!(matches!(
        knn_graph(&[1.0, 2.0], 2),
        Err(GmcError::Parameter { .. })
    ));
}

fn subject(age: f64, gender: &str) -> SubjectMeta {
    SubjectMeta {
        age,
        gender: gender.into(),
    }
}

#[test]
fn similarity_weights_follow_the_rule() {
    let w = |a: SubjectMeta, b: SubjectMeta| {
        similarity_graph(&[a, b], 2.0)
            .unwrap()
            .adjacency()
            .get(0, 1)
    };
    assert_eq!(w(subject(65.0, "F"), subject(66.0, "F")), 2.0);
    assert_eq!(w(subject(60.0, "F"), subject(70.0, "F")), 1.0);
    assert_eq!(w(subject(60.0, "F"), subject(70.0, "M")), 0.0);
    let g = similarity_graph(&[subject(60.0, "F"), subject(70.0, "M")], 2.0).unwrap();
    assert!(g.edges().is_empty());
}

#[test]
fn similarity_rejects_negative_threshold() {
    let meta = [subject(60.0, "F"), subject(61.0, "F")];
    assert!(matches!(
        similarity_graph(&meta, -1.0),
        Err(GmcError::Parameter { .. })
    ));
}

#[test]
fn path_graph_laplacian() {
    let lap = laplacians(&path3()).unwrap();
    let expected = Tensor::from_rows(&[
        vec![1.0, -1.0, 0.0],
        vec![-1.0, 2.0, -1.0],
        vec![0.0, -1.0, 1.0],
    ])
    .unwrap();
    assert_eq!(lap.unnormalized, expected);
}

#[test]
fn single_edge_normalized_laplacian() {
    let g = PopulationGraph::from_edges(
        2,
        &[Edge {
            u: 0,
            v: 1,
            weight: 1.0,
        }],
    )
    .unwrap();
    let lap = laplacians(&g).unwrap();
    let expected = Tensor::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
    assert!(lap.normalized.max_abs_diff(&expected) < 1e-15);
    assert!((lap.lambda_max - 2.0).abs() < 1e-6, "{}", lap.lambda_max);
}

#[test]
fn negative_weight_is_rejected() {
    let mut a = Tensor::zeros(2, 2);
    a.set(0, 1, -1.0);
    a.set(1, 0, -1.0);
    assert!(PopulationGraph::from_adjacency(a).is_err());
}

#[test]
fn normalized_spectrum_lies_in_zero_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let lap = laplacians(&random_graph(&mut rng, 10, 0.4)).unwrap();
        for l in eigenvalues(&lap.normalized) {
            assert!((-1e-9..=2.0 + 1e-9).contains(&l), "{l}");
        }
        for l in eigenvalues(&lap.scaled) {
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&l), "{l}");
        }
    }
}

#[test]
fn isolated_nodes_keep_unit_diagonal() {
    let g = PopulationGraph::from_edges(
        4,
        &[Edge {
            u: 0,
            v: 1,
            weight: 2.0,
        }],
    )
    .unwrap();
    let lap = laplacians(&g).unwrap();
    for i in [2, 3] {
        for j in 0..4 {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert_eq!(lap.normalized.get(i, j), expected);
            assert_eq!(lap.unnormalized.get(i, j), 0.0);
        }
    }
    assert!(lap.scaled.is_finite());
}

#[test]
fn edgeless_graph_has_identity_operators() {
    let g = PopulationGraph::from_adjacency(Tensor::zeros(3, 3)).unwrap();
    let lap = laplacians(&g).unwrap();
    assert_eq!(lap.normalized, Tensor::identity(3));
    assert!(lap.scaled.max_abs_diff(&Tensor::identity(3)) < 1e-12);
}

#[test]
fn stack_at_minus_identity_alternates_sign() {
    let lap = LaplacianSet {
        unnormalized: Tensor::zeros(3, 3),
        normalized: Tensor::zeros(3, 3),
        scaled: Tensor::identity(3).scale(-1.0),
        lambda_max: 2.0,
        lambda_converged: false,
    };
    let x = Tensor::from_fn(3, 2, |i, j| (i * 2 + j) as f64 - 2.5);
    let stack = chebyshev_stack(&lap, &x, 2).unwrap();
    assert_eq!(stack[0], x);
    assert!(stack[1].max_abs_diff(&x.scale(-1.0)) < 1e-12);
    assert!(stack[2].max_abs_diff(&x) < 1e-12);
}

#[test]
fn order_zero_stack_is_the_input() {
    let lap = laplacians(&path3()).unwrap();
    let x = Tensor::from_fn(3, 1, |i, _| i as f64);
    assert_eq!(chebyshev_stack(&lap, &x, 0).unwrap(), vec![x]);
}

#[test]
fn chebyshev_recurrence_matches_polynomial_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let lap = laplacians(&random_graph(&mut rng, 8, 0.5)).unwrap();
        let x = Tensor::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let stack = chebyshev_stack(&lap, &x, 5).unwrap();
        for (k, t) in stack.iter().enumerate() {
            worst = worst.max(t.max_abs_diff(&chebyshev_by_polynomial(&lap.scaled, &x, k)));
        }
    }
    assert!(worst < 1e-10, "max abs error {worst:e}");
}

#[test]
fn tape_stack_matches_plain_stack() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lap = laplacians(&random_graph(&mut rng, 6, 0.5)).unwrap();
    let x = Tensor::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
    let plain = chebyshev_stack(&lap, &x, 4).unwrap();
    let mut g = Graph::new();
    let s = g.constant(lap.scaled.clone()).unwrap();
    let xv = g.param(x.clone());
    let vars = chebyshev_stack_var(&mut g, s, xv, 4).unwrap();
    for (p, v) in plain.iter().zip(vars) {
        assert!(p.max_abs_diff(g.value(v)) < 1e-14);
    }
}

fn check_structure(g: &PopulationGraph, lap: &LaplacianSet) {
    let a = g.adjacency();
    assert_eq!(a, &a.transpose());
    for i in 0..g.node_count() {
        let row_sum: f64 = lap.unnormalized.row(i).iter().sum();
        assert!(row_sum.abs() < 1e-12, "row {i} sums to {row_sum}");
    }
}

#[test]
fn constructed_graphs_are_symmetric_with_zero_row_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ages: Vec<f64> = (0..30).map(|_| rng.gen_range(55.0..90.0)).collect();
    let meta: Vec<SubjectMeta> = ages
        .iter()
        .map(|&a| subject(a, if rng.gen_bool(0.5) { "F" } else { "M" }))
        .collect();
    for g in [
        knn_graph(&ages, 3).unwrap(),
        similarity_graph(&meta, 2.0).unwrap(),
        random_graph(&mut rng, 30, 0.3),
    ] {
        check_structure(&g, &laplacians(&g).unwrap());
    }
}

#[test]
fn dirichlet_energy_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lap = laplacians(&random_graph(&mut rng, 12, 0.3)).unwrap();
    for _ in 0..100 {
        let x = Tensor::from_fn(12, 1, |_, _| rng.gen_range(-1.0..1.0));
        let mut g = Graph::new();
        let xv = g.param(x);
        for l in [&lap.unnormalized, &lap.normalized] {
            let d = g.dirichlet(l, xv).unwrap();
            assert!(g.value(d).item() >= -1e-12);
        }
    }
}

#[test]
fn edge_list_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut rng, 7, 0.5);
    let mut buf = Vec::new();
    g.write_edge_list(&mut buf).unwrap();
    let back = PopulationGraph::read_edge_list(7, buf.as_slice()).unwrap();
    assert_eq!(back, g);
}

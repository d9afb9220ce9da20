//! Population graphs over subjects (rows) and their Laplacian operators.
//!
//! Two constructions are provided: a k-nearest-neighbour graph on a single
//! scalar covariate (age) and a demographic similarity graph that scores a
//! pair of subjects by matching gender and age proximity. The resulting
//! [`LaplacianSet`] feeds both the Dirichlet penalties and the Chebyshev
//! filters of the recurrent model.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{GmcError, Result};
use crate::linalg::power_iteration_max_eigenvalue;
use crate::tensor::Tensor;

pub const DEFAULT_KNN_K: usize = 10;
pub const DEFAULT_AGE_THRESHOLD: f64 = 2.0;

const LAMBDA_TOL: f64 = 1e-8;
const LAMBDA_MAX_ITERS: usize = 1000;
const LAMBDA_FALLBACK: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Weighted undirected graph with a dense, exactly symmetric adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationGraph {
    adjacency: Tensor,
}

/// Demographic record used by [`similarity_graph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub age: f64,
    pub gender: String,
}

impl PopulationGraph {
    pub fn from_adjacency(adjacency: Tensor) -> Result<Self> {
        let (m, n) = adjacency.shape();
        if m != n {
            return Err(GmcError::dim(
                "graph::from_adjacency",
                format!("{m}x{n} adjacency"),
            ));
        }
        for i in 0..m {
            if adjacency.get(i, i) != 0.0 {
                return Err(GmcError::invalid("graph", format!("self-loop on node {i}")));
            }
            for j in 0..m {
                let w = adjacency.get(i, j);
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(GmcError::invalid(
                        "graph",
                        format!("edge ({i},{j}) has invalid weight {w}"),
                    ));
                }
                if w != adjacency.get(j, i) {
                    return Err(GmcError::invalid(
                        "graph",
                        format!("asymmetric edge ({i},{j})"),
                    ));
                }
            }
        }
        Ok(PopulationGraph { adjacency })
    }

    pub fn from_edges(node_count: usize, edges: &[Edge]) -> Result<Self> {
        let mut a = Tensor::zeros(node_count, node_count);
        for e in edges {
            if e.u >= node_count || e.v >= node_count {
                return Err(GmcError::invalid(
                    "graph",
                    format!("edge ({},{}) outside {node_count} nodes", e.u, e.v),
                ));
            }
            if e.u == e.v {
                return Err(GmcError::invalid(
                    "graph",
                    format!("self-loop on node {}", e.u),
                ));
            }
            a.set(e.u, e.v, e.weight);
            a.set(e.v, e.u, e.weight);
        }
        Self::from_adjacency(a)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Edges with `u < v` in row-major order.
    pub fn edges(&self) -> Vec<Edge> {
        let m = self.node_count();
        let mut out = Vec::new();
        for u in 0..m {
            for v in (u + 1)..m {
                let weight = self.adjacency.get(u, v);
                if weight != 0.0 {
                    out.push(Edge { u, v, weight });
                }
            }
        }
        out
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| self.adjacency.row(i).iter().sum())
            .collect()
    }

    /// Node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> PopulationGraph {
        PopulationGraph {
            adjacency: self.adjacency.permute_symmetric(perm),
        }
    }

    /// Writes `u,v,weight` lines (0-based, `u < v`).
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for e in self.edges() {
            writeln!(out, "{},{},{}", e.u, e.v, e.weight)?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(node_count: usize, input: R) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || GmcError::Parse {
                row: lineno,
                column: "edge".into(),
                detail: format!("expected `u,v,weight`, got `{line}`"),
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            edges.push(Edge {
                u: parts[0].trim().parse().map_err(|_| bad())?,
                v: parts[1].trim().parse().map_err(|_| bad())?,
                weight: parts[2].trim().parse().map_err(|_| bad())?,
            });
        }
        Self::from_edges(node_count, &edges)
    }
}

/// Unit-weight kNN graph on a scalar covariate, symmetrised by union.
/// Distance ties are broken by the lower node index.
pub fn knn_graph(values: &[f64], k: usize) -> Result<PopulationGraph> {
    let m = values.len();
    if k == 0 || k >= m {
        return Err(GmcError::param(
            "graph::knn_graph",
            "k",
            format!("need 0 < k < {m} nodes, got {k}"),
        ));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(GmcError::param(
            "graph::knn_graph",
            "scalar_covariate",
            format!("non-finite value at node {i}"),
        ));
    }
    let mut a = Tensor::zeros(m, m);
    let mut order: Vec<usize> = Vec::with_capacity(m - 1);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        order.sort_by(|&x, &y| {
            let dx = (values[i] - values[x]).abs();
            let dy = (values[i] - values[y]).abs();
            dx.total_cmp(&dy).then(x.cmp(&y))
        });
        for &j in &order[..k] {
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
    }
    Ok(PopulationGraph { adjacency: a })
}

/// `w(u,v) = [gender_u == gender_v] + [|age_u - age_v| <= age_threshold]`.
pub fn similarity_graph(meta: &[SubjectMeta], age_threshold: f64) -> Result<PopulationGraph> {
    let m = meta.len();
    if m < 2 {
        return Err(GmcError::param(
            "graph::similarity_graph",
            "meta",
            format!("need at least 2 subjects, got {m}"),
        ));
    }
    if !(age_threshold >= 0.0) {
        return Err(GmcError::param(
            "graph::similarity_graph",
            "age_threshold",
            format!("must be non-negative, got {age_threshold}"),
        ));
    }
    if let Some(i) = meta.iter().position(|s| !s.age.is_finite()) {
        return Err(GmcError::param(
            "graph::similarity_graph",
            "age",
            format!("non-finite age for subject {i}"),
        ));
    }
    let mut a = Tensor::zeros(m, m);
    for u in 0..m {
        for v in (u + 1)..m {
            let w = f64::from(u8::from(meta[u].gender == meta[v].gender))
                + f64::from(u8::from((meta[u].age - meta[v].age).abs() <= age_threshold));
            a.set(u, v, w);
            a.set(v, u, w);
        }
    }
    Ok(PopulationGraph { adjacency: a })
}

/// Laplacian operators of one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianSet {
    /// `L = D - A`
    pub unnormalized: Tensor,
    /// `I - D^{-1/2} A D^{-1/2}`; isolated nodes keep a unit diagonal.
    pub normalized: Tensor,
    /// `2 L_norm / λ_max - I`, spectrum in `[-1, 1]`.
    pub scaled: Tensor,
    pub lambda_max: f64,
    /// False when power iteration did not converge and the fallback bound
    /// of 2 was used.
    pub lambda_converged: bool,
}

pub fn laplacians(g: &PopulationGraph) -> Result<LaplacianSet> {
    let a = g.adjacency();
    if a.data().iter().any(|&w| w < 0.0) {
        return Err(GmcError::invalid(
            "graph::laplacians",
            "negative edge weight",
        ));
    }
    let m = g.node_count();
    let deg = g.degrees();
    let mut unnormalized = a.scale(-1.0);
    for (i, &d) in deg.iter().enumerate() {
        unnormalized.set(i, i, d);
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let normalized = Tensor::from_fn(m, m, |i, j| {
        let off = a.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let (lambda_max, lambda_converged) =
        match power_iteration_max_eigenvalue(&normalized, LAMBDA_TOL, LAMBDA_MAX_ITERS) {
            Some(l) if l > 0.0 => (l, true),
            _ => (LAMBDA_FALLBACK, false),
        };
    let scaled = Tensor::from_fn(m, m, |i, j| {
        let v = 2.0 * normalized.get(i, j) / lambda_max;
        if i == j {
            v - 1.0
        } else {
            v
        }
    });
    Ok(LaplacianSet {
        unnormalized,
        normalized,
        scaled,
        lambda_max,
        lambda_converged,
    })
}

/// `[T_0(L̃)x, …, T_p(L̃)x]` by the three-term Chebyshev recurrence.
pub fn chebyshev_stack(lap: &LaplacianSet, x: &Tensor, order: usize) -> Result<Vec<Tensor>> {
    let m = lap.scaled.rows();
    if x.rows() != m {
        return Err(GmcError::dim(
            "graph::chebyshev_stack",
            format!("signal has {} rows, operator has {m}", x.rows()),
        ));
    }
    let mut out = vec![x.clone()];
    if order >= 1 {
        out.push(lap.scaled.matmul(x)?);
    }
    for k in 2..=order {
        let mut next = lap.scaled.matmul(&out[k - 1])?.scale(2.0);
        next.axpy(-1.0, &out[k - 2]);
        out.push(next);
    }
    Ok(out)
}

/// Differentiable form of [`chebyshev_stack`]; `scaled` is the scaled
/// Laplacian registered on the tape (normally as a constant).
pub fn chebyshev_stack_var(g: &mut Graph, scaled: Var, x: Var, order: usize) -> Result<Vec<Var>> {
    let mut out = vec![x];
    if order >= 1 {
        out.push(g.matmul(scaled, x)?);
    }
    for k in 2..=order {
        let lt = g.matmul(scaled, out[k - 1])?;
        let twice = g.scale(lt, 2.0)?;
        out.push(g.sub(twice, out[k - 2])?);
    }
    Ok(out)
}

/// Content-derived ordering of rows.
///
/// Rows are sorted by their data bits and the multiset of their edge
/// weights, with the original index as the last tie-break. Applying a row
/// permutation to both the data and the graph permutes the returned order
/// the same way, so any computation carried out in canonical order is
/// exactly permutation-equivariant, including floating-point rounding.
pub fn canonical_row_order(row_blocks: &[&Tensor], adjacency: &Tensor) -> Vec<usize> {
    let m = adjacency.rows();
    let keys: Vec<Vec<u64>> = (0..m)
        .map(|i| {
            let mut key = Vec::new();
            for block in row_blocks {
                key.extend(block.row(i).iter().map(|v| order_bits(*v)));
            }
            let mut weights: Vec<u64> = adjacency.row(i).iter().map(|v| order_bits(*v)).collect();
            weights.sort_unstable();
            key.extend(weights);
            key
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    order
}

fn order_bits(v: f64) -> u64 {
    // +0.0 and -0.0 compare equal.
    let v = if v == 0.0 { 0.0 } else { v };
    v.to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(g: &PopulationGraph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|e| (e.u, e.v)).collect()
    }

    #[test]
    fn knn_ages_example() {
        let g = knn_graph(&[60.0, 61.0, 70.0], 1).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        let g = knn_graph(&[65.0; 5], 1).unwrap();
        assert_eq!(edge_set(&g), vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
    }

    #[test]
    fn knn_full_is_complete() {
        let g = knn_graph(&[1.0, 5.0, 2.0, 9.0], 3).unwrap();
        assert_eq!(g.edges().len(), 6);
    }

    #[test]
    fn knn_rejects_bad_k() {
        assert!(knn_graph(&[1.0, 2.0], 0).is_err());
        assert!(knn_graph(&[1.0, 2.0], 2).is_err());
    }

    fn subject(age: f64, gender: &str) -> SubjectMeta {
        SubjectMeta {
            age,
            gender: gender.into(),
        }
    }

    #[test]
    fn similarity_rule() {
        let g = similarity_graph(
            &[
                subject(65.0, "F"),
                subject(66.0, "F"),
                subject(70.0, "F"),
                subject(60.0, "M"),
            ],
            2.0,
        )
        .unwrap();
        let a = g.adjacency();
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.get(0, 2), 1.0);
        assert_eq!(a.get(2, 3), 0.0);
        assert!(similarity_graph(&[subject(1.0, "F"), subject(2.0, "F")], -1.0).is_err());
    }

    #[test]
    fn path_laplacian() {
        let g = PopulationGraph::from_edges(
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
        .unwrap();
        let lap = laplacians(&g).unwrap();
        let expected = Tensor::from_rows(&[
            vec![1.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ])
        .unwrap();
        assert_eq!(lap.unnormalized, expected);
    }

    #[test]
    fn single_edge_normalized() {
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
        assert_eq!(
            lap.normalized,
            Tensor::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
        );
        assert!((lap.lambda_max - 2.0).abs() < 1e-12);
        assert!(lap.lambda_converged);
    }

    #[test]
    fn isolated_nodes_keep_unit_diagonal() {
        let g = PopulationGraph::from_edges(
            3,
            &[Edge {
                u: 0,
                v: 1,
                weight: 2.0,
            }],
        )
        .unwrap();
        let lap = laplacians(&g).unwrap();
        assert_eq!(lap.normalized.row(2), &[0.0, 0.0, 1.0]);
        assert_eq!(lap.unnormalized.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn invalid_adjacency_is_rejected() {
        let mut a = Tensor::zeros(2, 2);
        a.set(0, 1, -1.0);
        a.set(1, 0, -1.0);
        assert!(PopulationGraph::from_adjacency(a).is_err());
        let mut b = Tensor::zeros(2, 2);
        b.set(0, 1, 1.0);
        assert!(PopulationGraph::from_adjacency(b).is_err());
    }

    #[test]
    fn chebyshev_at_minus_identity() {
        let m = 3;
        let lap = LaplacianSet {
            unnormalized: Tensor::zeros(m, m),
            normalized: Tensor::zeros(m, m),
            scaled: Tensor::identity(m).scale(-1.0),
            lambda_max: 2.0,
            lambda_converged: true,
        };
        let x = Tensor::from_fn(m, 2, |i, j| (i + 2 * j) as f64 + 0.5);
        let stack = chebyshev_stack(&lap, &x, 2).unwrap();
        assert_eq!(stack[0], x);
        assert_eq!(stack[1], x.scale(-1.0));
        assert_eq!(stack[2], x);
        assert_eq!(chebyshev_stack(&lap, &x, 0).unwrap(), vec![x]);
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = similarity_graph(
            &[subject(60.0, "F"), subject(61.5, "M"), subject(70.0, "F")],
            2.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0,1,1\n0,2,1\n");
        let back = PopulationGraph::read_edge_list(3, buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn canonical_order_follows_permutation() {
        let z = Tensor::from_fn(4, 2, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let g = knn_graph(&[3.0, 1.0, 4.0, 1.5], 1).unwrap();
        let order = canonical_row_order(&[&z], g.adjacency());
        let perm = [2, 3, 0, 1];
        let zp = z.select_rows(&perm);
        let gp = g.permuted(&perm);
        let order_p = canonical_row_order(&[&zp], gp.adjacency());
        let mapped: Vec<usize> = order_p.iter().map(|&i| perm[i]).collect();
        assert_eq!(mapped, order);
    }
}

//! Undirected communication topology and its Laplacian spectrum.
//!
//! The Laplacian `L = D - A` is diagonalized as `L = Wᵀ diag(λ) W` with the
//! rows of `W` holding orthonormal eigenvectors, eigenvalues ascending. Every
//! bound in the crate and the mode-decomposition oracle read from here.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// `λ₂ < CONNECTIVITY_RTOL · λ_N` is treated as a disconnected graph.
pub const CONNECTIVITY_RTOL: f64 = 1e-9;

/// Components with magnitude at or below this are skipped when fixing
/// eigenvector signs.
const SIGN_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    IndexOutOfRange(usize, usize, usize),
    #[error("graph is not connected (λ₂ = {lambda2:.3e}, λ_N = {lambda_max:.3e})")]
    NotConnected { lambda2: f64, lambda_max: f64 },
}

/// Connected, undirected, unweighted graph with its spectral data.
///
/// Node indices are zero-based. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GraphModel {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl GraphModel {
    /// Builds the graph from an edge list. Duplicate edges (in either
    /// orientation) are collapsed.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::TooFewNodes(node_count));
        }
        let mut unique = BTreeSet::new();
        for &(i, j) in edges {
            if i >= node_count || j >= node_count {
                return Err(GraphError::IndexOutOfRange(i, j, node_count));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            unique.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<(usize, usize)> = unique.into_iter().collect();

        let mut adjacency = DMatrix::zeros(node_count, node_count);
        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j) in &edges {
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let mut laplacian = -adjacency.clone();
        for i in 0..node_count {
            laplacian[(i, i)] = neighbors[i].len() as f64;
        }

        let (eigenvalues, eigenvectors) = sorted_eigensystem(&laplacian);
        let lambda2 = eigenvalues[1];
        let lambda_max = eigenvalues[node_count - 1];
        if lambda_max <= 0.0 || lambda2 < CONNECTIVITY_RTOL * lambda_max {
            return Err(GraphError::NotConnected { lambda2, lambda_max });
        }

        Ok(Self {
            node_count,
            edges,
            neighbors,
            adjacency,
            laplacian,
            eigenvalues,
            eigenvectors,
        })
    }

    /// Cycle graph `C_N` with edges `(k, k+1 mod N)`.
    pub fn cycle(node_count: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..node_count).map(|k| (k, (k + 1) % node_count)).collect();
        Self::new(node_count, &edges)
    }

    /// Path graph `P_N`.
    pub fn path(node_count: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..node_count).map(|k| (k - 1, k)).collect();
        Self::new(node_count, &edges)
    }

    /// Complete graph `K_N`.
    pub fn complete(node_count: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..node_count {
            for j in i + 1..node_count {
                edges.push((i, j));
            }
        }
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Normalized edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        i < self.node_count && j < self.node_count && self.adjacency[(i, j)] != 0.0
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Eigenvalues `0 = λ₁ ≤ λ₂ ≤ … ≤ λ_N`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvector matrix `W`; row `k` pairs with `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Algebraic connectivity λ₂.
    pub fn second_eigenvalue(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Largest Laplacian eigenvalue λ_N.
    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.node_count - 1]
    }
}

/// Free-function form of [`GraphModel::second_eigenvalue`].
pub fn second_eigenvalue(graph: &GraphModel) -> f64 {
    graph.second_eigenvalue()
}

/// Ascending eigenvalues and row-eigenvector matrix with the first non-zero
/// component of every eigenvector made positive.
fn sorted_eigensystem(symmetric: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = symmetric.nrows();
    let eig = SymmetricEigen::new(symmetric.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = Vec::with_capacity(n);
    let mut rows = DMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        // The zero mode is exactly zero in theory; clamp the float residue.
        let value = if row == 0 {
            eig.eigenvalues[k].max(0.0)
        } else {
            eig.eigenvalues[k]
        };
        values.push(value);
        let mut v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        if let Some(first) = v.iter().find(|c| c.abs() > SIGN_ZERO_TOL) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        rows.row_mut(row).copy_from(&v.transpose());
    }
    (values, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pentagon_spectrum() {
        let g = GraphModel::cycle(5).unwrap();
        let expected = [0.0, 1.381966, 1.381966, 3.618034, 3.618034];
        for (got, want) in g.eigenvalues().iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!((g.second_eigenvalue() - (2.0 - 2.0 * (2.0 * PI / 5.0).cos())).abs() < 1e-12);
    }

    #[test]
    fn two_node_path() {
        let g = GraphModel::new(2, &[(0, 1)]).unwrap();
        assert!(g.eigenvalues()[0].abs() < 1e-14);
        assert!((g.eigenvalues()[1] - 2.0).abs() < 1e-14);
        assert!((second_eigenvalue(&g) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn complete_graph_matches_analytic_spectrum() {
        for n in 2..=7 {
            let g = GraphModel::complete(n).unwrap();
            assert!(g.eigenvalues()[0].abs() < 1e-12);
            for &l in &g.eigenvalues()[1..] {
                assert!((l - n as f64).abs() < 1e-10);
            }
        }
        let k4 = GraphModel::complete(4).unwrap();
        assert_eq!(k4.edges().len(), 6);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = GraphModel::new(3, &[(0, 1), (1, 0), (1, 2), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.laplacian()[(1, 1)], 2.0);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(GraphModel::new(3, &[(1, 1)]).unwrap_err(), GraphError::SelfLoop(1));
        assert_eq!(
            GraphModel::new(3, &[(0, 3)]).unwrap_err(),
            GraphError::IndexOutOfRange(0, 3, 3)
        );
        assert!(matches!(
            GraphModel::new(4, &[(0, 1), (2, 3)]).unwrap_err(),
            GraphError::NotConnected { .. }
        ));
        assert!(matches!(
            GraphModel::new(3, &[]).unwrap_err(),
            GraphError::NotConnected { .. }
        ));
        assert_eq!(GraphModel::new(1, &[]).unwrap_err(), GraphError::TooFewNodes(1));
    }

    #[test]
    fn zero_mode_is_normalized_ones() {
        let g = GraphModel::cycle(6).unwrap();
        let w = g.eigenvectors();
        let expected = 1.0 / 6f64.sqrt();
        for c in w.row(0).iter() {
            assert!((c - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let g = GraphModel::path(5).unwrap();
        for row in g.eigenvectors().row_iter() {
            let first = row.iter().find(|c| c.abs() > SIGN_ZERO_TOL).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn cycle_spectrum_closed_form() {
        for n in 3..=10 {
            let g = GraphModel::cycle(n).unwrap();
            let mut expected: Vec<f64> = (0..n)
                .map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos())
                .collect();
            expected.sort_by(f64::total_cmp);
            for (got, want) in g.eigenvalues().iter().zip(&expected) {
                assert!((got - want).abs() < 1e-9, "N={n}: {got} vs {want}");
            }
        }
    }
}

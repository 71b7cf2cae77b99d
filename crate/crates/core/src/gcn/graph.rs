use crate::error::{FgpError, Result};
use crate::tensor::Matrix;

/// Undirected class graph with self-loops on every node.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    adjacency: Matrix,
}

impl KnowledgeGraph {
    /// Builds the graph from undirected edges between node indices. Self-loops
    /// are added for every node; repeated edges collapse.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = Matrix::identity(nodes);
        for &(a, b) in edges {
            if a >= nodes || b >= nodes {
                return Err(FgpError::domain(format!(
                    "edge ({a}, {b}) references a node outside 0..{nodes}"
                )));
            }
            adjacency.set(a, b, 1.0);
            adjacency.set(b, a, 1.0);
        }
        Ok(Self { adjacency })
    }

    /// Validates symmetry, self-loops and non-negativity.
    pub fn from_adjacency(adjacency: Matrix) -> Result<Self> {
        let (n, m) = adjacency.shape();
        if n != m {
            return Err(FgpError::domain(format!(
                "adjacency must be square, got {n}x{m}"
            )));
        }
        for i in 0..n {
            if adjacency.get(i, i) != 1.0 {
                return Err(FgpError::domain(format!("node {i} lacks a self-loop")));
            }
            for j in 0..n {
                let v = adjacency.get(i, j);
                if v < 0.0 || v != adjacency.get(j, i) {
                    return Err(FgpError::domain(format!(
                        "adjacency not symmetric and non-negative at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { adjacency })
    }

    pub fn nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.nodes();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency.get(i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.nodes();
        Self {
            adjacency: Matrix::from_fn(n, n, |i, j| self.adjacency.get(perm[i], perm[j])),
        }
    }

    pub fn normalized(&self) -> Result<Matrix> {
        row_normalize(&self.adjacency)
    }
}

/// `D⁻¹A`: every row divided by its sum.
pub fn row_normalize(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(FgpError::domain("row_normalize needs a square matrix"));
    }
    let mut out = a.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        if row.iter().any(|&v| v < 0.0) {
            return Err(FgpError::domain(format!("row {i} has a negative entry")));
        }
        let degree: f64 = row.iter().sum();
        if degree <= 0.0 {
            return Err(FgpError::domain(format!("node {i} has zero degree")));
        }
        row.iter_mut().for_each(|v| *v /= degree);
    }
    Ok(out)
}

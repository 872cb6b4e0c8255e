//! Undirected graphs and the operators derived from them.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::Csr;

/// Undirected simple graph. Edges are stored once as `(u, v)` with `u < v`,
/// sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    edge_attrs: Option<Vec<Vec<f64>>>,
}

impl Graph {
    /// Normalizes orientation, drops duplicate pairs (keeping the first
    /// occurrence's attributes) and rejects self-loops.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::with_attrs(n_nodes, edges, None)
    }

    pub fn with_attrs(n_nodes: usize, edges: &[(usize, usize)], attrs: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if let Some(a) = &attrs {
            if a.len() != edges.len() {
                return Err(Error::invalid(
                    "edge_attrs",
                    format!("{} attribute rows for {} edges", a.len(), edges.len()),
                ));
            }
            let width = a.first().map_or(0, Vec::len);
            if a.iter().any(|row| row.len() != width) {
                return Err(Error::invalid("edge_attrs", "attribute rows differ in width"));
            }
        }
        let mut keyed: Vec<((usize, usize), usize)> = Vec::with_capacity(edges.len());
        for (i, &(u, v)) in edges.iter().enumerate() {
            if u == v {
                return Err(Error::SelfLoop { node: u, line: i + 1 });
            }
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::invalid(
                    "edges",
                    format!("edge ({u}, {v}) references a node >= {n_nodes}"),
                ));
            }
            keyed.push(((u.min(v), u.max(v)), i));
        }
        // stable sort keeps first occurrence first among duplicates
        keyed.sort_by_key(|&(e, _)| e);
        keyed.dedup_by_key(|&mut (e, _)| e);
        let edge_attrs = attrs.map(|a| keyed.iter().map(|&(_, i)| a[i].clone()).collect());
        Ok(Self {
            n_nodes,
            edges: keyed.into_iter().map(|(e, _)| e).collect(),
            edge_attrs,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_attrs(&self) -> Option<&[Vec<f64>]> {
        self.edge_attrs.as_deref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn is_regular(&self) -> bool {
        let deg = self.degrees();
        deg.windows(2).all(|w| w[0] == w[1])
    }

    pub fn adjacency<T: Scalar>(&self) -> Csr<T> {
        let mut trip = Vec::with_capacity(2 * self.edges.len());
        for &(u, v) in &self.edges {
            trip.push((u, v, T::one()));
            trip.push((v, u, T::one()));
        }
        Csr::from_triplets(self.n_nodes, self.n_nodes, &trip).expect("edges validated at construction")
    }
}

/// `rows x cols` lattice; node `r * cols + c`, 4-neighbour connectivity.
pub fn build_grid_graph(rows: usize, cols: usize) -> Result<Graph> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(
            "grid",
            format!("dimensions must be >= 1, got {rows}x{cols}"),
        ));
    }
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            let u = r * cols + c;
            if c + 1 < cols {
                edges.push((u, u + 1));
            }
            if r + 1 < rows {
                edges.push((u, u + cols));
            }
        }
    }
    Graph::new(rows * cols, &edges)
}

/// `I - D^{-1/2} A D^{-1/2}`.
///
/// Entry `(u, v)` is computed as `-(1/√d_u)(1/√d_v)` for both orientations
/// so the result is symmetric bit-for-bit.
pub fn normalized_laplacian<T: Scalar>(g: &Graph) -> Result<Csr<T>> {
    let deg = g.degrees();
    if let Some(node) = deg.iter().position(|&d| d == 0) {
        return Err(Error::IsolatedNode { node });
    }
    let inv_sqrt: Vec<T> = deg.iter().map(|&d| T::one() / T::of(d as f64).sqrt()).collect();
    let mut trip = Vec::with_capacity(g.n_nodes() + 2 * g.n_edges());
    for u in 0..g.n_nodes() {
        trip.push((u, u, T::one()));
    }
    for &(u, v) in g.edges() {
        let w = -(inv_sqrt[u] * inv_sqrt[v]);
        trip.push((u, v, w));
        trip.push((v, u, w));
    }
    Csr::from_triplets(g.n_nodes(), g.n_nodes(), &trip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_1x2() {
        let g = build_grid_graph(1, 2).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn grid_7x10_edge_count() {
        let g = build_grid_graph(7, 10).unwrap();
        assert_eq!(g.n_nodes(), 70);
        assert_eq!(g.n_edges(), 7 * 9 + 10 * 6);
    }

    #[test]
    fn grid_3x3_center_degree() {
        let g = build_grid_graph(3, 3).unwrap();
        assert_eq!(g.n_edges(), 12);
        assert_eq!(g.degrees(), vec![2, 3, 2, 3, 4, 3, 2, 3, 2]);
    }

    #[test]
    fn grid_zero_dim_rejected() {
        assert!(build_grid_graph(0, 3).is_err());
    }

    #[test]
    fn graph_rejects_self_loops_and_dedups() {
        assert!(matches!(Graph::new(2, &[(1, 1)]), Err(Error::SelfLoop { node: 1, .. })));
        let g = Graph::new(2, &[(1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert!(Graph::new(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn dedup_keeps_first_attrs() {
        let g = Graph::with_attrs(
            3,
            &[(2, 1), (0, 1), (1, 2)],
            Some(vec![vec![1.0], vec![2.0], vec![3.0]]),
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.edge_attrs().unwrap(), &[vec![2.0], vec![1.0]]);
    }

    #[test]
    fn laplacian_path2() {
        let l: Csr<f64> = normalized_laplacian(&build_grid_graph(1, 2).unwrap()).unwrap();
        assert_eq!(l.to_dense().to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn laplacian_path3() {
        let l: Csr<f64> = normalized_laplacian(&build_grid_graph(1, 3).unwrap()).unwrap();
        for u in 0..3 {
            assert_eq!(l.get(u, u), 1.0);
        }
        assert!((l.get(0, 1) + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.get(0, 2), 0.0);
        assert!(l.is_symmetric());
    }

    #[test]
    fn laplacian_isolated_node() {
        let g = Graph::new(3, &[(0, 1)]).unwrap();
        assert!(matches!(
            normalized_laplacian::<f64>(&g),
            Err(Error::IsolatedNode { node: 2 })
        ));
    }
}

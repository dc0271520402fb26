//! Tile graph and its renormalized adjacency operator.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexgrid::{k_ring, HexCellId};
use crate::sparse::CsrMatrix;

pub const DEFAULT_K_LEVEL: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGraph {
    /// Node id is the position in this list; sorted by `(q, r)`.
    pub nodes: Vec<HexCellId>,
    /// Undirected edges stored once as `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub k_level: u32,
}

impl TileGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, c: HexCellId) -> Option<usize> {
        self.nodes.binary_search(&c).ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Tab-separated `hex_i\thex_j` lines, one per undirected edge.
    pub fn edge_list(&self) -> String {
        let mut s = String::new();
        for &(i, j) in &self.edges {
            let _ = writeln!(s, "{}\t{}", self.nodes[i], self.nodes[j]);
        }
        s
    }

    /// One hex id per line in node order.
    pub fn node_list(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let _ = writeln!(s, "{n}");
        }
        s
    }
}

/// Connects every pair of tiles within hex distance `k_level`.
pub fn build_tile_graph(tiles: &[HexCellId], k_level: u32) -> Result<TileGraph> {
    if tiles.is_empty() {
        return Err(Error::Argument("tile set is empty".into()));
    }
    if k_level == 0 {
        return Err(Error::Argument("k_level must be >= 1".into()));
    }
    let mut nodes = tiles.to_vec();
    nodes.sort();
    nodes.dedup();
    let index: HashMap<HexCellId, usize> = nodes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let mut edges = Vec::new();
    for (i, &c) in nodes.iter().enumerate() {
        for other in k_ring(c, i64::from(k_level))? {
            if let Some(&j) = index.get(&other) {
                if j > i {
                    edges.push((i, j));
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(TileGraph {
        nodes,
        edges,
        k_level,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedAdjacency {
    pub matrix: CsrMatrix,
    /// Diagonal of `D̃`.
    pub degrees: Vec<f64>,
}

pub fn normalized_adjacency(g: &TileGraph) -> NormalizedAdjacency {
    let degrees: Vec<f64> = g.degrees().into_iter().map(|d| (d + 1) as f64).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(g.len() + 2 * g.edges.len());
    for (i, s) in inv_sqrt.iter().enumerate() {
        triplets.push((i, i, s * s));
    }
    for &(i, j) in &g.edges {
        let v = inv_sqrt[i] * inv_sqrt[j];
        triplets.push((i, j, v));
        triplets.push((j, i, v));
    }
    let matrix =
        CsrMatrix::from_triplets(g.len(), g.len(), &triplets).expect("indices are in range");
    NormalizedAdjacency { matrix, degrees }
}

impl NormalizedAdjacency {
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Operator restricted to a node permutation: result node `i` is input node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> NormalizedAdjacency {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.matrix.nnz());
        for old in 0..self.len() {
            for (j, v) in self.matrix.row(old) {
                triplets.push((inverse[old], inverse[j], v));
            }
        }
        NormalizedAdjacency {
            matrix: CsrMatrix::from_triplets(self.len(), self.len(), &triplets)
                .expect("permutation"),
            degrees: perm.iter().map(|&p| self.degrees[p]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_cell_flower() {
        let tiles = k_ring(HexCellId::new(0, 0), 1).unwrap();
        let g = build_tile_graph(&tiles, 1).unwrap();
        let center = g.index_of(HexCellId::new(0, 0)).unwrap();
        let deg = g.degrees();
        assert_eq!(deg[center], 6);
        for (i, d) in deg.iter().enumerate() {
            if i != center {
                assert_eq!(*d, 3);
            }
        }
        assert_eq!(g.edges.len(), 12);

        let g2 = build_tile_graph(&tiles, 2).unwrap();
        assert_eq!(g2.edges.len(), 21);
    }

    #[test]
    fn pair_and_errors() {
        let g = build_tile_graph(&[HexCellId::new(1, 0), HexCellId::new(0, 0)], 1).unwrap();
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.nodes[0], HexCellId::new(0, 0));
        assert!(build_tile_graph(&[], 1).is_err());
        assert!(build_tile_graph(&[HexCellId::new(0, 0)], 0).is_err());
        assert_eq!(g.edge_list(), "0:0\t1:0\n");
    }

    #[test]
    fn closed_forms() {
        let g = build_tile_graph(&[HexCellId::new(0, 0), HexCellId::new(0, 1)], 1).unwrap();
        let a = normalized_adjacency(&g).matrix.to_dense();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let g = build_tile_graph(&[HexCellId::new(5, 5)], 1).unwrap();
        assert_eq!(normalized_adjacency(&g).matrix.to_dense().data(), &[1.0]);
    }

    #[test]
    fn interior_degree_is_six_and_rebuild_is_identical() {
        let tiles = k_ring(HexCellId::new(0, 0), 4).unwrap();
        let g = build_tile_graph(&tiles, 1).unwrap();
        for (i, c) in g.nodes.iter().enumerate() {
            if c.distance(&HexCellId::new(0, 0)) < 4 {
                assert_eq!(g.degrees()[i], 6);
            }
        }
        let mut rev = tiles.clone();
        rev.reverse();
        assert_eq!(build_tile_graph(&rev, 1).unwrap(), g);
    }

    #[test]
    fn renormalization_recovers_a_plus_i() {
        let tiles = k_ring(HexCellId::new(2, -1), 3).unwrap();
        let g = build_tile_graph(&tiles, 2).unwrap();
        let adj = normalized_adjacency(&g);
        assert!(adj.matrix.is_symmetric(1e-12));
        let dense = adj.matrix.to_dense();
        let n = g.len();
        let mut a_plus_i = vec![0.0; n * n];
        for i in 0..n {
            a_plus_i[i * n + i] = 1.0;
        }
        for &(i, j) in &g.edges {
            a_plus_i[i * n + j] = 1.0;
            a_plus_i[j * n + i] = 1.0;
        }
        for i in 0..n {
            assert!(dense.get(i, i) > 0.0);
            for j in 0..n {
                let v = dense.get(i, j);
                assert!((0.0..=1.0).contains(&v));
                let back = adj.degrees[i].sqrt() * v * adj.degrees[j].sqrt();
                assert!((back - a_plus_i[i * n + j]).abs() <= 1e-9);
            }
        }
    }
}

//! Degree-normalised bipartite graphs stored in CSR form in both directions.

use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetBundle, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Bipartite graph with symmetric normalisation `1 / (sqrt(deg l) * sqrt(deg r))`
/// stored per edge.
///
/// Edges are numbered in left-major order; `right_edge` maps every slot of
/// the right-side CSR back to that numbering so per-edge weights computed once
/// can be shared by both propagation directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    left_count: usize,
    right_count: usize,
    left_offsets: Vec<usize>,
    left_adj: Vec<usize>,
    right_offsets: Vec<usize>,
    right_adj: Vec<usize>,
    right_edge: Vec<usize>,
    /// Per edge, in left-major order.
    norm: Vec<f64>,
    /// `norm` permuted into right-major order.
    right_norm: Vec<f64>,
}

/// Neighbours of one node with the normalisation of each incident edge.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors<'a> {
    pub nodes: &'a [usize],
    pub norms: &'a [f64],
    /// Left-major edge ids of these edges.
    pub edges: EdgeIds<'a>,
}

#[derive(Debug, Clone, Copy)]
pub enum EdgeIds<'a> {
    Range(usize),
    Mapped(&'a [usize]),
}

impl EdgeIds<'_> {
    pub fn get(&self, i: usize) -> usize {
        match self {
            EdgeIds::Range(start) => start + i,
            EdgeIds::Mapped(ids) => ids[i],
        }
    }
}

impl<'a> Neighbors<'a> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(neighbour, norm, edge id)` triples.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64, usize)> + 'a {
        let edges = self.edges;
        self.nodes
            .iter()
            .zip(self.norms)
            .enumerate()
            .map(move |(i, (&n, &w))| (n, w, edges.get(i)))
    }
}

impl BipartiteGraph {
    /// Build from `(left, right)` pairs; duplicates collapse to one edge.
    pub fn from_edges(
        left_count: usize,
        right_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = edges.into_iter().collect();
        for &(l, r) in &pairs {
            if l >= left_count || r >= right_count {
                return Err(Error::Data(format!(
                    "edge ({l}, {r}) outside a {left_count} x {right_count} graph"
                )));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut left_offsets = vec![0; left_count + 1];
        let mut right_deg = vec![0usize; right_count];
        for &(l, r) in &pairs {
            left_offsets[l + 1] += 1;
            right_deg[r] += 1;
        }
        for i in 0..left_count {
            left_offsets[i + 1] += left_offsets[i];
        }
        let left_adj: Vec<usize> = pairs.iter().map(|&(_, r)| r).collect();

        let mut right_offsets = vec![0; right_count + 1];
        for r in 0..right_count {
            right_offsets[r + 1] = right_offsets[r] + right_deg[r];
        }
        let mut fill = right_offsets.clone();
        let mut right_adj = vec![0; pairs.len()];
        let mut right_edge = vec![0; pairs.len()];
        // Left-major iteration keeps each right row sorted by left index.
        for (e, &(l, r)) in pairs.iter().enumerate() {
            right_adj[fill[r]] = l;
            right_edge[fill[r]] = e;
            fill[r] += 1;
        }

        let norm: Vec<f64> = pairs
            .iter()
            .map(|&(l, r)| {
                let dl = (left_offsets[l + 1] - left_offsets[l]) as f64;
                let dr = right_deg[r] as f64;
                1.0 / (dl.sqrt() * dr.sqrt())
            })
            .collect();
        let right_norm = right_edge.iter().map(|&e| norm[e]).collect();

        Ok(BipartiteGraph {
            left_count,
            right_count,
            left_offsets,
            left_adj,
            right_offsets,
            right_adj,
            right_edge,
            norm,
            right_norm,
        })
    }

    pub fn left_count(&self) -> usize {
        self.left_count
    }

    pub fn right_count(&self) -> usize {
        self.right_count
    }

    pub fn edge_count(&self) -> usize {
        self.left_adj.len()
    }

    pub fn degree(&self, side: Side, node: usize) -> usize {
        match side {
            Side::Left => self.left_offsets[node + 1] - self.left_offsets[node],
            Side::Right => self.right_offsets[node + 1] - self.right_offsets[node],
        }
    }

    pub fn degrees(&self, side: Side) -> Vec<usize> {
        let n = match side {
            Side::Left => self.left_count,
            Side::Right => self.right_count,
        };
        (0..n).map(|i| self.degree(side, i)).collect()
    }

    /// Per-edge normalisation in left-major edge order.
    pub fn norms(&self) -> &[f64] {
        &self.norm
    }

    /// Left-major `(left, right)` endpoints of every edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.left_count).flat_map(move |l| {
            self.left_adj[self.left_offsets[l]..self.left_offsets[l + 1]]
                .iter()
                .map(move |&r| (l, r))
        })
    }

    /// Neighbours of `node`, sorted ascending.
    pub fn neighbors(&self, node: usize, side: Side) -> Result<Neighbors<'_>> {
        let count = match side {
            Side::Left => self.left_count,
            Side::Right => self.right_count,
        };
        if node >= count {
            return Err(Error::Data(format!(
                "node {node} out of range for {side:?} side of size {count}"
            )));
        }
        Ok(self.neighbors_unchecked(node, side))
    }

    pub(crate) fn neighbors_unchecked(&self, node: usize, side: Side) -> Neighbors<'_> {
        match side {
            Side::Left => {
                let (a, b) = (self.left_offsets[node], self.left_offsets[node + 1]);
                Neighbors {
                    nodes: &self.left_adj[a..b],
                    norms: &self.norm[a..b],
                    edges: EdgeIds::Range(a),
                }
            }
            Side::Right => {
                let (a, b) = (self.right_offsets[node], self.right_offsets[node + 1]);
                Neighbors {
                    nodes: &self.right_adj[a..b],
                    norms: &self.right_norm[a..b],
                    edges: EdgeIds::Mapped(&self.right_edge[a..b]),
                }
            }
        }
    }

    pub fn has_edge(&self, left: usize, right: usize) -> bool {
        left < self.left_count
            && self.left_adj[self.left_offsets[left]..self.left_offsets[left + 1]]
                .binary_search(&right)
                .is_ok()
    }

    /// Position of edge `(left, right)` in left-major order.
    pub fn edge_id(&self, left: usize, right: usize) -> Option<usize> {
        if left >= self.left_count {
            return None;
        }
        let a = self.left_offsets[left];
        self.left_adj[a..self.left_offsets[left + 1]]
            .binary_search(&right)
            .ok()
            .map(|i| a + i)
    }

    /// Histogram of node degrees: `(degree, node count)` ascending by degree.
    pub fn degree_histogram(&self, side: Side) -> Vec<(usize, usize)> {
        let mut h = std::collections::BTreeMap::new();
        for d in self.degrees(side) {
            *h.entry(d).or_insert(0usize) += 1;
        }
        h.into_iter().collect()
    }
}

/// Target users × target items, from training interactions only.
pub fn build_target_graph(
    train: &[Interaction],
    n_target_users: usize,
    n_target_items: usize,
) -> Result<BipartiteGraph> {
    if train.is_empty() {
        return Err(Error::Data("no training interactions for the target graph".into()));
    }
    BipartiteGraph::from_edges(
        n_target_users,
        n_target_items,
        train.iter().map(|r| (r.user, r.item)),
    )
}

/// All users × clusters; `(u, c)` is an edge iff `u` interacted with any
/// item of `c`. Target users contribute their training interactions,
/// source users all of theirs.
pub fn build_cross_graph(
    target_train: &[Interaction],
    source: &[Interaction],
    assignment: &[usize],
    n_users: usize,
    k: usize,
) -> Result<BipartiteGraph> {
    let mut edges = Vec::with_capacity(target_train.len() + source.len());
    for r in target_train.iter().chain(source) {
        let c = *assignment.get(r.item).ok_or_else(|| {
            Error::Data(format!("item {} has no cluster assignment", r.item))
        })?;
        edges.push((r.user, c));
    }
    BipartiteGraph::from_edges(n_users, k, edges)
}

/// Both graphs the model propagates over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    pub target: BipartiteGraph,
    pub cross: BipartiteGraph,
}

impl GraphSet {
    pub fn build(bundle: &DatasetBundle, assignment: &[usize], k: usize) -> Result<Self> {
        Ok(GraphSet {
            target: build_target_graph(&bundle.train, bundle.n_target_users(), bundle.n_target_items())?,
            cross: build_cross_graph(&bundle.train, &bundle.source, assignment, bundle.n_users(), k)?,
        })
    }
}

//! DAGs and root-partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed acyclic graph stored as one sorted parent list per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dag {
    parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn new(mut parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        for (i, ps) in parents.iter_mut().enumerate() {
            ps.sort_unstable();
            ps.dedup();
            if ps.iter().any(|&p| p >= n || p == i) {
                return Err(Error::InvalidData(format!("bad parent list for node {i}")));
            }
        }
        let dag = Self { parents };
        dag.topological_order().ok_or(Error::CyclicGraph)?;
        Ok(dag)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            parents: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.parents.len()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn indegrees(&self) -> Vec<usize> {
        self.parents.iter().map(Vec::len).collect()
    }

    /// Kahn's algorithm; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        topological_order(&self.parents)
    }

    /// `anc[j][i]` is true when `i` is a proper ancestor of `j`.
    pub fn ancestor_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        let order = self.topological_order().expect("acyclic by construction");
        let mut anc = vec![vec![false; n]; n];
        for &j in &order {
            for &p in &self.parents[j] {
                anc[j][p] = true;
                let from = anc[p].clone();
                for (t, f) in anc[j].iter_mut().zip(from) {
                    *t |= f;
                }
            }
        }
        anc
    }

    /// Edges `i -> j` with `pa(j) = pa(i) ∪ {i}`.
    pub fn covered_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.n() {
            for &i in &self.parents[j] {
                let mut expect = self.parents[i].clone();
                expect.push(i);
                expect.sort_unstable();
                if expect == self.parents[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Copy with `from -> to` replaced by `to -> from`.
    pub fn reversed(&self, from: usize, to: usize) -> Result<Self> {
        let mut parents = self.parents.clone();
        parents[to].retain(|&p| p != from);
        parents[from].push(to);
        Self::new(parents)
    }
}

pub(crate) fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (j, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(j);
        }
    }
    let mut stack: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = stack.pop() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                stack.push(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// An ordered partition `R_1 .. R_k` of the node set; each part kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootPartition {
    parts: Vec<Vec<usize>>,
}

impl RootPartition {
    pub fn new(mut parts: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = parts.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        if parts.is_empty() {
            return Err(Error::InvalidData("partition needs at least one part".into()));
        }
        for p in &mut parts {
            if p.is_empty() {
                return Err(Error::InvalidData("partition has an empty part".into()));
            }
            p.sort_unstable();
            for &v in p.iter() {
                if v >= n || seen[v] {
                    return Err(Error::InvalidData(format!(
                        "node {v} missing, repeated or out of range"
                    )));
                }
                seen[v] = true;
            }
        }
        Ok(Self { parts })
    }

    /// The single-part partition `(V)`.
    pub fn single(n: usize) -> Self {
        Self {
            parts: vec![(0..n).collect()],
        }
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn n_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }

    /// `index[v]` is the position of the part containing `v`.
    pub fn part_index(&self) -> Vec<usize> {
        let mut idx = vec![0; self.n_nodes()];
        for (t, p) in self.parts.iter().enumerate() {
            for &v in p {
                idx[v] = t;
            }
        }
        idx
    }

    pub(crate) fn parts_mut(&mut self) -> &mut Vec<Vec<usize>> {
        &mut self.parts
    }
}

/// Peels root layers off the residual graphs.
pub fn root_partition_of(g: &Dag) -> Result<RootPartition> {
    let n = g.n();
    let mut layer = vec![usize::MAX; n];
    let order = g.topological_order().ok_or(Error::CyclicGraph)?;
    // a node's layer is one past its deepest parent
    for &v in &order {
        layer[v] = g.parents(v).iter().map(|&p| layer[p] + 1).max().unwrap_or(0);
    }
    let depth = layer.iter().copied().max().map_or(0, |d| d + 1);
    let mut parts = vec![Vec::new(); depth];
    for v in 0..n {
        parts[layer[v]].push(v);
    }
    Ok(RootPartition { parts })
}

//! Sufficient statistics of a labeled graph: group sizes, block edge counts
//! and the number of possible edge slots per block pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Convention, Graph, Labeling};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStats {
    k: usize,
    convention: Convention,
    group_sizes: Vec<u64>,
    /// Row-major `k x k`. Symmetric for undirected graphs, with each
    /// within-block edge counted once on the diagonal.
    edge_counts: Vec<u64>,
}

/// Possible edge slots between groups of the given sizes.
pub fn pair_slots(convention: Convention, ni: u64, nj: u64, diagonal: bool) -> u64 {
    match (diagonal, convention.directed, convention.allow_self_loops) {
        (false, _, _) => ni * nj,
        (true, true, true) => ni * ni,
        (true, true, false) => ni * ni.saturating_sub(1),
        (true, false, true) => ni * (ni + 1) / 2,
        (true, false, false) => ni * ni.saturating_sub(1) / 2,
    }
}

/// Labels of a node's neighbors, split by direction, excluding the node.
#[derive(Clone, Debug, Default)]
pub(crate) struct NeighborLabels {
    pub out: Vec<u64>,
    pub inc: Vec<u64>,
    pub self_loop: bool,
}

impl NeighborLabels {
    pub fn new(k: usize) -> Self {
        Self { out: vec![0; k], inc: vec![0; k], self_loop: false }
    }

    pub fn fill(&mut self, graph: &Graph, labels: &[usize], v: usize) {
        self.out.iter_mut().for_each(|c| *c = 0);
        self.inc.iter_mut().for_each(|c| *c = 0);
        self.self_loop = graph.has_self_loop(v);
        for &u in graph.out_neighbors(v) {
            if u != v {
                self.out[labels[u]] += 1;
            }
        }
        if graph.is_directed() {
            for &u in graph.in_neighbors(v) {
                if u != v {
                    self.inc[labels[u]] += 1;
                }
            }
        }
    }
}

impl BlockStats {
    /// Full recomputation from a labeling.
    pub fn compute(graph: &Graph, labeling: &Labeling) -> Result<Self> {
        labeling.check_len(graph.n())?;
        let k = labeling.k();
        let labels = labeling.as_slice();
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange { node, label, k });
        }
        let mut stats = Self::empty(k, graph.convention());
        for &l in labels {
            stats.group_sizes[l] += 1;
        }
        for &(u, v) in graph.edges() {
            let (a, b) = (labels[u], labels[v]);
            stats.edge_counts[a * k + b] += 1;
            if !graph.is_directed() && a != b {
                stats.edge_counts[b * k + a] += 1;
            }
        }
        Ok(stats)
    }

    pub fn empty(k: usize, convention: Convention) -> Self {
        Self { k, convention, group_sizes: vec![0; k], edge_counts: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn group_sizes(&self) -> &[u64] {
        &self.group_sizes
    }

    pub fn group_size(&self, i: usize) -> u64 {
        self.group_sizes[i]
    }

    /// Edges from class `i` to class `j` (unordered when undirected).
    pub fn edge_count(&self, i: usize, j: usize) -> u64 {
        self.edge_counts[i * self.k + j]
    }

    pub fn pair_count(&self, i: usize, j: usize) -> u64 {
        pair_slots(self.convention, self.group_sizes[i], self.group_sizes[j], i == j)
    }

    /// Block pairs the likelihood ranges over: all ordered pairs when
    /// directed, `i <= j` otherwise.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.k;
        let directed = self.convention.directed;
        (0..k).flat_map(move |i| (if directed { 0 } else { i }..k).map(move |j| (i, j)))
    }

    pub fn total_edges(&self) -> u64 {
        self.blocks().map(|(i, j)| self.edge_count(i, j)).sum()
    }

    /// Stats after moving `v` to `new_label`, in time proportional to its
    /// degree plus `k`.
    pub fn relabel_delta(
        &self,
        graph: &Graph,
        labeling: &Labeling,
        v: usize,
        new_label: usize,
    ) -> Result<Self> {
        if v >= graph.n() {
            return Err(Error::NodeOutOfRange { node: v, n: graph.n() });
        }
        if new_label >= self.k {
            return Err(Error::LabelOutOfRange { node: v, label: new_label, k: self.k });
        }
        labeling.check_len(graph.n())?;
        let mut next = self.clone();
        let old = labeling.get(v);
        if old != new_label {
            let mut nb = NeighborLabels::new(self.k);
            nb.fill(graph, labeling.as_slice(), v);
            next.remove_node(old, &nb);
            next.insert_node(new_label, &nb);
        }
        Ok(next)
    }

    /// Takes a node with the given neighbor labels out of class `label`.
    pub(crate) fn remove_node(&mut self, label: usize, nb: &NeighborLabels) {
        let k = self.k;
        self.group_sizes[label] -= 1;
        if self.convention.directed {
            for j in 0..k {
                self.edge_counts[label * k + j] -= nb.out[j];
                self.edge_counts[j * k + label] -= nb.inc[j];
            }
        } else {
            for j in 0..k {
                self.edge_counts[label * k + j] -= nb.out[j];
                if j != label {
                    self.edge_counts[j * k + label] -= nb.out[j];
                }
            }
        }
        if nb.self_loop {
            self.edge_counts[label * k + label] -= 1;
        }
    }

    /// Puts a node (currently absent from the stats) into class `label`.
    pub(crate) fn insert_node(&mut self, label: usize, nb: &NeighborLabels) {
        let k = self.k;
        self.group_sizes[label] += 1;
        if self.convention.directed {
            for j in 0..k {
                self.edge_counts[label * k + j] += nb.out[j];
                self.edge_counts[j * k + label] += nb.inc[j];
            }
        } else {
            for j in 0..k {
                self.edge_counts[label * k + j] += nb.out[j];
                if j != label {
                    self.edge_counts[j * k + label] += nb.out[j];
                }
            }
        }
        if nb.self_loop {
            self.edge_counts[label * k + label] += 1;
        }
    }
}

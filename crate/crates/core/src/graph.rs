//! Graph topology, class labelings, and the explored-node record.
//!
//! Nodes are dense indices `0..n`. External identifiers live in an optional
//! side table so the samplers can index plain arrays. Undirected edges are
//! stored once as `(u, v)` with `u <= v`; adjacency lists hold both
//! directions.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directedness and self-loop convention of a graph. The same convention
/// decides how many possible edge slots each block pair has.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Convention {
    pub directed: bool,
    pub allow_self_loops: bool,
}

impl Convention {
    /// Directed graphs allow self-loops by default.
    pub fn directed() -> Self {
        Self { directed: true, allow_self_loops: true }
    }

    /// Undirected graphs forbid self-loops by default.
    pub fn undirected() -> Self {
        Self { directed: false, allow_self_loops: false }
    }

    pub fn new(directed: bool, allow_self_loops: Option<bool>) -> Self {
        let base = if directed { Self::directed() } else { Self::undirected() };
        Self { allow_self_loops: allow_self_loops.unwrap_or(base.allow_self_loops), ..base }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    convention: Convention,
    edges: Vec<(usize, usize)>,
    out_offsets: Vec<usize>,
    out_targets: Vec<usize>,
    in_offsets: Vec<usize>,
    in_sources: Vec<usize>,
    self_loop: Vec<bool>,
    names: Option<Vec<String>>,
}

impl Graph {
    pub fn builder(n: usize, convention: Convention) -> GraphBuilder {
        GraphBuilder::new(n, convention)
    }

    /// Builds a graph from an edge list, rejecting duplicates.
    pub fn from_edges(
        n: usize,
        convention: Convention,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut b = GraphBuilder::new(n, convention);
        for (u, v) in edges {
            b.add_edge(u, v)?;
        }
        Ok(b.build())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn is_directed(&self) -> bool {
        self.convention.directed
    }

    pub fn allows_self_loops(&self) -> bool {
        self.convention.allow_self_loops
    }

    /// Edges in sorted order; canonical `u <= v` when undirected.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Successors of `v` (all neighbors when undirected). Includes `v`
    /// itself if it carries a self-loop.
    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    /// Predecessors of `v` (all neighbors when undirected).
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn has_self_loop(&self, v: usize) -> bool {
        self.self_loop[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (u, v) = if self.is_directed() { (u, v) } else { (u.min(v), u.max(v)) };
        self.out_neighbors(u).binary_search(&v).is_ok()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_neighbors(v).len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_neighbors(v).len()
    }

    /// In plus out degree for directed graphs; neighbor count otherwise.
    pub fn degree(&self, v: usize) -> usize {
        if self.is_directed() {
            self.out_degree(v) + self.in_degree(v)
        } else {
            self.out_degree(v)
        }
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// External name of `v`, or its index rendered as text.
    pub fn name(&self, v: usize) -> String {
        match &self.names {
            Some(names) => names[v].clone(),
            None => v.to_string(),
        }
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        match &self.names {
            Some(names) => names.iter().position(|s| s == name),
            None => name.parse().ok().filter(|&v| v < self.n),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: names.len() });
        }
        self.names = Some(names);
        Ok(self)
    }
}

#[derive(Debug)]
pub struct GraphBuilder {
    n: usize,
    convention: Convention,
    edges: Vec<(usize, usize)>,
    seen: HashSet<(usize, usize)>,
    names: Option<Vec<String>>,
}

impl GraphBuilder {
    pub fn new(n: usize, convention: Convention) -> Self {
        Self { n, convention, edges: Vec::new(), seen: HashSet::new(), names: None }
    }

    pub fn names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        for node in [u, v] {
            if node >= self.n {
                return Err(Error::NodeOutOfRange { node, n: self.n });
            }
        }
        if u == v && !self.convention.allow_self_loops {
            return Err(Error::SelfLoopForbidden(u));
        }
        let key = if self.convention.directed { (u, v) } else { (u.min(v), u.max(v)) };
        if !self.seen.insert(key) {
            return Err(Error::DuplicateEdge(key.0, key.1));
        }
        self.edges.push(key);
        Ok(())
    }

    pub fn build(self) -> Graph {
        let n = self.n;
        let mut edges = self.edges;
        edges.sort_unstable();

        let mut out_lists = vec![Vec::new(); n];
        let mut in_lists = vec![Vec::new(); n];
        let mut self_loop = vec![false; n];
        for &(u, v) in &edges {
            if u == v {
                self_loop[u] = true;
                out_lists[u].push(u);
                in_lists[u].push(u);
                continue;
            }
            out_lists[u].push(v);
            in_lists[v].push(u);
            if !self.convention.directed {
                out_lists[v].push(u);
                in_lists[u].push(v);
            }
        }
        let (out_offsets, out_targets) = flatten(out_lists);
        let (in_offsets, in_sources) = flatten(in_lists);
        let names = self.names.filter(|names| names.len() == n);

        Graph {
            n,
            convention: self.convention,
            edges,
            out_offsets,
            out_targets,
            in_offsets,
            in_sources,
            self_loop,
            names,
        }
    }
}

fn flatten(mut lists: Vec<Vec<usize>>) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = Vec::with_capacity(lists.len() + 1);
    let mut flat = Vec::with_capacity(lists.iter().map(Vec::len).sum());
    offsets.push(0);
    for list in &mut lists {
        list.sort_unstable();
        flat.extend_from_slice(list);
        offsets.push(flat.len());
    }
    (offsets, flat)
}

/// A total assignment of class labels `0..k` to the nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::LabelOutOfRange { node, label, k });
        }
        Ok(Self { labels, k })
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self { labels: vec![0; n], k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn set(&mut self, v: usize, label: usize) -> Result<()> {
        if label >= self.k {
            return Err(Error::LabelOutOfRange { node: v, label, k: self.k });
        }
        self.labels[v] = label;
        Ok(())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    /// Applies a class permutation: label `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { labels: self.labels.iter().map(|&l| perm[l]).collect(), k: self.k }
    }

    /// Number of nodes on which two labelings agree.
    pub fn agreement(&self, other: &Labeling) -> usize {
        self.labels.iter().zip(&other.labels).filter(|(a, b)| a == b).count()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: self.labels.len() });
        }
        Ok(())
    }
}

/// Nodes whose labels have been revealed, in the order they were explored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartial", into = "RawPartial")]
pub struct PartialLabeling {
    n: usize,
    k: usize,
    explored: Vec<(usize, usize)>,
    lookup: HashMap<usize, usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawPartial {
    n: usize,
    k: usize,
    explored: Vec<(usize, usize)>,
}

impl TryFrom<RawPartial> for PartialLabeling {
    type Error = Error;

    fn try_from(raw: RawPartial) -> Result<Self> {
        PartialLabeling::from_pairs(raw.n, raw.k, raw.explored)
    }
}

impl From<PartialLabeling> for RawPartial {
    fn from(p: PartialLabeling) -> Self {
        RawPartial { n: p.n, k: p.k, explored: p.explored }
    }
}

impl PartialLabeling {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k, explored: Vec::new(), lookup: HashMap::new() }
    }

    pub fn from_pairs(n: usize, k: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut partial = Self::new(n, k);
        for (node, label) in pairs {
            partial.reveal(node, label)?;
        }
        Ok(partial)
    }

    /// Every node explored with the labels of `truth`, in index order.
    pub fn complete(truth: &Labeling) -> Self {
        Self::from_pairs(truth.len(), truth.k(), truth.as_slice().iter().copied().enumerate())
            .expect("a labeling is a valid complete partial labeling")
    }

    pub fn reveal(&mut self, node: usize, label: usize) -> Result<()> {
        if node >= self.n {
            return Err(Error::NodeOutOfRange { node, n: self.n });
        }
        if label >= self.k {
            return Err(Error::LabelOutOfRange { node, label, k: self.k });
        }
        if self.lookup.contains_key(&node) {
            return Err(Error::AlreadyExplored(node));
        }
        self.lookup.insert(node, label);
        self.explored.push((node, label));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Stage index: how many nodes have been explored.
    pub fn stage(&self) -> usize {
        self.explored.len()
    }

    pub fn explored(&self) -> &[(usize, usize)] {
        &self.explored
    }

    pub fn label_of(&self, node: usize) -> Option<usize> {
        self.lookup.get(&node).copied()
    }

    pub fn is_explored(&self, node: usize) -> bool {
        self.lookup.contains_key(&node)
    }

    pub fn unexplored(&self) -> Vec<usize> {
        (0..self.n).filter(|v| !self.is_explored(*v)).collect()
    }
}

/// Induced subgraph together with the map back to the parent's node ids.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: Graph,
    pub original: Vec<usize>,
}

/// Induced subgraph on the nodes not yet explored.
pub fn unexplored_subgraph(graph: &Graph, partial: &PartialLabeling) -> Subgraph {
    let original: Vec<usize> = (0..graph.n()).filter(|&v| !partial.is_explored(v)).collect();
    let mut index = vec![usize::MAX; graph.n()];
    for (new, &old) in original.iter().enumerate() {
        index[old] = new;
    }
    let mut builder = GraphBuilder::new(original.len(), graph.convention());
    for &(u, v) in graph.edges() {
        if index[u] != usize::MAX && index[v] != usize::MAX {
            builder
                .add_edge(index[u], index[v])
                .expect("edges of a valid graph stay valid in an induced subgraph");
        }
    }
    if let Some(names) = graph.names() {
        builder = builder.names(original.iter().map(|&v| names[v].clone()).collect());
    }
    Subgraph { graph: builder.build(), original }
}

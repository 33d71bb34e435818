//! Query strategies: per-node exploration scores and next-node selection.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{MarginalAccumulator, SamplePairStats};
use crate::graph::{unexplored_subgraph, Graph, PartialLabeling};
use crate::model::xlnx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Mutual information between a node's label and the rest.
    Mi,
    /// Average agreement of two posterior samples that agree at the node.
    Aa,
    Degree,
    Betweenness,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Mi, Strategy::Aa, Strategy::Degree, Strategy::Betweenness, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Mi => "mi",
            Strategy::Aa => "aa",
            Strategy::Degree => "degree",
            Strategy::Betweenness => "betweenness",
            Strategy::Random => "random",
        }
    }

    /// Whether scoring needs paired chains.
    pub fn needs_pairs(self) -> bool {
        self == Strategy::Aa
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown strategy `{s}` (expected mi, aa, degree, betweenness or random)")))
    }
}

/// Which edges count toward a node's degree in a directed graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeKind {
    #[default]
    Total,
    In,
    Out,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFlag {
    Ok,
    /// The sampler never visited the node; scored as maximally uncertain.
    Unvisited,
    /// No score could be estimated; never preferred over a defined score.
    Undefined,
}

/// Scores for every node; `None` marks explored nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub strategy: Strategy,
    pub scores: Vec<Option<f64>>,
    pub flags: Vec<ScoreFlag>,
}

impl ScoreVector {
    fn blank(strategy: Strategy, partial: &PartialLabeling) -> Self {
        let n = partial.n();
        Self {
            strategy,
            scores: (0..n).map(|v| if partial.is_explored(v) { None } else { Some(0.0) }).collect(),
            flags: vec![ScoreFlag::Ok; n],
        }
    }

    /// Highest score among selectable nodes.
    pub fn best_defined(&self) -> Option<f64> {
        self.selectable().map(|(_, s)| s).reduce(f64::max)
    }

    fn selectable(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.scores
            .iter()
            .enumerate()
            .filter(|(v, _)| self.flags[*v] != ScoreFlag::Undefined)
            .filter_map(|(v, s)| s.map(|s| (v, s)))
    }
}

/// `MI(v) = H(<P>) + <sum_i P_i ln P_i>` from the averaged conditionals.
pub fn mutual_information_scores(acc: &MarginalAccumulator) -> ScoreVector {
    let n = acc.n();
    let k = acc.k();
    let mut scores = Vec::with_capacity(n);
    let mut flags = vec![ScoreFlag::Ok; n];
    for v in 0..n {
        if acc.is_explored(v) {
            scores.push(None);
            continue;
        }
        if acc.visits(v) == 0 {
            flags[v] = ScoreFlag::Unvisited;
            scores.push(Some((k as f64).ln()));
            continue;
        }
        let marginal_entropy: f64 = -acc.mean_conditional(v).into_iter().map(xlnx).sum::<f64>();
        scores.push(Some((marginal_entropy + acc.mean_neg_entropy(v)).max(0.0)));
    }
    ScoreVector { strategy: Strategy::Mi, scores, flags }
}

/// `AA(v)`: mean total agreement over sampled pairs that agree at `v`.
pub fn average_agreement_scores(pairs: &SamplePairStats, partial: &PartialLabeling) -> ScoreVector {
    let mut out = ScoreVector::blank(Strategy::Aa, partial);
    for v in 0..partial.n() {
        if partial.is_explored(v) {
            continue;
        }
        let count = pairs.agree_counts.get(v).copied().unwrap_or(0);
        if count == 0 {
            out.flags[v] = ScoreFlag::Undefined;
            out.scores[v] = Some(0.0);
        } else {
            out.scores[v] = Some(pairs.agreement_sums[v] as f64 / count as f64);
        }
    }
    out
}

/// Degree within the subgraph induced by the unexplored nodes.
pub fn degree_scores(graph: &Graph, partial: &PartialLabeling, kind: DegreeKind) -> ScoreVector {
    let sub = unexplored_subgraph(graph, partial);
    let mut out = ScoreVector::blank(Strategy::Degree, partial);
    for (local, &v) in sub.original.iter().enumerate() {
        let g = &sub.graph;
        let d = match (g.is_directed(), kind) {
            (false, _) | (true, DegreeKind::Total) => g.degree(local),
            (true, DegreeKind::In) => g.in_degree(local),
            (true, DegreeKind::Out) => g.out_degree(local),
        };
        out.scores[v] = Some(d as f64);
    }
    out
}

/// Shortest-path betweenness within the subgraph induced by the
/// unexplored nodes.
pub fn betweenness_scores(graph: &Graph, partial: &PartialLabeling) -> ScoreVector {
    let sub = unexplored_subgraph(graph, partial);
    let centrality = betweenness(&sub.graph);
    let mut out = ScoreVector::blank(Strategy::Betweenness, partial);
    for (local, &v) in sub.original.iter().enumerate() {
        out.scores[v] = Some(centrality[local]);
    }
    out
}

/// Placeholder scores for the random strategy; selection ignores them.
pub fn random_scores(partial: &PartialLabeling) -> ScoreVector {
    ScoreVector::blank(Strategy::Random, partial)
}

/// Unnormalized betweenness by Brandes' dependency accumulation. Directed
/// graphs use directed paths; undirected pairs are counted once.
pub fn betweenness(graph: &Graph) -> Vec<f64> {
    let n = graph.n();
    let mut centrality = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        for v in 0..n {
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
            preds[v].clear();
        }
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in graph.out_neighbors(v) {
                if w == v {
                    continue;
                }
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = order.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    if !graph.is_directed() {
        centrality.iter_mut().for_each(|c| *c /= 2.0);
    }
    centrality
}

/// Picks the node with the largest selectable score, breaking ties
/// uniformly at random. The random strategy draws uniformly from the
/// unexplored nodes.
pub fn select_next(scores: &ScoreVector, rng: &mut impl Rng) -> Result<usize> {
    let unexplored: Vec<usize> = (0..scores.scores.len()).filter(|&v| scores.scores[v].is_some()).collect();
    if unexplored.is_empty() {
        return Err(Error::EmptyFrontier);
    }
    if scores.strategy == Strategy::Random {
        return Ok(unexplored[rng.random_range(0..unexplored.len())]);
    }
    let Some(best) = scores.best_defined() else {
        warn!("no node has a defined {} score; falling back to node {}", scores.strategy, unexplored[0]);
        return Ok(unexplored[0]);
    };
    let tied: Vec<usize> = scores.selectable().filter(|&(_, s)| s == best).map(|(v, _)| v).collect();
    Ok(tied[rng.random_range(0..tied.len())])
}

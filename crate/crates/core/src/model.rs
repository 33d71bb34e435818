//! Block-model likelihoods and single-site conditional label distributions.
//!
//! Everything is evaluated in log space. The integrated likelihood uses
//! log-gamma; the maximum-likelihood score uses `x ln x` terms. The sampler
//! goes through [`BlockScorer`], which tabulates both for integer arguments.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::{Convention, Graph, Labeling};
use crate::stats::{pair_slots, BlockStats, NeighborLabels};

/// How a labeling is scored once the edge probabilities are dealt with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Edge probabilities integrated against a beta prior.
    #[default]
    Integrated,
    /// Edge probabilities fixed at their maximum-likelihood values.
    MaxLikelihood,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mode: ScoreMode,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, mode: ScoreMode::Integrated }
    }
}

impl PriorConfig {
    pub fn max_likelihood() -> Self {
        Self { mode: ScoreMode::MaxLikelihood, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidPrior { alpha: self.alpha, beta: self.beta });
        }
        Ok(())
    }
}

/// `k x k` matrix of edge probabilities between classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbMatrix {
    k: usize,
    p: Vec<f64>,
}

impl EdgeProbMatrix {
    pub fn new(k: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != k * k {
            return Err(Error::InvalidProbabilities(format!(
                "expected {} entries for k = {k}, got {}",
                k * k,
                p.len()
            )));
        }
        if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidProbabilities(format!("entry {x} outside [0, 1]")));
        }
        Ok(Self { k, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidProbabilities("matrix is not square".into()));
        }
        Self::new(k, rows.concat())
    }

    /// `p_in` on the diagonal and `p_out` everywhere else.
    pub fn planted(k: usize, p_in: f64, p_out: f64) -> Result<Self> {
        let p = (0..k * k).map(|x| if x / k == x % k { p_in } else { p_out }).collect();
        Self::new(k, p)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.k + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.k).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.k).map(<[f64]>::to_vec).collect()
    }
}

/// A distribution over the `k` class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    /// Normalizes log-weights, subtracting the maximum first.
    pub fn from_log_weights(mut weights: Vec<f64>) -> Self {
        normalize_log_weights(&mut weights);
        Self { probs: weights }
    }

    pub fn point_mass(k: usize, label: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[label] = 1.0;
        Self { probs }
    }

    /// Most likely label, preferring `prefer` when it ties for the maximum.
    pub fn argmax_prefer(&self, prefer: Option<usize>) -> usize {
        let max = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if let Some(p) = prefer.filter(|&p| self.probs[p] == max) {
            return p;
        }
        self.probs.iter().position(|&x| x == max).unwrap_or(0)
    }

    pub fn argmax(&self) -> usize {
        self.argmax_prefer(None)
    }

    /// `sum_i p_i ln p_i`, i.e. the negative entropy.
    pub fn neg_entropy(&self) -> f64 {
        self.probs.iter().map(|&p| xlnx(p)).sum()
    }
}

pub(crate) fn normalize_log_weights(w: &mut [f64]) {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in w.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in w.iter_mut() {
        *x /= total;
    }
}

#[inline]
pub(crate) fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Log-probability of the graph given the labeling and edge probabilities.
pub fn log_likelihood_given_p(stats: &BlockStats, p: &EdgeProbMatrix) -> Result<f64> {
    if p.k() != stats.k() {
        return Err(Error::DimensionMismatch { expected: stats.k(), got: p.k() });
    }
    let mut total = 0.0;
    for (i, j) in stats.blocks() {
        let e = stats.edge_count(i, j) as f64;
        let absent = (stats.pair_count(i, j) - stats.edge_count(i, j)) as f64;
        let pij = p.get(i, j);
        if e > 0.0 {
            total += e * pij.ln();
        }
        if absent > 0.0 {
            total += absent * (1.0 - pij).ln();
        }
    }
    Ok(total)
}

/// Log-probability of the graph given the labeling, with every block's
/// edge probability integrated against a Beta(alpha, beta) prior.
pub fn integrated_log_likelihood(stats: &BlockStats, prior: &PriorConfig) -> f64 {
    let (a, b) = (prior.alpha, prior.beta);
    let norm = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    stats
        .blocks()
        .map(|(i, j)| {
            let e = stats.edge_count(i, j) as f64;
            let slots = stats.pair_count(i, j) as f64;
            norm + ln_gamma(e + a) + ln_gamma(slots - e + b) - ln_gamma(slots + a + b)
        })
        .sum()
}

/// Maximum-likelihood edge probabilities `e_ij / N_ij` (zero for empty blocks).
pub fn max_likelihood_p(stats: &BlockStats) -> EdgeProbMatrix {
    let k = stats.k();
    let mut p = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let slots = stats.pair_count(i, j);
            if slots > 0 {
                p[i * k + j] = stats.edge_count(i, j) as f64 / slots as f64;
            }
        }
    }
    if !stats.convention().directed {
        // Only i <= j is meaningful; mirror it so the matrix is symmetric.
        for i in 0..k {
            for j in 0..i {
                p[i * k + j] = p[j * k + i];
            }
        }
    }
    EdgeProbMatrix { k, p }
}

/// Unnormalized log Gibbs weight of the labeling behind `stats`.
pub fn model_log_score(stats: &BlockStats, prior: &PriorConfig) -> f64 {
    match prior.mode {
        ScoreMode::Integrated => integrated_log_likelihood(stats, prior),
        ScoreMode::MaxLikelihood => log_likelihood_given_p(stats, &max_likelihood_p(stats))
            .expect("dimensions agree by construction"),
    }
}

/// Distribution of `v`'s label with every other label held fixed.
pub fn conditional_label_distribution(
    graph: &Graph,
    stats: &BlockStats,
    labeling: &Labeling,
    v: usize,
    prior: &PriorConfig,
) -> Result<LabelDistribution> {
    prior.validate()?;
    labeling.check_len(graph.n())?;
    if v >= graph.n() {
        return Err(Error::NodeOutOfRange { node: v, n: graph.n() });
    }
    let k = labeling.k();
    let scorer = BlockScorer::new(prior, graph.convention(), k, 0);
    let mut nb = NeighborLabels::new(k);
    nb.fill(graph, labeling.as_slice(), v);
    let mut removed = stats.clone();
    removed.remove_node(labeling.get(v), &nb);
    let mut weights = vec![0.0; k];
    scorer.candidate_log_weights(&removed, &nb, &mut weights);
    Ok(LabelDistribution::from_log_weights(weights))
}

/// Upper bound on tabulated arguments; larger counts fall back to direct
/// evaluation.
const TABLE_LIMIT: u64 = 1 << 21;

/// Per-block log-likelihood terms, tabulated over integer counts.
#[derive(Clone, Debug)]
pub struct BlockScorer {
    mode: ScoreMode,
    alpha: f64,
    beta: f64,
    convention: Convention,
    k: usize,
    block_constant: f64,
    /// `ln Gamma(x + alpha)` (or `x ln x`).
    with_alpha: Vec<f64>,
    /// `ln Gamma(x + beta)`; empty when it would duplicate `with_alpha`.
    with_beta: Vec<f64>,
    /// `ln Gamma(x + alpha + beta)`; empty in max-likelihood mode.
    with_both: Vec<f64>,
}

impl BlockScorer {
    /// Builds tables large enough for any block of an `n`-node graph, up
    /// to a fixed cap. `n = 0` builds no tables.
    pub fn new(prior: &PriorConfig, convention: Convention, k: usize, n: usize) -> Self {
        let n = n as u64;
        let max_slots = if n == 0 { 0 } else { pair_slots(convention, n, n, true).max(n * n / 4 + 1) };
        let len = (max_slots + 1).min(TABLE_LIMIT) as usize;
        let len = if n == 0 { 0 } else { len };
        let (a, b) = (prior.alpha, prior.beta);
        let (with_alpha, with_beta, with_both, block_constant) = match prior.mode {
            ScoreMode::Integrated => {
                let ta: Vec<f64> = (0..len).map(|x| ln_gamma(x as f64 + a)).collect();
                let tb = if a == b { Vec::new() } else { (0..len).map(|x| ln_gamma(x as f64 + b)).collect() };
                let tab = (0..len).map(|x| ln_gamma(x as f64 + a + b)).collect();
                (ta, tb, tab, ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b))
            }
            ScoreMode::MaxLikelihood => ((0..len).map(|x| xlnx(x as f64)).collect(), Vec::new(), Vec::new(), 0.0),
        };
        Self { mode: prior.mode, alpha: a, beta: b, convention, k, block_constant, with_alpha, with_beta, with_both }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn lookup_alpha(&self, x: u64) -> f64 {
        match self.with_alpha.get(x as usize) {
            Some(&v) => v,
            None => match self.mode {
                ScoreMode::Integrated => ln_gamma(x as f64 + self.alpha),
                ScoreMode::MaxLikelihood => xlnx(x as f64),
            },
        }
    }

    #[inline]
    fn lookup_beta(&self, x: u64) -> f64 {
        if self.mode == ScoreMode::MaxLikelihood || self.alpha == self.beta {
            return self.lookup_alpha(x);
        }
        match self.with_beta.get(x as usize) {
            Some(&v) => v,
            None => ln_gamma(x as f64 + self.beta),
        }
    }

    #[inline]
    fn lookup_both(&self, x: u64) -> f64 {
        if self.mode == ScoreMode::MaxLikelihood {
            return self.lookup_alpha(x);
        }
        match self.with_both.get(x as usize) {
            Some(&v) => v,
            None => ln_gamma(x as f64 + self.alpha + self.beta),
        }
    }

    /// Log-likelihood contribution of one block, without the per-block
    /// normalizing constant.
    #[inline]
    pub fn block_term(&self, edges: u64, slots: u64) -> f64 {
        self.lookup_alpha(edges) + self.lookup_beta(slots - edges) - self.lookup_both(slots)
    }

    /// Full log score; agrees with [`model_log_score`].
    pub fn score(&self, stats: &BlockStats) -> f64 {
        stats
            .blocks()
            .map(|(i, j)| self.block_constant + self.block_term(stats.edge_count(i, j), stats.pair_count(i, j)))
            .sum()
    }

    /// Log-weights (up to a shared constant) of inserting a node with
    /// neighbor labels `nb` into each class of `removed`, which must not
    /// contain the node.
    pub(crate) fn candidate_log_weights(&self, removed: &BlockStats, nb: &NeighborLabels, out: &mut [f64]) {
        let k = self.k;
        let conv = self.convention;
        let sizes = removed.group_sizes();
        let self_loop = u64::from(nb.self_loop);
        for (b, slot) in out.iter_mut().enumerate().take(k) {
            let nb_old = sizes[b];
            let nb_new = nb_old + 1;
            let mut w = 0.0;
            for j in 0..k {
                let diag = j == b;
                let (nj_old, nj_new) = if diag { (nb_old, nb_new) } else { (sizes[j], sizes[j]) };
                let e_old = removed.edge_count(b, j);
                let added = if conv.directed {
                    nb.out[j] + if diag { nb.inc[b] + self_loop } else { 0 }
                } else {
                    nb.out[j] + if diag { self_loop } else { 0 }
                };
                w += self.block_term(e_old + added, pair_slots(conv, nb_new, nj_new, diag))
                    - self.block_term(e_old, pair_slots(conv, nb_old, nj_old, diag));
                if conv.directed && !diag {
                    let e_old = removed.edge_count(j, b);
                    w += self.block_term(e_old + nb.inc[j], pair_slots(conv, nj_old, nb_new, false))
                        - self.block_term(e_old, pair_slots(conv, nj_old, nb_old, false));
                }
            }
            *slot = w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut impl Rng, n: usize, k: usize, conv: Convention, density: f64) -> (Graph, Labeling) {
        let mut b = Graph::builder(n, conv);
        for u in 0..n {
            for v in 0..n {
                if (u == v && !conv.allow_self_loops) || (!conv.directed && u > v) {
                    continue;
                }
                if rng.random_bool(density) {
                    b.add_edge(u, v).unwrap();
                }
            }
        }
        let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
        (b.build(), Labeling::new(labels, k).unwrap())
    }

    /// Product over every node pair of p or 1 - p, in log space.
    fn pairwise_log_likelihood(g: &Graph, l: &Labeling, p: &EdgeProbMatrix) -> f64 {
        let n = g.n();
        let mut total = 0.0;
        for u in 0..n {
            for v in 0..n {
                if (u == v && !g.allows_self_loops()) || (!g.is_directed() && u > v) {
                    continue;
                }
                let q = p.get(l.get(u), l.get(v));
                total += if g.has_edge(u, v) { q.ln() } else { (1.0 - q).ln() };
            }
        }
        total
    }

    fn all_conventions() -> [Convention; 4] {
        [
            Convention { directed: true, allow_self_loops: true },
            Convention { directed: true, allow_self_loops: false },
            Convention { directed: false, allow_self_loops: true },
            Convention { directed: false, allow_self_loops: false },
        ]
    }

    #[test]
    fn certain_graph_has_zero_log_likelihood() {
        let n = 3;
        let edges = (0..n).flat_map(|u| (0..n).map(move |v| (u, v)));
        let g = Graph::from_edges(n, Convention::directed(), edges).unwrap();
        let l = Labeling::new(vec![0, 1, 1], 2).unwrap();
        let s = BlockStats::compute(&g, &l).unwrap();
        let ones = EdgeProbMatrix::new(2, vec![1.0; 4]).unwrap();
        assert_eq!(log_likelihood_given_p(&s, &ones).unwrap(), 0.0);
    }

    #[test]
    fn impossible_graph_is_negative_infinity() {
        let g = Graph::from_edges(3, Convention::directed(), [(0, 1)]).unwrap();
        let s = BlockStats::compute(&g, &Labeling::uniform(3, 2)).unwrap();
        let zeros = EdgeProbMatrix::new(2, vec![0.0; 4]).unwrap();
        assert_eq!(log_likelihood_given_p(&s, &zeros).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = Graph::from_edges(2, Convention::directed(), [(0, 1)]).unwrap();
        let s = BlockStats::compute(&g, &Labeling::uniform(2, 2)).unwrap();
        let p = EdgeProbMatrix::new(3, vec![0.5; 9]).unwrap();
        assert!(matches!(log_likelihood_given_p(&s, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ml_probabilities_match_pairwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for conv in all_conventions() {
            let (g, l) = random_instance(&mut rng, 7, 2, conv, 0.4);
            let s = BlockStats::compute(&g, &l).unwrap();
            let p = max_likelihood_p(&s);
            let direct = pairwise_log_likelihood(&g, &l, &p);
            let via_stats = log_likelihood_given_p(&s, &p).unwrap();
            assert!((direct - via_stats).abs() < 1e-9, "{conv:?}: {direct} vs {via_stats}");
            assert!((model_log_score(&s, &PriorConfig::max_likelihood()) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn ml_probabilities_edge_cases() {
        let empty = Graph::builder(4, Convention::directed()).build();
        let l = Labeling::new(vec![0, 0, 1, 1], 2).unwrap();
        let p = max_likelihood_p(&BlockStats::compute(&empty, &l).unwrap());
        assert!(p.rows().iter().flatten().all(|&x| x == 0.0));

        let edges = (0..4).flat_map(|u| (0..4).map(move |v| (u, v)));
        let full = Graph::from_edges(4, Convention::directed(), edges).unwrap();
        let p = max_likelihood_p(&BlockStats::compute(&full, &l).unwrap());
        assert!(p.rows().iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn ml_probabilities_beat_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (g, l) = random_instance(&mut rng, 8, 2, Convention::directed(), 0.3);
        let s = BlockStats::compute(&g, &l).unwrap();
        let best = log_likelihood_given_p(&s, &max_likelihood_p(&s)).unwrap();
        for _ in 0..1000 {
            let p = EdgeProbMatrix::new(2, (0..4).map(|_| rng.random::<f64>()).collect()).unwrap();
            assert!(log_likelihood_given_p(&s, &p).unwrap() <= best + 1e-12);
        }
    }

    #[test]
    fn empty_product_is_zero() {
        let g = Graph::builder(1, Convention::undirected()).build();
        let s = BlockStats::compute(&g, &Labeling::uniform(1, 1)).unwrap();
        assert_eq!(integrated_log_likelihood(&s, &PriorConfig::default()), 0.0);
    }

    #[test]
    fn two_node_directed_closed_form() {
        // N = 4 slots (self-loops allowed), e = 1: (N + 1) * C(N, e) = 20.
        let g = Graph::from_edges(2, Convention::directed(), [(0, 1)]).unwrap();
        let s = BlockStats::compute(&g, &Labeling::uniform(2, 1)).unwrap();
        let got = integrated_log_likelihood(&s, &PriorConfig::default());
        assert!((got + 20f64.ln()).abs() < 1e-12);
    }

    /// Trapezoid rule on a fine grid for the Beta integral of one block.
    fn beta_integral(e: u64, slots: u64) -> f64 {
        let steps = 200_000;
        let h = 1.0 / steps as f64;
        let f = |p: f64| p.powi(e as i32) * (1.0 - p).powi((slots - e) as i32);
        let mut acc = 0.5 * (f(0.0) + f(1.0));
        for i in 1..steps {
            acc += f(i as f64 * h);
        }
        acc * h
    }

    #[test]
    fn uniform_prior_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for conv in all_conventions() {
            let (g, l) = random_instance(&mut rng, 5, 2, conv, 0.5);
            let s = BlockStats::compute(&g, &l).unwrap();
            let quad: f64 = s.blocks().map(|(i, j)| beta_integral(s.edge_count(i, j), s.pair_count(i, j)).ln()).sum();
            let got = integrated_log_likelihood(&s, &PriorConfig::default());
            assert!(((got - quad) / quad).abs() < 1e-6, "{got} vs {quad}");
        }
    }

    #[test]
    fn scorer_agrees_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let priors = [
            PriorConfig::default(),
            PriorConfig { alpha: 0.5, beta: 2.5, mode: ScoreMode::Integrated },
            PriorConfig::max_likelihood(),
        ];
        for conv in all_conventions() {
            for prior in &priors {
                let (g, l) = random_instance(&mut rng, 9, 3, conv, 0.3);
                let s = BlockStats::compute(&g, &l).unwrap();
                let tabled = BlockScorer::new(prior, conv, 3, g.n()).score(&s);
                let direct = BlockScorer::new(prior, conv, 3, 0).score(&s);
                let reference = model_log_score(&s, prior);
                assert!((tabled - reference).abs() < 1e-9, "{prior:?} {conv:?}");
                assert!((direct - reference).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn label_permutation_leaves_score_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for conv in all_conventions() {
            for prior in [PriorConfig::default(), PriorConfig::max_likelihood()] {
                let (g, l) = random_instance(&mut rng, 8, 3, conv, 0.4);
                let base = model_log_score(&BlockStats::compute(&g, &l).unwrap(), &prior);
                for perm in &perms {
                    let s = BlockStats::compute(&g, &l.permuted(perm)).unwrap();
                    assert!((model_log_score(&s, &prior) - base).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn single_class_conditional_is_certain() {
        let g = Graph::from_edges(3, Convention::undirected(), [(0, 1)]).unwrap();
        let l = Labeling::uniform(3, 1);
        let s = BlockStats::compute(&g, &l).unwrap();
        let d = conditional_label_distribution(&g, &s, &l, 2, &PriorConfig::default()).unwrap();
        assert_eq!(d.probs, vec![1.0]);
    }

    fn conditional_by_recompute(g: &Graph, l: &Labeling, v: usize, prior: &PriorConfig) -> Vec<f64> {
        let scores: Vec<f64> = (0..l.k())
            .map(|i| {
                let mut l2 = l.clone();
                l2.set(v, i).unwrap();
                model_log_score(&BlockStats::compute(g, &l2).unwrap(), prior)
            })
            .collect();
        LabelDistribution::from_log_weights(scores).probs
    }

    #[test]
    fn isolated_node_matches_two_point_recompute() {
        let g = Graph::from_edges(4, Convention::undirected(), [(0, 1), (1, 2)]).unwrap();
        let l = Labeling::new(vec![0, 1, 0, 0], 2).unwrap();
        let s = BlockStats::compute(&g, &l).unwrap();
        let prior = PriorConfig::default();
        let d = conditional_label_distribution(&g, &s, &l, 3, &prior).unwrap();
        let expected = conditional_by_recompute(&g, &l, 3, &prior);
        for (a, b) in d.probs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_node_matches_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for conv in all_conventions() {
            for prior in [PriorConfig::default(), PriorConfig::max_likelihood(), PriorConfig { alpha: 2.0, beta: 0.7, mode: ScoreMode::Integrated }] {
                let (g, l) = random_instance(&mut rng, 6, 3, conv, 0.45);
                let s = BlockStats::compute(&g, &l).unwrap();
                for v in 0..6 {
                    let d = conditional_label_distribution(&g, &s, &l, v, &prior).unwrap();
                    let expected = conditional_by_recompute(&g, &l, v, &prior);
                    assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for (a, b) in d.probs.iter().zip(&expected) {
                        assert!((a - b).abs() < 1e-9, "{conv:?} v={v}: {:?} vs {expected:?}", d.probs);
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_ignores_additive_constants() {
        let a = LabelDistribution::from_log_weights(vec![-3.0, -1.0, -2.5]);
        let b = LabelDistribution::from_log_weights(vec![997.0, 999.0, 997.5]);
        let c = LabelDistribution::from_log_weights(vec![-1e6 - 3.0, -1e6 - 1.0, -1e6 - 2.5]);
        for i in 0..3 {
            assert!((a.probs[i] - b.probs[i]).abs() < 1e-12);
            assert!((a.probs[i] - c.probs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn large_block_gap_between_integrated_and_ml() {
        // ML minus integrated is ln(N + 1) + ln(binomial pmf at its mode),
        // so it lies below ln(N + 1) and above it by at most the Stirling
        // width term.
        let integrated = BlockScorer::new(&PriorConfig::default(), Convention::directed(), 1, 0);
        let ml = BlockScorer::new(&PriorConfig::max_likelihood(), Convention::directed(), 1, 0);
        let slots = 10_000u64;
        let upper = ((slots + 1) as f64).ln();
        for e in [100u64, 2_500, 5_000, 9_000] {
            let gap = ml.block_term(e, slots) - integrated.block_term(e, slots);
            let frac = e as f64 / slots as f64;
            let width = 0.5 * (2.0 * std::f64::consts::PI * slots as f64 * frac * (1.0 - frac)).ln();
            assert!(gap <= upper, "gap {gap} above {upper}");
            assert!(gap >= upper - width - 0.01, "gap {gap} below {}", upper - width);
        }
    }
}

//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the library's scoring code: likelihoods come from a
//! direct loop over node pairs and posteriors from full enumeration.

#![allow(dead_code)]

use blockquery::{
    run_chains, sample_labelings, ChainConfig, Convention, Graph, Labeling, PartialLabeling, PriorConfig,
    ScoreMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Block counts gathered by looping over every ordered or unordered pair.
fn pair_counts(g: &Graph, labels: &[usize], k: usize) -> (Vec<u64>, Vec<u64>) {
    let n = g.n();
    let mut edges = vec![0u64; k * k];
    let mut slots = vec![0u64; k * k];
    for u in 0..n {
        for v in 0..n {
            if (u == v && !g.allows_self_loops()) || (!g.is_directed() && u > v) {
                continue;
            }
            let (a, b) = (labels[u], labels[v]);
            let (a, b) = if g.is_directed() { (a, b) } else { (a.min(b), a.max(b)) };
            slots[a * k + b] += 1;
            if g.has_edge(u, v) {
                edges[a * k + b] += 1;
            }
        }
    }
    (edges, slots)
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Log of the unnormalized posterior weight of a complete labeling.
pub fn oracle_log_score(g: &Graph, labels: &[usize], k: usize, prior: &PriorConfig) -> f64 {
    let (edges, slots) = pair_counts(g, labels, k);
    let (a, b) = (prior.alpha, prior.beta);
    edges
        .iter()
        .zip(&slots)
        .filter(|(_, &s)| s > 0)
        .map(|(&e, &s)| {
            let (e, s) = (e as f64, s as f64);
            match prior.mode {
                ScoreMode::Integrated => {
                    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + ln_gamma(e + a) + ln_gamma(s - e + b)
                        - ln_gamma(s + a + b)
                }
                ScoreMode::MaxLikelihood => xlnx(e) + xlnx(s - e) - xlnx(s),
            }
        })
        .sum()
}

/// Exact posterior over all labelings consistent with the explored nodes.
pub struct Posterior {
    pub n: usize,
    pub k: usize,
    pub labelings: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
}

impl Posterior {
    pub fn enumerate(g: &Graph, partial: &PartialLabeling, prior: &PriorConfig) -> Self {
        let (n, k) = (g.n(), partial.k());
        let total = k.pow(n as u32);
        let mut labelings = Vec::new();
        let mut logs = Vec::new();
        for code in 0..total {
            let mut c = code;
            let labels: Vec<usize> = (0..n)
                .map(|_| {
                    let l = c % k;
                    c /= k;
                    l
                })
                .collect();
            if (0..n).any(|v| partial.label_of(v).is_some_and(|l| l != labels[v])) {
                continue;
            }
            logs.push(oracle_log_score(g, &labels, k, prior));
            labelings.push(labels);
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        Self { n, k, labelings, probs: weights.into_iter().map(|w| w / z).collect() }
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.k]; self.n];
        for (x, p) in self.labelings.iter().zip(&self.probs) {
            for v in 0..self.n {
                m[v][x[v]] += p;
            }
        }
        m
    }

    fn index_of(&self, labels: &[usize]) -> Option<usize> {
        self.labelings.iter().position(|x| x == labels)
    }

    /// `H(x_v) - E[H(x_v | rest)]`.
    pub fn mutual_information(&self) -> Vec<f64> {
        let marg = self.marginals();
        (0..self.n)
            .map(|v| {
                let h: f64 = -marg[v].iter().map(|&p| xlnx(p)).sum::<f64>();
                let mut expected_cond = 0.0;
                for (x, p) in self.labelings.iter().zip(&self.probs) {
                    let mut weights = vec![0.0; self.k];
                    let mut y = x.clone();
                    for (c, w) in weights.iter_mut().enumerate() {
                        y[v] = c;
                        *w = self.index_of(&y).map_or(0.0, |i| self.probs[i]);
                    }
                    let z: f64 = weights.iter().sum();
                    expected_cond += p * -weights.iter().map(|w| xlnx(w / z)).sum::<f64>();
                }
                (h - expected_cond).max(0.0)
            })
            .collect()
    }

    /// Expected number of agreeing nodes between two independent posterior
    /// draws, conditioned on their agreeing at `v`.
    pub fn average_agreement(&self) -> Vec<f64> {
        let mut num = vec![0.0; self.n];
        let mut den = vec![0.0; self.n];
        for (x, px) in self.labelings.iter().zip(&self.probs) {
            for (y, py) in self.labelings.iter().zip(&self.probs) {
                let w = px * py;
                let agree = x.iter().zip(y).filter(|(a, b)| a == b).count() as f64;
                for v in 0..self.n {
                    if x[v] == y[v] {
                        num[v] += w * agree;
                        den[v] += w;
                    }
                }
            }
        }
        num.iter().zip(&den).map(|(a, b)| a / b).collect()
    }
}

/// Random small instance: graph, explored set and prior.
pub struct Instance {
    pub graph: Graph,
    pub partial: PartialLabeling,
    pub prior: PriorConfig,
    pub description: String,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let k = if rng.random_bool(0.1) { 1 } else { rng.random_range(2..=3) };
    let convention = match rng.random_range(0..4) {
        0 => Convention::directed(),
        1 => Convention::new(true, Some(false)),
        2 => Convention::new(false, Some(true)),
        _ => Convention::undirected(),
    };
    let density = rng.random_range(0.2..0.7);
    let mut b = Graph::builder(n, convention);
    for u in 0..n {
        for v in 0..n {
            if (u == v && !convention.allow_self_loops) || (!convention.directed && u > v) {
                continue;
            }
            if rng.random_bool(density) {
                b.add_edge(u, v).unwrap();
            }
        }
    }
    let graph = b.build();
    let explored = rng.random_range(0..=(n - 1).min(2));
    let mut partial = PartialLabeling::new(n, k);
    for _ in 0..explored {
        let free = partial.unexplored();
        let v = free[rng.random_range(0..free.len())];
        partial.reveal(v, rng.random_range(0..k)).unwrap();
    }
    let prior = match rng.random_range(0..4) {
        0 => PriorConfig::max_likelihood(),
        1 => PriorConfig { alpha: 0.5, beta: 2.0, ..PriorConfig::default() },
        _ => PriorConfig::default(),
    };
    let description = format!(
        "seed {seed}: n={n} k={k} directed={} self_loops={} edges={} explored={explored} mode={:?} a={} b={}",
        convention.directed,
        convention.allow_self_loops,
        graph.num_edges(),
        prior.mode,
        prior.alpha,
        prior.beta
    );
    Instance { graph, partial, prior, description }
}

/// Tolerances for comparing the sampler against enumeration.
pub const TV_TOLERANCE: f64 = 0.02;
pub const MI_TOLERANCE: f64 = 0.05;
pub const AA_TOLERANCE: f64 = 0.2;
pub const CHI2_ALPHA: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub description: String,
    pub max_tv: f64,
    pub max_mi_error: f64,
    pub max_aa_error: f64,
    pub chi2_p_value: f64,
}

impl OracleReport {
    pub fn passes(&self) -> bool {
        self.max_tv <= TV_TOLERANCE
            && self.max_mi_error <= MI_TOLERANCE
            && self.max_aa_error <= AA_TOLERANCE
    }
}

/// Family-wise chi-squared verdict at [`CHI2_ALPHA`] over independent
/// instances: Bonferroni on the smallest p-value, and Fisher's combined
/// statistic for small shared biases. Returns (bonferroni ok, fisher p).
pub fn chi_squared_family(p_values: &[f64]) -> (bool, f64) {
    let m = p_values.len() as f64;
    let bonferroni = p_values.iter().all(|&p| p >= CHI2_ALPHA / m);
    let stat: f64 = p_values.iter().map(|&p| -2.0 * p.max(1e-300).ln()).sum();
    let fisher = 1.0 - ChiSquared::new(2.0 * m).unwrap().cdf(stat);
    (bonferroni, fisher)
}

/// Pearson chi-squared p-value of observed counts against expected
/// probabilities, pooling the smallest cells until each holds at least
/// five expected draws.
pub fn chi_squared_p_value(observed: &[u64], probs: &[f64]) -> f64 {
    let m: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = probs.iter().zip(observed).map(|(&p, &o)| (p * m as f64, o as f64)).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (e, o) in cells {
        acc = (acc.0 + e, acc.1 + o);
        if acc.0 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 {
        match pooled.last_mut() {
            Some(last) => *last = (last.0 + acc.0, last.1 + acc.1),
            None => pooled.push(acc),
        }
    }
    if pooled.len() < 2 {
        return 1.0;
    }
    let stat: f64 = pooled.iter().map(|(e, o)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new((pooled.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Runs the sampler on one instance and compares it with enumeration.
pub fn check_instance(seed: u64) -> OracleReport {
    let inst = random_instance(seed);
    let (g, partial, prior) = (&inst.graph, &inst.partial, &inst.prior);
    let exact = Posterior::enumerate(g, partial, prior);

    let config = ChainConfig::schedule(8, 200_000, 20_000).with_seed(seed).with_pairs(true);
    let sampled = run_chains(g, partial, prior, &config).unwrap();
    let marg = exact.marginals();
    let mut max_tv: f64 = 0.0;
    for (v, row) in marg.iter().enumerate() {
        let est = sampled.marginals.mean_conditional(v);
        let tv = 0.5 * row.iter().zip(&est).map(|(a, b)| (a - b).abs()).sum::<f64>();
        max_tv = max_tv.max(tv);
    }

    let mi = blockquery::mutual_information_scores(&sampled.marginals);
    let aa = blockquery::average_agreement_scores(&sampled.pairs, partial);
    let exact_mi = exact.mutual_information();
    let exact_aa = exact.average_agreement();
    let mut max_mi_error: f64 = 0.0;
    let mut max_aa_error: f64 = 0.0;
    for v in partial.unexplored() {
        max_mi_error = max_mi_error.max((mi.scores[v].unwrap() - exact_mi[v]).abs());
        max_aa_error = max_aa_error.max((aa.scores[v].unwrap() - exact_aa[v]).abs());
    }

    let draws = 4_000;
    let thin = ChainConfig::schedule(200, 20_000, 2_000).with_seed(seed ^ 0xC41);
    let samples: Vec<Labeling> = sample_labelings(g, partial, prior, &thin, draws).unwrap();
    let mut observed = vec![0u64; exact.labelings.len()];
    for s in &samples {
        let i = exact.index_of(s.as_slice()).expect("sample consistent with explored nodes");
        observed[i] += 1;
    }
    let chi2_p_value = chi_squared_p_value(&observed, &exact.probs);

    OracleReport { description: inst.description, max_tv, max_mi_error, max_aa_error, chi2_p_value }
}

/// Seeds of the fixed oracle instance family.
pub const ORACLE_SEEDS: std::ops::Range<u64> = 0..24;

/// `ln` of a big integer, accurate to double precision.
pub fn ln_big(x: &num_bigint::BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        let f: f64 = x.to_string().parse().unwrap();
        return f.ln();
    }
    let shift = bits - 64;
    let top: u64 = (x >> shift).try_into().unwrap();
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

fn binomial(n: u64, r: u64) -> num_bigint::BigUint {
    let mut acc = num_bigint::BigUint::from(1u32);
    for i in 0..r {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `sum over blocks of -ln((N + 1) C(N, e))` via exact integer arithmetic.
pub fn uniform_prior_closed_form(g: &Graph, labels: &[usize], k: usize) -> f64 {
    let (edges, slots) = pair_counts(g, labels, k);
    let mut product = num_bigint::BigUint::from(1u32);
    for (&e, &s) in edges.iter().zip(&slots) {
        if s > 0 {
            product *= binomial(s, e) * (s + 1);
        }
    }
    -ln_big(&product)
}

/// Largest relative error of the library's integrated likelihood against
/// the closed form over `cases` random graphs.
pub fn closed_form_max_relative_error(cases: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB16 + seed);
        let n = rng.random_range(1..=40);
        let k = rng.random_range(1..=4);
        let convention = [Convention::directed(), Convention::undirected(), Convention::new(true, Some(false)), Convention::new(false, Some(true))]
            [rng.random_range(0..4)];
        let density = rng.random_range(0.0..1.0);
        let mut b = Graph::builder(n, convention);
        for u in 0..n {
            for v in 0..n {
                if (u == v && !convention.allow_self_loops) || (!convention.directed && u > v) {
                    continue;
                }
                if rng.random_bool(density) {
                    b.add_edge(u, v).unwrap();
                }
            }
        }
        let g = b.build();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let stats = blockquery::BlockStats::compute(&g, &Labeling::new(labels.clone(), k).unwrap()).unwrap();
        let got = blockquery::integrated_log_likelihood(&stats, &PriorConfig::default());
        let exact = uniform_prior_closed_form(&g, &labels, k);
        let err = if exact == 0.0 { got.abs() } else { ((got - exact) / exact).abs() };
        worst = worst.max(err);
    }
    worst
}

/// Betweenness by enumerating every shortest simple path with iterative
/// deepening. Undirected graphs count each unordered pair once.
pub fn enumerated_betweenness(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let mut bet = vec![0.0; n];
    fn walk(g: &Graph, at: usize, target: usize, left: usize, path: &mut Vec<usize>, found: &mut Vec<Vec<usize>>) {
        if at == target {
            found.push(path.clone());
            return;
        }
        if left == 0 {
            return;
        }
        for &next in g.out_neighbors(at) {
            if !path.contains(&next) {
                path.push(next);
                walk(g, next, target, left - 1, path, found);
                path.pop();
            }
        }
    }
    for s in 0..n {
        for t in 0..n {
            if s == t || (!g.is_directed() && t < s) {
                continue;
            }
            for depth in 1..n {
                let mut found = Vec::new();
                walk(g, s, t, depth, &mut vec![s], &mut found);
                if found.is_empty() {
                    continue;
                }
                let total = found.len() as f64;
                for path in &found {
                    for &v in &path[1..path.len() - 1] {
                        bet[v] += 1.0 / total;
                    }
                }
                break;
            }
        }
    }
    bet
}

pub fn random_graph(seed: u64, max_n: usize) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let convention = if rng.random_bool(0.5) { Convention::directed() } else { Convention::undirected() };
    let density = rng.random_range(0.1..0.6);
    let mut b = Graph::builder(n, convention);
    for u in 0..n {
        for v in 0..n {
            if (u == v && !convention.allow_self_loops) || (!convention.directed && u > v) {
                continue;
            }
            if rng.random_bool(density) {
                b.add_edge(u, v).unwrap();
            }
        }
    }
    b.build()
}

/// Largest absolute betweenness difference over `instances` random graphs
/// with at most ten nodes.
pub fn betweenness_max_error(instances: u64) -> f64 {
    (0..instances)
        .map(|seed| {
            let g = random_graph(0xBE7 + seed, 10);
            let fast = blockquery::betweenness(&g);
            let slow = enumerated_betweenness(&g);
            fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

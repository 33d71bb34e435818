//! Single-site heat-bath sampling of labelings conditioned on the explored
//! nodes.
//!
//! Every chain owns its labeling and block statistics and is seeded from
//! `(seed, chain id)`, so results do not depend on how chains are spread
//! over worker threads. At each step a chain picks an unexplored node
//! uniformly, computes that node's conditional label distribution, draws
//! a new label from it and, after burn-in, adds the whole conditional to
//! the node's running averages.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Labeling, PartialLabeling};
use crate::model::{normalize_log_weights, xlnx, BlockScorer, PriorConfig};
use crate::stats::{BlockStats, NeighborLabels};

/// What one unit of `steps_per_chain` means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepUnit {
    /// One single-site update.
    #[default]
    SiteUpdate,
    /// One update per unexplored node.
    Sweep,
}

/// How labeling pairs are formed for the agreement statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMatching {
    /// Chains run in pairs; the two states at each post-burn-in step form a pair.
    #[default]
    IndexMatched,
    /// Every cross-chain pair of thinned snapshots taken at the same index.
    Pooled { snapshots_per_chain: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainConfig {
    pub num_chains: usize,
    pub steps_per_chain: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Collect pair statistics for average agreement.
    pub paired: bool,
    #[serde(default)]
    pub step_unit: StepUnit,
    #[serde(default)]
    pub pair_matching: PairMatching,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::karate_schedule()
    }
}

impl ChainConfig {
    /// 100 chains of 2e4 steps, averaging over the last 1e4.
    pub fn karate_schedule() -> Self {
        Self::schedule(100, 20_000, 10_000)
    }

    /// 100 chains of 5e4 steps, averaging over the last 2.5e4.
    pub fn large_network_schedule() -> Self {
        Self::schedule(100, 50_000, 25_000)
    }

    pub fn schedule(num_chains: usize, steps_per_chain: u64, burn_in: u64) -> Self {
        Self {
            num_chains,
            steps_per_chain,
            burn_in,
            seed: 0,
            paired: false,
            step_unit: StepUnit::SiteUpdate,
            pair_matching: PairMatching::IndexMatched,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_pairs(self, paired: bool) -> Self {
        Self { paired, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_chains == 0 {
            return Err(Error::InvalidChainConfig("at least one chain is required".into()));
        }
        if self.burn_in >= self.steps_per_chain {
            return Err(Error::InvalidChainConfig(format!(
                "burn-in ({}) must be shorter than the chain ({} steps)",
                self.burn_in, self.steps_per_chain
            )));
        }
        if self.paired && self.pair_matching == PairMatching::IndexMatched && self.num_chains % 2 != 0 {
            return Err(Error::InvalidChainConfig(format!(
                "paired sampling needs an even number of chains, got {}",
                self.num_chains
            )));
        }
        if let PairMatching::Pooled { snapshots_per_chain } = self.pair_matching {
            if self.paired && (snapshots_per_chain == 0 || self.num_chains < 2) {
                return Err(Error::InvalidChainConfig(
                    "pooled pairing needs two or more chains and at least one snapshot per chain".into(),
                ));
            }
        }
        Ok(())
    }

    fn site_updates(&self, free: usize) -> (u64, u64) {
        match self.step_unit {
            StepUnit::SiteUpdate => (self.steps_per_chain, self.burn_in),
            StepUnit::Sweep => (self.steps_per_chain * free as u64, self.burn_in * free as u64),
        }
    }
}

/// Running averages of the heat-bath conditionals at each node.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalAccumulator {
    n: usize,
    k: usize,
    sums: Vec<f64>,
    neg_entropy_sums: Vec<f64>,
    visits: Vec<u64>,
    explored: Vec<Option<usize>>,
}

impl MarginalAccumulator {
    pub fn new(partial: &PartialLabeling) -> Self {
        let (n, k) = (partial.n(), partial.k());
        Self {
            n,
            k,
            sums: vec![0.0; n * k],
            neg_entropy_sums: vec![0.0; n],
            visits: vec![0; n],
            explored: (0..n).map(|v| partial.label_of(v)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn record(&mut self, v: usize, probs: &[f64]) {
        let row = &mut self.sums[v * self.k..(v + 1) * self.k];
        let mut neg_entropy = 0.0;
        for (acc, &p) in row.iter_mut().zip(probs) {
            *acc += p;
            neg_entropy += xlnx(p);
        }
        self.neg_entropy_sums[v] += neg_entropy;
        self.visits[v] += 1;
    }

    fn merge(&mut self, other: &Self) {
        self.sums.iter_mut().zip(&other.sums).for_each(|(a, b)| *a += b);
        self.neg_entropy_sums.iter_mut().zip(&other.neg_entropy_sums).for_each(|(a, b)| *a += b);
        self.visits.iter_mut().zip(&other.visits).for_each(|(a, b)| *a += b);
    }

    pub fn is_explored(&self, v: usize) -> bool {
        self.explored[v].is_some()
    }

    pub fn explored_label(&self, v: usize) -> Option<usize> {
        self.explored[v]
    }

    /// Accumulated updates at `v`; zero for explored nodes.
    pub fn visits(&self, v: usize) -> u64 {
        self.visits[v]
    }

    /// Averaged conditional distribution at `v`. Explored nodes are point
    /// masses; unvisited nodes are uniform.
    pub fn mean_conditional(&self, v: usize) -> Vec<f64> {
        if let Some(label) = self.explored[v] {
            let mut row = vec![0.0; self.k];
            row[label] = 1.0;
            return row;
        }
        let visits = self.visits[v];
        if visits == 0 {
            return vec![1.0 / self.k as f64; self.k];
        }
        self.sums[v * self.k..(v + 1) * self.k].iter().map(|s| s / visits as f64).collect()
    }

    /// Average of `sum_i P_i ln P_i` over the conditionals seen at `v`.
    pub fn mean_neg_entropy(&self, v: usize) -> f64 {
        if self.explored[v].is_some() {
            return 0.0;
        }
        match self.visits[v] {
            0 => -(self.k as f64).ln(),
            visits => self.neg_entropy_sums[v] / visits as f64,
        }
    }

    /// `n x k` matrix of averaged conditionals.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|v| self.mean_conditional(v)).collect()
    }
}

/// Agreement statistics over pairs of sampled labelings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePairStats {
    /// Pairs agreeing at each node.
    pub agree_counts: Vec<u64>,
    /// Sum of the pairs' total agreement over the pairs agreeing at each node.
    pub agreement_sums: Vec<u64>,
    pub pairs_drawn: u64,
}

impl SamplePairStats {
    pub fn new(n: usize) -> Self {
        Self { agree_counts: vec![0; n], agreement_sums: vec![0; n], pairs_drawn: 0 }
    }

    pub fn n(&self) -> usize {
        self.agree_counts.len()
    }

    /// Records one pair of labelings.
    pub fn record_pair(&mut self, a: &[usize], b: &[usize]) {
        let agreement = a.iter().zip(b).filter(|(x, y)| x == y).count() as u64;
        for v in 0..a.len() {
            if a[v] == b[v] {
                self.agree_counts[v] += 1;
                self.agreement_sums[v] += agreement;
            }
        }
        self.pairs_drawn += 1;
    }

    fn merge(&mut self, other: &Self) {
        self.agree_counts.iter_mut().zip(&other.agree_counts).for_each(|(a, b)| *a += b);
        self.agreement_sums.iter_mut().zip(&other.agreement_sums).for_each(|(a, b)| *a += b);
        self.pairs_drawn += other.pairs_drawn;
    }
}

/// Everything one round of sampling produces.
#[derive(Clone, Debug)]
pub struct SamplingResult {
    pub marginals: MarginalAccumulator,
    pub pairs: SamplePairStats,
    /// Thinned post-burn-in labelings, chain-major.
    pub snapshots: Vec<Labeling>,
}

/// Shared read-only state of one sampling round.
struct Setup<'a> {
    graph: &'a Graph,
    partial: &'a PartialLabeling,
    scorer: BlockScorer,
    free: Vec<usize>,
    total_updates: u64,
    burn_in: u64,
    seed: u64,
}

struct Chain<'a> {
    setup: &'a Setup<'a>,
    labels: Vec<usize>,
    stats: BlockStats,
    nb: NeighborLabels,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Chain<'a> {
    fn start(setup: &'a Setup<'a>, chain_id: u64) -> Self {
        let k = setup.partial.k();
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        rng.set_stream(chain_id);
        let labels: Vec<usize> = (0..setup.graph.n())
            .map(|v| setup.partial.label_of(v).unwrap_or_else(|| rng.random_range(0..k)))
            .collect();
        let labeling = Labeling::new(labels, k).expect("labels drawn in range");
        let stats = BlockStats::compute(setup.graph, &labeling).expect("labeling sized to the graph");
        Self {
            setup,
            labels: labeling.as_slice().to_vec(),
            stats,
            nb: NeighborLabels::new(k),
            weights: vec![0.0; k],
            rng,
        }
    }

    /// One heat-bath update; returns the node and its conditional.
    #[inline]
    fn step(&mut self) -> (usize, &[f64]) {
        let free = &self.setup.free;
        let v = free[self.rng.random_range(0..free.len())];
        let old = self.labels[v];
        self.nb.fill(self.setup.graph, &self.labels, v);
        self.stats.remove_node(old, &self.nb);
        self.setup.scorer.candidate_log_weights(&self.stats, &self.nb, &mut self.weights);
        normalize_log_weights(&mut self.weights);
        let u: f64 = self.rng.random();
        let mut cumulative = 0.0;
        let mut new = self.weights.len() - 1;
        for (i, &p) in self.weights.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                new = i;
                break;
            }
        }
        self.stats.insert_node(new, &self.nb);
        self.labels[v] = new;
        (v, &self.weights)
    }
}

/// Post-burn-in step indices at which to keep a snapshot.
fn snapshot_steps(burn_in: u64, total: u64, count: usize) -> Vec<u64> {
    let post = total - burn_in;
    (0..count as u64).map(|i| burn_in + ((i + 1) * post) / count as u64 - 1).collect()
}

struct TaskOutput {
    marginals: MarginalAccumulator,
    pairs: SamplePairStats,
    snapshots: Vec<Vec<Vec<usize>>>,
}

fn run_single(setup: &Setup<'_>, chain_id: u64, snapshots: usize) -> TaskOutput {
    let mut chain = Chain::start(setup, chain_id);
    let mut acc = MarginalAccumulator::new(setup.partial);
    let keep = snapshot_steps(setup.burn_in, setup.total_updates, snapshots);
    let mut kept = Vec::with_capacity(snapshots);
    let mut next_keep = keep.iter().peekable();
    for t in 0..setup.total_updates {
        let (v, probs) = chain.step();
        if t >= setup.burn_in {
            acc.record(v, probs);
        }
        while next_keep.peek() == Some(&&t) {
            kept.push(chain.labels.clone());
            next_keep.next();
        }
    }
    TaskOutput { marginals: acc, pairs: SamplePairStats::new(setup.graph.n()), snapshots: vec![kept] }
}

/// Tracks per-node agreement between two lock-stepped chains without an
/// O(n) scan per step. Each node remembers the running totals at the time
/// it last started agreeing; its contribution is settled when it stops.
struct PairTracker {
    agreeing: Vec<bool>,
    since_samples: Vec<u64>,
    since_sum: Vec<u64>,
    agreement: u64,
    samples: u64,
    running_sum: u64,
    stats: SamplePairStats,
}

impl PairTracker {
    fn new(a: &[usize], b: &[usize]) -> Self {
        let agreeing: Vec<bool> = a.iter().zip(b).map(|(x, y)| x == y).collect();
        let agreement = agreeing.iter().filter(|&&x| x).count() as u64;
        let n = a.len();
        Self {
            agreeing,
            since_samples: vec![0; n],
            since_sum: vec![0; n],
            agreement,
            samples: 0,
            running_sum: 0,
            stats: SamplePairStats::new(n),
        }
    }

    fn settle(&mut self, v: usize) {
        self.stats.agree_counts[v] += self.samples - self.since_samples[v];
        self.stats.agreement_sums[v] += self.running_sum - self.since_sum[v];
    }

    fn update(&mut self, v: usize, now_agree: bool) {
        if now_agree == self.agreeing[v] {
            return;
        }
        if now_agree {
            self.since_samples[v] = self.samples;
            self.since_sum[v] = self.running_sum;
            self.agreement += 1;
        } else {
            self.settle(v);
            self.agreement -= 1;
        }
        self.agreeing[v] = now_agree;
    }

    fn record_sample(&mut self) {
        self.samples += 1;
        self.running_sum += self.agreement;
    }

    fn finish(mut self) -> SamplePairStats {
        for v in 0..self.agreeing.len() {
            if self.agreeing[v] {
                self.settle(v);
            }
        }
        self.stats.pairs_drawn = self.samples;
        self.stats
    }
}

fn run_pair(setup: &Setup<'_>, pair_id: u64, snapshots: usize) -> TaskOutput {
    let mut first = Chain::start(setup, 2 * pair_id);
    let mut second = Chain::start(setup, 2 * pair_id + 1);
    let mut acc = MarginalAccumulator::new(setup.partial);
    let mut tracker: Option<PairTracker> = None;
    let keep = snapshot_steps(setup.burn_in, setup.total_updates, snapshots);
    let mut kept = (Vec::with_capacity(snapshots), Vec::with_capacity(snapshots));
    let mut next_keep = keep.iter().peekable();
    for t in 0..setup.total_updates {
        let post = t >= setup.burn_in;
        let (v1, probs) = first.step();
        if post {
            acc.record(v1, probs);
        }
        let (v2, probs) = second.step();
        if post {
            acc.record(v2, probs);
            let tracker = tracker.get_or_insert_with(|| PairTracker::new(&first.labels, &second.labels));
            for v in [v1, v2] {
                tracker.update(v, first.labels[v] == second.labels[v]);
            }
            tracker.record_sample();
        }
        while next_keep.peek() == Some(&&t) {
            kept.0.push(first.labels.clone());
            kept.1.push(second.labels.clone());
            next_keep.next();
        }
    }
    let pairs = tracker.map(PairTracker::finish).unwrap_or_else(|| SamplePairStats::new(setup.graph.n()));
    TaskOutput { marginals: acc, pairs, snapshots: vec![kept.0, kept.1] }
}

fn trivial_result(graph: &Graph, partial: &PartialLabeling, snapshots: usize) -> SamplingResult {
    let known: Vec<usize> = (0..graph.n()).map(|v| partial.label_of(v).unwrap_or(0)).collect();
    let labeling = Labeling::new(known, partial.k()).expect("explored labels are in range");
    SamplingResult {
        marginals: MarginalAccumulator::new(partial),
        pairs: SamplePairStats::new(graph.n()),
        snapshots: vec![labeling; snapshots],
    }
}

/// Runs the configured chains and merges their statistics in chain order.
pub fn run_chains(
    graph: &Graph,
    partial: &PartialLabeling,
    prior: &PriorConfig,
    config: &ChainConfig,
) -> Result<SamplingResult> {
    run_chains_with_progress(graph, partial, prior, config, 0, None)
}

/// [`run_chains`] that also keeps `snapshots_per_chain` thinned labelings
/// from every chain and bumps `progress` as chains finish.
pub fn run_chains_with_progress(
    graph: &Graph,
    partial: &PartialLabeling,
    prior: &PriorConfig,
    config: &ChainConfig,
    snapshots_per_chain: usize,
    progress: Option<&AtomicUsize>,
) -> Result<SamplingResult> {
    config.validate()?;
    prior.validate()?;
    if partial.n() != graph.n() {
        return Err(Error::LengthMismatch { expected: graph.n(), got: partial.n() });
    }
    let free = partial.unexplored();
    if free.is_empty() {
        if let Some(p) = progress {
            p.fetch_add(config.num_chains, Ordering::Relaxed);
        }
        return Ok(trivial_result(graph, partial, snapshots_per_chain * config.num_chains));
    }
    let (total_updates, burn_in) = config.site_updates(free.len());
    let setup = Setup {
        graph,
        partial,
        scorer: BlockScorer::new(prior, graph.convention(), partial.k(), graph.n()),
        free,
        total_updates,
        burn_in,
        seed: config.seed,
    };

    let pooled = match config.pair_matching {
        PairMatching::Pooled { snapshots_per_chain } if config.paired => Some(snapshots_per_chain),
        _ => None,
    };
    let in_pairs = config.paired && pooled.is_none();
    let per_chain_snapshots = snapshots_per_chain.max(pooled.unwrap_or(0));

    let tasks = if in_pairs { config.num_chains / 2 } else { config.num_chains };
    let outputs: Vec<TaskOutput> = (0..tasks as u64)
        .into_par_iter()
        .map(|task| {
            let out = if in_pairs {
                run_pair(&setup, task, per_chain_snapshots)
            } else {
                run_single(&setup, task, per_chain_snapshots)
            };
            if let Some(p) = progress {
                p.fetch_add(if in_pairs { 2 } else { 1 }, Ordering::Relaxed);
            }
            out
        })
        .collect();

    let mut marginals = MarginalAccumulator::new(partial);
    let mut pairs = SamplePairStats::new(graph.n());
    let mut chain_snapshots: Vec<Vec<Vec<usize>>> = Vec::with_capacity(config.num_chains);
    for out in &outputs {
        marginals.merge(&out.marginals);
        pairs.merge(&out.pairs);
    }
    for out in outputs {
        chain_snapshots.extend(out.snapshots);
    }

    if let Some(count) = pooled {
        for s in 0..count {
            for c1 in 0..chain_snapshots.len() {
                for c2 in c1 + 1..chain_snapshots.len() {
                    pairs.record_pair(&chain_snapshots[c1][s], &chain_snapshots[c2][s]);
                }
            }
        }
    }

    let k = partial.k();
    let snapshots = chain_snapshots
        .into_iter()
        .flat_map(|chain| chain.into_iter().take(snapshots_per_chain))
        .map(|labels| Labeling::new(labels, k).expect("sampled labels are in range"))
        .collect();
    Ok(SamplingResult { marginals, pairs, snapshots })
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a salt into an unrelated seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    derived_seed(seed, salt.wrapping_add(1))
}

/// Reruns the schedule at its length and at twice its length with fresh
/// seeds and reports the largest change in any averaged conditional.
pub fn equilibrium_check(
    graph: &Graph,
    partial: &PartialLabeling,
    prior: &PriorConfig,
    config: &ChainConfig,
) -> Result<f64> {
    let short = ChainConfig { seed: mix_seed(config.seed, 0xE0), paired: false, ..*config };
    let long = ChainConfig {
        seed: mix_seed(config.seed, 0xE1),
        steps_per_chain: config.steps_per_chain * 2,
        burn_in: config.burn_in * 2,
        paired: false,
        ..*config
    };
    let a = run_chains(graph, partial, prior, &short)?.marginals;
    let b = run_chains(graph, partial, prior, &long)?.marginals;
    let mut worst: f64 = 0.0;
    for v in 0..graph.n() {
        for (x, y) in a.mean_conditional(v).iter().zip(b.mean_conditional(v)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// `m` post-burn-in labelings spread evenly over the chains and over each
/// chain's post-burn-in window.
pub fn sample_labelings(
    graph: &Graph,
    partial: &PartialLabeling,
    prior: &PriorConfig,
    config: &ChainConfig,
    m: usize,
) -> Result<Vec<Labeling>> {
    config.validate()?;
    if m == 0 {
        return Ok(Vec::new());
    }
    let free = partial.unexplored().len().max(1);
    let (total, burn) = config.site_updates(free);
    let capacity = (total - burn).saturating_mul(config.num_chains as u64);
    if m as u64 > capacity {
        return Err(Error::InvalidChainConfig(format!(
            "requested {m} samples but the schedule only has {capacity} post-burn-in states"
        )));
    }
    let per_chain = m.div_ceil(config.num_chains);
    let unpaired = ChainConfig { paired: false, ..*config };
    let result = run_chains_with_progress(graph, partial, prior, &unpaired, per_chain, None)?;
    // Chain c contributes its first m / C (+1 for the first m % C chains).
    let base = m / config.num_chains;
    let extra = m % config.num_chains;
    let mut out = Vec::with_capacity(m);
    for (c, chain) in result.snapshots.chunks(per_chain).enumerate() {
        let take = base + usize::from(c < extra);
        let stride = per_chain as f64 / take.max(1) as f64;
        out.extend((0..take).map(|i| chain[((i as f64 + 1.0) * stride).ceil() as usize - 1].clone()));
    }
    Ok(out)
}

//! The active-learning loop and the analyses built on it.
//!
//! A campaign alternates between sampling the posterior conditioned on the
//! explored nodes, scoring the unexplored ones, and asking an oracle for the
//! label of the chosen node. Each stage is a pure function of the graph,
//! the explored set, the configuration and the stage index, so a campaign
//! can be paused, persisted and resumed without changing its trajectory.

use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gibbs::{mix_seed, run_chains_with_progress, ChainConfig, MarginalAccumulator};
use crate::graph::{Convention, Graph, Labeling, PartialLabeling};
use crate::model::{conditional_label_distribution, EdgeProbMatrix, PriorConfig};
use crate::stats::BlockStats;
use crate::strategy::{
    average_agreement_scores, betweenness_scores, degree_scores, mutual_information_scores, random_scores,
    select_next, DegreeKind, ScoreVector, Strategy,
};

/// Thresholds of the accuracy curves.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Source of true labels.
pub trait Oracle {
    fn reveal(&mut self, node: usize) -> Result<usize>;

    /// Ground truth for scoring accuracy, when the oracle has one.
    fn truth(&self) -> Option<&Labeling> {
        None
    }
}

/// Oracle backed by a curated ground-truth labeling.
#[derive(Clone, Debug)]
pub struct CuratedOracle {
    truth: Labeling,
}

impl CuratedOracle {
    pub fn new(truth: Labeling) -> Self {
        Self { truth }
    }
}

impl Oracle for CuratedOracle {
    fn reveal(&mut self, node: usize) -> Result<usize> {
        if node >= self.truth.len() {
            return Err(Error::NodeOutOfRange { node, n: self.truth.len() });
        }
        Ok(self.truth.get(node))
    }

    fn truth(&self) -> Option<&Labeling> {
        Some(&self.truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub k: usize,
    pub strategy: Strategy,
    pub prior: PriorConfig,
    /// Chain schedule; its `seed` and `paired` fields are set per stage.
    pub chains: ChainConfig,
    pub seed: u64,
    #[serde(default)]
    pub degree_kind: DegreeKind,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

impl CampaignConfig {
    pub fn new(k: usize, strategy: Strategy, chains: ChainConfig, seed: u64) -> Self {
        Self {
            k,
            strategy,
            prior: PriorConfig::default(),
            chains,
            seed,
            degree_kind: DegreeKind::Total,
            thresholds: default_thresholds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        self.prior.validate()?;
        self.chains.with_pairs(self.strategy.needs_pairs()).validate()?;
        if let Some(q) = self.thresholds.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::Invalid(format!("threshold {q} outside (0, 1)")));
        }
        Ok(())
    }

    fn stage_chains(&self, strategy: Strategy, stage: usize) -> ChainConfig {
        ChainConfig {
            seed: mix_seed(self.seed, 2 * stage as u64),
            paired: strategy.needs_pairs(),
            ..self.chains
        }
    }

    fn selection_rng(&self, stage: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 2 * stage as u64 + 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub q: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub strategy: Strategy,
    pub queried_node: Option<usize>,
    pub revealed_label: Option<usize>,
    /// The label was supplied for a node other than the suggested one.
    #[serde(default)]
    pub unsolicited: bool,
    pub suggested_node: Option<usize>,
    pub scores: ScoreVector,
    pub marginals: Vec<Vec<f64>>,
    /// Empty when no ground truth is available.
    pub accuracy: Vec<AccuracyPoint>,
}

impl StageRecord {
    pub fn accuracy_at(&self, q: f64) -> Option<f64> {
        self.accuracy.iter().find(|p| (p.q - q).abs() < 1e-12).map(|p| p.accuracy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyChange {
    pub stage: usize,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignTrajectory {
    pub strategy: Strategy,
    pub seed: u64,
    pub fingerprint: String,
    pub config: CampaignConfig,
    #[serde(default)]
    pub strategy_changes: Vec<StrategyChange>,
    pub stages: Vec<StageRecord>,
}

impl CampaignTrajectory {
    fn new(config: CampaignConfig) -> Self {
        let mut t = Self {
            strategy: config.strategy,
            seed: config.seed,
            fingerprint: String::new(),
            config,
            strategy_changes: Vec::new(),
            stages: Vec::new(),
        };
        t.fingerprint = t.compute_fingerprint();
        t
    }

    /// SHA-256 over the configuration and any strategy changes.
    pub fn compute_fingerprint(&self) -> String {
        let payload = serde_json::to_vec(&(&self.config, &self.strategy_changes)).expect("config serializes");
        let digest = Sha256::digest(&payload);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Explored nodes in query order.
    pub fn explored(&self) -> Vec<(usize, usize)> {
        self.stages.iter().filter_map(|r| Some((r.queried_node?, r.revealed_label?))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Result of sampling and scoring one stage, before its query is answered.
#[derive(Clone, Debug)]
pub struct StageSnapshot {
    pub stage: usize,
    pub strategy: Strategy,
    pub scores: ScoreVector,
    pub marginals: Vec<Vec<f64>>,
    pub accuracy: Vec<AccuracyPoint>,
    pub suggested: Option<usize>,
}

/// Samples and scores the stage defined by `partial`.
pub fn evaluate_stage(
    graph: &Graph,
    partial: &PartialLabeling,
    config: &CampaignConfig,
    strategy: Strategy,
    truth: Option<&Labeling>,
    progress: Option<&AtomicUsize>,
) -> Result<StageSnapshot> {
    let stage = partial.stage();
    let chains = config.stage_chains(strategy, stage);
    let sampled = run_chains_with_progress(graph, partial, &config.prior, &chains, 0, progress)?;
    let scores = match strategy {
        Strategy::Mi => mutual_information_scores(&sampled.marginals),
        Strategy::Aa => average_agreement_scores(&sampled.pairs, partial),
        Strategy::Degree => degree_scores(graph, partial, config.degree_kind),
        Strategy::Betweenness => betweenness_scores(graph, partial),
        Strategy::Random => random_scores(partial),
    };
    let marginals = sampled.marginals.marginals();
    let accuracy = match truth {
        Some(truth) => config
            .thresholds
            .iter()
            .map(|&q| Ok(AccuracyPoint { q, accuracy: accuracy_at_threshold(&marginals, truth, partial, q)? }))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    let suggested = match select_next(&scores, &mut config.selection_rng(stage)) {
        Ok(v) => Some(v),
        Err(Error::EmptyFrontier) => None,
        Err(e) => return Err(e),
    };
    Ok(StageSnapshot { stage, strategy, scores, marginals, accuracy, suggested })
}

/// Campaign state machine. Curated runs and interactive sessions both
/// drive it through [`Campaign::evaluate`] and [`Campaign::commit`].
#[derive(Clone, Debug)]
pub struct Campaign {
    graph: Arc<Graph>,
    truth: Option<Labeling>,
    partial: PartialLabeling,
    trajectory: CampaignTrajectory,
}

impl Campaign {
    pub fn new(graph: Arc<Graph>, config: CampaignConfig, truth: Option<Labeling>) -> Result<Self> {
        config.validate()?;
        if let Some(t) = &truth {
            t.check_len(graph.n())?;
            if t.k() != config.k {
                return Err(Error::Invalid(format!("truth has k = {} but the campaign uses k = {}", t.k(), config.k)));
            }
        }
        let partial = PartialLabeling::new(graph.n(), config.k);
        Ok(Self { graph, truth, partial, trajectory: CampaignTrajectory::new(config) })
    }

    /// Rebuilds a campaign from a persisted trajectory. A trailing record
    /// without a query is dropped so its stage can be evaluated again.
    pub fn resume(graph: Arc<Graph>, mut trajectory: CampaignTrajectory, truth: Option<Labeling>) -> Result<Self> {
        while trajectory.stages.last().is_some_and(|r| r.queried_node.is_none()) {
            trajectory.stages.pop();
        }
        let mut campaign = Self::new(graph, trajectory.config.clone(), truth)?;
        for (i, record) in trajectory.stages.iter().enumerate() {
            if record.stage != i {
                return Err(Error::Invalid(format!("trajectory stage {} found at position {i}", record.stage)));
            }
            let (Some(node), Some(label)) = (record.queried_node, record.revealed_label) else {
                return Err(Error::Invalid(format!("stage {i} has no revealed label")));
            };
            campaign.partial.reveal(node, label)?;
        }
        campaign.trajectory = trajectory;
        Ok(campaign)
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn truth(&self) -> Option<&Labeling> {
        self.truth.as_ref()
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.trajectory.config
    }

    pub fn partial(&self) -> &PartialLabeling {
        &self.partial
    }

    pub fn stage(&self) -> usize {
        self.partial.stage()
    }

    /// Strategy in effect at the current stage.
    pub fn strategy(&self) -> Strategy {
        self.strategy_at(self.stage())
    }

    pub fn strategy_at(&self, stage: usize) -> Strategy {
        self.trajectory
            .strategy_changes
            .iter()
            .rev()
            .find(|c| c.stage <= stage)
            .map_or(self.trajectory.config.strategy, |c| c.strategy)
    }

    pub fn trajectory(&self) -> &CampaignTrajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> CampaignTrajectory {
        self.trajectory
    }

    /// Switches strategy from the current stage on.
    pub fn set_strategy(&mut self, strategy: Strategy) -> Result<()> {
        self.set_strategy_from(self.stage(), strategy)
    }

    /// Switches strategy from `stage` on, which must not be in the past.
    /// A later call for the same stage replaces the earlier one.
    pub fn set_strategy_from(&mut self, stage: usize, strategy: Strategy) -> Result<()> {
        if stage < self.stage() {
            return Err(Error::Invalid(format!("stage {stage} is already past")));
        }
        self.config().chains.with_pairs(strategy.needs_pairs()).validate()?;
        let changes = &mut self.trajectory.strategy_changes;
        changes.retain(|c| c.stage < stage);
        let before = changes.last().map_or(self.trajectory.config.strategy, |c| c.strategy);
        if before != strategy {
            changes.push(StrategyChange { stage, strategy });
        }
        self.trajectory.fingerprint = self.trajectory.compute_fingerprint();
        Ok(())
    }

    pub fn evaluate(&self, progress: Option<&AtomicUsize>) -> Result<StageSnapshot> {
        evaluate_stage(&self.graph, &self.partial, self.config(), self.strategy(), self.truth.as_ref(), progress)
    }

    /// Records the answer for `node` and advances one stage.
    pub fn commit(&mut self, snapshot: StageSnapshot, node: usize, label: usize) -> Result<()> {
        if snapshot.stage != self.stage() {
            return Err(Error::Invalid(format!(
                "snapshot is for stage {} but the campaign is at stage {}",
                snapshot.stage,
                self.stage()
            )));
        }
        self.partial.reveal(node, label)?;
        let unsolicited = snapshot.suggested != Some(node);
        self.push_record(snapshot, Some((node, label)), unsolicited);
        Ok(())
    }

    /// Appends a closing record with no query.
    pub fn finish(&mut self, snapshot: StageSnapshot) {
        self.push_record(snapshot, None, false);
    }

    /// The trajectory so far plus `pending` as an unanswered last record.
    pub fn trajectory_with_pending(&self, pending: &StageSnapshot) -> CampaignTrajectory {
        let mut preview = self.clone();
        preview.push_record(pending.clone(), None, false);
        preview.trajectory
    }

    fn push_record(&mut self, s: StageSnapshot, answer: Option<(usize, usize)>, unsolicited: bool) {
        self.trajectory.stages.push(StageRecord {
            stage: s.stage,
            strategy: s.strategy,
            queried_node: answer.map(|a| a.0),
            revealed_label: answer.map(|a| a.1),
            unsolicited,
            suggested_node: s.suggested,
            scores: s.scores,
            marginals: s.marginals,
            accuracy: s.accuracy,
        });
    }
}

/// A campaign that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct CampaignFailure {
    pub trajectory: CampaignTrajectory,
    pub error: Error,
}

impl std::fmt::Display for CampaignFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "campaign stopped at stage {}: {}", self.trajectory.stages.len(), self.error)
    }
}

impl std::error::Error for CampaignFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs a campaign for at most `stop` queries.
pub fn run_campaign(
    graph: &Graph,
    oracle: &mut dyn Oracle,
    config: &CampaignConfig,
    stop: usize,
) -> std::result::Result<CampaignTrajectory, CampaignFailure> {
    let campaign = Campaign::new(Arc::new(graph.clone()), config.clone(), oracle.truth().cloned())
        .map_err(|error| CampaignFailure { trajectory: CampaignTrajectory::new(config.clone()), error })?;
    drive_campaign(campaign, oracle, stop, |_| Ok(()))
}

/// Advances `campaign` until `stop` nodes are explored (or none remain),
/// calling `on_stage` with the trajectory after every stage.
pub fn drive_campaign(
    mut campaign: Campaign,
    oracle: &mut dyn Oracle,
    stop: usize,
    mut on_stage: impl FnMut(&CampaignTrajectory) -> Result<()>,
) -> std::result::Result<CampaignTrajectory, CampaignFailure> {
    macro_rules! bail {
        ($campaign:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(CampaignFailure { trajectory: $campaign.into_trajectory(), error }),
            }
        };
    }
    loop {
        let snapshot = bail!(campaign, campaign.evaluate(None));
        let node = match snapshot.suggested {
            Some(node) if campaign.stage() < stop => node,
            _ => {
                campaign.finish(snapshot);
                bail!(campaign, on_stage(campaign.trajectory()));
                return Ok(campaign.into_trajectory());
            }
        };
        let label = bail!(campaign, oracle.reveal(node));
        bail!(campaign, campaign.commit(snapshot, node, label));
        bail!(campaign, on_stage(campaign.trajectory()));
    }
}

/// Fraction of unexplored nodes whose marginal on the true label is at
/// least `q`; 1 when nothing is left unexplored.
pub fn accuracy_at_threshold(marginals: &[Vec<f64>], truth: &Labeling, partial: &PartialLabeling, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Invalid(format!("threshold {q} outside (0, 1)")));
    }
    truth.check_len(marginals.len())?;
    let mut total = 0usize;
    let mut correct = 0usize;
    for (v, row) in marginals.iter().enumerate() {
        if partial.is_explored(v) {
            continue;
        }
        total += 1;
        if row[truth.get(v)] >= q {
            correct += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { correct as f64 / total as f64 })
}

/// Accuracy from a sampler accumulator; see [`accuracy_at_threshold`].
pub fn accuracy_from_accumulator(acc: &MarginalAccumulator, truth: &Labeling, partial: &PartialLabeling, q: f64) -> Result<f64> {
    accuracy_at_threshold(&acc.marginals(), truth, partial, q)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationOrder {
    pub node: usize,
    pub median_stage: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Per-node median and 5th/95th percentiles of the stage at which each node
/// was explored. Nodes a run never explored count as stage `n`.
pub fn exploration_order_stats(trajectories: &[CampaignTrajectory], n: usize) -> Vec<ExplorationOrder> {
    let mut stages = vec![Vec::with_capacity(trajectories.len()); n];
    for t in trajectories {
        let mut when = vec![n; n];
        for r in &t.stages {
            if let Some(v) = r.queried_node {
                if v < n {
                    when[v] = r.stage;
                }
            }
        }
        for v in 0..n {
            stages[v].push(when[v] as f64);
        }
    }
    stages
        .into_iter()
        .enumerate()
        .map(|(node, mut s)| {
            s.sort_by(f64::total_cmp);
            ExplorationOrder { node, median_stage: percentile(&s, 0.5), p5: percentile(&s, 0.05), p95: percentile(&s, 0.95) }
        })
        .collect()
}

/// Linear interpolation between closest ranks of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let rank = p * (len - 1) as f64;
            let lo = rank.floor() as usize;
            let hi = rank.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyStatus {
    /// A pass changed nothing.
    FixedPoint,
    /// The labeling returned to its state from two passes earlier.
    Oscillating,
    /// The pass limit was hit first.
    PassLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyOutcome {
    pub labeling: Labeling,
    /// Synchronous passes performed, including the final unchanged one.
    pub passes: usize,
    pub status: ConsistencyStatus,
}

const MAX_CONSISTENCY_PASSES: usize = 1_000;

/// Most likely label of every node given all the others, keeping the
/// current label when it ties for the maximum.
fn best_response(graph: &Graph, labels: &Labeling, prior: &PriorConfig) -> Result<Vec<(usize, f64)>> {
    let stats = BlockStats::compute(graph, labels)?;
    (0..graph.n())
        .map(|v| {
            let d = conditional_label_distribution(graph, &stats, labels, v, prior)?;
            let best = d.argmax_prefer(Some(labels.get(v)));
            Ok((best, d.probs[best]))
        })
        .collect()
}

/// Repeatedly moves every node (synchronously) to its most likely label
/// given the others until nothing changes.
pub fn make_consistent_dataset(graph: &Graph, labels: &Labeling, prior: &PriorConfig) -> Result<ConsistencyOutcome> {
    labels.check_len(graph.n())?;
    let mut previous: Option<Labeling> = None;
    let mut current = labels.clone();
    for pass in 1..=MAX_CONSISTENCY_PASSES {
        let best = best_response(graph, &current, prior)?;
        let next = Labeling::new(best.into_iter().map(|(l, _)| l).collect(), labels.k())?;
        if next == current {
            return Ok(ConsistencyOutcome { labeling: current, passes: pass, status: ConsistencyStatus::FixedPoint });
        }
        if previous.as_ref() == Some(&next) {
            return Ok(ConsistencyOutcome { labeling: next, passes: pass, status: ConsistencyStatus::Oscillating });
        }
        previous = Some(std::mem::replace(&mut current, next));
    }
    Ok(ConsistencyOutcome { labeling: current, passes: MAX_CONSISTENCY_PASSES, status: ConsistencyStatus::PassLimit })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Misfit {
    pub node: usize,
    pub true_label: usize,
    pub best_label: usize,
    pub confidence: f64,
}

/// Nodes whose most likely label, given every other true label, differs
/// from their own.
pub fn misfit_report(graph: &Graph, labels: &Labeling, prior: &PriorConfig) -> Result<Vec<Misfit>> {
    labels.check_len(graph.n())?;
    Ok(best_response(graph, labels, prior)?
        .into_iter()
        .enumerate()
        .filter(|(v, (best, _))| *best != labels.get(*v))
        .map(|(node, (best_label, confidence))| Misfit { node, true_label: labels.get(node), best_label, confidence })
        .collect())
}

/// Samples a graph from the block model with contiguous planted groups.
pub fn generate_sbm(group_sizes: &[usize], p: &EdgeProbMatrix, convention: Convention, seed: u64) -> Result<(Graph, Labeling)> {
    let k = group_sizes.len();
    if p.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: p.k() });
    }
    if !convention.directed && !p.is_symmetric() {
        return Err(Error::InvalidProbabilities("undirected graphs need a symmetric matrix".into()));
    }
    let labels: Vec<usize> = group_sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = Graph::builder(n, convention);
    for u in 0..n {
        let start = if convention.directed { 0 } else { u };
        for v in start..n {
            if u == v && !convention.allow_self_loops {
                continue;
            }
            if rng.random_bool(p.get(labels[u], labels[v])) {
                builder.add_edge(u, v)?;
            }
        }
    }
    Ok((builder.build(), Labeling::new(labels, k)?))
}

//! Active learning of hidden node classes in networks.
//!
//! The graph is assumed to come from a stochastic block model. The posterior
//! over labelings, conditioned on the nodes explored so far, is sampled with
//! a single-site heat-bath chain; the samples drive the choice of which node
//! to query next.

pub mod campaign;
pub mod error;
pub mod gibbs;
pub mod graph;
pub mod io;
pub mod model;
pub mod stats;
pub mod strategy;

pub use campaign::{
    accuracy_at_threshold, drive_campaign, evaluate_stage, exploration_order_stats, generate_sbm,
    make_consistent_dataset, misfit_report, run_campaign, AccuracyPoint, Campaign, CampaignConfig, CampaignFailure,
    CampaignTrajectory, ConsistencyOutcome, ConsistencyStatus, CuratedOracle, ExplorationOrder, Misfit, Oracle,
    StageRecord, StageSnapshot, StrategyChange, DEFAULT_THRESHOLDS,
};
pub use error::{Error, Result};
pub use gibbs::{
    equilibrium_check, run_chains, run_chains_with_progress, sample_labelings, ChainConfig,
    MarginalAccumulator, PairMatching, SamplePairStats, SamplingResult, StepUnit,
};
pub use graph::{unexplored_subgraph, Convention, Graph, GraphBuilder, Labeling, PartialLabeling, Subgraph};
pub use io::{datasets, DatasetBundle, DatasetMeta};
pub use model::{
    conditional_label_distribution, integrated_log_likelihood, log_likelihood_given_p, max_likelihood_p,
    model_log_score, BlockScorer, EdgeProbMatrix, LabelDistribution, PriorConfig, ScoreMode,
};
pub use stats::BlockStats;
pub use strategy::{
    average_agreement_scores, betweenness, betweenness_scores, degree_scores, mutual_information_scores,
    random_scores, select_next, DegreeKind, ScoreFlag, ScoreVector, Strategy,
};

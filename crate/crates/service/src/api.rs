//! Request and response payloads.
//!
//! Node ids are dense 0-based indices into the graph payload's `nodes`
//! array. Labels are 0-based indices into `class_names`.

use blockquery::{AccuracyPoint, CampaignTrajectory, ChainConfig, ScoreFlag, Strategy};
use serde::{Deserialize, Serialize};

/// `POST /api/session`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    /// Number of classes; defaults to the dataset's label count.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directed: bool,
    /// Chain schedule; the server default when absent.
    #[serde(default)]
    pub chains: Option<ChainSchedule>,
    /// Report accuracy against the dataset's labels when it has them.
    #[serde(default = "default_true")]
    pub benchmark: bool,
}

fn default_strategy() -> Strategy {
    Strategy::Mi
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSchedule {
    pub num_chains: usize,
    pub steps_per_chain: u64,
    pub burn_in: u64,
}

impl From<ChainSchedule> for ChainConfig {
    fn from(s: ChainSchedule) -> Self {
        ChainConfig::schedule(s.num_chains, s.steps_per_chain, s.burn_in)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub version: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: usize,
    pub name: String,
    pub degree: usize,
    pub in_degree: usize,
    pub out_degree: usize,
}

/// `GET /api/session/{id}/graph`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphView {
    pub dataset: String,
    pub directed: bool,
    pub n: usize,
    pub k: usize,
    pub class_names: Vec<String>,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Sampling,
    AwaitingLabel,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub chains_done: usize,
    pub chains_total: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explored {
    pub node: usize,
    pub label: usize,
}

/// `GET /api/session/{id}/state`. Scores, marginals and accuracy describe
/// the latest completed sampling pass and are empty before the first one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub id: String,
    pub version: u64,
    pub phase: Phase,
    pub paused: bool,
    pub stage: usize,
    pub strategy: Strategy,
    pub explored: Vec<Explored>,
    pub suggested_node: Option<usize>,
    pub scores: Vec<Option<f64>>,
    pub score_flags: Vec<ScoreFlag>,
    pub marginals: Vec<Vec<f64>>,
    pub accuracy: Vec<AccuracyPoint>,
    pub progress: Progress,
    /// Set when the last sampling pass failed.
    pub error: Option<String>,
}

/// `POST /api/session/{id}/label`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub node: usize,
    pub label: usize,
    /// Version of the state the answer refers to.
    pub version: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAck {
    pub version: u64,
    /// Stage after the answer.
    pub stage: usize,
    pub unsolicited: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Pause,
    Resume,
    Export,
    SetStrategy,
}

/// `POST /api/session/{id}/control`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub action: Action,
    /// Required by `set-strategy`.
    #[serde(default)]
    pub strategy: Option<Strategy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlAck {
    pub version: u64,
    /// Present for `export`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<CampaignTrajectory>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateQuery {
    /// Wait until the version exceeds this value.
    pub since: Option<u64>,
}

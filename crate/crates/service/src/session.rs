//! One interactive session: a single-writer actor owning the campaign.
//!
//! Handlers send commands over a queue and read versioned snapshots from a
//! watch channel. Sampling runs on the blocking pool and reports back
//! through the same queue.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use blockquery::io::write_trajectory_json_atomic;
use blockquery::{evaluate_stage, AccuracyPoint, Campaign, ScoreFlag, StageSnapshot};
use tokio::sync::{mpsc, oneshot, watch};

use crate::api::{
    Action, ControlAck, ControlRequest, CreateSession, Explored, LabelAck, LabelRequest, Phase, Progress, StateView,
};
use crate::error::ApiError;

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

pub(crate) enum Command {
    Label(LabelRequest, Reply<LabelAck>),
    Control(ControlRequest, Reply<ControlAck>),
    Sampled { stage: usize, result: blockquery::Result<StageSnapshot> },
}

/// Where a session's files live.
#[derive(Clone, Debug)]
pub(crate) struct SessionFiles {
    pub request: PathBuf,
    pub trajectory: PathBuf,
}

impl SessionFiles {
    pub fn new(dir: &std::path::Path, id: &str) -> Self {
        Self { request: dir.join(format!("{id}.session.json")), trajectory: dir.join(format!("{id}.trajectory.json")) }
    }

    pub fn write_request(&self, request: &CreateSession) -> Result<(), ApiError> {
        let body = serde_json::to_vec_pretty(request).map_err(|e| ApiError::internal(e.to_string()))?;
        std::fs::write(&self.request, body).map_err(|e| ApiError::internal(format!("{}: {e}", self.request.display())))
    }
}

/// Shared handle used by the HTTP layer.
pub struct SessionHandle {
    pub id: String,
    graph_json: Bytes,
    state: watch::Receiver<Arc<StateView>>,
    commands: mpsc::Sender<Command>,
    progress: Arc<AtomicUsize>,
}

impl SessionHandle {
    pub fn graph_json(&self) -> Bytes {
        self.graph_json.clone()
    }

    /// Current state with live sampling progress.
    pub fn state(&self) -> StateView {
        self.with_progress(&self.state.borrow())
    }

    fn with_progress(&self, view: &StateView) -> StateView {
        let mut view = view.clone();
        if view.phase == Phase::Sampling && view.error.is_none() {
            view.progress.chains_done = self.progress.load(Ordering::Relaxed).min(view.progress.chains_total);
        }
        view
    }

    /// Waits until the version exceeds `since` or the timeout passes.
    pub async fn state_after(&self, since: u64, timeout: std::time::Duration) -> StateView {
        let mut rx = self.state.clone();
        let wait = async {
            loop {
                if rx.borrow_and_update().version > since {
                    return;
                }
                if rx.changed().await.is_err() {
                    return;
                }
            }
        };
        let _ = tokio::time::timeout(timeout, wait).await;
        self.state()
    }

    pub async fn label(&self, request: LabelRequest) -> Result<LabelAck, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Label(request, tx)).await?;
        rx.await.map_err(|_| ApiError::internal("session stopped"))?
    }

    pub async fn control(&self, request: ControlRequest) -> Result<ControlAck, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Control(request, tx)).await?;
        rx.await.map_err(|_| ApiError::internal("session stopped"))?
    }

    async fn send(&self, command: Command) -> Result<(), ApiError> {
        self.commands.send(command).await.map_err(|_| ApiError::internal("session stopped"))
    }
}

/// Output of the latest completed sampling pass.
#[derive(Default)]
struct LastPass {
    scores: Vec<Option<f64>>,
    flags: Vec<ScoreFlag>,
    marginals: Vec<Vec<f64>>,
    accuracy: Vec<AccuracyPoint>,
}

impl LastPass {
    fn from_snapshot(s: &StageSnapshot) -> Self {
        Self {
            scores: s.scores.scores.clone(),
            flags: s.scores.flags.clone(),
            marginals: s.marginals.clone(),
            accuracy: s.accuracy.clone(),
        }
    }
}

struct Actor {
    id: String,
    campaign: Campaign,
    snapshot: Option<StageSnapshot>,
    last: LastPass,
    phase: Phase,
    paused: bool,
    sampling: bool,
    version: u64,
    error: Option<String>,
    last_accepted: Option<(LabelRequest, LabelAck)>,
    progress: Arc<AtomicUsize>,
    state_tx: watch::Sender<Arc<StateView>>,
    commands: mpsc::WeakSender<Command>,
    files: Option<SessionFiles>,
}

/// Starts the actor for `campaign` and begins sampling its current stage.
pub(crate) fn spawn_session(id: String, campaign: Campaign, graph_json: Bytes, files: Option<SessionFiles>) -> SessionHandle {
    let (tx, rx) = mpsc::channel(64);
    let progress = Arc::new(AtomicUsize::new(0));
    let mut actor = Actor {
        id: id.clone(),
        campaign,
        snapshot: None,
        last: LastPass::default(),
        phase: Phase::Sampling,
        paused: false,
        sampling: false,
        version: 0,
        error: None,
        last_accepted: None,
        progress: progress.clone(),
        state_tx: watch::channel(Arc::new(placeholder_view(&id))).0,
        commands: tx.downgrade(),
        files,
    };
    let state = actor.state_tx.subscribe();
    actor.start_sampling();
    actor.publish();
    tokio::spawn(actor.run(rx));
    SessionHandle { id, graph_json, state, commands: tx, progress }
}

fn placeholder_view(id: &str) -> StateView {
    StateView {
        id: id.to_string(),
        version: 0,
        phase: Phase::Sampling,
        paused: false,
        stage: 0,
        strategy: blockquery::Strategy::Mi,
        explored: Vec::new(),
        suggested_node: None,
        scores: Vec::new(),
        score_flags: Vec::new(),
        marginals: Vec::new(),
        accuracy: Vec::new(),
        progress: Progress { chains_done: 0, chains_total: 0 },
        error: None,
    }
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(command) = rx.recv().await {
            match command {
                Command::Label(request, reply) => {
                    let _ = reply.send(self.label(request));
                }
                Command::Control(request, reply) => {
                    let _ = reply.send(self.control(request));
                }
                Command::Sampled { stage, result } => self.sampled(stage, result),
            }
        }
        log::debug!("session {} stopped", self.id);
    }

    fn start_sampling(&mut self) {
        let Some(tx) = self.commands.upgrade() else {
            return;
        };
        self.phase = Phase::Sampling;
        self.sampling = true;
        self.error = None;
        self.progress.store(0, Ordering::Relaxed);
        let graph = self.campaign.graph().clone();
        let partial = self.campaign.partial().clone();
        let config = self.campaign.config().clone();
        let strategy = self.campaign.strategy();
        let truth = self.campaign.truth().cloned();
        let progress = self.progress.clone();
        let stage = partial.stage();
        tokio::task::spawn_blocking(move || {
            let result = evaluate_stage(&graph, &partial, &config, strategy, truth.as_ref(), Some(&progress));
            let _ = tx.blocking_send(Command::Sampled { stage, result });
        });
    }

    fn sampled(&mut self, stage: usize, result: blockquery::Result<StageSnapshot>) {
        self.sampling = false;
        if stage != self.campaign.stage() {
            return;
        }
        match result {
            Ok(snapshot) => {
                self.last = LastPass::from_snapshot(&snapshot);
                if snapshot.suggested.is_none() {
                    self.campaign.finish(snapshot);
                    self.phase = Phase::Finished;
                    self.persist();
                } else {
                    self.snapshot = Some(snapshot);
                    self.phase = Phase::AwaitingLabel;
                }
            }
            Err(e) => {
                log::warn!("session {}: sampling failed: {e}", self.id);
                self.error = Some(e.to_string());
            }
        }
        self.bump();
    }

    fn label(&mut self, request: LabelRequest) -> Result<LabelAck, ApiError> {
        if let Some((previous, ack)) = &self.last_accepted {
            if *previous == request {
                return Ok(*ack);
            }
        }
        if request.version != self.version {
            return Err(ApiError::conflict(
                "stale-version",
                format!("answer refers to version {} but the session is at {}", request.version, self.version),
            ));
        }
        if self.paused {
            return Err(ApiError::conflict("paused", "session is paused"));
        }
        if self.phase != Phase::AwaitingLabel {
            return Err(ApiError::conflict("not-awaiting-label", format!("session is {:?}", self.phase)));
        }
        let partial = self.campaign.partial();
        if request.node >= partial.n() {
            return Err(blockquery::Error::NodeOutOfRange { node: request.node, n: partial.n() }.into());
        }
        if request.label >= partial.k() {
            return Err(blockquery::Error::LabelOutOfRange { node: request.node, label: request.label, k: partial.k() }.into());
        }
        if partial.is_explored(request.node) {
            return Err(blockquery::Error::AlreadyExplored(request.node).into());
        }
        let snapshot = self.snapshot.take().expect("awaiting a label implies a snapshot");
        let unsolicited = snapshot.suggested != Some(request.node);
        self.campaign.commit(snapshot, request.node, request.label)?;
        self.persist();
        self.start_sampling();
        self.bump();
        let ack = LabelAck { version: self.version, stage: self.campaign.stage(), unsolicited };
        self.last_accepted = Some((request, ack));
        Ok(ack)
    }

    fn control(&mut self, request: ControlRequest) -> Result<ControlAck, ApiError> {
        let invalid = |what: &str| ApiError::conflict("invalid-transition", what.to_string());
        match request.action {
            Action::Export => {
                let trajectory = match &self.snapshot {
                    Some(s) => self.campaign.trajectory_with_pending(s),
                    None => self.campaign.trajectory().clone(),
                };
                return Ok(ControlAck { version: self.version, trajectory: Some(trajectory) });
            }
            Action::Pause => {
                if self.paused {
                    return Err(invalid("already paused"));
                }
                if self.phase == Phase::Finished {
                    return Err(invalid("session is finished"));
                }
                self.paused = true;
            }
            Action::Resume => {
                if !self.paused && self.error.is_none() {
                    return Err(invalid("not paused"));
                }
                self.paused = false;
                if self.error.is_some() && !self.sampling {
                    self.start_sampling();
                }
            }
            Action::SetStrategy => {
                let strategy = request
                    .strategy
                    .ok_or_else(|| ApiError::bad_request("missing-strategy", "set-strategy needs a strategy"))?;
                if self.phase == Phase::Finished {
                    return Err(invalid("session is finished"));
                }
                // The current stage is already sampled or being sampled.
                let from = self.campaign.stage() + 1;
                self.campaign.set_strategy_from(from, strategy)?;
            }
        }
        self.bump();
        Ok(ControlAck { version: self.version, trajectory: None })
    }

    fn persist(&self) {
        let Some(files) = &self.files else {
            return;
        };
        if let Err(e) = write_trajectory_json_atomic(self.campaign.trajectory(), &files.trajectory) {
            log::error!("session {}: could not persist: {e}", self.id);
        }
    }

    fn bump(&mut self) {
        self.version += 1;
        self.publish();
    }

    fn publish(&self) {
        let total = self.campaign.config().chains.num_chains;
        let suggested = match (&self.snapshot, self.phase) {
            (Some(s), Phase::AwaitingLabel) => s.suggested,
            _ => None,
        };
        let strategy = match &self.snapshot {
            Some(s) => s.strategy,
            None => self.campaign.strategy(),
        };
        let view = StateView {
            id: self.id.clone(),
            version: self.version,
            phase: self.phase,
            paused: self.paused,
            stage: self.campaign.stage(),
            strategy,
            explored: self.campaign.partial().explored().iter().map(|&(node, label)| Explored { node, label }).collect(),
            suggested_node: suggested,
            scores: self.last.scores.clone(),
            score_flags: self.last.flags.clone(),
            marginals: self.last.marginals.clone(),
            accuracy: self.last.accuracy.clone(),
            progress: Progress {
                chains_done: if self.phase == Phase::Sampling { 0 } else { total },
                chains_total: total,
            },
            error: self.error.clone(),
        };
        self.state_tx.send_replace(Arc::new(view));
    }
}

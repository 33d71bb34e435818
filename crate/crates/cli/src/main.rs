//! `blockquery` command-line entry points.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use blockquery::io::{write_exploration_order_csv, write_learning_curve_csv, write_trajectory_json};
use blockquery::{
    datasets, evaluate_stage, exploration_order_stats, generate_sbm, make_consistent_dataset, misfit_report,
    run_campaign, CampaignConfig, ChainConfig, Convention, CuratedOracle, DatasetBundle, EdgeProbMatrix, Graph,
    Labeling, PartialLabeling, PriorConfig, ScoreMode, Strategy,
};
use blockquery_service::api::{ChainSchedule, CreateSession};
use blockquery_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blockquery", version, about = "Active class discovery on networks with a stochastic block model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded campaigns against known labels and export the results.
    Run(RunArgs),
    /// Score every unexplored node once without querying.
    Score(ScoreArgs),
    /// Make a labeling self-consistent and report the nodes that do not fit.
    Consistency(ConsistencyArgs),
    /// Sample a synthetic network from a block model.
    Generate(GenerateArgs),
    /// Start the interactive session service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Edge list: one `source target` pair per line.
    #[arg(long, conflicts_with = "dataset")]
    edges: Option<PathBuf>,
    /// Label file: one `node class` pair per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Named dataset: `karate` or `<name>.edges` in the data directory.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, env = datasets::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    self_loops: bool,
    /// Number of classes; defaults to the label file's class count.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long, value_enum, default_value_t = PriorKind::Integrated)]
    prior: PriorKind,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorKind {
    Integrated,
    Ml,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, default_value_t = 100)]
    chains: usize,
    /// Single-site updates per chain.
    #[arg(long, default_value_t = 20_000)]
    steps: u64,
    #[arg(long, default_value_t = 10_000)]
    burn_in: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    chain: ChainArgs,
    /// One or more of mi, aa, degree, betweenness, random.
    #[arg(long, value_delimiter = ',', default_value = "mi")]
    strategy: Vec<Strategy>,
    /// Campaigns per strategy; run `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Maximum number of queries per campaign; all nodes when absent.
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value = "mi")]
    strategy: Strategy,
    /// Already explored node, as `NODE=CLASS`; repeatable.
    #[arg(long = "reveal", value_name = "NODE=CLASS")]
    reveal: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Write the consistent labeling here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Group sizes, e.g. `20,20,20`.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    p_in: f64,
    #[arg(long, default_value_t = 0.05)]
    p_out: f64,
    /// Full matrix as rows separated by `;`, e.g. `0.5,0.1;0.1,0.5`.
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    self_loops: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<out>.edges` and `<out>.labels`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Create a session for this dataset at startup.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, env = datasets::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Persist sessions here and restore them on startup.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainArgs,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] anyhow::Error),
}

impl From<blockquery::Error> for CliError {
    fn from(e: blockquery::Error) -> Self {
        CliError::Data(e.into())
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Score(args) => score(args),
        Command::Consistency(args) => consistency(args),
        Command::Generate(args) => generate(args),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let message = cause.to_string();
        if !text.contains(&message) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&message);
        }
    }
    text
}

impl DataArgs {
    fn convention(&self) -> Convention {
        Convention::new(self.directed, Some(self.self_loops))
    }

    fn load(&self) -> CliResult<DatasetBundle> {
        match (&self.edges, &self.dataset) {
            (Some(edges), _) => {
                let name = edges.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok(DatasetBundle::load(&name, edges, self.labels.as_deref(), self.convention())?)
            }
            (None, Some(name)) => {
                if self.labels.is_some() {
                    return Err(usage("--labels goes with --edges, not --dataset"));
                }
                Ok(datasets::resolve(name, self.directed, self.data_dir.as_deref())?)
            }
            (None, None) => Err(usage("give --edges or --dataset")),
        }
    }

    fn k(&self, bundle: &DatasetBundle) -> CliResult<usize> {
        let k = self.k.or(bundle.k()).ok_or_else(|| usage("no labels to infer k from; give --k"))?;
        if k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        Ok(k)
    }

    /// Labels of the bundle, which must have `k` classes.
    fn truth(&self, bundle: &DatasetBundle, k: usize, command: &str) -> CliResult<Labeling> {
        let truth = bundle.truth.clone().ok_or_else(|| usage(format!("{command} needs labels")))?;
        if truth.k() != k {
            return Err(CliError::Data(anyhow!("--k {k} does not match the {} classes in the labels", truth.k())));
        }
        Ok(truth)
    }
}

impl PriorArgs {
    fn config(&self) -> CliResult<PriorConfig> {
        let mode = match self.prior {
            PriorKind::Integrated => ScoreMode::Integrated,
            PriorKind::Ml => ScoreMode::MaxLikelihood,
        };
        let prior = PriorConfig { alpha: self.alpha, beta: self.beta, mode };
        prior.validate().map_err(|e| usage(e.to_string()))?;
        Ok(prior)
    }
}

impl ChainArgs {
    fn config(&self) -> ChainConfig {
        ChainConfig::schedule(self.chains, self.steps, self.burn_in)
    }
}

fn campaign_config(k: usize, strategy: Strategy, prior: PriorConfig, chains: ChainConfig, seed: u64) -> CliResult<CampaignConfig> {
    let config = CampaignConfig { prior, ..CampaignConfig::new(k, strategy, chains, seed) };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn run(args: RunArgs) -> CliResult {
    let bundle = args.data.load()?;
    let k = args.data.k(&bundle)?;
    let truth = args.data.truth(&bundle, k, "run")?;
    let prior = args.prior.config()?;
    let stop = args.stages.unwrap_or(bundle.graph.n());
    let trajectory_dir = args.out.join("trajectories");
    std::fs::create_dir_all(&trajectory_dir).with_context(|| format!("creating {}", trajectory_dir.display()))?;
    let mut trajectories = Vec::new();
    for &strategy in &args.strategy {
        for r in 0..args.runs {
            let config = campaign_config(k, strategy, prior, args.chain.config(), args.seed + r)?;
            let mut oracle = CuratedOracle::new(truth.clone());
            let trajectory = run_campaign(&bundle.graph, &mut oracle, &config, stop).map_err(|f| {
                let path = trajectory_dir.join(format!("{strategy}-{r}.partial.json"));
                let _ = write_trajectory_json(&f.trajectory, &path);
                anyhow::Error::new(f)
            })?;
            write_trajectory_json(&trajectory, &trajectory_dir.join(format!("{strategy}-{r}.json")))?;
            let last = trajectory.stages.last().and_then(|s| s.accuracy_at(0.9));
            log::info!(
                "{strategy} run {r}: {} nodes explored, accuracy at q=0.9 {}",
                trajectory.explored().len(),
                last.map_or("-".into(), |a| format!("{a:.3}"))
            );
            trajectories.push(trajectory);
        }
    }
    write_learning_curve_csv(&trajectories, &args.out.join("learning_curve.csv"))?;
    for &strategy in &args.strategy {
        let of_strategy: Vec<_> = trajectories.iter().filter(|t| t.strategy == strategy).cloned().collect();
        let stats = exploration_order_stats(&of_strategy, bundle.graph.n());
        let path = args.out.join(format!("exploration_order_{strategy}.csv"));
        write_exploration_order_csv(&stats, bundle.graph.names(), &path)?;
    }
    println!("wrote results for {} campaigns to {}", trajectories.len(), args.out.display());
    Ok(())
}

fn parse_reveal(spec: &str, graph: &Graph, class_names: Option<&[String]>, k: usize) -> CliResult<(usize, usize)> {
    let (node, class) = spec.split_once('=').ok_or_else(|| usage(format!("--reveal {spec}: expected NODE=CLASS")))?;
    let node = graph.node_by_name(node).ok_or_else(|| usage(format!("--reveal {spec}: unknown node {node}")))?;
    let label = class_names
        .and_then(|names| names.iter().position(|c| c == class))
        .or_else(|| class.parse::<usize>().ok())
        .filter(|&l| l < k)
        .ok_or_else(|| usage(format!("--reveal {spec}: unknown class {class}")))?;
    Ok((node, label))
}

fn score(args: ScoreArgs) -> CliResult {
    let bundle = args.data.load()?;
    let k = args.data.k(&bundle)?;
    let class_names = bundle.class_names.as_deref().filter(|c| c.len() == k);
    let graph = &bundle.graph;
    let mut partial = PartialLabeling::new(graph.n(), k);
    for spec in &args.reveal {
        let (node, label) = parse_reveal(spec, graph, class_names, k)?;
        partial.reveal(node, label).map_err(|e| usage(e.to_string()))?;
    }
    let config = campaign_config(k, args.strategy, args.prior.config()?, args.chain.config(), args.seed)?;
    let truth = bundle.truth.as_ref().filter(|t| t.k() == k);
    let snapshot = evaluate_stage(graph, &partial, &config, args.strategy, truth, None)?;
    let mut out = std::io::stdout().lock();
    let mut header = vec!["node".to_string(), "score".into(), "flag".into()];
    header.extend((0..k).map(|c| format!("p_{}", class_names.map_or(c.to_string(), |n| n[c].clone()))));
    use std::io::Write;
    let write = |out: &mut std::io::StdoutLock, line: String| writeln!(out, "{line}").context("writing to stdout");
    write(&mut out, header.join(","))?;
    for v in 0..graph.n() {
        let score = snapshot.scores.scores[v].map_or(String::new(), |s| s.to_string());
        let flag = serde_json::to_value(snapshot.scores.flags[v]).context("serializing flag")?;
        let mut row = vec![graph.name(v), score, flag.as_str().unwrap_or_default().to_string()];
        row.extend(snapshot.marginals[v].iter().map(|p| format!("{p:.6}")));
        write(&mut out, row.join(","))?;
    }
    if let Some(node) = snapshot.suggested {
        eprintln!("suggested next query: {}", graph.name(node));
    }
    Ok(())
}

fn write_labels(path: &Path, graph: &Graph, labels: &Labeling, class_names: &[String], keep: impl Fn(usize) -> bool) -> CliResult {
    let mut text = String::new();
    for v in (0..graph.n()).filter(|&v| keep(v)) {
        text.push_str(&format!("{} {}\n", graph.name(v), class_names[labels.get(v)]));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn consistency(args: ConsistencyArgs) -> CliResult {
    let bundle = args.data.load()?;
    let k = args.data.k(&bundle)?;
    let truth = args.data.truth(&bundle, k, "consistency")?;
    let prior = args.prior.config()?;
    let graph = &bundle.graph;
    let names = bundle.class_names.clone().unwrap_or_else(|| (0..k).map(|c| c.to_string()).collect());
    let misfits = misfit_report(graph, &truth, &prior)?;
    println!("node,label,best_label,confidence");
    for m in &misfits {
        println!("{},{},{},{:.6}", graph.name(m.node), names[m.true_label], names[m.best_label], m.confidence);
    }
    let outcome = make_consistent_dataset(graph, &truth, &prior)?;
    let changed = (0..graph.n()).filter(|&v| outcome.labeling.get(v) != truth.get(v)).count();
    let status = serde_json::to_value(outcome.status).context("serializing status")?;
    eprintln!(
        "{} misfits; consistent labeling after {} passes ({}), {changed} nodes relabeled",
        misfits.len(),
        outcome.passes,
        status.as_str().unwrap_or_default()
    );
    if let Some(out) = &args.out {
        write_labels(out, graph, &outcome.labeling, &names, |_| true)?;
    }
    Ok(())
}

fn parse_matrix(text: &str) -> CliResult<Vec<Vec<f64>>> {
    text.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| usage(format!("--matrix entry {x:?}: {e}"))))
                .collect()
        })
        .collect()
}

fn generate(args: GenerateArgs) -> CliResult {
    let k = args.sizes.len();
    let p = match &args.matrix {
        Some(text) => EdgeProbMatrix::from_rows(&parse_matrix(text)?),
        None => EdgeProbMatrix::planted(k, args.p_in, args.p_out),
    }
    .map_err(|e| usage(e.to_string()))?;
    let convention = Convention::new(args.directed, Some(args.self_loops));
    let (graph, labels) = generate_sbm(&args.sizes, &p, convention, args.seed).map_err(|e| usage(e.to_string()))?;
    let names: Vec<String> = (1..=graph.n()).map(|v| v.to_string()).collect();
    let graph = graph.with_names(names)?;
    let classes: Vec<String> = (1..=k).map(|c| format!("g{c}")).collect();
    let mut text = String::new();
    for &(u, v) in graph.edges() {
        text.push_str(&format!("{} {}\n", graph.name(u), graph.name(v)));
    }
    let edges_path = args.out.with_extension("edges");
    std::fs::write(&edges_path, text).with_context(|| format!("writing {}", edges_path.display()))?;
    let isolated: Vec<usize> = (0..graph.n()).filter(|&v| graph.degree(v) == 0).collect();
    if !isolated.is_empty() {
        log::warn!("{} isolated nodes cannot appear in an edge list and are left out", isolated.len());
    }
    write_labels(&args.out.with_extension("labels"), &graph, &labels, &classes, |v| graph.degree(v) > 0)?;
    println!("{} nodes, {} edges written to {}", graph.n() - isolated.len(), graph.num_edges(), edges_path.display());
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult {
    let addr: SocketAddr =
        format!("{}:{}", args.host, args.port).parse().map_err(|e| usage(format!("bad address: {e}")))?;
    let chains = args.chain.config();
    chains.validate().map_err(|e| usage(e.to_string()))?;
    let config = ServiceConfig {
        data_dir: args.data_dir,
        state_dir: args.state_dir,
        default_chains: chains,
        long_poll: Duration::from_secs(25),
    };
    let dataset = args.dataset.map(|dataset| CreateSession {
        dataset,
        k: None,
        strategy: Strategy::Mi,
        seed: 0,
        directed: false,
        chains: Some(ChainSchedule {
            num_chains: chains.num_chains,
            steps_per_chain: chains.steps_per_chain,
            burn_in: chains.burn_in,
        }),
        benchmark: true,
    });
    let runtime = tokio::runtime::Runtime::new().context("starting the runtime")?;
    runtime.block_on(blockquery_service::serve(addr, config, dataset)).context("serving")?;
    Ok(())
}

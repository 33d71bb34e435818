//! Edge-list and label loaders, CSV and JSON export.
//!
//! Edge lists hold one `source target` pair per line; label files hold one
//! `node class` pair per line. Tokens are whitespace-separated and `#` starts
//! a comment. Node and class names get dense ids in first-appearance order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::{CampaignTrajectory, ExplorationOrder};
use crate::error::{Error, Result};
use crate::graph::{Convention, Graph, Labeling};
use crate::strategy::Strategy;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub directed: bool,
    pub source: String,
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub truth: Option<Labeling>,
    /// Class name of each label index.
    pub class_names: Option<Vec<String>>,
    pub meta: DatasetMeta,
}

impl DatasetBundle {
    pub fn new(graph: Graph, truth: Option<(Labeling, Vec<String>)>, meta: DatasetMeta) -> Result<Self> {
        let (truth, class_names) = match truth {
            Some((labels, names)) => {
                labels.check_len(graph.n())?;
                if names.len() != labels.k() {
                    return Err(Error::DimensionMismatch { expected: labels.k(), got: names.len() });
                }
                (Some(labels), Some(names))
            }
            None => (None, None),
        };
        Ok(Self { graph, truth, class_names, meta })
    }

    pub fn k(&self) -> Option<usize> {
        self.truth.as_ref().map(Labeling::k)
    }

    /// Loads an edge list and, optionally, a label file.
    pub fn load(name: &str, edges: &Path, labels: Option<&Path>, convention: Convention) -> Result<Self> {
        let graph = load_edge_list(edges, convention)?;
        let truth = labels.map(|p| load_labels(p, &graph, None)).transpose()?;
        let meta = DatasetMeta { name: name.to_string(), directed: convention.directed, source: edges.display().to_string() };
        Self::new(graph, truth, meta)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let content = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        (!tokens.is_empty()).then_some((i + 1, tokens))
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn load_edge_list(path: &Path, convention: Convention) -> Result<Graph> {
    parse_edge_list(&read(path)?, path, convention)
}

/// Parses edge-list text; `origin` only labels error messages.
pub fn parse_edge_list(text: &str, origin: &Path, convention: Convention) -> Result<Graph> {
    let mut names: Vec<String> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    for (line, tokens) in records(text) {
        let [u, v] = tokens[..] else {
            return Err(parse_error(origin, line, format!("expected two node names, found {}", tokens.len())));
        };
        let mut id = |name: &str| {
            *ids.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let (u, v) = (id(u), id(v));
        edges.push((line, u, v));
    }
    let mut builder = Graph::builder(names.len(), convention);
    for (line, u, v) in edges {
        builder.add_edge(u, v).map_err(|e| match e {
            Error::DuplicateEdge(..) => parse_error(origin, line, format!("duplicate edge {} {}", names[u], names[v])),
            Error::SelfLoopForbidden(_) => parse_error(origin, line, format!("self-loop on {} is not allowed", names[u])),
            other => parse_error(origin, line, other.to_string()),
        })?;
    }
    Ok(builder.names(names).build())
}

/// Loads a label file against the graph's node names. With `classes`,
/// class names must come from that table; otherwise the table is built in
/// first-appearance order. Returns the labeling and the class table.
pub fn load_labels(path: &Path, graph: &Graph, classes: Option<&[String]>) -> Result<(Labeling, Vec<String>)> {
    parse_labels(&read(path)?, path, graph, classes)
}

pub fn parse_labels(text: &str, origin: &Path, graph: &Graph, classes: Option<&[String]>) -> Result<(Labeling, Vec<String>)> {
    let node_names = graph
        .names()
        .map(|n| n.to_vec())
        .unwrap_or_else(|| (0..graph.n()).map(|v| v.to_string()).collect());
    let nodes: HashMap<&str, usize> = node_names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut table: Vec<String> = classes.map(<[String]>::to_vec).unwrap_or_default();
    let mut class_ids: HashMap<String, usize> = table.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let mut labels: Vec<Option<usize>> = vec![None; graph.n()];
    for (line, tokens) in records(text) {
        let [node, class] = tokens[..] else {
            return Err(parse_error(origin, line, format!("expected node and class, found {} fields", tokens.len())));
        };
        let Some(&v) = nodes.get(node) else {
            return Err(parse_error(origin, line, format!("unknown node {node}")));
        };
        if labels[v].is_some() {
            return Err(parse_error(origin, line, format!("node {node} labeled twice")));
        }
        let label = match class_ids.get(class) {
            Some(&c) => c,
            None if classes.is_some() => return Err(parse_error(origin, line, format!("unknown class {class}"))),
            None => {
                table.push(class.to_string());
                class_ids.insert(class.to_string(), table.len() - 1);
                table.len() - 1
            }
        };
        labels[v] = Some(label);
    }
    let last_line = text.lines().count();
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| parse_error(origin, last_line, format!("node {} has no label", node_names[v]))))
        .collect::<Result<Vec<_>>>()?;
    let k = table.len().max(1);
    Ok((Labeling::new(labels, k)?, table))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub stage: usize,
    pub strategy: Strategy,
    pub q: f64,
    pub accuracy: f64,
}

/// Accuracy per (strategy, stage, q), averaged over the runs that reached
/// that stage. Rows are sorted by strategy, stage and threshold.
pub fn learning_curve(trajectories: &[CampaignTrajectory]) -> Vec<CurveRow> {
    let mut sums: Vec<((Strategy, usize, u64), (f64, usize))> = Vec::new();
    let mut index: HashMap<(Strategy, usize, u64), usize> = HashMap::new();
    for t in trajectories {
        for r in &t.stages {
            for p in &r.accuracy {
                let key = (r.strategy, r.stage, p.q.to_bits());
                let slot = *index.entry(key).or_insert_with(|| {
                    sums.push((key, (0.0, 0)));
                    sums.len() - 1
                });
                sums[slot].1 .0 += p.accuracy;
                sums[slot].1 .1 += 1;
            }
        }
    }
    let mut rows: Vec<CurveRow> = sums
        .into_iter()
        .map(|((strategy, stage, q), (sum, count))| CurveRow { stage, strategy, q: f64::from_bits(q), accuracy: sum / count as f64 })
        .collect();
    rows.sort_by(|a, b| {
        (a.strategy.as_str(), a.stage).cmp(&(b.strategy.as_str(), b.stage)).then(a.q.total_cmp(&b.q))
    });
    rows
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `stage,strategy,q,accuracy` rows.
pub fn write_learning_curve_csv(trajectories: &[CampaignTrajectory], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["stage", "strategy", "q", "accuracy"])?;
    for row in learning_curve(trajectories) {
        w.write_record([row.stage.to_string(), row.strategy.to_string(), row.q.to_string(), row.accuracy.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `node,median_stage,p5,p95` rows, using node names when given.
pub fn write_exploration_order_csv(stats: &[ExplorationOrder], names: Option<&[String]>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["node", "median_stage", "p5", "p95"])?;
    for s in stats {
        let node = names.and_then(|n| n.get(s.node)).cloned().unwrap_or_else(|| s.node.to_string());
        w.write_record([node, s.median_stage.to_string(), s.p5.to_string(), s.p95.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_json(trajectory: &CampaignTrajectory, path: &Path) -> Result<()> {
    fs::write(path, trajectory.to_json()?).map_err(|e| Error::io(path, e))
}

/// Writes via a temporary file and rename so readers never see a torn file.
pub fn write_trajectory_json_atomic(trajectory: &CampaignTrajectory, path: &Path) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    write_trajectory_json(trajectory, &tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_json(path: &Path) -> Result<CampaignTrajectory> {
    CampaignTrajectory::from_json(&read(path)?)
}

/// Bundled and user-supplied datasets.
pub mod datasets {
    use super::*;

    /// Environment variable naming the default data directory.
    pub const DATA_DIR_ENV: &str = "BLOCKQUERY_DATA_DIR";

    const KARATE_EDGES: &str = include_str!("../data/karate.edges");
    const KARATE_LABELS: &str = include_str!("../data/karate.labels");

    /// Zachary's karate club with the two post-split factions.
    pub fn karate() -> DatasetBundle {
        let origin = Path::new("karate.edges");
        let graph = parse_edge_list(KARATE_EDGES, origin, Convention::undirected()).expect("bundled karate edges parse");
        let truth = parse_labels(KARATE_LABELS, Path::new("karate.labels"), &graph, None).expect("bundled karate labels parse");
        let meta = DatasetMeta { name: "karate".into(), directed: false, source: "bundled".into() };
        DatasetBundle::new(graph, Some(truth), meta).expect("bundled karate is consistent")
    }

    pub fn data_dir() -> Option<PathBuf> {
        std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)
    }

    /// `karate` resolves to the bundled copy. Any other name is looked up as
    /// `<name>.edges` (and optional `<name>.labels`) in `dir`, or in the
    /// default data directory.
    pub fn resolve(name: &str, directed: bool, dir: Option<&Path>) -> Result<DatasetBundle> {
        if name == "karate" && dir.is_none() {
            return Ok(karate());
        }
        let dir = dir
            .map(Path::to_path_buf)
            .or_else(data_dir)
            .ok_or_else(|| Error::Invalid(format!("unknown dataset {name}; set {DATA_DIR_ENV}")))?;
        let edges = dir.join(format!("{name}.edges"));
        if !edges.exists() && name == "karate" {
            return Ok(karate());
        }
        let labels = dir.join(format!("{name}.labels"));
        let labels = labels.exists().then_some(labels);
        let convention = if directed { Convention::directed() } else { Convention::undirected() };
        DatasetBundle::load(name, &edges, labels.as_deref(), convention)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_from_two_lines() {
        let g = parse_edge_list("a b\nb c\n", Path::new("t"), Convention::undirected()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.names().unwrap(), ["a", "b", "c"]);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let g = parse_edge_list("# header\n\nx y  # trailing\n\ty z\n", Path::new("t"), Convention::directed()).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.name(2), "z");
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        let t = Path::new("t");
        assert_eq!(line_of(parse_edge_list("a b\nb a\n", t, Convention::undirected()).unwrap_err()), 2);
        assert!(parse_edge_list("a b\nb a\n", t, Convention::directed()).is_ok());
        assert_eq!(line_of(parse_edge_list("a b\n# c\na a\n", t, Convention::undirected()).unwrap_err()), 3);
        assert!(parse_edge_list("a a\n", t, Convention::directed()).is_ok());
        assert_eq!(line_of(parse_edge_list("a b\nc\n", t, Convention::undirected()).unwrap_err()), 2);
        assert_eq!(line_of(parse_edge_list("a b c\n", t, Convention::undirected()).unwrap_err()), 1);
    }

    #[test]
    fn labels_follow_first_appearance_and_report_problems() {
        let t = Path::new("t");
        let g = parse_edge_list("a b\nb c\n", t, Convention::undirected()).unwrap();
        let (l, names) = parse_labels("c red\na blue\nb red\n", t, &g, None).unwrap();
        assert_eq!(names, ["red", "blue"]);
        assert_eq!(l.as_slice(), [1, 0, 0]);
        let table = vec!["blue".to_string(), "red".to_string()];
        let (l, _) = parse_labels("c red\na blue\nb red\n", t, &g, Some(&table)).unwrap();
        assert_eq!(l.as_slice(), [0, 1, 1]);
        assert_eq!(line_of(parse_labels("a x\nd x\n", t, &g, None).unwrap_err()), 2);
        assert_eq!(line_of(parse_labels("a x\nb y\na x\n", t, &g, None).unwrap_err()), 3);
        assert!(matches!(parse_labels("a x\nb y\n", t, &g, None), Err(Error::Parse { .. })));
        assert_eq!(line_of(parse_labels("a green\n", t, &g, Some(&table)).unwrap_err()), 1);
    }

    #[test]
    fn bundled_karate() {
        let k = datasets::karate();
        assert_eq!(k.graph.n(), 34);
        assert_eq!(k.graph.num_edges(), 78);
        assert_eq!(k.k(), Some(2));
        let truth = k.truth.as_ref().unwrap();
        let one = k.graph.node_by_name("1").unwrap();
        let last = k.graph.node_by_name("34").unwrap();
        assert_ne!(truth.get(one), truth.get(last));
        assert_eq!(k.graph.degree(one), 16);
        assert_eq!(k.graph.degree(last), 17);
    }

    #[test]
    fn loading_is_deterministic() {
        let text = "q w\ne r\nw e\nt q\n";
        let a = parse_edge_list(text, Path::new("t"), Convention::directed()).unwrap();
        let b = parse_edge_list(text, Path::new("t"), Convention::directed()).unwrap();
        assert_eq!(a.names(), b.names());
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn header_only_csv_for_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let curve = dir.path().join("curve.csv");
        write_learning_curve_csv(&[], &curve).unwrap();
        assert_eq!(fs::read_to_string(&curve).unwrap(), "stage,strategy,q,accuracy\n");
        let order = dir.path().join("order.csv");
        write_exploration_order_csv(&[], None, &order).unwrap();
        assert_eq!(fs::read_to_string(&order).unwrap(), "node,median_stage,p5,p95\n");
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("missing").join("curve.csv");
        assert!(matches!(write_learning_curve_csv(&[], &bad), Err(Error::Io { .. })));
    }
}

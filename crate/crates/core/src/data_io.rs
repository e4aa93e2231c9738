//! Reading features, edge lists, and label files keyed by node tokens, and
//! writing clustering results.
//!
//! All three input formats are line oriented. Blank lines and lines starting
//! with `#` are ignored.
//!
//! * features: one row per node, values separated by whitespace or commas,
//!   optionally preceded by a node-id column;
//! * edges: two node ids per line;
//! * labels: a node id and a label token per line.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::affinity::FeatureMatrix;
use crate::engine::ClusteringResult;
use crate::error::{invalid, Error, Result};
use crate::evaluation::Scores;
use crate::graph::Graph;
use crate::harness::RunSpec;

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// The first column of the feature file holds node ids. Without it, rows
    /// are named `0, 1, 2, ...` in file order.
    pub feature_ids: bool,
    /// Drop edges that mention nodes without a feature row instead of
    /// failing.
    pub skip_unknown_edges: bool,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    pub features: Option<FeatureMatrix>,
    pub graph: Option<Graph>,
    /// Reference label per node, `None` where the label file is silent.
    pub truth: Option<Vec<Option<String>>>,
}

struct Lines {
    path: String,
    text: String,
}

impl Lines {
    fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.display().to_string(),
            text,
        })
    }

    /// Non-comment lines as `(1-based line number, tokens)`.
    fn records(&self) -> impl Iterator<Item = (usize, Vec<&str>)> {
        self.text.lines().enumerate().filter_map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let tokens = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            Some((i + 1, tokens))
        })
    }
}

fn data_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

struct Universe {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    closed: bool,
}

impl Universe {
    fn new() -> Self {
        Self {
            ids: Vec::new(),
            index: HashMap::new(),
            closed: false,
        }
    }

    fn insert(&mut self, id: &str) -> Option<usize> {
        if let Some(&i) = self.index.get(id) {
            return Some(i);
        }
        if self.closed {
            return None;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        Some(i)
    }
}

impl Dataset {
    /// Loads whichever of the three files are given and aligns them on node
    /// ids. Node order follows the feature file, else first appearance in
    /// the edge list, else the label file.
    pub fn load(
        features: Option<&Path>,
        edges: Option<&Path>,
        labels: Option<&Path>,
        opts: LoadOptions,
    ) -> Result<Self> {
        if features.is_none() && edges.is_none() && labels.is_none() {
            return Err(invalid("at least one of features, edges, labels is required"));
        }
        let mut universe = Universe::new();

        let features = match features {
            Some(path) => {
                let lines = Lines::read(path)?;
                let fm = read_features(&lines, opts, &mut universe)?;
                universe.closed = true;
                Some(fm)
            }
            None => None,
        };

        let mut edge_pairs = Vec::new();
        if let Some(path) = edges {
            let lines = Lines::read(path)?;
            let mut skipped = 0usize;
            let mut loops = 0usize;
            for (line, tokens) in lines.records() {
                if tokens.len() != 2 {
                    return Err(data_error(&lines.path, line, "expected two node ids"));
                }
                let (u, v) = match (universe.insert(tokens[0]), universe.insert(tokens[1])) {
                    (Some(u), Some(v)) => (u, v),
                    _ if opts.skip_unknown_edges => {
                        skipped += 1;
                        continue;
                    }
                    (None, _) => {
                        return Err(data_error(&lines.path, line, format!("node '{}' has no feature row", tokens[0])))
                    }
                    (_, None) => {
                        return Err(data_error(&lines.path, line, format!("node '{}' has no feature row", tokens[1])))
                    }
                };
                if u == v {
                    loops += 1;
                    continue;
                }
                edge_pairs.push((u, v));
            }
            if skipped > 0 {
                warn!("{}: skipped {skipped} edges touching nodes without features", lines.path);
            }
            if loops > 0 {
                warn!("{}: ignored {loops} self-loops", lines.path);
            }
        }

        let mut label_pairs = Vec::new();
        if let Some(path) = labels {
            let lines = Lines::read(path)?;
            for (line, tokens) in lines.records() {
                if tokens.len() != 2 {
                    return Err(data_error(&lines.path, line, "expected a node id and a label"));
                }
                let Some(i) = universe.insert(tokens[0]) else {
                    return Err(data_error(&lines.path, line, format!("node '{}' has no feature row", tokens[0])));
                };
                label_pairs.push((line, i, tokens[1].to_string()));
            }
        }

        let n = universe.ids.len();
        if n == 0 {
            return Err(Error::Dataset("no nodes found".into()));
        }
        let graph = match edges {
            Some(_) => Some(Graph::new(n, edge_pairs)?),
            None => None,
        };
        let truth = match labels {
            Some(path) => {
                let mut truth = vec![None; n];
                for (line, i, label) in label_pairs {
                    if truth[i].replace(label).is_some() {
                        return Err(data_error(
                            &path.display().to_string(),
                            line,
                            format!("duplicate label for node '{}'", universe.ids[i]),
                        ));
                    }
                }
                Some(truth)
            }
            None => None,
        };
        Ok(Self {
            ids: universe.ids,
            index: universe.index,
            features,
            graph,
            truth,
        })
    }

    /// Assembles a dataset from parts already in memory. Node ids default to
    /// `0..n`.
    pub fn from_parts(
        features: Option<FeatureMatrix>,
        graph: Option<Graph>,
        truth: Option<Vec<Option<String>>>,
    ) -> Result<Self> {
        let sizes: Vec<usize> = [
            features.as_ref().map(FeatureMatrix::n),
            graph.as_ref().map(Graph::n),
            truth.as_ref().map(Vec::len),
        ]
        .into_iter()
        .flatten()
        .collect();
        let Some(&n) = sizes.first() else {
            return Err(invalid("dataset needs at least one part"));
        };
        if sizes.iter().any(|&m| m != n) {
            return Err(Error::Dataset(format!("parts disagree on node count: {sizes:?}")));
        }
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(Self {
            ids,
            index,
            features,
            graph,
            truth,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Metrics of `labels` against the reference labels, restricted to
    /// nodes that have one. `None` without a label file.
    pub fn score(&self, labels: &[usize]) -> Option<Result<Scores>> {
        let truth = self.truth.as_ref()?;
        let (pred, gold): (Vec<usize>, Vec<&str>) = labels
            .iter()
            .zip(truth)
            .filter_map(|(&p, t)| t.as_deref().map(|t| (p, t)))
            .unzip();
        Some(Scores::compute(&pred, &gold))
    }

    /// Number of nodes carrying a reference label.
    pub fn labeled_count(&self) -> usize {
        self.truth
            .as_ref()
            .map_or(0, |t| t.iter().filter(|x| x.is_some()).count())
    }
}

fn read_features(lines: &Lines, opts: LoadOptions, universe: &mut Universe) -> Result<FeatureMatrix> {
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    let mut rows = 0usize;
    for (line, tokens) in lines.records() {
        let (id, nums) = if opts.feature_ids {
            match tokens.split_first() {
                Some((id, rest)) => (id.to_string(), rest),
                None => continue,
            }
        } else {
            (rows.to_string(), &tokens[..])
        };
        match dim {
            None => dim = Some(nums.len()),
            Some(d) if d != nums.len() => {
                return Err(data_error(
                    &lines.path,
                    line,
                    format!("expected {d} feature values, found {}", nums.len()),
                ))
            }
            _ => {}
        }
        if universe.index.contains_key(&id) {
            return Err(data_error(&lines.path, line, format!("duplicate feature row for node '{id}'")));
        }
        universe.insert(&id);
        for t in nums {
            let v: f64 = t
                .parse()
                .map_err(|_| data_error(&lines.path, line, format!("not a number: '{t}'")))?;
            if !v.is_finite() {
                return Err(data_error(&lines.path, line, format!("non-finite value '{t}'")));
            }
            values.push(v);
        }
        rows += 1;
    }
    FeatureMatrix::new(rows, dim.unwrap_or(0), values)
}

/// One node of a written result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeLabel {
    pub id: String,
    /// Exemplar chosen from the messages.
    pub assigned: String,
    /// Final label, equal to `assigned` unless smoothing changed it.
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub smoothed: bool,
    pub clusters: usize,
}

/// Serialized form of a clustering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub config: RunSpec,
    pub preference: f64,
    /// Exemplar ids in node order.
    pub exemplars: Vec<String>,
    pub labels: Vec<NodeLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Scores>,
    pub diagnostics: Diagnostics,
    /// `None` when the assigned labeling violates a constraint.
    pub net_similarity: Option<f64>,
}

impl ResultDocument {
    pub fn new(
        config: RunSpec,
        preference: f64,
        result: &ClusteringResult,
        dataset: &Dataset,
    ) -> Result<Self> {
        if result.labels.len() != dataset.n() {
            return Err(invalid("result does not match the dataset"));
        }
        let ids = dataset.ids();
        let labels = (0..dataset.n())
            .map(|i| NodeLabel {
                id: ids[i].clone(),
                assigned: ids[result.assigned[i]].clone(),
                label: ids[result.labels[i]].clone(),
            })
            .collect();
        let metrics = dataset.score(&result.labels).transpose()?;
        Ok(Self {
            config,
            preference,
            exemplars: result.exemplars.iter().map(|&e| ids[e].clone()).collect(),
            labels,
            metrics,
            diagnostics: Diagnostics {
                iterations: result.iterations,
                converged: result.converged,
                smoothed: result.smoothed,
                clusters: result.exemplars.len(),
            },
            net_similarity: result.net_similarity.is_finite().then_some(result.net_similarity),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Reads a `node-id label` file into `(id, label)` pairs in file order.
pub fn read_label_file(path: &Path) -> Result<Vec<(String, String)>> {
    let lines = Lines::read(path)?;
    lines
        .records()
        .map(|(line, tokens)| match tokens.as_slice() {
            [id, label] => Ok((id.to_string(), label.to_string())),
            _ => Err(data_error(&lines.path, line, "expected a node id and a label")),
        })
        .collect()
}

/// Location of the bundled datasets, relative to a crate manifest.
pub fn workspace_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

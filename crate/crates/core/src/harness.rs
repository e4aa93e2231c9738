//! Experiment drivers: single runs, threshold and cluster-count sweeps, and
//! the relabeled-network ablation.

use log::warn;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{calibrate_preference, FeatureMetric, SimilarityMatrix};
use crate::data_io::Dataset;
use crate::engine::{self, ClusteringResult, EngineConfig, Mode};
use crate::error::{invalid, Error, Result};
use crate::evaluation::Scores;
use crate::graph::{Graph, NeighborhoodMask, TopoDistance};

/// Cells of a sweep run concurrently only below this size; larger problems
/// parallelize inside each run instead.
const PAR_CELL_MAX_N: usize = 256;

/// How the shared preference is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreferenceSpec {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
    /// Calibrate until exactly this many exemplars emerge.
    TargetK(usize),
}

/// Everything needed to reproduce one clustering run on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub engine: EngineConfig,
    pub feature_metric: FeatureMetric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topo: Option<TopoDistance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub preference: PreferenceSpec,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.engine.validate()?;
        match (self.engine.mode, self.topo, self.tau) {
            (Mode::Geometric, Some(kind), Some(tau)) => kind.validate_tau(tau),
            (Mode::Geometric, _, _) => Err(invalid("geometric mode needs a topological distance and a threshold")),
            (Mode::Standard, _, _) => Ok(()),
        }
    }

    fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau: Some(tau),
            ..self.clone()
        }
    }

    fn with_target(&self, k: usize) -> Self {
        Self {
            preference: PreferenceSpec::TargetK(k),
            ..self.clone()
        }
    }
}

/// A finished run with the preference that produced it.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub preference: f64,
    pub result: ClusteringResult,
    pub scores: Option<Scores>,
}

/// Similarity matrix for the dataset's features.
pub fn similarity_for(dataset: &Dataset, metric: FeatureMetric) -> Result<SimilarityMatrix> {
    let features = dataset
        .features
        .as_ref()
        .ok_or_else(|| Error::Dataset("clustering needs a feature file".into()))?;
    SimilarityMatrix::from_features(features, metric)
}

fn mask_for(graph: Option<&Graph>, spec: &RunSpec) -> Result<Option<NeighborhoodMask>> {
    if spec.engine.mode == Mode::Standard {
        return Ok(None);
    }
    let g = graph.ok_or_else(|| Error::Dataset("geometric mode needs an edge list".into()))?;
    let (kind, tau) = match (spec.topo, spec.tau) {
        (Some(k), Some(t)) => (k, t),
        _ => return Err(invalid("geometric mode needs a topological distance and a threshold")),
    };
    NeighborhoodMask::build(g, kind, tau).map(Some)
}

/// Runs one configuration against a given graph (which may differ from
/// the dataset's own, e.g. relabeled).
fn run_on_graph(
    dataset: &Dataset,
    s: &SimilarityMatrix,
    graph: Option<&Graph>,
    spec: &RunSpec,
) -> Result<RunOutcome> {
    spec.validate()?;
    let mask = mask_for(graph, spec)?;
    let graph = if spec.engine.mode == Mode::Geometric { graph } else { None };
    let (preference, result) = match spec.preference {
        PreferenceSpec::TargetK(k) => {
            let c = calibrate_preference(s, &spec.engine, mask.as_ref(), graph, k)?;
            (c.preference, c.result)
        }
        PreferenceSpec::Value(p) => (p, engine::run(&s.with_preference(p), mask.as_ref(), graph, &spec.engine)?),
        PreferenceSpec::Median => {
            let p = s.median_off_diagonal();
            (p, engine::run(&s.with_preference(p), mask.as_ref(), graph, &spec.engine)?)
        }
    };
    let scores = dataset.score(&result.labels).transpose()?;
    Ok(RunOutcome {
        preference,
        result,
        scores,
    })
}

/// One clustering run on the dataset's own network.
pub fn cluster(dataset: &Dataset, s: &SimilarityMatrix, spec: &RunSpec) -> Result<RunOutcome> {
    run_on_graph(dataset, s, dataset.graph.as_ref(), spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Threshold or cluster count of this cell.
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// `"tau"` or `"k"`.
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Axis value with the highest NMI, smallest value on ties.
    pub optimum: Option<f64>,
}

/// Highest-NMI row, smallest axis value among ties; failed rows never win.
pub fn select_optimum(rows: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .filter_map(|r| r.scores.map(|s| (r.value, s.nmi)))
        .fold(None, |best: Option<(f64, f64)>, (v, nmi)| match best {
            Some((bv, bn)) if bn > nmi || (bn == nmi && bv <= v) => Some((bv, bn)),
            _ => Some((v, nmi)),
        })
        .map(|(v, _)| v)
}

fn row_from(value: f64, outcome: Result<RunOutcome>) -> SweepRow {
    match outcome {
        Ok(o) => SweepRow {
            value,
            preference: Some(o.preference),
            clusters: Some(o.result.k()),
            scores: o.scores,
            error: None,
        },
        Err(e) => {
            warn!("sweep cell {value} failed: {e}");
            SweepRow {
                value,
                preference: None,
                clusters: None,
                scores: None,
                error: Some(e.to_string()),
            }
        }
    }
}

fn map_cells<T, F>(n: usize, cells: &[T], f: F) -> Vec<SweepRow>
where
    T: Sync,
    F: Fn(&T) -> SweepRow + Sync + Send,
{
    if n < PAR_CELL_MAX_N {
        cells.par_iter().map(f).collect()
    } else {
        cells.iter().map(f).collect()
    }
}

fn require_truth(dataset: &Dataset) -> Result<()> {
    if dataset.truth.is_none() {
        return Err(Error::Dataset("this command needs a label file".into()));
    }
    Ok(())
}

/// Geometric runs over a grid of thresholds, each calibrated to `target_k`.
pub fn sweep_tau(
    dataset: &Dataset,
    s: &SimilarityMatrix,
    spec: &RunSpec,
    grid: &[f64],
    target_k: usize,
) -> Result<SweepReport> {
    require_truth(dataset)?;
    if spec.engine.mode != Mode::Geometric || spec.topo.is_none() {
        return Err(invalid("threshold sweeps need geometric mode and a topological distance"));
    }
    let base = spec.with_target(target_k);
    let rows = map_cells(dataset.n(), grid, |&tau| row_from(tau, cluster(dataset, s, &base.with_tau(tau))));
    Ok(SweepReport {
        axis: "tau".into(),
        optimum: select_optimum(&rows),
        rows,
    })
}

/// One calibrated run per requested cluster count.
pub fn sweep_k(dataset: &Dataset, s: &SimilarityMatrix, spec: &RunSpec, ks: &[usize]) -> Result<SweepReport> {
    require_truth(dataset)?;
    let rows = map_cells(dataset.n(), ks, |&k| row_from(k as f64, cluster(dataset, s, &spec.with_target(k))));
    Ok(SweepReport {
        axis: "k".into(),
        optimum: select_optimum(&rows),
        rows,
    })
}

/// Uniformly random permutation of `0..n` by Fisher-Yates over a ChaCha8
/// stream. `seed` selects the key and `stream` the ChaCha stream, so each
/// repetition of an experiment draws independently of the others.
pub fn seeded_permutation(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

// unbiased draw from [0, m) by rejection
fn bounded(rng: &mut ChaCha8Rng, m: u64) -> u64 {
    let limit = u64::MAX - u64::MAX % m;
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % m;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub repetition: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    /// Completed runs; failed runs are excluded from the statistics.
    pub repetitions: usize,
    pub failed: usize,
    pub mean: Scores,
    /// Sample standard deviation (zero for a single run).
    pub std: Scores,
    pub runs: Vec<AblationRun>,
}

#[derive(Clone, Copy, Debug)]
pub struct AblationOptions {
    pub repetitions: usize,
    pub seed: u64,
    pub target_k: usize,
    /// Use the identity instead of random relabelings.
    pub identity: bool,
}

/// Clusters the data against randomly relabeled copies of its network.
/// Features and reference labels keep their node order while the network
/// structure is attached to shuffled nodes.
pub fn ablation(dataset: &Dataset, s: &SimilarityMatrix, spec: &RunSpec, opts: AblationOptions) -> Result<AblationReport> {
    require_truth(dataset)?;
    let graph = dataset
        .graph
        .as_ref()
        .ok_or_else(|| Error::Dataset("ablation needs an edge list".into()))?;
    let spec = spec.with_target(opts.target_k);
    spec.validate()?;
    let n = dataset.n();
    let one = |rep: &usize| -> AblationRun {
        let perm = if opts.identity {
            (0..n).collect()
        } else {
            seeded_permutation(n, opts.seed, *rep as u64)
        };
        let outcome = graph
            .permute(&perm)
            .and_then(|g| run_on_graph(dataset, s, Some(&g), &spec));
        match outcome {
            Ok(o) => AblationRun {
                repetition: *rep,
                scores: o.scores,
                error: None,
            },
            Err(e) => {
                warn!("ablation repetition {rep} failed: {e}");
                AblationRun {
                    repetition: *rep,
                    scores: None,
                    error: Some(e.to_string()),
                }
            }
        }
    };
    let reps: Vec<usize> = (0..opts.repetitions).collect();
    let runs: Vec<AblationRun> = if n < PAR_CELL_MAX_N {
        reps.par_iter().map(one).collect()
    } else {
        reps.iter().map(one).collect()
    };
    let done: Vec<Scores> = runs.iter().filter_map(|r| r.scores).collect();
    let (mean, std) = summarize(&done);
    Ok(AblationReport {
        seed: opts.seed,
        repetitions: done.len(),
        failed: runs.len() - done.len(),
        mean,
        std,
        runs,
    })
}

/// Mean and sample standard deviation of each metric.
pub fn summarize(values: &[Scores]) -> (Scores, Scores) {
    let stat = |f: fn(&Scores) -> f64| {
        let n = values.len();
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = values.iter().map(f).sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (f(v) - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (nmi, cr, f1) = (stat(|s| s.nmi), stat(|s| s.cr), stat(|s| s.f1));
    (
        Scores {
            nmi: nmi.0,
            cr: cr.0,
            f1: f1.0,
        },
        Scores {
            nmi: nmi.1,
            cr: cr.1,
            f1: f1.1,
        },
    )
}

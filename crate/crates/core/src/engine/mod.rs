//! Max-sum message passing for affinity propagation and its
//! network-constrained variant.
//!
//! Each iteration performs one full responsibility sweep and one full
//! availability sweep, both damped against their previous values, starting
//! from zero messages. The exemplar set is tracked after every iteration and
//! the run stops once it has stayed the same for `conv_iter` consecutive
//! iterations. Final labels are assigned once, at termination.

mod assign;
mod messages;
mod objective;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::affinity::SimilarityMatrix;
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NeighborhoodMask};

pub use assign::{assign_geometric, assign_standard, estimate_exemplars, exemplar_set, smooth_labels};
pub use messages::{damp, update_availabilities, update_availabilities_penalty_form, update_responsibilities};
pub use objective::{brute_force_optimum, net_similarity, Optimum, BRUTE_FORCE_MAX_N};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Standard,
    Geometric,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Standard => "standard",
            Mode::Geometric => "geometric",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "geometric" => Ok(Mode::Geometric),
            other => Err(invalid(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Damping factor in `[0, 1)`.
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations the exemplar set must stay unchanged to declare convergence.
    pub conv_iter: usize,
    pub mode: Mode,
    /// Majority-vote smoothing over graph adjacency after assignment
    /// (geometric mode only).
    pub smoothing: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            damping: 0.9,
            max_iter: 1000,
            conv_iter: 100,
            mode: Mode::Standard,
            smoothing: true,
        }
    }
}

impl EngineConfig {
    pub fn geometric() -> Self {
        Self {
            mode: Mode::Geometric,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(invalid(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if self.max_iter == 0 || self.conv_iter == 0 {
            return Err(invalid("max_iter and conv_iter must be positive"));
        }
        if self.conv_iter > self.max_iter {
            return Err(invalid(format!(
                "conv_iter ({}) exceeds max_iter ({})",
                self.conv_iter, self.max_iter
            )));
        }
        Ok(())
    }
}

/// Responsibility and availability matrices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageState {
    n: usize,
    r: Vec<f64>,
    a: Vec<f64>,
    iteration: usize,
}

impl MessageState {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            r: vec![0.0; n * n],
            a: vec![0.0; n * n],
            iteration: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn responsibilities(&self) -> &[f64] {
        &self.r
    }

    pub fn availabilities(&self) -> &[f64] {
        &self.a
    }

    pub fn r(&self, i: usize, k: usize) -> f64 {
        self.r[i * self.n + k]
    }

    pub fn a(&self, i: usize, k: usize) -> f64 {
        self.a[i * self.n + k]
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub exemplars: usize,
    /// Largest absolute change of any damped message in this iteration.
    pub max_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Final labels: the exemplar index of each point, after smoothing when
    /// smoothing ran.
    pub labels: Vec<usize>,
    /// Labels as assigned from the messages, before smoothing.
    pub assigned: Vec<usize>,
    /// Exemplar indices, ascending.
    pub exemplars: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Net similarity of `assigned`; negative infinity for an invalid labeling.
    pub net_similarity: f64,
    pub smoothed: bool,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.exemplars.len()
    }
}

/// Stepwise driver over a similarity matrix and optional neighborhood mask.
pub struct Propagation<'a> {
    s: &'a SimilarityMatrix,
    mask: Option<&'a NeighborhoodMask>,
    damping: f64,
    state: MessageState,
    scratch: Vec<f64>,
}

impl<'a> Propagation<'a> {
    /// The mask, when given, constrains availabilities.
    pub fn new(s: &'a SimilarityMatrix, mask: Option<&'a NeighborhoodMask>, damping: f64) -> Result<Self> {
        if s.preference().is_none() {
            return Err(invalid("preference must be set before message passing"));
        }
        if let Some(m) = mask {
            if m.n() != s.n() {
                return Err(invalid(format!(
                    "mask covers {} points, similarity matrix {}",
                    m.n(),
                    s.n()
                )));
            }
        }
        let n = s.n();
        Ok(Self {
            s,
            mask,
            damping,
            state: MessageState::zeros(n),
            scratch: vec![0.0; n * n],
        })
    }

    pub fn state(&self) -> &MessageState {
        &self.state
    }

    /// One damped responsibility sweep followed by one damped availability
    /// sweep. Returns the largest message change.
    pub fn step(&mut self) -> Result<f64> {
        let n = self.state.n;
        let iteration = self.state.iteration + 1;
        update_responsibilities(self.s, &self.state.a, &mut self.scratch);
        let dr = damp(&mut self.state.r, &self.scratch, self.damping)
            .ok_or(Error::Divergence { iteration })?;
        update_availabilities(&self.state.r, n, self.mask, &mut self.scratch);
        let da = damp(&mut self.state.a, &self.scratch, self.damping)
            .ok_or(Error::Divergence { iteration })?;
        self.state.iteration = iteration;
        Ok(dr.max(da))
    }

    /// Current per-point argmax labels.
    pub fn estimate(&self) -> Vec<usize> {
        estimate_exemplars(self.s, &self.state.a)
    }
}

/// Runs message passing to convergence and assigns clusters.
///
/// `mask` must be present exactly in geometric mode; `graph` is needed when
/// smoothing is enabled in geometric mode.
pub fn run(
    s: &SimilarityMatrix,
    mask: Option<&NeighborhoodMask>,
    graph: Option<&Graph>,
    config: &EngineConfig,
) -> Result<ClusteringResult> {
    run_traced(s, mask, graph, config, |_| {})
}

pub fn run_traced(
    s: &SimilarityMatrix,
    mask: Option<&NeighborhoodMask>,
    graph: Option<&Graph>,
    config: &EngineConfig,
    mut trace: impl FnMut(&IterationTrace),
) -> Result<ClusteringResult> {
    config.validate()?;
    let n = s.n();
    match (config.mode, mask) {
        (Mode::Geometric, None) => return Err(invalid("geometric mode requires a neighborhood mask")),
        (Mode::Standard, Some(_)) => return Err(invalid("standard mode takes no neighborhood mask")),
        _ => {}
    }
    let smoothing = config.mode == Mode::Geometric && config.smoothing;
    if let (true, Some(g)) = (smoothing, graph) {
        if g.n() != n {
            return Err(invalid(format!("graph has {} vertices, expected {n}", g.n())));
        }
    } else if smoothing {
        return Err(invalid("label smoothing requires the graph"));
    }
    if s.preference().is_none() {
        return Err(invalid("preference must be set before message passing"));
    }
    if n == 1 {
        return Ok(ClusteringResult {
            labels: vec![0],
            assigned: vec![0],
            exemplars: vec![0],
            iterations: 0,
            converged: true,
            net_similarity: s.get(0, 0),
            smoothed: smoothing,
        });
    }

    let mut engine = Propagation::new(s, mask, config.damping)?;
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0usize;
    let mut converged = false;
    while engine.state().iteration() < config.max_iter {
        let max_delta = engine.step()?;
        let current = exemplar_set(&engine.estimate());
        if current == exemplars {
            stable += 1;
        } else {
            stable = 1;
            exemplars = current;
        }
        trace(&IterationTrace {
            iteration: engine.state().iteration(),
            exemplars: exemplars.len(),
            max_delta,
        });
        if !exemplars.is_empty() && stable >= config.conv_iter {
            converged = true;
            break;
        }
    }
    let iterations = engine.state().iteration();
    if exemplars.is_empty() {
        return Err(Error::NonConvergence { iterations });
    }

    let a = engine.state().availabilities();
    let assigned = match mask {
        Some(m) => assign_geometric(s, a, &exemplars, m),
        None => assign_standard(s, a, &exemplars),
    };
    let net = net_similarity(s, &assigned, mask);
    let labels = match graph {
        Some(g) if smoothing => smooth_labels(&assigned, g),
        _ => assigned.clone(),
    };
    Ok(ClusteringResult {
        labels,
        assigned,
        exemplars,
        iterations,
        converged,
        net_similarity: net,
        smoothed: smoothing,
    })
}

//! Feature-space similarity matrices, the shared preference, and preference
//! calibration towards a requested number of clusters.

use std::fmt;

use log::{debug, warn};
use rayon::prelude::*;

use crate::engine::{self, ClusteringResult, EngineConfig};
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NeighborhoodMask};

/// Row-major `n x m` matrix of point features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * m {
            return Err(invalid(format!(
                "feature buffer has {} values, expected {n} x {m}",
                values.len()
            )));
        }
        Ok(Self { n, m, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != m {
                return Err(invalid(format!("row {i} has {} features, expected {m}", r.len())));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), m, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

/// Distance between feature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMetric {
    Euclidean,
    Manhattan,
    Cosine,
}

impl fmt::Display for FeatureMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMetric::Euclidean => "euclidean",
            FeatureMetric::Manhattan => "manhattan",
            FeatureMetric::Cosine => "cosine",
        })
    }
}

impl std::str::FromStr for FeatureMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(FeatureMetric::Euclidean),
            "manhattan" => Ok(FeatureMetric::Manhattan),
            "cosine" => Ok(FeatureMetric::Cosine),
            other => Err(invalid(format!("unknown feature metric '{other}'"))),
        }
    }
}

/// Distance between two feature vectors of equal length.
///
/// Cosine distance involving a zero vector is 1.
pub fn feature_distance(p: &[f64], q: &[f64], metric: FeatureMetric) -> Result<f64> {
    if p.len() != q.len() {
        return Err(invalid(format!(
            "dimension mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(match metric {
        FeatureMetric::Euclidean => euclidean(p, q),
        FeatureMetric::Manhattan => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
        FeatureMetric::Cosine => cosine_with_norms(p, q, norm(p), norm(q)),
    })
}

fn euclidean(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn cosine_with_norms(p: &[f64], q: &[f64], np: f64, nq: f64) -> f64 {
    if np == 0.0 || nq == 0.0 {
        return 1.0;
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    (1.0 - dot / (np * nq)).max(0.0)
}

/// Dense `n x n` similarity matrix with a shared preference on the diagonal.
#[derive(Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    preference: Option<f64>,
}

impl fmt::Debug for SimilarityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimilarityMatrix")
            .field("n", &self.n)
            .field("preference", &self.preference)
            .finish()
    }
}

impl SimilarityMatrix {
    /// Wraps a row-major buffer. Diagonal entries are ignored until a
    /// preference is set.
    pub fn from_dense(n: usize, mut values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(invalid(format!(
                "similarity buffer has {} values, expected {n} x {n}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("similarities must be finite"));
        }
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        Ok(Self {
            n,
            values,
            preference: None,
        })
    }

    /// Off-diagonal similarities `s(i, j) = -dist(i, j)`.
    pub fn from_features(f: &FeatureMatrix, metric: FeatureMetric) -> Result<Self> {
        let n = f.n();
        if n < 2 {
            return Err(invalid("need at least two points to build similarities"));
        }
        let norms: Vec<f64> = (0..n).map(|i| norm(f.row(i))).collect();
        let mut values = vec![0.0; n * n];
        // upper triangle by rows, then mirror
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let p = f.row(i);
            for (j, cell) in row.iter_mut().enumerate().skip(i + 1) {
                let q = f.row(j);
                let d = match metric {
                    FeatureMetric::Euclidean => euclidean(p, q),
                    FeatureMetric::Manhattan => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
                    FeatureMetric::Cosine => cosine_with_norms(p, q, norms[i], norms[j]),
                };
                *cell = -d;
            }
        });
        for i in 0..n {
            for j in 0..i {
                values[i * n + j] = values[j * n + i];
            }
        }
        Ok(Self {
            n,
            values,
            preference: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn preference(&self) -> Option<f64> {
        self.preference
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Copy with every diagonal entry set to `p`.
    pub fn with_preference(&self, p: f64) -> Self {
        let mut out = self.clone();
        out.set_preference(p);
        out
    }

    pub fn set_preference(&mut self, p: f64) {
        for i in 0..self.n {
            self.values[i * self.n + i] = p;
        }
        self.preference = Some(p);
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n;
        self.values
            .iter()
            .enumerate()
            .filter(move |(idx, _)| idx / n != idx % n)
            .map(|(_, &v)| v)
    }

    /// Smallest and largest off-diagonal similarity.
    pub fn off_diagonal_range(&self) -> (f64, f64) {
        if self.n < 2 {
            let p = self.preference.unwrap_or(0.0);
            return (p, p);
        }
        self.off_diagonal()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Median of the off-diagonal similarities (mean of the two middle
    /// values for an even count).
    pub fn median_off_diagonal(&self) -> f64 {
        let mut vals: Vec<f64> = self.off_diagonal().collect();
        if vals.is_empty() {
            return self.preference.unwrap_or(0.0);
        }
        let mid = vals.len() / 2;
        let (_, &mut upper, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
        if vals.len() % 2 == 1 {
            upper
        } else {
            let lower = vals[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower + upper)
        }
    }
}

/// Limits of the preference search.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationLimits {
    pub max_bisections: usize,
    pub linear_probes: usize,
    /// Times the initial bracket may be widened when an end does not reach
    /// the target.
    pub max_expansions: usize,
    /// Bisection steps spent on each scan interval that straddles the target.
    pub refine_steps: usize,
    /// Bisection stops once an interval is narrower than this fraction of
    /// the initial bracket.
    pub min_width: f64,
}

impl Default for CalibrationLimits {
    fn default() -> Self {
        Self {
            max_bisections: 50,
            linear_probes: 64,
            max_expansions: 8,
            refine_steps: 16,
            min_width: 1e-6,
        }
    }
}

/// Outcome of a successful calibration.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub preference: f64,
    pub result: ClusteringResult,
    pub probes: usize,
}

/// Searches for a shared preference whose converged run yields exactly
/// `target_k` exemplars.
///
/// The bracket starts at `[min - range, max]` over the off-diagonal
/// similarities and is bisected on the exemplar count. If the probed counts
/// contradict monotonicity, or bisection runs out of steps, a linear scan of
/// the bracket is tried before giving up.
pub fn calibrate_preference(
    s: &SimilarityMatrix,
    config: &EngineConfig,
    mask: Option<&NeighborhoodMask>,
    graph: Option<&Graph>,
    target_k: usize,
) -> Result<Calibration> {
    calibrate_with_limits(s, config, mask, graph, target_k, CalibrationLimits::default())
}

pub fn calibrate_with_limits(
    s: &SimilarityMatrix,
    config: &EngineConfig,
    mask: Option<&NeighborhoodMask>,
    graph: Option<&Graph>,
    target_k: usize,
    limits: CalibrationLimits,
) -> Result<Calibration> {
    let n = s.n();
    if target_k == 0 || target_k > n {
        return Err(invalid(format!("target K={target_k} outside [1, {n}]")));
    }
    let mut search = Search {
        work: s.clone(),
        config,
        mask,
        graph,
        target: target_k,
        probes: 0,
        closest: None,
    };

    let (min_s, max_s) = s.off_diagonal_range();
    let range = (max_s - min_s).max(1.0);
    let mut lo = min_s - (max_s - min_s);
    let mut hi = max_s;
    if n == 1 {
        lo = -1.0;
        hi = 1.0;
    }

    let mut k_hi = search.probe(hi)?;
    if let Found(c) = k_hi {
        return Ok(c);
    }
    let mut expansions = 0;
    while k_hi.count() < target_k && expansions < limits.max_expansions {
        hi += range * f64::from(1u32 << expansions);
        expansions += 1;
        k_hi = search.probe(hi)?;
        if let Found(c) = k_hi {
            return Ok(c);
        }
    }
    let mut k_lo = search.probe(lo)?;
    if let Found(c) = k_lo {
        return Ok(c);
    }
    expansions = 0;
    while k_lo.count() > target_k && expansions < limits.max_expansions {
        lo -= range * f64::from(1u32 << expansions);
        expansions += 1;
        k_lo = search.probe(lo)?;
        if let Found(c) = k_lo {
            return Ok(c);
        }
    }
    let (bracket_lo, bracket_hi) = (lo, hi);
    let min_width = (hi - lo) * limits.min_width;

    // Counts are not guaranteed monotone in the preference; bisection gives
    // way to the scan below at the first violation.
    let mut monotone = k_lo.count() <= target_k && target_k <= k_hi.count();
    if monotone {
        let (mut klo, mut khi) = (k_lo.count(), k_hi.count());
        for _ in 0..limits.max_bisections {
            let mid = 0.5 * (lo + hi);
            if hi - lo < min_width || mid <= lo || mid >= hi {
                break;
            }
            match search.probe(mid)? {
                Found(c) => return Ok(c),
                Count(k, _) => {
                    if k < klo || k > khi {
                        warn!("exemplar count not monotone in preference near {mid}: K={k} outside [{klo}, {khi}]");
                        monotone = false;
                        break;
                    }
                    if k < target_k {
                        lo = mid;
                        klo = k;
                    } else {
                        hi = mid;
                        khi = k;
                    }
                }
            }
        }
    }
    debug!(
        "bisection did not hit K={target_k} (monotone={monotone}); scanning {} preferences",
        limits.linear_probes
    );
    let steps = limits.linear_probes.max(2);
    let mut scan = Vec::with_capacity(steps);
    for t in 0..steps {
        let p = bracket_lo + (bracket_hi - bracket_lo) * t as f64 / (steps - 1) as f64;
        match search.probe(p)? {
            Found(c) => return Ok(c),
            Count(k, settled) => scan.push((p, k, settled)),
        }
    }
    // Bisect every scan interval whose ends straddle the target, starting
    // with those next to a converged count closest to the target.
    let below = |k: usize| k < target_k;
    let mut straddling: Vec<(usize, usize)> = scan
        .windows(2)
        .enumerate()
        .filter(|(_, w)| below(w[0].1) != below(w[1].1))
        .map(|(t, w)| {
            let gap = [w[0], w[1]]
                .iter()
                .filter(|e| e.2)
                .map(|e| e.1.abs_diff(target_k))
                .min()
                .unwrap_or(usize::MAX);
            (gap, t)
        })
        .collect();
    straddling.sort();
    for (_, t) in straddling {
        let ((mut a, ka, _), (mut b, _, _)) = (scan[t], scan[t + 1]);
        for _ in 0..limits.refine_steps {
            let mid = 0.5 * (a + b);
            if b - a < min_width || mid <= a || mid >= b {
                break;
            }
            match search.probe(mid)? {
                Found(c) => return Ok(c),
                Count(k, _) if below(k) == below(ka) => a = mid,
                Count(..) => b = mid,
            }
        }
    }
    Err(Error::Calibration {
        target: target_k,
        closest: search.closest.unwrap_or(0),
        reason: format!("no probe among {} produced the target", search.probes),
    })
}

enum Probe {
    Found(Calibration),
    /// Exemplar count of a rejected probe and whether that run converged.
    Count(usize, bool),
}
use Probe::{Count, Found};

impl Probe {
    fn count(&self) -> usize {
        match self {
            Found(c) => c.result.exemplars.len(),
            Count(k, _) => *k,
        }
    }
}

struct Search<'a> {
    work: SimilarityMatrix,
    config: &'a EngineConfig,
    mask: Option<&'a NeighborhoodMask>,
    graph: Option<&'a Graph>,
    target: usize,
    probes: usize,
    closest: Option<usize>,
}

impl Search<'_> {
    /// Runs the engine at preference `p`. A run that ends without any
    /// exemplar counts as `K = 0`; a run that stops at the iteration cap
    /// still steers the search by its exemplar count but is never accepted.
    fn probe(&mut self, p: f64) -> Result<Probe> {
        self.work.set_preference(p);
        self.probes += 1;
        let result = match engine::run(&self.work, self.mask, self.graph, self.config) {
            Ok(r) => r,
            Err(Error::NonConvergence { .. }) => {
                debug!("calibration probe {}: preference {p} -> no exemplar", self.probes);
                self.note(0);
                return Ok(Count(0, false));
            }
            Err(e) => {
                return Err(Error::Calibration {
                    target: self.target,
                    closest: self.closest.unwrap_or(0),
                    reason: format!("probe at preference {p} failed: {e}"),
                })
            }
        };
        if !result.converged {
            let k = result.exemplars.len();
            warn!(
                "calibration probe at preference {p} did not converge within {} iterations (K={k})",
                self.config.max_iter
            );
            return Ok(Count(k, false));
        }
        let k = result.exemplars.len();
        debug!("calibration probe {}: preference {p} -> K={k}", self.probes);
        self.note(k);
        if k == self.target {
            Ok(Found(Calibration {
                preference: p,
                result,
                probes: self.probes,
            }))
        } else {
            Ok(Count(k, true))
        }
    }

    fn note(&mut self, k: usize) {
        if self.closest.is_none_or(|c| k.abs_diff(self.target) < c.abs_diff(self.target)) {
            self.closest = Some(k);
        }
    }
}

//! Helpers and independent reference computations shared by the
//! integration tests. Nothing here calls into the library's own versions of
//! the quantities it checks.

#![allow(dead_code)]

use std::path::PathBuf;

use geoap::data_io::{workspace_data_dir, Dataset, LoadOptions};
use geoap::{NeighborhoodMask, SimilarityMatrix};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

pub fn below(rng: &mut ChaCha8Rng, m: usize) -> usize {
    (unit(rng) * m as f64) as usize
}

pub fn coin(rng: &mut ChaCha8Rng, p: f64) -> bool {
    unit(rng) < p
}

/// Dense random similarity matrix with nonpositive off-diagonal entries.
pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize, preference: f64) -> SimilarityMatrix {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = -uniform(rng, 0.0, 10.0);
            v[i * n + j] = x;
            v[j * n + i] = x;
        }
    }
    SimilarityMatrix::from_dense(n, v).unwrap().with_preference(preference)
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize, density: f64) -> NeighborhoodMask {
    let bits: Vec<bool> = (0..n * n).map(|_| coin(rng, density)).collect();
    NeighborhoodMask::from_fn(n, |i, k| bits[i.min(k) * n + i.max(k)])
}

/// Edge list of an Erdos-Renyi graph.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if coin(rng, p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Boolean matrix product, used to form graph powers by repeated
/// multiplication of the adjacency matrix.
pub fn bool_matmul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    out[i][j] |= b[k][j];
                }
            }
        }
    }
    out
}

/// Indicator of `A + A^2 + ... + A^nu`.
pub fn matrix_power_reach(n: usize, edges: &[(usize, usize)], nu: usize) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in edges {
        a[u][v] = true;
        a[v][u] = true;
    }
    let mut power = a.clone();
    let mut reach = a.clone();
    for _ in 1..nu {
        power = bool_matmul(&power, &a);
        for i in 0..n {
            for j in 0..n {
                reach[i][j] |= power[i][j];
            }
        }
    }
    reach
}

/// NMI straight from the empirical joint distribution, natural log.
pub fn nmi_joint(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let lp = pred.iter().max().map_or(0, |m| m + 1);
    let lt = truth.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0; lt]; lp];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[p][t] += 1.0 / n;
    }
    let pp: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let pt: Vec<f64> = (0..lt).map(|t| joint.iter().map(|r| r[t]).sum()).collect();
    let h = |d: &[f64]| -> f64 { d.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
    let mut mi = 0.0;
    for p in 0..lp {
        for t in 0..lt {
            let x = joint[p][t];
            if x > 0.0 {
                mi += x * (x / (pp[p] * pt[t])).ln();
            }
        }
    }
    let denom = h(&pp) + h(&pt);
    if denom == 0.0 {
        1.0
    } else {
        2.0 * mi / denom
    }
}

/// Best net similarity over all valid configurations, by enumerating
/// exemplar subsets: every exemplar chooses itself and every other point
/// its most similar allowed exemplar.
pub fn oracle_optimum(s: &SimilarityMatrix, mask: Option<&NeighborhoodMask>) -> Option<f64> {
    let n = s.n();
    let mut best: Option<f64> = None;
    for subset in 1usize..(1 << n) {
        let is_ex = |k: usize| subset >> k & 1 == 1;
        let mut total = 0.0;
        let mut feasible = true;
        for i in 0..n {
            if is_ex(i) {
                total += s.get(i, i);
                continue;
            }
            let pick = (0..n)
                .filter(|&k| is_ex(k) && mask.is_none_or(|m| m.contains(i, k)))
                .map(|k| s.get(i, k))
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            match pick {
                Some(v) => total += v,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && best.is_none_or(|b| total > b) {
            best = Some(total);
        }
    }
    best
}

pub fn karate_dir() -> PathBuf {
    workspace_data_dir().join("karate")
}

/// The bundled Karate club fixture with the given label file.
pub fn karate(labels: &str) -> Dataset {
    let dir = karate_dir();
    Dataset::load(
        Some(&dir.join("features.txt")),
        Some(&dir.join("edges.txt")),
        Some(&dir.join(labels)),
        LoadOptions {
            feature_ids: true,
            skip_unknown_edges: false,
        },
    )
    .expect("karate fixture loads")
}

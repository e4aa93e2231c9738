//! Responsibility and availability sweeps over dense row-major `n x n`
//! buffers. Every function writes undamped values into `out`; damping is
//! applied separately by [`damp`].

use rayon::prelude::*;

use crate::affinity::SimilarityMatrix;
use crate::graph::NeighborhoodMask;

/// Matrices smaller than this are swept on the calling thread.
pub(crate) const PAR_MIN_N: usize = 256;
const COLUMN_BLOCK: usize = 64;

pub(crate) fn rows_mut<F>(buf: &mut [f64], n: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if n >= PAR_MIN_N {
        buf.par_chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    } else {
        buf.chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// `r(i,k) = s(i,k) - max_{j != k} [s(i,j) + a(i,j)]`, the maximum
/// including the self term `j = i`.
pub fn update_responsibilities(s: &SimilarityMatrix, a: &[f64], out: &mut [f64]) {
    let n = s.n();
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(out.len(), n * n);
    rows_mut(out, n, |i, row| {
        let s_row = s.row(i);
        let a_row = &a[i * n..(i + 1) * n];
        let (mut best, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, usize::MAX);
        for (j, (&sv, &av)) in s_row.iter().zip(a_row).enumerate() {
            let v = sv + av;
            if v > best {
                second = best;
                best = v;
                arg = j;
            } else if v > second {
                second = v;
            }
        }
        for (k, cell) in row.iter_mut().enumerate() {
            let competitor = if k == arg { second } else { best };
            *cell = s_row[k] - competitor;
        }
    });
}

/// Per-column `sum_{i' != k} max(0, r(i', k))`, accumulated in row order so
/// the result does not depend on the thread count.
fn positive_column_sums(r: &[f64], n: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n];
    let fill = |(b, chunk): (usize, &mut [f64])| {
        let c0 = b * COLUMN_BLOCK;
        for i in 0..n {
            let row = &r[i * n + c0..i * n + c0 + chunk.len()];
            for (t, (acc, &v)) in chunk.iter_mut().zip(row).enumerate() {
                if i != c0 + t {
                    *acc += v.max(0.0);
                }
            }
        }
    };
    if n >= PAR_MIN_N {
        sums.par_chunks_mut(COLUMN_BLOCK).enumerate().for_each(fill);
    } else {
        sums.chunks_mut(COLUMN_BLOCK).enumerate().for_each(fill);
    }
    sums
}

/// Availabilities from responsibilities.
///
/// Without a mask this is the unconstrained update:
/// `a(k,k) = sum_{i' != k} max(0, r(i',k))` and, for `i != k`,
/// `a(i,k) = min(0, x)` with `x = r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k))`.
/// With a mask, pairs where `k` lies outside the neighborhood of `i` receive
/// `-max(0, x)` instead.
pub fn update_availabilities(r: &[f64], n: usize, mask: Option<&NeighborhoodMask>, out: &mut [f64]) {
    debug_assert_eq!(r.len(), n * n);
    let sums = positive_column_sums(r, n);
    let diag: Vec<f64> = (0..n).map(|k| r[k * n + k]).collect();
    rows_mut(out, n, |i, row| {
        let r_row = &r[i * n..(i + 1) * n];
        let inside = mask.map(|m| m.row(i));
        for (k, cell) in row.iter_mut().enumerate() {
            if k == i {
                *cell = sums[k];
                continue;
            }
            let x = diag[k] + (sums[k] - r_row[k].max(0.0));
            *cell = match inside {
                Some(m) if !m[k] => -x.max(0.0),
                _ => x.min(0.0),
            };
        }
    });
}

/// The same constrained update written in penalty form: outside the
/// neighborhood the availability is `min(0, x) - x`, the unconstrained value
/// minus the penalty `x`.
pub fn update_availabilities_penalty_form(
    r: &[f64],
    n: usize,
    mask: &NeighborhoodMask,
    out: &mut [f64],
) {
    let sums = positive_column_sums(r, n);
    let diag: Vec<f64> = (0..n).map(|k| r[k * n + k]).collect();
    rows_mut(out, n, |i, row| {
        let r_row = &r[i * n..(i + 1) * n];
        let inside = mask.row(i);
        for (k, cell) in row.iter_mut().enumerate() {
            if k == i {
                *cell = sums[k];
                continue;
            }
            let x = diag[k] + (sums[k] - r_row[k].max(0.0));
            let unconstrained = x.min(0.0);
            *cell = if inside[k] { unconstrained } else { unconstrained - x };
        }
    });
}

/// `old <- lambda * old + (1 - lambda) * new`, elementwise.
///
/// Returns the largest absolute change, or `None` if any damped value is not
/// finite.
pub fn damp(old: &mut [f64], new: &[f64], lambda: f64) -> Option<f64> {
    debug_assert_eq!(old.len(), new.len());
    let keep = 1.0 - lambda;
    let chunk = |old: &mut [f64], new: &[f64]| -> (f64, bool) {
        let (mut max, mut finite) = (0.0f64, true);
        for (o, &nw) in old.iter_mut().zip(new) {
            let v = lambda * *o + keep * nw;
            let d = (v - *o).abs();
            max = if d > max { d } else { max };
            finite &= v.abs() < f64::INFINITY;
            *o = v;
        }
        (max, finite)
    };
    let (max, finite) = if old.len() >= PAR_MIN_N * PAR_MIN_N {
        old.par_chunks_mut(PAR_MIN_N)
            .zip(new.par_chunks(PAR_MIN_N))
            .map(|(o, nw)| chunk(o, nw))
            .reduce(|| (0.0, true), |a, b| (a.0.max(b.0), a.1 && b.1))
    } else {
        chunk(old, new)
    };
    finite.then_some(max)
}

//! Turning messages into cluster labels.

use std::cmp::Ordering;

use crate::affinity::SimilarityMatrix;
use crate::graph::{Graph, NeighborhoodMask};

use super::messages::PAR_MIN_N;
use rayon::prelude::*;

/// Index of the largest value; the lowest index wins ties.
#[inline]
fn argmax<I: Iterator<Item = (usize, f64)>>(it: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in it {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

fn per_row<F>(n: usize, f: F) -> Vec<usize>
where
    F: Fn(usize) -> usize + Sync + Send,
{
    if n >= PAR_MIN_N {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// `c_i = argmax_j [a(i,j) + s(i,j)]` for every point.
pub fn estimate_exemplars(s: &SimilarityMatrix, a: &[f64]) -> Vec<usize> {
    let n = s.n();
    per_row(n, |i| {
        let a_row = &a[i * n..(i + 1) * n];
        argmax(s.row(i).iter().zip(a_row).map(|(s, a)| s + a).enumerate()).unwrap_or(i)
    })
}

/// Points that label themselves, ascending.
pub fn exemplar_set(labels: &[usize]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &c)| i == c)
        .map(|(i, _)| i)
        .collect()
}

/// Assigns each point to the exemplar maximizing `a + s`.
pub fn assign_standard(s: &SimilarityMatrix, a: &[f64], exemplars: &[usize]) -> Vec<usize> {
    let n = s.n();
    per_row(n, |i| {
        let a_row = &a[i * n..(i + 1) * n];
        argmax(exemplars.iter().map(|&j| (j, a_row[j] + s.get(i, j)))).unwrap_or(i)
    })
}

/// Network-aware assignment: each point picks the best exemplar inside its
/// neighborhood when one exists, otherwise the best exemplar overall.
pub fn assign_geometric(
    s: &SimilarityMatrix,
    a: &[f64],
    exemplars: &[usize],
    mask: &NeighborhoodMask,
) -> Vec<usize> {
    let n = s.n();
    per_row(n, |i| {
        let a_row = &a[i * n..(i + 1) * n];
        let score = |&j: &usize| (j, a_row[j] + s.get(i, j));
        let inside = mask.row(i);
        argmax(exemplars.iter().filter(|&&j| inside[j]).map(score))
            .or_else(|| argmax(exemplars.iter().map(score)))
            .unwrap_or(i)
    })
}

/// One synchronous plurality vote over each vertex and its adjacent
/// vertices. Ties keep the vertex's own label when it is among the leaders,
/// otherwise the smallest label wins.
pub fn smooth_labels(labels: &[usize], g: &Graph) -> Vec<usize> {
    assert_eq!(labels.len(), g.n(), "label count must match vertex count");
    (0..g.n())
        .map(|v| {
            let own = labels[v];
            let mut votes: Vec<usize> = g.neighbors(v).iter().map(|&u| labels[u]).collect();
            votes.push(own);
            votes.sort_unstable();
            let mut best: Option<(usize, usize)> = None; // (count, label)
            let mut own_count = 0;
            for chunk in votes.chunk_by(|x, y| x == y) {
                let (label, count) = (chunk[0], chunk.len());
                if label == own {
                    own_count = count;
                }
                // ascending labels, so strict '>' keeps the smallest on ties
                if best.is_none_or(|(c, _)| count > c) {
                    best = Some((count, label));
                }
            }
            match best {
                Some((c, label)) => match own_count.cmp(&c) {
                    Ordering::Less => label,
                    _ => own,
                },
                None => own,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(n: usize, vals: &[f64], pref: f64) -> SimilarityMatrix {
        SimilarityMatrix::from_dense(n, vals.to_vec())
            .unwrap()
            .with_preference(pref)
    }

    #[test]
    fn estimate_examples() {
        let s = sim(3, &[0.0, -2.0, -3.0, -2.0, 0.0, -1.0, -3.0, -1.0, 0.0], 0.5);
        assert_eq!(estimate_exemplars(&s, &[0.0; 9]), vec![0, 1, 2]);

        let one = sim(1, &[0.0], -1.0);
        assert_eq!(estimate_exemplars(&one, &[0.0]), vec![0]);

        // a + s row 0 = (1, 3)
        let s = sim(2, &[0.0, 3.0, 0.0, 0.0], 1.0);
        assert_eq!(estimate_exemplars(&s, &[0.0; 4])[0], 1);

        // ties go to the lowest index
        let s = sim(2, &[0.0, -1.0, -1.0, 0.0], -1.0);
        assert_eq!(estimate_exemplars(&s, &[0.0; 4]), vec![0, 0]);
    }

    #[test]
    fn geometric_assignment_branches() {
        // points 0..4 on a line; exemplars 0 and 3
        let pts = [0.0f64, 1.0, 2.0, 3.0];
        let vals: Vec<f64> = (0..16).map(|x| -(pts[x / 4] - pts[x % 4]).abs()).collect();
        let s = sim(4, &vals, -1.0);
        let a = vec![0.0; 16];
        let ex = [0, 3];

        let full = NeighborhoodMask::full(4);
        assert_eq!(assign_geometric(&s, &a, &ex, &full), assign_standard(&s, &a, &ex));

        // point 2 only sees point 1 and itself: no exemplar nearby, falls
        // back to the global best (3)
        let mask = NeighborhoodMask::from_fn(4, |i, k| {
            matches!((i.min(k), i.max(k)), (0, 1) | (1, 2))
        });
        assert_eq!(assign_geometric(&s, &a, &ex, &mask), vec![0, 0, 3, 3]);

        // point 2 sees 0 but not 3: restricted branch picks 0
        let mask = NeighborhoodMask::from_fn(4, |i, k| {
            matches!((i.min(k), i.max(k)), (0, 1) | (0, 2))
        });
        assert_eq!(assign_geometric(&s, &a, &ex, &mask), vec![0, 0, 0, 3]);
    }

    #[test]
    fn smoothing() {
        let g = Graph::new(5, [(0, 1), (0, 2), (0, 3)]).unwrap();
        // vertex 0 outvoted 3 to 1; isolated vertex 4 keeps its label
        let out = smooth_labels(&[9, 7, 7, 7, 2], &g);
        assert_eq!(out, vec![7, 7, 7, 7, 2]);

        let uniform = vec![4; 5];
        assert_eq!(smooth_labels(&uniform, &g), uniform);

        // tie 1-1 on an edge: each keeps its own label
        let pair = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(smooth_labels(&[5, 3], &pair), vec![5, 3]);

        // center with own label 9 and neighbors 4, 4, 2, 2: tie 2 vs 2 without own -> lowest
        let star = Graph::new(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        assert_eq!(smooth_labels(&[9, 4, 4, 2, 2], &star)[0], 2);
    }
}

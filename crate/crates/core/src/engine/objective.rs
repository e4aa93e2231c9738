//! Net similarity of a labeling and an exhaustive maximizer used as a test
//! oracle on small instances.

use crate::affinity::SimilarityMatrix;
use crate::error::{invalid, Error, Result};
use crate::graph::NeighborhoodMask;

/// Largest instance accepted by [`brute_force_optimum`].
pub const BRUTE_FORCE_MAX_N: usize = 15;

/// `sum_i s(i, c_i)` for a valid labeling, `f64::NEG_INFINITY` otherwise.
///
/// A labeling is invalid when some point chooses `k` while `k` does not
/// choose itself, or, when a mask is given, when some point chooses an
/// exemplar outside its neighborhood.
pub fn net_similarity(s: &SimilarityMatrix, labels: &[usize], mask: Option<&NeighborhoodMask>) -> f64 {
    let n = s.n();
    if labels.len() != n {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        if c >= n || labels[c] != c {
            return f64::NEG_INFINITY;
        }
        if mask.is_some_and(|m| !m.contains(i, c)) {
            return f64::NEG_INFINITY;
        }
        total += s.get(i, c);
    }
    total
}

/// Best labeling found by enumerating every nonempty exemplar subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub labels: Vec<usize>,
    pub value: f64,
}

/// Exhaustive maximizer of [`net_similarity`]. Returns `Ok(None)` when no
/// valid labeling exists.
pub fn brute_force_optimum(s: &SimilarityMatrix, mask: Option<&NeighborhoodMask>) -> Result<Option<Optimum>> {
    let n = s.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    if s.preference().is_none() {
        return Err(invalid("preference must be set before evaluating configurations"));
    }
    let allowed = |i: usize, k: usize| mask.is_none_or(|m| m.contains(i, k));
    let mut best: Option<Optimum> = None;
    let mut labels = vec![0usize; n];
    'subsets: for subset in 1u32..(1u32 << n) {
        let mut value = 0.0;
        for (i, label) in labels.iter_mut().enumerate() {
            if subset & (1 << i) != 0 {
                *label = i;
                value += s.get(i, i);
                continue;
            }
            let mut pick: Option<(usize, f64)> = None;
            for k in (0..n).filter(|&k| subset & (1 << k) != 0 && allowed(i, k)) {
                let v = s.get(i, k);
                if pick.is_none_or(|(_, b)| v > b) {
                    pick = Some((k, v));
                }
            }
            match pick {
                Some((k, v)) => {
                    *label = k;
                    value += v;
                }
                None => continue 'subsets,
            }
        }
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(Optimum {
                labels: labels.clone(),
                value,
            });
        }
    }
    Ok(best)
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
    fn net_similarity_examples() {
        let s = sim(3, &[0.0, -1.0, -2.0, -1.0, 0.0, -1.0, -2.0, -1.0, 0.0], -4.0);
        assert_eq!(net_similarity(&s, &[0, 1, 2], None), -12.0);
        assert_eq!(net_similarity(&s, &[1, 1, 1], None), -6.0);
        // c0 = 1 but c1 != 1
        assert_eq!(net_similarity(&s, &[1, 0, 2], None), f64::NEG_INFINITY);
        let mask = NeighborhoodMask::from_fn(3, |i, k| i.abs_diff(k) == 1 && i.min(k) == 1);
        // c0 = 1 is valid without the mask, but 1 lies outside N(0)
        assert_eq!(net_similarity(&s, &[1, 1, 1], Some(&mask)), f64::NEG_INFINITY);
        assert_eq!(net_similarity(&s, &[0, 1, 1], Some(&mask)), -9.0);
    }

    #[test]
    fn brute_force_examples() {
        let one = sim(1, &[0.0], -3.0);
        assert_eq!(
            brute_force_optimum(&one, None).unwrap(),
            Some(Optimum {
                labels: vec![0],
                value: -3.0
            })
        );

        let two = sim(2, &[0.0, -10.0, -10.0, 0.0], 5.0);
        let opt = brute_force_optimum(&two, None).unwrap().unwrap();
        assert_eq!((opt.labels, opt.value), (vec![0, 1], 10.0));

        let s = sim(3, &[0.0, -1.0, -2.0, -1.0, 0.0, -1.0, -2.0, -1.0, 0.0], -4.0);
        let opt = brute_force_optimum(&s, None).unwrap().unwrap();
        assert_eq!((opt.labels, opt.value), (vec![1, 1, 1], -6.0));

        let big = SimilarityMatrix::from_dense(16, vec![0.0; 256])
            .unwrap()
            .with_preference(0.0);
        assert!(matches!(brute_force_optimum(&big, None), Err(Error::TooLarge { .. })));
    }
}

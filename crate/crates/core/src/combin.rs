//! Fixed-size subsets of `{0..n}` in colexicographic order.
//!
//! Colex order lists `{0,1}, {0,2}, {1,2}, {0,3}, ...`; the rank of a sorted
//! subset `c₀ < c₁ < ... < c_{m-1}` is `Σ C(cᵢ, i+1)`, which is independent of
//! `n`. Oracle dumps rely on this order being fixed.

use crate::numeric::binomial_u128;

/// Iterator over all size-`m` subsets of `{0..n}` in colex order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            current: (0..m).collect(),
            done: m > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        // Advance: find the first position that can be bumped without
        // colliding with its successor.
        let m = self.current.len();
        let mut i = 0;
        loop {
            if i == m {
                self.done = true;
                break;
            }
            let limit = if i + 1 < m { self.current[i + 1] } else { self.n };
            if self.current[i] + 1 < limit {
                self.current[i] += 1;
                for (j, c) in self.current.iter_mut().enumerate().take(i) {
                    *c = j;
                }
                break;
            }
            i += 1;
        }
        Some(out)
    }
}

/// Colex rank of a strictly increasing subset.
pub fn colex_rank(subset: &[usize]) -> usize {
    subset
        .iter()
        .enumerate()
        .map(|(i, &c)| binomial_u128(c, i + 1) as usize)
        .sum()
}

/// Sorts and checks that `alpha` holds distinct indices below `n`.
pub fn normalize_subset(alpha: &[usize], n: usize) -> Option<Vec<usize>> {
    let mut v = alpha.to_vec();
    v.sort_unstable();
    if v.windows(2).any(|w| w[0] == w[1]) || v.last().is_some_and(|&x| x >= n) {
        return None;
    }
    Some(v)
}

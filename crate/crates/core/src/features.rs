//! Polynomial regressor enumeration and evaluation.
//!
//! A regressor is a monomial over normalized input features: a multiset of
//! feature indices whose values are multiplied together. The set of all
//! monomials up to degree `m` over `n` features has `C(n + m, m)` members,
//! including the constant.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A product of input features. `factors` holds 0-based feature indices,
/// sorted ascending; repetitions encode powers. Empty factors = constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Monomial {
    pub factors: Vec<u32>,
}

impl Monomial {
    pub fn constant() -> Self {
        Monomial { factors: Vec::new() }
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn evaluate(&self, row: &[f64]) -> f64 {
        self.factors
            .iter()
            .fold(1.0, |acc, &f| acc * row[f as usize])
    }
}

impl fmt::Display for Monomial {
    /// Features print 1-based: "1", "u3", "u3*u17", "u2*u2".
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.factors.iter().map(|&i| format!("u{}", i + 1)).collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// All candidate regressors for one classification problem, in canonical
/// order: degree ascending, lexicographic within a degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSet {
    pub monomials: Vec<Monomial>,
    pub max_degree: usize,
}

/// Number of monomials of degree at most `max_degree` over `n` features.
pub fn count_regressors(n: usize, max_degree: usize) -> u64 {
    // C(n + m, m) computed multiplicatively
    let mut c: u64 = 1;
    for i in 1..=max_degree as u64 {
        c = c * (n as u64 + i) / i;
    }
    c
}

impl RegressorSet {
    /// Enumerates every multiset of size 0..=max_degree over `features`
    /// (0-based raw feature indices, expected ascending). The constant comes
    /// first; within a degree, multisets are ordered lexicographically by
    /// their factor tuples.
    pub fn enumerate(features: &[u32], max_degree: usize) -> RegressorSet {
        let n = features.len();
        let mut monomials = vec![Monomial::constant()];
        for degree in 1..=max_degree {
            if n == 0 {
                break;
            }
            // odometer over non-decreasing index tuples of length `degree`
            let mut idx = vec![0usize; degree];
            loop {
                monomials.push(Monomial {
                    factors: idx.iter().map(|&i| features[i]).collect(),
                });
                let mut pos = degree;
                while pos > 0 && idx[pos - 1] == n - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                let v = idx[pos - 1] + 1;
                for slot in idx.iter_mut().skip(pos - 1) {
                    *slot = v;
                }
            }
        }
        RegressorSet {
            monomials,
            max_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn evaluate_row(&self, row: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|m| m.evaluate(row)).collect()
    }
}

/// Evaluated regressor columns for a fixed set of rows, with the full dense
/// matrix precomputed when it fits a fixed memory budget. Either way,
/// `design` produces the column submatrix for one model structure.
pub struct RegressorMatrix {
    set: RegressorSet,
    rows: Vec<Vec<f64>>,
    dense: Option<DMatrix<f64>>,
}

const MAX_DENSE_ENTRIES: usize = 8_000_000;

impl RegressorMatrix {
    pub fn new(set: RegressorSet, rows: Vec<Vec<f64>>) -> Self {
        Self::with_budget(set, rows, MAX_DENSE_ENTRIES)
    }

    pub fn with_budget(set: RegressorSet, rows: Vec<Vec<f64>>, max_entries: usize) -> Self {
        let n = rows.len();
        let n_r = set.len();
        let dense = if n * n_r <= max_entries {
            let mut m = DMatrix::zeros(n, n_r);
            for (i, row) in rows.iter().enumerate() {
                for (j, mono) in set.monomials.iter().enumerate() {
                    m[(i, j)] = mono.evaluate(row);
                }
            }
            Some(m)
        } else {
            None
        };
        RegressorMatrix { set, rows, dense }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_regressors(&self) -> usize {
        self.set.len()
    }

    pub fn set(&self) -> &RegressorSet {
        &self.set
    }

    /// Design matrix whose columns are the regressors named in `structure`.
    pub fn design(&self, structure: &[u32]) -> DMatrix<f64> {
        let n = self.rows.len();
        let mut out = DMatrix::zeros(n, structure.len());
        match &self.dense {
            Some(full) => {
                for (c, &j) in structure.iter().enumerate() {
                    out.column_mut(c).copy_from(&full.column(j as usize));
                }
            }
            None => {
                for (c, &j) in structure.iter().enumerate() {
                    let mono = &self.set.monomials[j as usize];
                    for (i, row) in self.rows.iter().enumerate() {
                        out[(i, c)] = mono.evaluate(row);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_match_closed_form() {
        assert_eq!(count_regressors(4, 2), 15);
        assert_eq!(count_regressors(6, 2), 28);
        assert_eq!(count_regressors(13, 2), 105);
        assert_eq!(count_regressors(30, 2), 496);
        assert_eq!(count_regressors(60, 2), 1891);
        for (n, m) in [(1, 1), (5, 3), (9, 2), (30, 2), (7, 4)] {
            let set = RegressorSet::enumerate(&(0..n as u32).collect::<Vec<_>>(), m);
            assert_eq!(set.len() as u64, count_regressors(n, m), "n={n} m={m}");
        }
    }

    #[test]
    fn two_feature_quadratic_enumeration_order() {
        let set = RegressorSet::enumerate(&[0, 1], 2);
        let shown: Vec<String> = set.monomials.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, vec!["1", "u1", "u2", "u1*u1", "u1*u2", "u2*u2"]);
    }

    #[test]
    fn enumeration_keeps_raw_indices_for_subsets() {
        let set = RegressorSet::enumerate(&[0, 2], 2);
        let factors: Vec<Vec<u32>> = set.monomials.iter().map(|m| m.factors.clone()).collect();
        assert_eq!(
            factors,
            vec![vec![], vec![0], vec![2], vec![0, 0], vec![0, 2], vec![2, 2]]
        );
    }

    #[test]
    fn enumeration_matches_brute_force_multisets() {
        // oracle: cartesian products, canonicalized by sorting, deduplicated
        let n = 5u32;
        let m = 3usize;
        let mut expected: BTreeSet<Vec<u32>> = BTreeSet::new();
        expected.insert(vec![]);
        let mut tuples: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..m {
            let mut next = Vec::new();
            for t in &tuples {
                for f in 0..n {
                    let mut u = t.clone();
                    u.push(f);
                    next.push(u);
                }
            }
            for t in &next {
                let mut s = t.clone();
                s.sort_unstable();
                expected.insert(s);
            }
            tuples = next;
        }
        let set = RegressorSet::enumerate(&(0..n).collect::<Vec<_>>(), m);
        let got: BTreeSet<Vec<u32>> = set.monomials.iter().map(|x| x.factors.clone()).collect();
        assert_eq!(got.len(), set.len(), "no duplicates");
        assert_eq!(got, expected);
    }

    #[test]
    fn evaluate_multiplies_factors() {
        let row = [2.0, 3.0];
        assert_eq!(Monomial::constant().evaluate(&row), 1.0);
        assert_eq!(Monomial { factors: vec![0, 0] }.evaluate(&row), 4.0);
        assert_eq!(Monomial { factors: vec![0, 1] }.evaluate(&row), 6.0);
        let set = RegressorSet::enumerate(&[0, 1], 2);
        assert_eq!(set.evaluate_row(&row), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn dense_and_lazy_designs_agree() {
        let rows = vec![vec![0.5, -1.0], vec![1.0, 0.25], vec![-0.5, 0.0]];
        let set = RegressorSet::enumerate(&[0, 1], 2);
        let dense = RegressorMatrix::new(set.clone(), rows.clone());
        let lazy = RegressorMatrix::with_budget(set, rows.clone(), 0);
        let structure = [0u32, 3, 4];
        let a = dense.design(&structure);
        let b = lazy.design(&structure);
        assert_eq!(a, b);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(a[(i, 0)], 1.0);
            assert_eq!(a[(i, 1)], row[0] * row[0]);
            assert_eq!(a[(i, 2)], row[0] * row[1]);
        }
    }
}

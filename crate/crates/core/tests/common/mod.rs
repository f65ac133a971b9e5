//! Independent reference implementations used by the acceptance suite.
//!
//! Everything here is written the slow, obvious way on purpose: literal
//! nested loops, rejection sampling, exhaustive enumeration. None of it
//! shares code with the library paths it checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rfsc_core::estimator::{self, FitConfig, FittedModel};
use rfsc_core::features::{Monomial, RegressorMatrix, RegressorSet};

/// Counts distinct monomials of degree <= max_degree over n features by
/// enumerating non-decreasing factor sequences, one by one.
pub fn count_monomials_brute(n: usize, max_degree: usize) -> u64 {
    fn walk(n: usize, left: usize, lowest: usize) -> u64 {
        if left == 0 {
            return 1;
        }
        // stop here, or extend with any factor >= lowest
        1 + (lowest..n).map(|f| walk(n, left - 1, f)).sum::<u64>()
    }
    walk(n, max_degree, 0)
}

/// Squared distance covariance as the literal moment formula
/// S1 + S2 - 2*S3, with every pair and triple summed explicitly.
pub fn dcov_sq_loops(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let mut s1 = 0.0;
    for k in 0..n {
        for l in 0..n {
            s1 += (x[k] - x[l]).abs() * (y[k] - y[l]).abs();
        }
    }
    s1 /= nf * nf;

    let mut ax = 0.0;
    let mut by = 0.0;
    for k in 0..n {
        for l in 0..n {
            ax += (x[k] - x[l]).abs();
            by += (y[k] - y[l]).abs();
        }
    }
    let s2 = (ax / (nf * nf)) * (by / (nf * nf));

    let mut s3 = 0.0;
    for k in 0..n {
        for l in 0..n {
            for m in 0..n {
                s3 += (x[k] - x[l]).abs() * (y[k] - y[m]).abs();
            }
        }
    }
    s3 /= nf * nf * nf;

    s1 + s2 - 2.0 * s3
}

/// Mean logistic loss computed from raw rows, one sample at a time.
pub fn loss_naive(theta: &[f64], rows: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, &yy) in rows.iter().zip(y) {
        let score: f64 = theta.iter().zip(row).map(|(&t, &v)| t * v).sum();
        let m = yy * score;
        total += if m > 30.0 {
            (-m).exp().ln_1p()
        } else {
            (1.0 + (-m).exp()).ln()
        };
    }
    total / y.len() as f64
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn grad_fd(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        t[i] = theta[i] + h;
        let fp = f(&t);
        t[i] = theta[i] - h;
        let fm = f(&t);
        t[i] = theta[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian of an arbitrary scalar function.
pub fn hess_fd(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
    let tau = theta.len();
    let mut hess = vec![vec![0.0; tau]; tau];
    let mut t = theta.to_vec();
    let eval = |t: &mut Vec<f64>, i: usize, j: usize, si: f64, sj: f64| {
        t[i] += si * h;
        t[j] += sj * h;
        let v = f(t);
        t[i] = theta[i];
        t[j] = theta[j];
        v
    };
    for i in 0..tau {
        for j in 0..tau {
            let v = eval(&mut t, i, j, 1.0, 1.0) - eval(&mut t, i, j, 1.0, -1.0)
                - eval(&mut t, i, j, -1.0, 1.0)
                + eval(&mut t, i, j, -1.0, -1.0);
            hess[i][j] = v / (4.0 * h * h);
        }
    }
    hess
}

/// Best training J over every structure in the power set, each one fitted
/// and pruned exactly as the selection loop evaluates a sampled structure.
pub fn exhaustive_best_j(matrix: &RegressorMatrix, y: &[f64], cfg: &FitConfig) -> f64 {
    let n_r = matrix.n_regressors();
    assert!(n_r <= 15, "power set too large to enumerate");
    let mut best = FittedModel::empty(y).j;
    for bits in 1u32..(1 << n_r) {
        let structure: Vec<u32> = (0..n_r as u32).filter(|j| bits >> j & 1 == 1).collect();
        if structure.len() >= matrix.n_rows() {
            continue;
        }
        let design = matrix.design(&structure);
        let fitted = estimator::fit(&design, y, cfg).expect("oracle fit");
        let pruned = estimator::t_test_prune(&fitted, &design, y, cfg).expect("oracle prune");
        if pruned.j > best {
            best = pruned.j;
        }
    }
    best
}

/// Uniform rows in [0,1]^d.
pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Draws rows uniformly from [lo,hi]^d until `n` of them clear the margin
/// of the planted score theta . psi(row), and labels each by its sign. The
/// returned targets are noiseless and the two classes are guaranteed
/// non-empty.
pub fn planted_problem(
    rng: &mut ChaCha8Rng,
    set: &RegressorSet,
    structure: &[u32],
    theta: &[f64],
    n: usize,
    d: usize,
    margin: f64,
    (lo, hi): (f64, f64),
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let monomials: Vec<&Monomial> = structure
        .iter()
        .map(|&j| &set.monomials[j as usize])
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while rows.len() < n {
        let row: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..hi)).collect();
        let score: f64 = monomials
            .iter()
            .zip(theta)
            .map(|(m, &t)| t * m.evaluate(&row))
            .sum();
        if score.abs() < margin {
            continue;
        }
        y.push(if score > 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    assert!(
        y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0),
        "planted problem degenerated to one class"
    );
    (rows, y)
}

/// Two overlapping uniform clouds: not linearly separable, so the logistic
/// optimum is finite and unique on a full-rank design.
pub fn overlapping_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = uniform_rows(rng, n, d);
    let y = rows
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum::<f64>() / d as f64 - 0.5;
            let p = 1.0 / (1.0 + (-4.0 * s).exp());
            if rng.gen::<f64>() < p {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    (rows, y)
}

/// Dense design over raw rows for the kernel checks: column j holds
/// regressor j evaluated on every row.
pub fn design_from_rows(set: &RegressorSet, rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let tau = set.len();
    DMatrix::from_fn(n, tau, |r, c| set.monomials[c].evaluate(&rows[r]))
}

//! Distance correlation filtering: drop features that fail a dependence
//! test against the binary class target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Largest sample count accepted by the O(N^2)-time test.
const MAX_SAMPLES: usize = 10_000;

/// Whether feature prefiltering runs before regressor enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DcfMode {
    On,
    Off,
    /// Filter only wide problems, where exhaustive quadratic expansion of
    /// every feature would be wasteful.
    Auto,
}

impl DcfMode {
    pub fn enabled(self, n_features: usize) -> bool {
        match self {
            DcfMode::On => true,
            DcfMode::Off => false,
            DcfMode::Auto => n_features > 15,
        }
    }
}

/// Outcome of filtering one binary problem.
#[derive(Debug, Clone)]
pub struct DcfResult {
    /// Test statistic per feature, in feature order.
    pub statistics: Vec<f64>,
    pub threshold: f64,
    /// Raw indices of features whose statistic exceeds the threshold.
    pub kept: Vec<u32>,
    pub alpha_d: f64,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "distance covariance needs at least 2 samples".into(),
        ));
    }
    if x.len() > MAX_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "distance covariance limited to {MAX_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Row sums of the pairwise absolute-difference matrix, plus its total.
fn distance_row_sums(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut rows = vec![0.0; n];
    for r in 0..n {
        let mut s = 0.0;
        for v in x {
            s += (x[r] - v).abs();
        }
        rows[r] = s;
    }
    let total = rows.iter().sum();
    (rows, total)
}

/// Squared empirical distance covariance of two scalar samples:
/// the mean of the elementwise product of the double-centered pairwise
/// distance matrices. Computed through the algebraic expansion
/// S1 + S2 - 2*S3, which needs only row sums, so memory stays O(N).
pub fn distance_covariance_sq(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let nf = n as f64;
    let (rows_a, total_a) = distance_row_sums(x);
    let (rows_b, total_b) = distance_row_sums(y);

    let mut s1 = 0.0;
    for r in 0..n {
        let mut acc = 0.0;
        for s in 0..n {
            acc += (x[r] - x[s]).abs() * (y[r] - y[s]).abs();
        }
        s1 += acc;
    }
    s1 /= nf * nf;
    let s2 = (total_a / (nf * nf)) * (total_b / (nf * nf));
    let s3 = rows_a
        .iter()
        .zip(&rows_b)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / (nf * nf * nf);

    // exact value is non-negative; rounding may leave a tiny negative
    Ok((s1 + s2 - 2.0 * s3).max(0.0))
}

/// Critical value: squared two-sided normal quantile at level `alpha_d`.
pub fn rejection_threshold(alpha_d: f64) -> Result<f64> {
    if !(alpha_d > 0.0 && alpha_d < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha_d must lie in (0, 1), got {alpha_d}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let q = normal.inverse_cdf(1.0 - alpha_d / 2.0);
    Ok(q * q)
}

/// Tests dependence between `x` and `y`. The statistic is
/// N * dcov^2 / (mean distance of x * mean distance of y); independence is
/// rejected when it exceeds `rejection_threshold(alpha_d)`.
///
/// A constant vector makes the denominator vanish; the test then reports
/// (0, not rejected), since a constant carries no class information.
pub fn independence_test(x: &[f64], y: &[f64], alpha_d: f64) -> Result<(f64, bool)> {
    check_pair(x, y)?;
    let threshold = rejection_threshold(alpha_d)?;
    let n = x.len() as f64;
    let v2 = distance_covariance_sq(x, y)?;
    let (_, total_a) = distance_row_sums(x);
    let (_, total_b) = distance_row_sums(y);
    let s = (total_a / (n * n)) * (total_b / (n * n));
    if s == 0.0 {
        return Ok((0.0, false));
    }
    let statistic = n * v2 / s;
    Ok((statistic, statistic > threshold))
}

/// Runs the independence test for every feature column of `ds` against one
/// binary target vector, keeping the features that reject independence.
pub fn filter_features(ds: &Dataset, targets: &[f64], alpha_d: f64) -> Result<DcfResult> {
    if ds.x.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} targets",
            ds.x.len(),
            targets.len()
        )));
    }
    let threshold = rejection_threshold(alpha_d)?;
    let n_features = ds.norm.len();
    let tested: Vec<(f64, bool)> = (0..n_features)
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = ds.x.iter().map(|row| row[j]).collect();
            independence_test(&column, targets, alpha_d)
        })
        .collect::<Result<_>>()?;
    let statistics: Vec<f64> = tested.iter().map(|t| t.0).collect();
    let kept: Vec<u32> = tested
        .iter()
        .enumerate()
        .filter(|(_, t)| t.1)
        .map(|(j, _)| j as u32)
        .collect();
    Ok(DcfResult {
        statistics,
        threshold,
        kept,
        alpha_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::NormParams;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal definition: build a_rs, double-center, average the product.
    fn dcov_sq_literal(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let a: Vec<Vec<f64>> = (0..n)
            .map(|r| (0..n).map(|s| (x[r] - x[s]).abs()).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..n)
            .map(|r| (0..n).map(|s| (y[r] - y[s]).abs()).collect())
            .collect();
        let center = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let nf = n as f64;
            let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
            let col: Vec<f64> = (0..n)
                .map(|s| m.iter().map(|r| r[s]).sum::<f64>() / nf)
                .collect();
            let grand = row.iter().sum::<f64>() / nf;
            (0..n)
                .map(|r| (0..n).map(|s| m[r][s] - row[r] - col[s] + grand).collect())
                .collect()
        };
        let ca = center(&a);
        let cb = center(&b);
        let mut acc = 0.0;
        for r in 0..n {
            for s in 0..n {
                acc += ca[r][s] * cb[r][s];
            }
        }
        acc / (n * n) as f64
    }

    #[test]
    fn two_point_case() {
        let v = distance_covariance_sq(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        assert_relative_eq!(v, dcov_sq_literal(&[0.0, 1.0], &[0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn constant_vector_gives_zero_and_no_rejection() {
        let x = vec![3.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(distance_covariance_sq(&x, &y).unwrap(), 0.0);
        let (stat, rejected) = independence_test(&x, &y, 0.05).unwrap();
        assert_eq!(stat, 0.0);
        assert!(!rejected);
    }

    #[test]
    fn matches_literal_double_centering_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [2usize, 3, 7, 15, 30] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let fast = distance_covariance_sq(&x, &y).unwrap();
            let literal = dcov_sq_literal(&x, &y);
            assert!((fast - literal).abs() <= 1e-10, "n={n}: {fast} vs {literal}");
        }
    }

    #[test]
    fn symmetric_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 25;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let xy = distance_covariance_sq(&x, &y).unwrap();
        let yx = distance_covariance_sq(&y, &x).unwrap();
        assert_relative_eq!(xy, yx, epsilon = 1e-14);

        let perm: Vec<usize> = (0..n).rev().collect();
        let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        assert_relative_eq!(xy, distance_covariance_sq(&xp, &yp).unwrap(), epsilon = 1e-12);

        assert!(distance_covariance_sq(&x, &x).unwrap() > 0.0);
    }

    #[test]
    fn statistic_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let (s1, _) = independence_test(&x, &y, 0.05).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y2: Vec<f64> = y.iter().map(|v| 0.3 * v).collect();
        let (s2, _) = independence_test(&x2, &y2, 0.05).unwrap();
        assert_relative_eq!(s1, s2, epsilon = 1e-10);
    }

    #[test]
    fn self_dependence_is_detected() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let (stat, rejected) = independence_test(&x, &x, 0.05).unwrap();
        assert!(rejected, "statistic {stat} should exceed the threshold");
    }

    #[test]
    fn threshold_matches_normal_quantile() {
        // 1.959963985... squared
        assert_relative_eq!(rejection_threshold(0.05).unwrap(), 3.8414588206, epsilon = 1e-6);
        assert!(rejection_threshold(0.0).is_err());
        assert!(rejection_threshold(1.0).is_err());
    }

    #[test]
    fn filter_keeps_duplicated_informative_columns_and_drops_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 120;
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
        let targets: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        // features: informative, its duplicate, a constant
        let x: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| {
                let v = 0.8 * t + 0.1 * rng.gen::<f64>();
                vec![v, v, 0.0]
            })
            .collect();
        let ds = Dataset {
            x,
            labels,
            norm: vec![NormParams { min: -1.0, max: 1.0 }; 3],
        };
        let res = filter_features(&ds, &targets, 0.05).unwrap();
        assert_eq!(res.kept, vec![0, 1]);
        assert_eq!(res.statistics.len(), 3);
        assert_eq!(res.statistics[2], 0.0);
        assert_eq!(res.statistics[0], res.statistics[1]);
    }

    #[test]
    fn input_validation() {
        assert!(distance_covariance_sq(&[1.0], &[1.0]).is_err());
        assert!(distance_covariance_sq(&[1.0, 2.0], &[1.0]).is_err());
        let big = vec![0.0; MAX_SAMPLES + 1];
        assert!(distance_covariance_sq(&big, &big).is_err());
        assert!(independence_test(&[0.0, 1.0], &[0.0, 1.0], 1.5).is_err());
    }
}

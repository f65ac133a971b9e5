//! Logistic-loss model fitting for a fixed regressor subset, coefficient
//! standard errors, and significance-based pruning.
//!
//! Labels are ±1. Fitting minimizes the mean logistic loss with a damped
//! Newton iteration; standard errors come from the weighted information
//! matrix and the dispersion of the weighted working residuals; pruning
//! removes every coefficient whose two-sided Student's-t interval covers 0
//! and re-estimates the survivors.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_newton_iters: usize,
    pub grad_tol: f64,
    pub ridge: f64,
    /// Confidence level of the pruning interval, in (0,1).
    pub alpha: f64,
    /// Re-run the prune/re-fit cycle until no coefficient is removed.
    pub iterate_pruning: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            // A short Newton budget is load-bearing, not a shortcut. Run to
            // full convergence on separable data and the working weights
            // p(1-p) = e^{-m} vanish, the coefficient variances blow up or
            // collapse, and the significance test loses its grip: models
            // stop shrinking, every sampled structure ties at perfect
            // training accuracy, and the selection loop stalls with smeared
            // inclusion probabilities. A few damped steps give calibrated
            // margins that keep the test informative at every model size.
            max_newton_iters: 8,
            grad_tol: 1e-8,
            ridge: 0.0,
            alpha: 0.99,
            iterate_pruning: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_newton_iters < 1 {
            return Err(Error::InvalidArgument("max_newton_iters must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("grad_tol must be > 0".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge must be >= 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub newton_iters: usize,
    /// Set when a singular (information) matrix forced a ridge fallback.
    pub hessian_ridged: bool,
}

/// A fitted sparse model. `selected[i]` names the regressor behind
/// `theta[i]`; indices are column positions of the fitting design until a
/// caller relabels them into its own regressor numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub selected: Vec<u32>,
    pub theta: Vec<f64>,
    /// Standard error per coefficient.
    pub sigma: Vec<f64>,
    /// Mean logistic loss at `theta` (no ridge term).
    pub loss: f64,
    /// Training performance index, in [0,1].
    pub j: f64,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// The empty model scores 0 for every sample, which the sign convention
    /// reads as the "rest" class: it is right exactly on the -1 samples.
    pub fn empty(y: &[f64]) -> FittedModel {
        let negatives = y.iter().filter(|&&v| v < 0.0).count();
        FittedModel {
            selected: Vec::new(),
            theta: Vec::new(),
            sigma: Vec::new(),
            loss: std::f64::consts::LN_2,
            j: if y.is_empty() { 0.0 } else { negatives as f64 / y.len() as f64 },
            converged: true,
            diagnostics: FitDiagnostics::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Rewrites column positions into the caller's regressor indices.
    pub fn relabel(mut self, map: &[u32]) -> FittedModel {
        for s in &mut self.selected {
            *s = map[*s as usize];
        }
        self
    }
}

/// log(1 + exp(-m)) without overflow for any margin m.
#[inline]
fn loss_term(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// 1 / (1 + exp(m)), the probability mass the model puts on the wrong side
/// of margin m.
#[inline]
fn wrong_side(m: f64) -> f64 {
    if m >= 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

fn column(design: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = design.nrows();
    &design.as_slice()[j * n..(j + 1) * n]
}

fn scores(design: &DMatrix<f64>, theta: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            for (o, &v) in out.iter_mut().zip(column(design, j)) {
                *o += t * v;
            }
        }
    }
}

/// Mean logistic loss of `theta` on (`design`, `y`).
pub fn logistic_loss(theta: &[f64], design: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = design.nrows();
    let mut yhat = vec![0.0; n];
    scores(design, theta, &mut yhat);
    let total: f64 = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| loss_term(yy * s))
        .sum();
    total / n as f64
}

/// Gradient of the mean logistic loss at `theta`.
pub fn loss_gradient(theta: &[f64], design: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = design.nrows();
    let mut yhat = vec![0.0; n];
    scores(design, theta, &mut yhat);
    let v: Vec<f64> = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| yy * wrong_side(yy * s))
        .collect();
    (0..theta.len())
        .map(|j| -dot(column(design, j), &v) / n as f64)
        .collect()
}

/// Hessian of the mean logistic loss at `theta`.
pub fn loss_hessian(theta: &[f64], design: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    let n = design.nrows();
    let tau = theta.len();
    let mut yhat = vec![0.0; n];
    scores(design, theta, &mut yhat);
    let w: Vec<f64> = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| {
            let p = wrong_side(yy * s);
            p * (1.0 - p)
        })
        .collect();
    weighted_gram(design, &w, 1.0 / n as f64, tau)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// scale * design^T diag(w) design, exploiting symmetry.
fn weighted_gram(design: &DMatrix<f64>, w: &[f64], scale: f64, tau: usize) -> DMatrix<f64> {
    let n = design.nrows();
    let mut g = DMatrix::zeros(tau, tau);
    let mut wc = vec![0.0; n];
    for i in 0..tau {
        let ci = column(design, i);
        for ((t, &wk), &v) in wc.iter_mut().zip(w).zip(ci) {
            *t = wk * v;
        }
        for j in i..tau {
            let v = dot(&wc, column(design, j)) * scale;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Solves m*x = rhs for symmetric positive semidefinite m, adding a small
/// diagonal ridge when the factorization fails (rank-deficient designs).
fn solve_spd(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    ridged: &mut bool,
) -> Result<(DVector<f64>, Option<Cholesky<f64, nalgebra::Dyn>>)> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        let x = ch.solve(rhs);
        return Ok((x, Some(ch)));
    }
    let tau = m.nrows();
    let trace: f64 = (0..tau).map(|i| m[(i, i)]).sum();
    let mut lambda = if trace > 0.0 { 1e-8 * trace / tau as f64 } else { 1e-12 };
    for _ in 0..12 {
        let mut damped = m.clone();
        for i in 0..tau {
            damped[(i, i)] += lambda;
        }
        if let Some(ch) = Cholesky::new(damped) {
            *ridged = true;
            let x = ch.solve(rhs);
            return Ok((x, Some(ch)));
        }
        lambda *= 10.0;
    }
    Err(Error::Numeric(
        "information matrix could not be factorized even with ridge damping".into(),
    ))
}

fn check_problem(design: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    let (n, tau) = design.shape();
    if tau == 0 {
        return Err(Error::InvalidArgument("design needs at least one column".into()));
    }
    if n < tau {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot identify {tau} coefficients"
        )));
    }
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but y has {} entries",
            y.len()
        )));
    }
    Ok(())
}

/// Fits coefficients by damped Newton iterations from theta = 0.
pub fn fit(design: &DMatrix<f64>, y: &[f64], cfg: &FitConfig) -> Result<FittedModel> {
    let zeros = vec![0.0; design.ncols()];
    fit_from(design, y, cfg, &zeros)
}

/// Fits coefficients starting from an arbitrary initial point. The
/// unregularized problem is strictly convex for full-rank designs, so the
/// starting point affects only the path, not the limit.
pub fn fit_from(
    design: &DMatrix<f64>,
    y: &[f64],
    cfg: &FitConfig,
    theta0: &[f64],
) -> Result<FittedModel> {
    cfg.validate()?;
    check_problem(design, y)?;
    let (n, tau) = design.shape();
    if theta0.len() != tau {
        return Err(Error::InvalidArgument(format!(
            "theta0 has {} entries for {tau} columns",
            theta0.len()
        )));
    }
    let nf = n as f64;

    let mut theta = theta0.to_vec();
    let mut yhat = vec![0.0; n];
    scores(design, &theta, &mut yhat);
    let mut loss = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| loss_term(yy * s))
        .sum::<f64>()
        / nf;
    let sq = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
    let mut objective = loss + 0.5 * cfg.ridge * sq(&theta);

    let mut diagnostics = FitDiagnostics::default();
    let mut converged = false;
    let mut p = vec![0.0; n]; // wrong-side probability per sample
    let mut dyhat = vec![0.0; n];

    for iter in 0..cfg.max_newton_iters {
        for (t, (&s, &yy)) in p.iter_mut().zip(yhat.iter().zip(y)) {
            *t = wrong_side(yy * s);
        }
        let mut grad = DVector::zeros(tau);
        let v: Vec<f64> = p.iter().zip(y).map(|(&pk, &yy)| yy * pk).collect();
        for j in 0..tau {
            grad[j] = -dot(column(design, j), &v) / nf + cfg.ridge * theta[j];
        }
        if grad.norm() <= cfg.grad_tol {
            converged = true;
            break;
        }
        diagnostics.newton_iters = iter + 1;

        let w: Vec<f64> = p.iter().map(|&pk| pk * (1.0 - pk)).collect();
        let mut hess = weighted_gram(design, &w, 1.0 / nf, tau);
        if cfg.ridge > 0.0 {
            for i in 0..tau {
                hess[(i, i)] += cfg.ridge;
            }
        }
        let (delta, _) = solve_spd(&hess, &(-grad), &mut diagnostics.hessian_ridged)?;

        dyhat.fill(0.0);
        for (j, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (o, &c) in dyhat.iter_mut().zip(column(design, j)) {
                    *o += d * c;
                }
            }
        }

        // backtracking: halve until the objective stops exceeding its value
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let cand_loss = yhat
                .iter()
                .zip(&dyhat)
                .zip(y)
                .map(|((&s, &d), &yy)| loss_term(yy * (s + step * d)))
                .sum::<f64>()
                / nf;
            let cand_theta_sq = if cfg.ridge > 0.0 {
                theta
                    .iter()
                    .zip(delta.iter())
                    .map(|(&t, &d)| (t + step * d) * (t + step * d))
                    .sum::<f64>()
            } else {
                0.0
            };
            let cand_objective = cand_loss + 0.5 * cfg.ridge * cand_theta_sq;
            if cand_objective <= objective {
                for (t, &d) in theta.iter_mut().zip(delta.iter()) {
                    *t += step * d;
                }
                for (s, &d) in yhat.iter_mut().zip(&dyhat) {
                    *s += step * d;
                }
                loss = cand_loss;
                objective = cand_objective;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let j = performance_from_scores(&yhat, y);
    let sigma = if n > tau {
        variances_at(design, y, &yhat, n - tau, &mut diagnostics.hessian_ridged)?
    } else {
        vec![f64::INFINITY; tau]
    };

    Ok(FittedModel {
        selected: (0..tau as u32).collect(),
        theta,
        sigma,
        loss,
        j,
        converged,
        diagnostics,
    })
}

/// Standard errors at the converged point of `fitted`, which must have been
/// produced from exactly this (`design`, `y`) pair.
pub fn coefficient_variances(
    fitted: &FittedModel,
    design: &DMatrix<f64>,
    y: &[f64],
) -> Result<Vec<f64>> {
    check_problem(design, y)?;
    let (n, tau) = design.shape();
    if fitted.theta.len() != tau {
        return Err(Error::InvalidArgument(format!(
            "model has {} coefficients for {tau} columns",
            fitted.theta.len()
        )));
    }
    if n <= tau {
        return Ok(vec![f64::INFINITY; tau]);
    }
    let mut yhat = vec![0.0; n];
    scores(design, &fitted.theta, &mut yhat);
    let mut ridged = false;
    variances_at(design, y, &yhat, n - tau, &mut ridged)
}

/// sigma_j = sqrt(dispersion * (G^-1)_jj) with G the weighted Gram matrix
/// at the fitted scores and dispersion the mean squared weighted working
/// residual. Both factors share the sample weights, so their product stays
/// finite even when large margins drive the weights to zero.
fn variances_at(
    design: &DMatrix<f64>,
    y: &[f64],
    yhat: &[f64],
    dof: usize,
    ridged: &mut bool,
) -> Result<Vec<f64>> {
    let tau = design.ncols();
    let w: Vec<f64> = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| {
            let p = wrong_side(yy * s);
            p * (1.0 - p)
        })
        .collect();
    let g = weighted_gram(design, &w, 1.0, tau);

    // weighted working residual squared: w * (y/(1-p))^2 = p/(1-p) = e^{-m}
    let dispersion = yhat
        .iter()
        .zip(y)
        .map(|(&s, &yy)| (-yy * s).min(700.0).exp())
        .sum::<f64>()
        / dof as f64;

    let rhs = DVector::zeros(tau);
    let (_, chol) = solve_spd(&g, &rhs, ridged)?;
    let inv = chol
        .expect("factorization present on success")
        .inverse();
    Ok((0..tau)
        .map(|jj| (dispersion * inv[(jj, jj)]).max(0.0).sqrt())
        .collect())
}

/// Two-sided Student's-t critical value at confidence `alpha`.
pub fn t_critical(alpha: f64, dof: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("t critical value needs dof >= 1".into()));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Numeric(format!("Student's t: {e}")))?;
    Ok(t.inverse_cdf((1.0 + alpha) / 2.0))
}

/// Keep flag per coefficient: true when the confidence interval
/// [theta - sigma*t, theta + sigma*t] excludes zero.
pub fn prune_mask(theta: &[f64], sigma: &[f64], t_crit: f64) -> Vec<bool> {
    theta
        .iter()
        .zip(sigma)
        .map(|(&t, &s)| t.abs() > s * t_crit)
        .collect()
}

/// Removes coefficients whose interval covers zero and re-fits the rest.
/// One pass by default; `cfg.iterate_pruning` repeats until stable. All
/// coefficients pruned yields the empty model.
pub fn t_test_prune(
    fitted: &FittedModel,
    design: &DMatrix<f64>,
    y: &[f64],
    cfg: &FitConfig,
) -> Result<FittedModel> {
    let mut owned: Option<(FittedModel, DMatrix<f64>)> = None;
    loop {
        let (cur, des): (&FittedModel, &DMatrix<f64>) = match &owned {
            Some((m, d)) => (m, d),
            None => (fitted, design),
        };
        let n = des.nrows();
        let tau = cur.theta.len();
        if tau == 0 {
            return Ok(cur.clone());
        }
        if n <= tau {
            return Ok(FittedModel::empty(y));
        }
        let t_crit = t_critical(cfg.alpha, n - tau)?;
        let mask = prune_mask(&cur.theta, &cur.sigma, t_crit);
        if mask.iter().all(|&keep| keep) {
            return Ok(cur.clone());
        }
        let kept: Vec<usize> = (0..tau).filter(|&i| mask[i]).collect();
        if kept.is_empty() {
            return Ok(FittedModel::empty(y));
        }
        let sub = des.select_columns(&kept);
        let mut refit = fit(&sub, y, cfg)?;
        refit.selected = kept.iter().map(|&i| cur.selected[i]).collect();
        if !cfg.iterate_pruning {
            return Ok(refit);
        }
        owned = Some((refit, sub));
    }
}

/// Performance index: fraction of samples with y * score > 0. A score of
/// exactly zero counts as an error.
pub fn performance_from_scores(yhat: &[f64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let correct = yhat
        .iter()
        .zip(y)
        .filter(|&(&s, &yy)| yy * s > 0.0)
        .count();
    correct as f64 / y.len() as f64
}

/// Performance index of a fitted model on (`design`, `y`).
pub fn performance_j(fitted: &FittedModel, design: &DMatrix<f64>, y: &[f64]) -> f64 {
    let mut yhat = vec![0.0; design.nrows()];
    scores(design, &fitted.theta, &mut yhat);
    performance_from_scores(&yhat, y)
}

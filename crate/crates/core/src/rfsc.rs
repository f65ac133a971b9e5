//! Randomized regressor-structure selection.
//!
//! Each regressor carries an inclusion probability. Every iteration samples a
//! population of candidate structures from those probabilities, fits and
//! prunes each candidate, scores it, and nudges each probability by the
//! observed performance gap between models that contain the regressor and
//! models that do not. Probabilities concentrate on a sparse high-performing
//! structure; the loop stops when they stop moving.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryTargets;
use crate::error::{Error, Result};
use crate::estimator::{self, FitConfig, FittedModel};
use crate::features::RegressorMatrix;
use crate::seed;

/// Initial inclusion probability: one regressor per model on average, or a
/// caller-chosen fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MuInit {
    /// 1 / number of regressors.
    Auto,
    Fixed(f64),
}

impl MuInit {
    pub fn resolve(&self, n_regressors: usize) -> f64 {
        match *self {
            MuInit::Auto => 1.0 / n_regressors.max(1) as f64,
            MuInit::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfscConfig {
    /// Structures sampled per iteration.
    pub n_population: usize,
    pub max_iterations: usize,
    /// Stop when no inclusion probability moved by more than this.
    pub epsilon: f64,
    pub mu_init: MuInit,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for RfscConfig {
    fn default() -> Self {
        RfscConfig {
            n_population: 100,
            max_iterations: 300,
            epsilon: 0.01,
            mu_init: MuInit::Auto,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

impl RfscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_population < 2 {
            return Err(Error::InvalidArgument("n_population must be >= 2".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if let MuInit::Fixed(v) = self.mu_init {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "mu_init must lie in (0,1), got {v}"
                )));
            }
        }
        self.fit.validate()
    }
}

/// Regressor inclusion probabilities at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RipState {
    pub mu: Vec<f64>,
    pub iteration: usize,
}

/// One row of the selection history.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Inclusion probabilities that changed this iteration: (index, new value).
    pub mu_updates: Vec<(u32, f64)>,
    pub avg_loss: f64,
    /// Mean sampled-structure size, before pruning.
    pub ams_pre: f64,
    /// Mean model size after pruning and re-fit.
    pub ams_post: f64,
    pub j_max: f64,
    pub j_mean: f64,
    pub gamma: f64,
    /// Regressors at or above the 0.5 extraction threshold.
    pub n_mu_above_half: usize,
}

/// Result of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Final model: regressors whose probability ended at or above 0.5,
    /// refitted and pruned once. `selected` holds regressor-set indices.
    pub model: FittedModel,
    pub traces: Vec<IterationTrace>,
    /// False when the iteration cap stopped the loop before convergence.
    pub rip_converged: bool,
    pub rip: RipState,
}

/// Draws one structure: regressor j joins with probability mu[j]. Exactly
/// one uniform draw is consumed per regressor, so a fixed RNG stream yields
/// a fixed structure regardless of the outcome pattern.
pub fn sample_structure(rip: &RipState, rng: &mut impl Rng) -> Vec<u32> {
    rip.mu
        .iter()
        .enumerate()
        .filter(|&(_, &m)| rng.gen::<f64>() < m)
        .map(|(j, _)| j as u32)
        .collect()
}

/// Importance of each regressor across a scored population: mean J of the
/// models containing it minus mean J of the models lacking it. When either
/// side of the split is empty the population carries no evidence and the
/// importance is 0.
pub fn importance(population: &[(&[u32], f64)], n_regressors: usize) -> Vec<f64> {
    let n = population.len();
    if n == 0 {
        return vec![0.0; n_regressors];
    }
    let mut sum_with = vec![0.0; n_regressors];
    let mut count_with = vec![0usize; n_regressors];
    let mut total = 0.0;
    for (structure, j) in population {
        total += j;
        for &idx in *structure {
            sum_with[idx as usize] += j;
            count_with[idx as usize] += 1;
        }
    }
    (0..n_regressors)
        .map(|idx| {
            let cw = count_with[idx];
            if cw == 0 || cw == n {
                0.0
            } else {
                let with = sum_with[idx] / cw as f64;
                let without = (total - sum_with[idx]) / (n - cw) as f64;
                with - without
            }
        })
        .collect()
}

/// Adaptive update gain: small when the population performances spread out,
/// large when they agree.
pub fn step_size(j_max: f64, j_mean: f64) -> f64 {
    1.0 / (10.0 * (j_max - j_mean) + 0.1)
}

/// Applies one probability update, clamping every value into [0,1].
pub fn update_rips(rip: &RipState, importance: &[f64], gamma: f64) -> RipState {
    RipState {
        mu: rip
            .mu
            .iter()
            .zip(importance)
            .map(|(&m, &imp)| (m + gamma * imp).clamp(0.0, 1.0))
            .collect(),
        iteration: rip.iteration + 1,
    }
}

/// Fit, prune, re-fit one candidate structure; indices in the returned model
/// refer to the regressor set behind `matrix`. Structures that are empty or
/// wider than the sample count evaluate as the empty "rest" model.
fn evaluate_structure(
    structure: &[u32],
    matrix: &RegressorMatrix,
    y: &[f64],
    fit_cfg: &FitConfig,
) -> Result<FittedModel> {
    let n = matrix.n_rows();
    if structure.is_empty() || structure.len() >= n {
        return Ok(FittedModel::empty(y));
    }
    let design = matrix.design(structure);
    let fitted = estimator::fit(&design, y, fit_cfg)?;
    let pruned = estimator::t_test_prune(&fitted, &design, y, fit_cfg)?;
    Ok(pruned.relabel(structure))
}

const SAMPLE_TAG: u64 = 0x5A4D;

/// Runs the full selection loop for one binary problem over the evaluated
/// regressor columns in `matrix`.
pub fn select(
    matrix: &RegressorMatrix,
    targets: &BinaryTargets,
    cfg: &RfscConfig,
) -> Result<Selection> {
    cfg.validate()?;
    if targets.len() != matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} rows",
            targets.len(),
            matrix.n_rows()
        )));
    }
    if targets.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("targets must be +1 or -1".into()));
    }
    let n_r = matrix.n_regressors();
    if n_r == 0 {
        return Err(Error::InvalidArgument("empty regressor set".into()));
    }

    let mut rip = RipState {
        mu: vec![cfg.mu_init.resolve(n_r); n_r],
        iteration: 0,
    };
    let mut traces: Vec<IterationTrace> = Vec::new();
    let mut rip_converged = false;
    // fits are deterministic per structure, so results are reusable across
    // iterations as well as within one population
    let mut cache: HashMap<Vec<u32>, FittedModel> = HashMap::new();

    for t in 1..=cfg.max_iterations {
        let structures: Vec<Vec<u32>> = (0..cfg.n_population)
            .map(|m| {
                let s = seed::mix(&[cfg.seed, SAMPLE_TAG, t as u64, m as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                sample_structure(&rip, &mut rng)
            })
            .collect();

        let mut jobs: Vec<Vec<u32>> = Vec::new();
        let mut seen: HashSet<&[u32]> = HashSet::new();
        for s in &structures {
            if !cache.contains_key(s.as_slice()) && seen.insert(s.as_slice()) {
                jobs.push(s.clone());
            }
        }
        let fitted: Vec<(Vec<u32>, FittedModel)> = jobs
            .into_par_iter()
            .map(|s| {
                let model = evaluate_structure(&s, matrix, targets, &cfg.fit)?;
                Ok((s, model))
            })
            .collect::<Result<_>>()?;
        cache.extend(fitted);

        let evals: Vec<&FittedModel> = structures
            .iter()
            .map(|s| &cache[s.as_slice()])
            .collect();

        let np = cfg.n_population as f64;
        let j_mean = evals.iter().map(|e| e.j).sum::<f64>() / np;
        let j_max = evals.iter().map(|e| e.j).fold(f64::NEG_INFINITY, f64::max);
        let avg_loss = evals.iter().map(|e| e.loss).sum::<f64>() / np;
        let ams_pre = structures.iter().map(|s| s.len()).sum::<usize>() as f64 / np;
        let ams_post = evals.iter().map(|e| e.len()).sum::<usize>() as f64 / np;
        let gamma = step_size(j_max, j_mean);

        // Importance conditions on the sampled structure, not the pruned
        // one: a term the significance test removed cannot change the
        // evaluated model, so its presence earns no credit and inclusion
        // probabilities cannot inflate on free riders.
        let population: Vec<(&[u32], f64)> = structures
            .iter()
            .zip(&evals)
            .map(|(s, e)| (s.as_slice(), e.j))
            .collect();
        let imp = importance(&population, n_r);
        let next = update_rips(&rip, &imp, gamma);

        let mut max_delta = 0.0f64;
        let mut mu_updates = Vec::new();
        for (j, (&old, &new)) in rip.mu.iter().zip(&next.mu).enumerate() {
            let d = (new - old).abs();
            if d > 0.0 {
                mu_updates.push((j as u32, new));
            }
            max_delta = max_delta.max(d);
        }
        let n_mu_above_half = next.mu.iter().filter(|&&m| m >= 0.5).count();

        traces.push(IterationTrace {
            iteration: t,
            mu_updates,
            avg_loss,
            ams_pre,
            ams_post,
            j_max,
            j_mean,
            gamma,
            n_mu_above_half,
        });
        rip = next;

        if max_delta <= cfg.epsilon {
            rip_converged = true;
            break;
        }
    }

    let final_structure: Vec<u32> = rip
        .mu
        .iter()
        .enumerate()
        .filter(|&(_, &m)| m >= 0.5)
        .map(|(j, _)| j as u32)
        .collect();
    let model = match cache.get(final_structure.as_slice()) {
        Some(m) => m.clone(),
        None => evaluate_structure(&final_structure, matrix, targets, &cfg.fit)?,
    };

    Ok(Selection {
        model,
        traces,
        rip_converged,
        rip,
    })
}

//! Stratified cross-validation protocol: per fold, train one classifier
//! (repeating the selection and keeping the best run per class), evaluate on
//! the held-out fold, and aggregate.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{ClassModel, Classifier, TrainMeta};
use crate::dataset::{self, FoldPlan, RawDataset};
use crate::dcf::{self, DcfMode};
use crate::error::{Error, Result};
use crate::features::{RegressorMatrix, RegressorSet};
use crate::metrics::{accuracy, kappa, ConfusionMatrix};
use crate::rfsc::{self, IterationTrace, RfscConfig, Selection};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvParams {
    pub n_folds: usize,
    pub n_repeats: usize,
    pub max_degree: usize,
    pub dcf: DcfMode,
    pub alpha_d: f64,
    /// Selection configuration; its `seed` acts as the master seed for fold
    /// shuffling and every derived run.
    pub rfsc: RfscConfig,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams {
            n_folds: 10,
            n_repeats: 10,
            max_degree: 2,
            dcf: DcfMode::Auto,
            alpha_d: 0.05,
            rfsc: RfscConfig::default(),
        }
    }
}

impl CvParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::InvalidArgument("n_folds must be >= 2".into()));
        }
        if self.n_repeats < 1 {
            return Err(Error::InvalidArgument("n_repeats must be >= 1".into()));
        }
        if self.max_degree < 1 {
            return Err(Error::InvalidArgument("max_degree must be >= 1".into()));
        }
        if !(self.alpha_d > 0.0 && self.alpha_d < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_d must lie in (0,1), got {}",
                self.alpha_d
            )));
        }
        self.rfsc.validate()
    }
}

/// A trained classifier plus per-class selection history (of the retained
/// repeat) and the repeat index each class model came from.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub classifier: Classifier,
    /// Retained repeat per class model, same order as `classifier.models`.
    pub best_repeats: Vec<usize>,
    /// (class id, iteration history of the retained repeat).
    pub traces: Vec<(usize, Vec<IterationTrace>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub best_repeats: Vec<usize>,
    pub accuracy: f64,
    /// Undefined (None) when the fold's marginals make kappa degenerate
    /// without perfect agreement, e.g. single-sample folds.
    pub kappa: Option<f64>,
    pub n_attributes: usize,
    pub n_regressors: usize,
    pub n_test: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub accuracy_mean: f64,
    /// Mean over folds where kappa is defined; None when it never is.
    pub kappa_mean: Option<f64>,
    pub attributes_mean: f64,
    pub regressors_mean: f64,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> CvReport {
        let n = folds.len() as f64;
        let accuracy_mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
        let kappas: Vec<f64> = folds.iter().filter_map(|f| f.kappa).collect();
        let kappa_mean = if kappas.is_empty() {
            None
        } else {
            Some(kappas.iter().sum::<f64>() / kappas.len() as f64)
        };
        let attributes_mean = folds.iter().map(|f| f.n_attributes as f64).sum::<f64>() / n;
        let regressors_mean = folds.iter().map(|f| f.n_regressors as f64).sum::<f64>() / n;
        CvReport {
            folds,
            accuracy_mean,
            kappa_mean,
            attributes_mean,
            regressors_mean,
        }
    }
}

fn with_fold(fold: usize, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("fold {fold}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("fold {fold}: {m}")),
        other => other,
    }
}

const RUN_TAG: u64 = 0x52C5;

fn run_seed(master: u64, fold: Option<usize>, class_id: usize, repeat: usize) -> u64 {
    let fold_part = fold.map(|f| f as u64).unwrap_or(u64::MAX);
    seed::mix(&[master, RUN_TAG, fold_part, class_id as u64, repeat as u64])
}

/// Returns true when `b` beats `a`: higher training J, then fewer
/// regressors, then lower loss. Strict comparison keeps the earliest repeat
/// on full ties.
fn improves(b: &Selection, a: &Selection) -> bool {
    if b.model.j != a.model.j {
        return b.model.j > a.model.j;
    }
    if b.model.len() != a.model.len() {
        return b.model.len() < a.model.len();
    }
    b.model.loss < a.model.loss
}

/// Trains one classifier on `train_raw`: normalization and optional feature
/// filtering are fitted on these rows only, then each class runs
/// `n_repeats` seeded selections and keeps its best model.
fn train_models(
    train_raw: &RawDataset,
    params: &CvParams,
    fold: Option<usize>,
) -> Result<TrainedFold> {
    params.validate()?;
    let ds = dataset::normalize(train_raw);
    let n_features = train_raw.n_features();
    let n_classes = train_raw.n_classes();
    let dcf_enabled = params.dcf.enabled(n_features);

    let class_ids: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (1..=n_classes).collect()
    };

    let mut models = Vec::with_capacity(class_ids.len());
    let mut best_repeats = Vec::with_capacity(class_ids.len());
    let mut traces = Vec::with_capacity(class_ids.len());

    for &class_id in &class_ids {
        let targets = dataset::recode(&ds.labels, class_id);
        let kept: Vec<u32> = if dcf_enabled {
            dcf::filter_features(&ds, &targets, params.alpha_d)?.kept
        } else {
            (0..n_features as u32).collect()
        };
        let set = RegressorSet::enumerate(&kept, params.max_degree);
        let matrix = RegressorMatrix::new(set, ds.x.clone());

        // runs are independent given their derived seeds; reducing over the
        // index-ordered results keeps retention identical to a serial sweep
        let runs: Vec<Selection> = (0..params.n_repeats)
            .into_par_iter()
            .map(|repeat| {
                let cfg = RfscConfig {
                    seed: run_seed(params.rfsc.seed, fold, class_id, repeat),
                    ..params.rfsc.clone()
                };
                rfsc::select(&matrix, &targets, &cfg)
            })
            .collect::<Result<_>>()?;
        let mut best: Option<(usize, Selection)> = None;
        for (repeat, sel) in runs.into_iter().enumerate() {
            let replace = match &best {
                None => true,
                Some((_, cur)) => improves(&sel, cur),
            };
            if replace {
                best = Some((repeat, sel));
            }
        }
        let (repeat, sel) = best.expect("n_repeats >= 1");
        best_repeats.push(repeat);
        traces.push((class_id, sel.traces));
        models.push(ClassModel {
            class_id,
            kept_features: kept,
            regressors: matrix.set().clone(),
            model: sel.model,
        });
    }

    let single_repeat = if best_repeats.len() == 1 {
        Some(best_repeats[0])
    } else {
        None
    };
    let classifier = Classifier {
        label_names: train_raw.label_names.clone(),
        feature_names: train_raw.feature_names.clone(),
        norm: ds.norm,
        models,
        meta: TrainMeta {
            max_degree: params.max_degree,
            dcf_enabled,
            alpha_d: params.alpha_d,
            rfsc: params.rfsc.clone(),
            fold,
            repeat: single_repeat,
        },
    };
    Ok(TrainedFold {
        classifier,
        best_repeats,
        traces,
    })
}

/// Trains on the rows outside `fold`; the held-out rows never touch
/// normalization, filtering, or selection.
pub fn train_fold(
    raw: &RawDataset,
    plan: &FoldPlan,
    fold: usize,
    params: &CvParams,
) -> Result<TrainedFold> {
    let train_idx = plan.train_indices(fold);
    train_models(&raw.subset(&train_idx), params, Some(fold))
        .map_err(|e| with_fold(fold, e))
}

/// Trains one classifier on the entire dataset.
pub fn train_full(raw: &RawDataset, params: &CvParams) -> Result<TrainedFold> {
    train_models(raw, params, None)
}

/// Full protocol: stratified folds from the master seed, one trained
/// classifier per fold, held-out evaluation, aggregation.
pub fn run_cv(raw: &RawDataset, params: &CvParams) -> Result<CvReport> {
    params.validate()?;
    let plan = FoldPlan::stratified(&raw.labels, params.n_folds, params.rfsc.seed)?;
    let n_classes = raw.n_classes();

    // folds are independent; collecting by index keeps the report identical
    // regardless of completion order
    let folds: Vec<FoldResult> = (0..params.n_folds)
        .into_par_iter()
        .map(|fold| {
            let started = Instant::now();
            let trained = train_fold(raw, &plan, fold, params)?;
            let test_idx = plan.test_indices(fold);

            let mut predicted = Vec::with_capacity(test_idx.len());
            let mut actual = Vec::with_capacity(test_idx.len());
            for &i in &test_idx {
                let (class, _) = trained
                    .classifier
                    .predict(&raw.features[i])
                    .map_err(|e| with_fold(fold, e))?;
                predicted.push(class);
                actual.push(raw.labels[i]);
            }
            let cm = ConfusionMatrix::from_pairs(&predicted, &actual, n_classes)
                .map_err(|e| with_fold(fold, e))?;
            let acc = accuracy(&cm).map_err(|e| with_fold(fold, e))?;
            let kap = kappa(&cm).ok();
            let (n_attributes, n_regressors) = trained.classifier.model_size_report();

            Ok(FoldResult {
                fold,
                best_repeats: trained.best_repeats,
                accuracy: acc,
                kappa: kap,
                n_attributes,
                n_regressors,
                n_test: test_idx.len(),
                wall_time_s: started.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CvReport::from_folds(folds))
}

//! Dataset loading, normalization and stratified fold assignment.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class labels recoded to +1 (target class) / -1 (rest).
pub type BinaryTargets = Vec<f64>;

/// A dataset as read from disk: raw feature values and 1-based class ids.
#[derive(Debug, Clone)]
pub struct RawDataset {
    /// Row-major feature values, one inner vector per sample.
    pub features: Vec<Vec<f64>>,
    /// Class id per sample, in 1..=n_classes.
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Original label tokens, indexed by class id - 1.
    pub label_names: Vec<String>,
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

/// A normalized dataset: every feature lies in [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub norm: Vec<NormParams>,
}

impl RawDataset {
    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Returns the rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_names: self.label_names.clone(),
        }
    }
}

fn detect_delimiter(line: &str) -> char {
    for d in [';', ',', '\t'] {
        if line.contains(d) {
            return d;
        }
    }
    ' '
}

fn split_fields(line: &str, delim: char) -> Vec<&str> {
    if delim == ' ' {
        line.split_whitespace().collect()
    } else {
        line.split(delim).map(str::trim).collect()
    }
}

fn is_numeric(field: &str) -> bool {
    field.parse::<f64>().is_ok()
}

/// Loads a delimited text file. The last column holds the class label
/// (integer or string); remaining columns are numeric features.
///
/// Delimiter is auto-detected among semicolon, comma, tab and whitespace.
/// A header row is assumed when any feature field (all but the last) of the
/// first line fails to parse as a number; the last column is exempt because
/// string labels are data. Labels are remapped to 1..=n_classes in order of
/// first appearance.
pub fn load(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(&display, e))?;

    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut delim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let d = *delim.get_or_insert_with(|| detect_delimiter(line));
        rows.push((i + 1, split_fields(line, d)));
    }
    if rows.is_empty() {
        return Err(Error::parse(&display, 1, "file contains no data"));
    }

    let first = &rows[0].1;
    let has_header = first.len() >= 2 && first[..first.len() - 1].iter().any(|f| !is_numeric(f));
    let (header, data) = if has_header {
        (Some(rows.remove(0)), rows)
    } else {
        (None, rows)
    };
    if data.is_empty() {
        return Err(Error::parse(&display, 1, "file contains a header but no data rows"));
    }

    let n_cols = data[0].1.len();
    if n_cols < 2 {
        return Err(Error::parse(
            &display,
            data[0].0,
            "rows need at least one feature column and a label column",
        ));
    }
    let n_features = n_cols - 1;

    let feature_names: Vec<String> = match &header {
        Some((line, fields)) => {
            if fields.len() != n_cols {
                return Err(Error::parse(
                    &display,
                    *line,
                    format!("header has {} fields, data rows have {}", fields.len(), n_cols),
                ));
            }
            fields[..n_features].iter().map(|s| s.to_string()).collect()
        }
        None => (1..=n_features).map(|i| format!("x{i}")).collect(),
    };

    let mut features = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut label_names: Vec<String> = Vec::new();

    for (line, fields) in &data {
        if fields.len() != n_cols {
            return Err(Error::parse(
                &display,
                *line,
                format!("expected {} fields, found {}", n_cols, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(n_features);
        for (j, field) in fields[..n_features].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(&display, *line, format!("column {}: not a number: {field:?}", j + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    &display,
                    *line,
                    format!("column {}: non-finite value {field:?}", j + 1),
                ));
            }
            row.push(v);
        }
        let token = fields[n_features].to_string();
        let next_id = label_names.len() + 1;
        let id = *label_ids.entry(token.clone()).or_insert_with(|| {
            label_names.push(token);
            next_id
        });
        features.push(row);
        labels.push(id);
    }

    if label_names.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{display}: need at least 2 classes, found {}",
            label_names.len()
        )));
    }

    Ok(RawDataset {
        features,
        labels,
        feature_names,
        label_names,
    })
}

/// Fits per-feature min/max on `raw` and rescales every feature to [0, 1].
/// A constant feature maps to 0 everywhere.
pub fn normalize(raw: &RawDataset) -> Dataset {
    let n_features = raw.n_features();
    let mut norm = vec![
        NormParams {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        n_features
    ];
    for row in &raw.features {
        for (p, &v) in norm.iter_mut().zip(row) {
            p.min = p.min.min(v);
            p.max = p.max.max(v);
        }
    }
    let x = raw
        .features
        .iter()
        .map(|row| scale_row(row, &norm))
        .collect();
    Dataset {
        x,
        labels: raw.labels.clone(),
        norm,
    }
}

fn scale_row(row: &[f64], norm: &[NormParams]) -> Vec<f64> {
    row.iter()
        .zip(norm)
        .map(|(&v, p)| {
            if p.max > p.min {
                (v - p.min) / (p.max - p.min)
            } else {
                0.0
            }
        })
        .collect()
}

/// Applies training-set normalization to an unseen row, clamping to [0, 1]
/// so values outside the training range cannot leave the model's domain and
/// monomial regressors stay non-negative.
pub fn apply_normalization(row: &[f64], norm: &[NormParams]) -> Result<Vec<f64>> {
    if row.len() != norm.len() {
        return Err(Error::InvalidArgument(format!(
            "row has {} features, normalization expects {}",
            row.len(),
            norm.len()
        )));
    }
    Ok(scale_row(row, norm)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect())
}

/// Recodes labels to +1 for `class_id` and -1 for every other class.
pub fn recode(labels: &[usize], class_id: usize) -> BinaryTargets {
    labels
        .iter()
        .map(|&l| if l == class_id { 1.0 } else { -1.0 })
        .collect()
}

/// A stratified assignment of samples to cross-validation folds.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub n_folds: usize,
    /// Fold id in 0..n_folds for each sample.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Shuffles each class separately and deals samples to folds in
    /// round-robin order, chaining the dealing position across classes so
    /// both per-class counts and total fold sizes differ by at most one.
    pub fn stratified(labels: &[usize], n_folds: usize, seed: u64) -> Result<FoldPlan> {
        if n_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_folds must be at least 2, got {n_folds}"
            )));
        }
        if n_folds > labels.len() {
            return Err(Error::InvalidArgument(format!(
                "n_folds = {n_folds} exceeds the {} available samples",
                labels.len()
            )));
        }
        let n_classes = labels.iter().copied().max().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::mix(&[seed, 0xF01D]));
        let mut assignment = vec![0usize; labels.len()];
        let mut next = 0usize;
        for class in 1..=n_classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            members.shuffle(&mut rng);
            for i in members {
                assignment[i] = next % n_folds;
                next += 1;
            }
        }
        Ok(FoldPlan {
            n_folds,
            assignment,
        })
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

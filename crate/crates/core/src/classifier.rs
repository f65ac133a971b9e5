//! One-vs-rest classifier assembly, prediction, and interpretation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{apply_normalization, NormParams};
use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::features::RegressorSet;
use crate::rfsc::RfscConfig;

/// One binary class-vs-rest model plus the context it was trained in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    /// 1-based class id this model separates from the rest.
    pub class_id: usize,
    /// Raw feature indices that survived prefiltering (all features when
    /// filtering was off). Regressor enumeration ran over exactly these.
    pub kept_features: Vec<u32>,
    pub regressors: RegressorSet,
    /// `model.selected` indexes into `regressors.monomials`.
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub max_degree: usize,
    pub dcf_enabled: bool,
    pub alpha_d: f64,
    pub rfsc: RfscConfig,
    /// Cross-validation fold this model was trained for, if any.
    pub fold: Option<usize>,
    /// Repeat index retained as the best run, if trained with repeats.
    pub repeat: Option<usize>,
}

/// A trained multiclass classifier. Binary problems carry a single class-1
/// model; its score's sign decides between class 1 and class 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub norm: Vec<NormParams>,
    pub models: Vec<ClassModel>,
    pub meta: TrainMeta,
}

/// Additive breakdown of one class model's score on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub class_id: usize,
    pub score: f64,
    /// Sum of the positive term contributions.
    pub y_plus: f64,
    /// Magnitude of the negative term contributions.
    pub y_minus: f64,
    /// Confidence: (y_plus - y_minus) / max(y_plus, y_minus); 0 when both
    /// components vanish.
    pub delta: f64,
    /// (regressor, signed contribution) per selected term.
    pub supporting: Vec<(String, f64)>,
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.norm.len()
    }

    fn score_normalized(&self, cm: &ClassModel, x: &[f64]) -> f64 {
        cm.model
            .selected
            .iter()
            .zip(&cm.model.theta)
            .map(|(&idx, &t)| t * cm.regressors.monomials[idx as usize].evaluate(x))
            .sum()
    }

    /// Predicts the class of one raw (unnormalized) row. Returns the 1-based
    /// class id and the per-model scores in model order. Binary problems use
    /// the sign of the single score, a zero score reading as class 2;
    /// multiclass takes the argmax, ties broken by the lowest class id.
    pub fn predict(&self, raw_row: &[f64]) -> Result<(usize, Vec<f64>)> {
        let x = apply_normalization(raw_row, &self.norm)?;
        let scores: Vec<f64> = self
            .models
            .iter()
            .map(|cm| self.score_normalized(cm, &x))
            .collect();
        let class = if self.models.len() == 1 {
            if scores[0] > 0.0 {
                self.models[0].class_id
            } else {
                2
            }
        } else {
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate().skip(1) {
                if s > scores[best] {
                    best = i;
                }
            }
            self.models[best].class_id
        };
        Ok((class, scores))
    }

    /// Splits the class model's score into the mass supporting the class and
    /// the mass against it, term by term.
    pub fn explain(&self, raw_row: &[f64], class_id: usize) -> Result<Explanation> {
        let cm = self
            .models
            .iter()
            .find(|m| m.class_id == class_id)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no model for class {class_id}"))
            })?;
        let x = apply_normalization(raw_row, &self.norm)?;
        let mut y_plus = 0.0;
        let mut y_minus = 0.0;
        let mut supporting = Vec::with_capacity(cm.model.len());
        for (&idx, &t) in cm.model.selected.iter().zip(&cm.model.theta) {
            let mono = &cm.regressors.monomials[idx as usize];
            let c = t * mono.evaluate(&x);
            if c >= 0.0 {
                y_plus += c;
            } else {
                y_minus -= c;
            }
            supporting.push((mono.to_string(), c));
        }
        let max = y_plus.max(y_minus);
        let delta = if max > 0.0 { (y_plus - y_minus) / max } else { 0.0 };
        Ok(Explanation {
            class_id,
            score: y_plus - y_minus,
            y_plus,
            y_minus,
            delta,
            supporting,
        })
    }

    /// Number of distinct input features and distinct regressors used across
    /// all class models (the union, shared terms counted once).
    pub fn model_size_report(&self) -> (usize, usize) {
        let mut features: BTreeSet<u32> = BTreeSet::new();
        let mut regressors: BTreeSet<&[u32]> = BTreeSet::new();
        for cm in &self.models {
            for &idx in &cm.model.selected {
                let mono = &cm.regressors.monomials[idx as usize];
                regressors.insert(mono.factors.as_slice());
                features.extend(mono.factors.iter().copied());
            }
        }
        (features.len(), regressors.len())
    }

    fn validate(&self) -> Result<()> {
        if self.norm.is_empty() {
            return Err(Error::InvalidArgument(
                "classifier has no normalization parameters".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("classifier has no models".into()));
        }
        if self.feature_names.len() != self.norm.len() {
            return Err(Error::InvalidArgument(
                "feature name count does not match feature count".into(),
            ));
        }
        for cm in &self.models {
            let n_r = cm.regressors.len();
            if cm.model.selected.len() != cm.model.theta.len() {
                return Err(Error::InvalidArgument(format!(
                    "class {}: index/coefficient length mismatch",
                    cm.class_id
                )));
            }
            if cm.model.selected.iter().any(|&i| i as usize >= n_r) {
                return Err(Error::InvalidArgument(format!(
                    "class {}: regressor index out of range",
                    cm.class_id
                )));
            }
            for mono in &cm.regressors.monomials {
                if mono.factors.iter().any(|&f| f as usize >= self.norm.len()) {
                    return Err(Error::InvalidArgument(format!(
                        "class {}: feature index out of range",
                        cm.class_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Classifier> {
        let clf: Classifier = serde_json::from_str(text)?;
        clf.validate()?;
        Ok(clf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Classifier> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Classifier::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::FitDiagnostics;
    use crate::features::RegressorSet;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // raw values in [0,1] pass through unchanged
    fn identity_norm(n: usize) -> Vec<NormParams> {
        vec![NormParams { min: 0.0, max: 1.0 }; n]
    }

    fn meta() -> TrainMeta {
        TrainMeta {
            max_degree: 2,
            dcf_enabled: false,
            alpha_d: 0.05,
            rfsc: RfscConfig::default(),
            fold: None,
            repeat: None,
        }
    }

    fn fitted(selected: Vec<u32>, theta: Vec<f64>) -> FittedModel {
        let n = theta.len();
        FittedModel {
            selected,
            theta,
            sigma: vec![0.1; n],
            loss: 0.2,
            j: 0.9,
            converged: true,
            diagnostics: FitDiagnostics::default(),
        }
    }

    fn class_model(class_id: usize, n_features: u32, selected: Vec<u32>, theta: Vec<f64>) -> ClassModel {
        let features: Vec<u32> = (0..n_features).collect();
        ClassModel {
            class_id,
            kept_features: features.clone(),
            regressors: RegressorSet::enumerate(&features, 2),
            model: fitted(selected, theta),
        }
    }

    #[test]
    fn binary_prediction_uses_the_sign_rule() {
        // over 2 features: regressor 1 is u1
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: identity_norm(2),
            models: vec![class_model(1, 2, vec![1], vec![1.0])],
            meta: meta(),
        };
        assert_eq!(clf.predict(&[0.3, 0.0]).unwrap().0, 1);
        // a zero score is not evidence for class 1
        assert_eq!(clf.predict(&[0.0, 0.5]).unwrap().0, 2);
        assert!(clf.predict(&[0.1]).is_err());

        // a negative score always lands on class 2
        let neg = Classifier {
            models: vec![class_model(1, 2, vec![1], vec![-1.0])],
            ..clf
        };
        assert_eq!(neg.predict(&[0.3, 0.0]).unwrap().0, 2);
    }

    #[test]
    fn multiclass_prediction_is_argmax_with_low_id_ties() {
        let mk = |theta: f64| class_model(0, 2, vec![0], vec![theta]); // constant regressor
        let mut models = vec![mk(0.2), mk(0.7), mk(-0.1)];
        for (i, m) in models.iter_mut().enumerate() {
            m.class_id = i + 1;
        }
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into(), "c".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: identity_norm(2),
            models,
            meta: meta(),
        };
        let (class, scores) = clf.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(class, 2);
        assert_eq!(scores, vec![0.2, 0.7, -0.1]);

        // all negative: the largest still wins
        let mut models = vec![mk(-0.5), mk(-0.2), mk(-0.9)];
        for (i, m) in models.iter_mut().enumerate() {
            m.class_id = i + 1;
        }
        let clf = Classifier {
            models,
            ..clf
        };
        assert_eq!(clf.predict(&[0.0, 0.0]).unwrap().0, 2);

        // exact tie goes to the lowest class id
        let mut models = vec![mk(0.4), mk(0.4), mk(0.1)];
        for (i, m) in models.iter_mut().enumerate() {
            m.class_id = i + 1;
        }
        let clf = Classifier {
            models,
            ..clf
        };
        assert_eq!(clf.predict(&[0.0, 0.0]).unwrap().0, 1);
    }

    #[test]
    fn prediction_is_scale_invariant() {
        let mut models = Vec::new();
        for (i, theta) in [0.2, 0.7, -0.1].iter().enumerate() {
            models.push(class_model(i + 1, 2, vec![1, 2], vec![*theta, 0.3]));
        }
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into(), "c".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: identity_norm(2),
            models: models.clone(),
            meta: meta(),
        };
        let mut scaled = models;
        for m in &mut scaled {
            for t in &mut m.model.theta {
                *t *= 7.5;
            }
        }
        let clf2 = Classifier {
            models: scaled,
            ..clf.clone()
        };
        let row = [0.4, -0.6];
        assert_eq!(clf.predict(&row).unwrap().0, clf2.predict(&row).unwrap().0);
    }

    #[test]
    fn explanation_reference_cases() {
        // single positive term: theta = 2 on u1, u1 = 0.5
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: identity_norm(2),
            models: vec![class_model(1, 2, vec![1], vec![2.0])],
            meta: meta(),
        };
        let e = clf.explain(&[0.5, 0.0], 1).unwrap();
        assert_relative_eq!(e.y_plus, 1.0);
        assert_relative_eq!(e.y_minus, 0.0);
        assert_relative_eq!(e.delta, 1.0);
        assert_eq!(e.supporting.len(), 1);
        assert_eq!(e.supporting[0].0, "u1");

        // balanced terms: +1*u1 and -1*u2 at u1 = u2 = 0.5
        let clf = Classifier {
            models: vec![class_model(1, 2, vec![1, 2], vec![1.0, -1.0])],
            ..clf
        };
        let e = clf.explain(&[0.5, 0.5], 1).unwrap();
        assert_relative_eq!(e.y_plus, 0.5);
        assert_relative_eq!(e.y_minus, 0.5);
        assert_relative_eq!(e.delta, 0.0);
        assert_relative_eq!(e.score, 0.0);

        // both components zero
        let e = clf.explain(&[0.0, 0.0], 1).unwrap();
        assert_eq!(e.delta, 0.0);

        assert!(clf.explain(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn explanation_reconstructs_the_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let n_terms = 1 + rng.gen::<usize>() % 5;
            let selected: Vec<u32> = (0..n_terms as u32).map(|i| i + 1).collect();
            let theta: Vec<f64> = (0..n_terms).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let clf = Classifier {
                label_names: vec!["a".into(), "b".into()],
                feature_names: vec!["u1".into(), "u2".into(), "u3".into()],
                norm: identity_norm(3),
                models: vec![class_model(1, 3, selected, theta)],
                meta: meta(),
            };
            let row = [
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            ];
            let e = clf.explain(&row, 1).unwrap();
            let (_, scores) = clf.predict(&row).unwrap();
            assert_relative_eq!(e.y_plus - e.y_minus, scores[0], epsilon = 1e-12);
            let total: f64 = e.supporting.iter().map(|s| s.1).sum();
            assert_relative_eq!(total, scores[0], epsilon = 1e-12);
            assert!(e.y_plus >= 0.0 && e.y_minus >= 0.0);
        }
    }

    #[test]
    fn size_report_takes_unions() {
        // binary: 3 regressors over 2 distinct features (u1, u2, u1*u2)
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into()],
            feature_names: vec!["u1".into(), "u2".into(), "u3".into()],
            norm: identity_norm(3),
            models: vec![class_model(1, 3, vec![1, 2, 5], vec![1.0, 1.0, 1.0])],
            meta: meta(),
        };
        // enumerate over 3 features, degree 2: 0=1, 1=u1, 2=u2, 3=u3,
        // 4=u1*u1, 5=u1*u2, ...
        assert_eq!(clf.model_size_report(), (2, 3));

        // two class models sharing a regressor: union counts it once
        let mut m1 = class_model(1, 3, vec![1, 2], vec![1.0, 1.0]);
        let m2 = class_model(2, 3, vec![1, 3], vec![1.0, 1.0]);
        m1.class_id = 1;
        let clf = Classifier {
            models: vec![m1, m2],
            label_names: vec!["a".into(), "b".into(), "c".into()],
            ..clf
        };
        assert_eq!(clf.model_size_report(), (3, 3)); // u1,u2,u3 / u1,u2,u3
    }

    #[test]
    fn artifact_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let theta: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let clf = Classifier {
            label_names: vec!["yes".into(), "no".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: vec![
                NormParams { min: 0.13, max: 7.7 },
                NormParams { min: -2.4, max: 0.9 },
            ],
            models: vec![class_model(1, 2, vec![1, 2, 4], theta)],
            meta: meta(),
        };
        let text = clf.to_json().unwrap();
        let back = Classifier::from_json(&text).unwrap();
        assert_eq!(clf, back);
        for i in 0..50 {
            let row = [0.13 + i as f64 * 0.15, -2.4 + i as f64 * 0.07];
            let (c1, s1) = clf.predict(&row).unwrap();
            let (c2, s2) = back.predict(&row).unwrap();
            assert_eq!(c1, c2);
            let b1: Vec<u64> = s1.iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = s2.iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn invalid_artifacts_are_rejected() {
        let clf = Classifier {
            label_names: vec!["a".into(), "b".into()],
            feature_names: vec!["u1".into(), "u2".into()],
            norm: identity_norm(2),
            models: vec![class_model(1, 2, vec![99], vec![1.0])],
            meta: meta(),
        };
        let text = serde_json::to_string(&clf).unwrap();
        assert!(Classifier::from_json(&text).is_err());
        assert!(Classifier::from_json("{").is_err());
    }
}

//! Detectors: fit per-class reference state on a training bundle, then score
//! test samples.
//!
//! Every scorer returns a similarity, higher meaning more in-distribution.
//! `msp` returns the maximum softmax probability and `mahalanobis` returns the
//! Mahalanobis depth rather than its negation.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::aggregation::aggregate;
use crate::depth::{
    build_projection_bank, covariance, irw_depth_fast, mahalanobis_depth, precision_from_covariance,
    sample_directions, DirectionMatrix, GaussianBank, ProjectionBank,
};
use crate::error::{Error, Result};
use crate::model::{
    resolve_predicted_labels, ClassSelection, DetectorConfig, EmbeddingBundle, FeatureMatrix,
    LabelAssignment, ScoreKind, ScoreVector,
};

/// Fitted per-class state.
#[derive(Debug, Clone)]
pub enum ClassBanks {
    /// One projection bank per class, all sharing one direction matrix.
    Irw {
        directions: Arc<DirectionMatrix>,
        banks: Vec<ProjectionBank>,
    },
    /// Class means with a tied precision matrix.
    Mahalanobis { banks: Vec<GaussianBank> },
    /// Logit-based scores keep no reference state.
    None,
}

#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    classes: usize,
    dim: usize,
    class_counts: Vec<usize>,
    banks: ClassBanks,
}

/// Output of the threshold rule: `flag` is true (OOD) iff `score <= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub score: f64,
    pub threshold: f64,
    pub flag: bool,
}

pub fn decide(score: f64, threshold: f64) -> Decision {
    Decision {
        score,
        threshold,
        flag: score <= threshold,
    }
}

/// Maximum softmax probability.
pub fn score_msp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|&g| (g - max).exp()).sum();
    1.0 / denom
}

/// Energy score `T · log Σ exp(g / T)`.
pub fn score_energy(logits: &[f64], temperature: f64) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&g| ((g - max) / temperature).exp()).sum();
    max + temperature * sum.ln()
}

fn to_f64(row: ArrayView1<'_, f32>) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

impl Detector {
    /// Fits the detector described by `config` on `train`.
    pub fn fit(train: &EmbeddingBundle, config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let labels = resolve_predicted_labels(train);
        let classes = train.classes();
        let aggregation = config.effective_aggregation();
        let dim = aggregation.output_dim(train.layers(), train.dim(), classes);

        let banks = match config.score_kind {
            ScoreKind::Irw => {
                check_class_counts(&labels, 1)?;
                let features = aggregate(train, aggregation)?;
                let directions = Arc::new(sample_directions(dim, config.n_proj, config.seed)?);
                let banks = (0..classes)
                    .into_par_iter()
                    .map(|y| {
                        build_projection_bank(features.select(&labels.members(y)), Arc::clone(&directions))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ClassBanks::Irw { directions, banks }
            }
            ScoreKind::Mahalanobis => {
                check_class_counts(&labels, 2)?;
                let features = aggregate(train, aggregation)?;
                ClassBanks::Mahalanobis {
                    banks: fit_tied_gaussian(&features, &labels, config.shrinkage)?,
                }
            }
            ScoreKind::Msp | ScoreKind::Energy => ClassBanks::None,
        };

        Ok(Detector {
            config: config.clone(),
            classes,
            dim,
            class_counts: labels.counts().to_vec(),
            banks,
        })
    }

    /// Reassembles a detector from stored parts, checking their consistency.
    pub fn from_parts(
        config: DetectorConfig,
        classes: usize,
        dim: usize,
        class_counts: Vec<usize>,
        banks: ClassBanks,
    ) -> Result<Self> {
        config.validate()?;
        let inconsistent = |reason: String| Err(Error::invalid("detector", reason));
        if class_counts.len() != classes {
            return inconsistent(format!("{} class counts for {classes} classes", class_counts.len()));
        }
        match (&banks, config.score_kind) {
            (ClassBanks::Irw { directions, banks }, ScoreKind::Irw) => {
                if directions.n_proj() != config.n_proj || directions.dim() != dim {
                    return inconsistent("direction matrix does not match the configuration".into());
                }
                if banks.len() != classes
                    || banks
                        .iter()
                        .zip(&class_counts)
                        .any(|(b, &n)| b.n() != n || b.dim() != dim)
                {
                    return inconsistent("projection banks do not match the class counts".into());
                }
            }
            (ClassBanks::Mahalanobis { banks }, ScoreKind::Mahalanobis) => {
                if banks.len() != classes || banks.iter().any(|b| b.dim() != dim) {
                    return inconsistent("gaussian banks do not match the class count".into());
                }
            }
            (ClassBanks::None, ScoreKind::Msp | ScoreKind::Energy) => {
                if dim != classes {
                    return inconsistent(format!("logit scores need m = C, got m = {dim}"));
                }
            }
            (_, kind) => return inconsistent(format!("bank type does not match score kind `{kind}`")),
        }
        Ok(Detector {
            config,
            classes,
            dim,
            class_counts,
            banks,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Dimension of the aggregated features the detector expects.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Training samples per predicted class.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn banks(&self) -> &ClassBanks {
        &self.banks
    }

    /// IRW depth of an aggregated feature against the bank of class `label`
    /// (or the deepest class under [`ClassSelection::Best`]).
    pub fn score_trusted(&self, feature: &[f64], label: usize) -> Result<f64> {
        let ClassBanks::Irw { banks, .. } = &self.banks else {
            return Err(self.wrong_kind(ScoreKind::Irw));
        };
        self.check_feature(feature, label)?;
        self.select(banks, label, |b| irw_depth_fast(feature, b))
    }

    /// Mahalanobis depth of an aggregated feature against class `label`.
    pub fn score_mahalanobis(&self, feature: &[f64], label: usize) -> Result<f64> {
        let ClassBanks::Mahalanobis { banks } = &self.banks else {
            return Err(self.wrong_kind(ScoreKind::Mahalanobis));
        };
        self.check_feature(feature, label)?;
        self.select(banks, label, |b| mahalanobis_depth(feature, b))
    }

    fn select<B>(&self, banks: &[B], label: usize, depth: impl Fn(&B) -> Result<f64>) -> Result<f64> {
        match self.config.class_selection {
            ClassSelection::Predicted => depth(&banks[label]),
            ClassSelection::Best => banks
                .iter()
                .map(depth)
                .try_fold(f64::NEG_INFINITY, |best, d| d.map(|d| best.max(d))),
        }
    }

    fn check_feature(&self, feature: &[f64], label: usize) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "feature dimension",
                expected: self.dim,
                found: feature.len(),
            });
        }
        if label >= self.classes {
            return Err(Error::invalid(
                "label",
                format!("{label} is outside [0, {})", self.classes),
            ));
        }
        Ok(())
    }

    fn wrong_kind(&self, requested: ScoreKind) -> Error {
        Error::WrongScoreKind {
            fitted: self.config.score_kind.as_str(),
            requested: requested.as_str(),
        }
    }

    /// Aggregates `test` the way the detector was fitted and checks it lines
    /// up with the fitted dimensions.
    pub fn prepare(&self, test: &EmbeddingBundle) -> Result<(FeatureMatrix, LabelAssignment)> {
        if test.classes() != self.classes {
            return Err(Error::DimensionMismatch {
                what: "class count",
                expected: self.classes,
                found: test.classes(),
            });
        }
        let features = aggregate(test, self.config.effective_aggregation())?;
        if features.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "aggregated feature dimension",
                expected: self.dim,
                found: features.dim(),
            });
        }
        Ok((features, resolve_predicted_labels(test)))
    }

    /// Scores every sample of `test`, preserving row order.
    pub fn score_batch(&self, test: &EmbeddingBundle) -> Result<ScoreVector> {
        let (features, labels) = self.prepare(test)?;
        let scores = (0..test.n())
            .into_par_iter()
            .map(|i| {
                let label = labels.labels()[i];
                match self.config.score_kind {
                    ScoreKind::Irw => self.score_trusted(features.row(i), label),
                    ScoreKind::Mahalanobis => self.score_mahalanobis(features.row(i), label),
                    ScoreKind::Msp => Ok(score_msp(&to_f64(test.logits_row(i)))),
                    ScoreKind::Energy => Ok(score_energy(&to_f64(test.logits_row(i)), self.config.temperature)),
                }
                .map_err(|e| e.at_sample(i))
            })
            .collect::<Result<Vec<_>>>()?;
        ScoreVector::new(scores)
    }
}

fn check_class_counts(labels: &LabelAssignment, required: usize) -> Result<()> {
    for (class, &found) in labels.counts().iter().enumerate() {
        if found == 0 {
            return Err(Error::EmptyClass { class });
        }
        if found < required {
            return Err(Error::InsufficientSamples {
                class,
                found,
                required,
            });
        }
    }
    Ok(())
}

/// Per-class means with one covariance pooled over the class-centred samples.
fn fit_tied_gaussian(features: &FeatureMatrix, labels: &LabelAssignment, shrinkage: f64) -> Result<Vec<GaussianBank>> {
    let m = features.dim();
    let mut means = Vec::with_capacity(labels.classes());
    let mut pooled = Array2::<f64>::zeros((m, m));
    for y in 0..labels.classes() {
        let rows = features.select(&labels.members(y));
        let mean: Array1<f64> = rows.mean_axis(Axis(0)).expect("class is non-empty");
        pooled += &(covariance(&rows, &mean) * rows.nrows() as f64);
        means.push(mean);
    }
    pooled /= features.n() as f64;
    let precision = Arc::new(precision_from_covariance(&pooled, shrinkage)?);
    means
        .into_iter()
        .map(|mean| GaussianBank::from_parts(mean, Arc::clone(&precision), shrinkage))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregationKind;

    #[test]
    fn decision_boundary_is_ood() {
        assert!(decide(0.3, 0.3).flag);
        assert!(!decide(0.31, 0.3).flag);
        assert!(!decide(0.0, -1.0).flag);
    }

    #[test]
    fn msp_closed_forms() {
        assert_eq!(score_msp(&[0.0, 0.0]), 0.5);
        assert!((score_msp(&[1000.0, 0.0]) - 1.0).abs() <= 1e-12);
        assert!((score_msp(&[1.0f64.ln(), 3.0f64.ln()]) - 0.75).abs() <= 1e-15);
    }

    #[test]
    fn energy_closed_forms() {
        assert!((score_energy(&[0.0, 0.0], 1.0) - std::f64::consts::LN_2).abs() <= 1e-12);
        assert!((score_energy(&[5.0, -1e6], 1.0) - 5.0).abs() <= 1e-9);
        // 2·ln(e + 1), evaluated independently to 20 digits
        assert!((score_energy(&[2.0, 0.0], 2.0) - 2.626_523_375_036_445_7).abs() <= 1e-12);
    }

    #[test]
    fn msp_is_shift_invariant() {
        // single-precision logits, as stored in bundles, shift without rounding
        let base = [0.3f32, -1.7, 2.2].map(f64::from);
        let shifted: Vec<f64> = base.iter().map(|v| v + 64.125).collect();
        assert_eq!(score_msp(&base), score_msp(&shifted));
    }

    fn two_class_bundle(predicted: Vec<i32>) -> EmbeddingBundle {
        let n = predicted.len();
        let features: Vec<f32> = (0..n * 2).map(|i| (i as f32 * 0.37).sin()).collect();
        EmbeddingBundle::from_parts(n, 1, 2, 2, features, vec![0.0; 2 * n], vec![-1; n], predicted).unwrap()
    }

    #[test]
    fn empty_class_is_named() {
        let b = two_class_bundle(vec![0, 0, 0]);
        let err = Detector::fit(&b, &DetectorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 1 }));
    }

    #[test]
    fn mahalanobis_needs_two_per_class() {
        let b = two_class_bundle(vec![0, 0, 1]);
        let cfg = DetectorConfig {
            score_kind: ScoreKind::Mahalanobis,
            ..Default::default()
        };
        let err = Detector::fit(&b, &cfg).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { class: 1, found: 1, required: 2 }));
    }

    #[test]
    fn logit_scores_fit_without_banks() {
        let b = two_class_bundle(vec![0, 0, 0]);
        let cfg = DetectorConfig {
            score_kind: ScoreKind::Energy,
            aggregation: AggregationKind::Concat,
            ..Default::default()
        };
        let det = Detector::fit(&b, &cfg).unwrap();
        assert!(matches!(det.banks(), ClassBanks::None));
        assert_eq!(det.dim(), 2);
        assert_eq!(det.score_batch(&b).unwrap().len(), 3);
    }

    #[test]
    fn wrong_score_kind_rejected() {
        let b = two_class_bundle(vec![0, 1, 0, 1]);
        let det = Detector::fit(&b, &DetectorConfig { n_proj: 10, ..Default::default() }).unwrap();
        assert!(matches!(det.score_mahalanobis(&[0.0, 0.0], 0), Err(Error::WrongScoreKind { .. })));
        assert!(det.score_trusted(&[0.0], 0).is_err());
        assert!(det.score_trusted(&[0.0, 0.0], 2).is_err());
    }
}

//! Fit → score → evaluate in one call.

use crate::error::Result;
use crate::metrics::{evaluate, EvalInput, EvalReport};
use crate::model::{DetectorConfig, EmbeddingBundle};
use crate::scores::Detector;

/// Fits `config` on `train` and evaluates it on the two test bundles.
pub fn evaluate_detector(
    train: &EmbeddingBundle,
    test_in: &EmbeddingBundle,
    test_out: &EmbeddingBundle,
    config: &DetectorConfig,
    tpr_target: f64,
) -> Result<EvalReport> {
    let det = Detector::fit(train, config)?;
    let ins = det.score_batch(test_in)?;
    let outs = det.score_batch(test_out)?;
    evaluate(&EvalInput::new(ins.into_inner(), outs.into_inner())?, tpr_target)
}

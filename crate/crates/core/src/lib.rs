//! Out-of-distribution detection from classifier embeddings.
//!
//! Per-layer embeddings are collapsed by an [aggregation](aggregation)
//! (the layer mean by default) and scored with the integrated rank-weighted
//! depth against a per-class bank of training features. Mahalanobis depth,
//! maximum softmax probability and energy scores are provided as baselines,
//! together with the usual detection metrics.
//!
//! ```no_run
//! use trusted::{evaluate, io, Detector, DetectorConfig, EvalInput};
//!
//! # fn main() -> trusted::Result<()> {
//! let train = io::read_bundle("train.emb1")?;
//! let det = Detector::fit(&train, &DetectorConfig::default())?;
//! let ins = det.score_batch(&io::read_bundle("test_in.emb1")?)?;
//! let outs = det.score_batch(&io::read_bundle("test_out.emb1")?)?;
//! let report = evaluate(&EvalInput::new(ins.into_inner(), outs.into_inner())?, 0.95)?;
//! println!("AUROC {:.2}", 100.0 * report.auroc);
//! # Ok(())
//! # }
//! ```

pub mod aggregation;
pub mod depth;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scores;
pub mod synth;

pub use aggregation::{aggregate, AggregationKind};
pub use error::{Error, Result};
pub use metrics::{evaluate, EvalInput, EvalReport};
pub use model::{
    resolve_predicted_labels, validate_bundle, ClassSelection, DetectorConfig, EmbeddingBundle,
    FeatureMatrix, LabelAssignment, ScoreKind, ScoreVector,
};
pub use pipeline::evaluate_detector;
pub use scores::{decide, score_energy, score_msp, Decision, Detector};

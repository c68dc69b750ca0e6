//! Layer aggregation: collapse the `L` per-layer embeddings of a sample into
//! one feature vector.

use ndarray::{s, Array2};

use crate::error::Result;
use crate::model::{string_enum, EmbeddingBundle, FeatureMatrix};

string_enum! {
    /// Aggregation function applied before scoring.
    AggregationKind {
        PowerMean => "pm",
        Last => "last",
        Logits => "logits",
        Concat => "cat",
    }
}

impl AggregationKind {
    /// Output feature dimension for `layers` layers of width `dim` and
    /// `classes` logits.
    pub fn output_dim(self, layers: usize, dim: usize, classes: usize) -> usize {
        match self {
            AggregationKind::PowerMean | AggregationKind::Last => dim,
            AggregationKind::Logits => classes,
            AggregationKind::Concat => layers * dim,
        }
    }
}

/// Applies `kind` to every sample of `bundle`.
///
/// `pm` is the arithmetic mean of the layer vectors (power mean with p = 1),
/// `last` copies the final layer, `logits` copies the logits and `cat`
/// concatenates the layers first to last.
pub fn aggregate(bundle: &EmbeddingBundle, kind: AggregationKind) -> Result<FeatureMatrix> {
    let (n, layers, dim) = bundle.features().dim();
    let feats = bundle.features();
    let values = match kind {
        AggregationKind::PowerMean => {
            let mut out = Array2::<f64>::zeros((n, dim));
            for (i, mut row) in out.outer_iter_mut().enumerate() {
                for l in 0..layers {
                    for (acc, &v) in row.iter_mut().zip(feats.slice(s![i, l, ..])) {
                        *acc += f64::from(v);
                    }
                }
                let l = layers as f64;
                row.mapv_inplace(|v| v / l);
            }
            out
        }
        AggregationKind::Last => feats.slice(s![.., layers - 1, ..]).mapv(f64::from),
        AggregationKind::Logits => bundle.logits().mapv(f64::from),
        AggregationKind::Concat => feats
            .to_shape((n, layers * dim))
            .expect("standard layout")
            .mapv(f64::from),
    };
    FeatureMatrix::new(values)
}

//! Domain types shared across the pipeline.
//!
//! Everything here is immutable once constructed. Constructors validate their
//! invariants so downstream code can index without re-checking.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};

use crate::aggregation::AggregationKind;
use crate::error::{Error, Result};

/// Label value meaning "unknown" (gold) or "derive from logits" (predicted).
pub const UNSET_LABEL: i32 = -1;

/// Per-layer embeddings, logits and labels for `n` samples.
///
/// Features are kept in `f32`, the precision they are stored with on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    features: Array3<f32>,
    logits: Array2<f32>,
    gold_labels: Vec<i32>,
    predicted_labels: Vec<i32>,
}

impl EmbeddingBundle {
    /// Builds a bundle from flat row-major buffers and validates it.
    ///
    /// `features` is sample-major, then layer, then dimension.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n: usize,
        layers: usize,
        dim: usize,
        classes: usize,
        features: Vec<f32>,
        logits: Vec<f32>,
        gold_labels: Vec<i32>,
        predicted_labels: Vec<i32>,
    ) -> Result<Self> {
        for (what, v, min) in [
            ("sample count", n, 1),
            ("layer count", layers, 1),
            ("embedding dimension", dim, 1),
            ("class count", classes, 2),
        ] {
            if v < min {
                return Err(Error::invalid(what, format!("{v} is below the minimum {min}")));
            }
        }
        check_len("features", n * layers * dim, features.len())?;
        check_len("logits", n * classes, logits.len())?;
        check_len("gold labels", n, gold_labels.len())?;
        check_len("predicted labels", n, predicted_labels.len())?;

        let bundle = EmbeddingBundle {
            features: Array3::from_shape_vec((n, layers, dim), features)
                .expect("length checked above"),
            logits: Array2::from_shape_vec((n, classes), logits).expect("length checked above"),
            gold_labels,
            predicted_labels,
        };
        validate_bundle(&bundle)?;
        Ok(bundle)
    }

    pub fn n(&self) -> usize {
        self.features.dim().0
    }

    pub fn layers(&self) -> usize {
        self.features.dim().1
    }

    pub fn dim(&self) -> usize {
        self.features.dim().2
    }

    pub fn classes(&self) -> usize {
        self.logits.ncols()
    }

    /// `n × L × d` features.
    pub fn features(&self) -> &Array3<f32> {
        &self.features
    }

    /// `n × C` logits.
    pub fn logits(&self) -> ArrayView2<'_, f32> {
        self.logits.view()
    }

    pub fn logits_row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.logits.row(i)
    }

    pub fn gold_labels(&self) -> &[i32] {
        &self.gold_labels
    }

    pub fn predicted_labels(&self) -> &[i32] {
        &self.predicted_labels
    }

    /// Returns a copy with rows reordered so that row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&bad) = order.iter().find(|&&i| i >= n) {
            return Err(Error::invalid("row selection", format!("index {bad} out of range for {n} rows")));
        }
        let feat_row = self.layers() * self.dim();
        let flat = self.features.as_slice().expect("standard layout");
        let logits = self.logits.as_slice().expect("standard layout");
        let c = self.classes();
        let mut features = Vec::with_capacity(order.len() * feat_row);
        let mut lg = Vec::with_capacity(order.len() * c);
        for &i in order {
            features.extend_from_slice(&flat[i * feat_row..(i + 1) * feat_row]);
            lg.extend_from_slice(&logits[i * c..(i + 1) * c]);
        }
        EmbeddingBundle::from_parts(
            order.len(),
            self.layers(),
            self.dim(),
            c,
            features,
            lg,
            order.iter().map(|&i| self.gold_labels[i]).collect(),
            order.iter().map(|&i| self.predicted_labels[i]).collect(),
        )
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Checks every [`EmbeddingBundle`] invariant.
pub fn validate_bundle(bundle: &EmbeddingBundle) -> Result<()> {
    let (n, l, d) = bundle.features.dim();
    let c = bundle.logits.ncols();
    if n == 0 || l == 0 || d == 0 {
        return Err(Error::invalid("bundle", "tensor extents must be positive"));
    }
    if c < 2 {
        return Err(Error::invalid("bundle", format!("class count {c} is below 2")));
    }
    check_len("logits rows", n, bundle.logits.nrows())?;
    check_len("gold labels", n, bundle.gold_labels.len())?;
    check_len("predicted labels", n, bundle.predicted_labels.len())?;

    if let Some(index) = bundle.features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "features",
            index,
        });
    }
    if let Some(index) = bundle.logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "logits",
            index,
        });
    }
    for (what, labels) in [
        ("predicted label", &bundle.predicted_labels),
        ("gold label", &bundle.gold_labels),
    ] {
        if let Some((i, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y != UNSET_LABEL && !(0..c as i64).contains(&(y as i64)))
        {
            return Err(Error::invalid(
                what,
                format!("sample {i} has label {y}, outside [0, {c}) and not {UNSET_LABEL}"),
            ));
        }
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(row: impl IntoIterator<Item = T>) -> usize {
    let mut it = row.into_iter().enumerate();
    let (mut best, mut best_v) = it.next().expect("argmax of an empty row");
    for (i, v) in it {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Resolved class labels with per-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl LabelAssignment {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        let mut counts = vec![0; classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::invalid(
                    "label assignment",
                    format!("sample {i} has label {y}, outside [0, {classes})"),
                ));
            }
            counts[y] += 1;
        }
        Ok(LabelAssignment { labels, counts })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// `n_y` for each class `y`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Row indices carrying label `class`, in ascending order.
    pub fn members(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &y)| (y == class).then_some(i))
            .collect()
    }
}

/// Stored predicted labels where present, argmax of the logits otherwise.
pub fn resolve_predicted_labels(bundle: &EmbeddingBundle) -> LabelAssignment {
    let labels = bundle
        .predicted_labels
        .iter()
        .enumerate()
        .map(|(i, &stored)| {
            if stored == UNSET_LABEL {
                argmax(bundle.logits.row(i).iter().copied())
            } else {
                stored as usize
            }
        })
        .collect();
    LabelAssignment::new(labels, bundle.classes()).expect("labels validated at construction")
}

/// Aggregated features, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
                index,
            });
        }
        Ok(FeatureMatrix {
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.values.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.values.select(ndarray::Axis(0), indices)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

/// Similarity scores; higher means more in-distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "scores",
                index,
            });
        }
        Ok(ScoreVector(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err($crate::error::Error::invalid(
                        stringify!($name),
                        format!("unknown value `{other}`"),
                    )),
                }
            }
        }
    };
}
pub(crate) use string_enum;

string_enum! {
    /// Which similarity function a detector computes.
    ScoreKind {
        Irw => "irw",
        Mahalanobis => "mahalanobis",
        Msp => "msp",
        Energy => "energy",
    }
}

impl ScoreKind {
    /// Whether the score needs per-class reference banks.
    pub fn uses_banks(self) -> bool {
        matches!(self, ScoreKind::Irw | ScoreKind::Mahalanobis)
    }
}

string_enum! {
    /// Which class bank a test sample is compared against.
    ClassSelection {
        Predicted => "predicted",
        Best => "best",
    }
}

/// Detector hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub score_kind: ScoreKind,
    /// Ignored by `msp` and `energy`, which read logits only.
    pub aggregation: AggregationKind,
    pub n_proj: usize,
    pub temperature: f64,
    pub seed: u64,
    pub shrinkage: f64,
    /// `Best` takes the maximum similarity over all classes instead of the
    /// predicted class's bank.
    pub class_selection: ClassSelection,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            score_kind: ScoreKind::Irw,
            aggregation: AggregationKind::PowerMean,
            n_proj: 1000,
            temperature: 1.0,
            seed: 42,
            shrinkage: 1e-6,
            class_selection: ClassSelection::Predicted,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_proj == 0 {
            return Err(Error::invalid("n_proj", "must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(
                "temperature",
                format!("{} is not a positive finite number", self.temperature),
            ));
        }
        if !(self.shrinkage >= 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::invalid(
                "shrinkage",
                format!("{} is not a non-negative finite number", self.shrinkage),
            ));
        }
        Ok(())
    }

    /// The aggregation actually applied: logits-only scores always read logits.
    pub fn effective_aggregation(&self) -> AggregationKind {
        match self.score_kind {
            ScoreKind::Msp | ScoreKind::Energy => AggregationKind::Logits,
            _ => self.aggregation,
        }
    }
}

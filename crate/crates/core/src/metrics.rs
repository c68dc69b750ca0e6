//! Detector evaluation from two samples of similarity scores.
//!
//! In-distribution samples are expected to score high. A sample is flagged
//! OOD at threshold `γ` when its score is `<= γ`, so "true positive" means an
//! OOD sample at or below `γ` and "false positive" an in-distribution sample
//! at or below `γ`.

use crate::error::{Error, Result};

/// Scores of in-distribution (`Z = 0`) and OOD (`Z = 1`) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    in_scores: Vec<f64>,
    out_scores: Vec<f64>,
}

impl EvalInput {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        for (what, s) in [("in-distribution scores", &in_scores), ("OOD scores", &out_scores)] {
            if s.is_empty() {
                return Err(Error::invalid(what, "empty score sample"));
            }
            if let Some(index) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index });
            }
        }
        Ok(EvalInput {
            in_scores,
            out_scores,
        })
    }

    pub fn in_scores(&self) -> &[f64] {
        &self.in_scores
    }

    pub fn out_scores(&self) -> &[f64] {
        &self.out_scores
    }

    fn sorted(&self) -> Sorted {
        Sorted::new(&self.in_scores, &self.out_scores)
    }
}

/// All metrics as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub fpr_at_tpr: f64,
    pub err: f64,
    pub tpr_target: f64,
    pub threshold_at_tpr: f64,
    pub n_in: usize,
    pub n_out: usize,
}

/// Which class counts as positive for a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positive {
    /// In-distribution samples, detected by a high score.
    In,
    /// OOD samples, detected by a low score.
    Out,
}

struct Sorted {
    ins: Vec<f64>,
    outs: Vec<f64>,
}

impl Sorted {
    fn new(ins: &[f64], outs: &[f64]) -> Self {
        let sort = |s: &[f64]| {
            let mut v = s.to_vec();
            v.sort_unstable_by(f64::total_cmp);
            v
        };
        Sorted {
            ins: sort(ins),
            outs: sort(outs),
        }
    }
}

/// Number of entries of an ascending slice that are `<= t`.
fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&v| v <= t)
}

fn count_lt(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&v| v < t)
}

/// Distinct values of two ascending slices, ascending.
fn distinct_union(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        out.push(v);
    }
    out
}

fn auroc_sorted(s: &Sorted) -> f64 {
    // twice the number of (in, out) pairs won by `in`, ties counting one
    let doubled: u64 = s
        .outs
        .iter()
        .map(|&o| {
            let below_or_eq = count_le(&s.ins, o);
            let below = count_lt(&s.ins, o);
            (2 * (s.ins.len() - below_or_eq) + (below_or_eq - below)) as u64
        })
        .sum();
    let total = 2 * (s.ins.len() * s.outs.len()) as u64;
    // evaluating the larger side as a complement keeps auroc(a, b) + auroc(b, a) == 1
    if 2 * doubled <= total {
        doubled as f64 / total as f64
    } else {
        1.0 - (total - doubled) as f64 / total as f64
    }
}

/// Average precision with positives detected by `score <= γ`, sweeping `γ`
/// over the distinct observed scores.
fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let n_pos = pos.len() as f64;
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for t in distinct_union(pos, neg) {
        let tp = count_le(pos, t);
        if tp > prev_tp {
            let fp = count_le(neg, t);
            ap += (tp - prev_tp) as f64 / n_pos * (tp as f64 / (tp + fp) as f64);
            prev_tp = tp;
        }
    }
    ap
}

fn pr_area_sorted(s: &Sorted, positive: Positive) -> f64 {
    match positive {
        Positive::Out => average_precision(&s.outs, &s.ins),
        Positive::In => {
            // detection by a high score is detection by a low negated score
            let neg = |v: &[f64]| v.iter().rev().map(|x| -x).collect::<Vec<_>>();
            average_precision(&neg(&s.ins), &neg(&s.outs))
        }
    }
}

fn fpr_at_tpr_sorted(s: &Sorted, rate: f64) -> (f64, f64) {
    let n_out = s.outs.len() as f64;
    let threshold = s
        .outs
        .iter()
        .copied()
        .find(|&t| count_le(&s.outs, t) as f64 / n_out >= rate)
        .expect("rate <= 1 is reached at the largest OOD score");
    let fpr = count_le(&s.ins, threshold) as f64 / s.ins.len() as f64;
    (fpr, threshold)
}

fn best_error_sorted(s: &Sorted) -> f64 {
    let (n_in, n_out) = (s.ins.len(), s.outs.len());
    // γ = -inf: every in-sample is kept, every OOD sample missed
    let mut best = n_out;
    for t in distinct_union(&s.ins, &s.outs) {
        let errors = count_le(&s.ins, t) + (n_out - count_le(&s.outs, t));
        best = best.min(errors);
    }
    best as f64 / (n_in + n_out) as f64
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid("target rate", format!("{rate} is outside (0, 1]")));
    }
    Ok(())
}

/// Probability that an in-distribution score exceeds an OOD score, ties
/// counting one half.
pub fn auroc(input: &EvalInput) -> f64 {
    auroc_sorted(&input.sorted())
}

/// Area under the precision-recall curve for the chosen positive class.
pub fn pr_curve_area(input: &EvalInput, positive: Positive) -> f64 {
    pr_area_sorted(&input.sorted(), positive)
}

/// Fraction of in-distribution samples flagged OOD at the smallest OOD-score
/// threshold whose empirical detection rate reaches `rate`, with that
/// threshold.
pub fn fpr_at_tpr(input: &EvalInput, rate: f64) -> Result<(f64, f64)> {
    check_rate(rate)?;
    Ok(fpr_at_tpr_sorted(&input.sorted(), rate))
}

/// Lowest misclassification rate over all thresholds.
pub fn best_error(input: &EvalInput) -> f64 {
    best_error_sorted(&input.sorted())
}

/// Every metric from one sort of the inputs.
pub fn evaluate(input: &EvalInput, tpr_target: f64) -> Result<EvalReport> {
    check_rate(tpr_target)?;
    let s = input.sorted();
    let (fpr_at_tpr, threshold_at_tpr) = fpr_at_tpr_sorted(&s, tpr_target);
    Ok(EvalReport {
        auroc: auroc_sorted(&s),
        aupr_in: pr_area_sorted(&s, Positive::In),
        aupr_out: pr_area_sorted(&s, Positive::Out),
        fpr_at_tpr,
        err: best_error_sorted(&s),
        tpr_target,
        threshold_at_tpr,
        n_in: s.ins.len(),
        n_out: s.outs.len(),
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

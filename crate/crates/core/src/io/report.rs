//! Evaluation report document: `key = value` lines (valid TOML) with a fixed
//! key order. Metric fractions carry six fractional digits.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{io_err, write_atomically};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;

pub const REPORT_FORMAT: &str = "trusted-report-1";

/// A report together with the digests of the score files it was computed from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReportDoc {
    pub format: String,
    pub orientation: String,
    pub tpr_target: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
    pub fpr_at_tpr: f64,
    pub err: f64,
    pub threshold_at_tpr: f64,
    pub in_scores_sha256: String,
    pub out_scores_sha256: String,
}

pub fn render_report(report: &EvalReport, in_sha256: &str, out_sha256: &str) -> String {
    format!(
        "# OOD detection evaluation\n\
         format = \"{REPORT_FORMAT}\"\n\
         orientation = \"higher-is-in-distribution\"\n\
         tpr_target = {:.6}\n\
         n_in = {}\n\
         n_out = {}\n\
         auroc = {:.6}\n\
         aupr_in = {:.6}\n\
         aupr_out = {:.6}\n\
         fpr_at_tpr = {:.6}\n\
         err = {:.6}\n\
         threshold_at_tpr = {:e}\n\
         in_scores_sha256 = \"{in_sha256}\"\n\
         out_scores_sha256 = \"{out_sha256}\"\n",
        report.tpr_target,
        report.n_in,
        report.n_out,
        report.auroc,
        report.aupr_in,
        report.aupr_out,
        report.fpr_at_tpr,
        report.err,
        report.threshold_at_tpr,
    )
}

pub fn write_report(report: &EvalReport, in_sha256: &str, out_sha256: &str, path: impl AsRef<Path>) -> Result<()> {
    let text = render_report(report, in_sha256, out_sha256);
    write_atomically(path.as_ref(), |w| w.write_all(text.as_bytes()))
}

pub fn parse_report(text: &str) -> std::result::Result<ReportDoc, String> {
    let doc: ReportDoc = toml::from_str(text).map_err(|e| e.to_string())?;
    if doc.format != REPORT_FORMAT {
        return Err(format!("unsupported report format `{}`", doc.format));
    }
    Ok(doc)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDoc> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_report(&text).map_err(|reason| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    })
}

//! Monte-Carlo IRW depth.
//!
//! For directions `u_1..u_K` and a reference sample `x_1..x_n`, the depth of
//! `x` is the average over `k` of
//!
//! ```text
//! min( #{i : <u_k, x_i> <= <u_k, x>}, #{i : <u_k, x_i> > <u_k, x>} ) / n
//! ```
//!
//! A projection equal to the query's counts on the `<=` side only. The
//! reference path scans every reference point; the fast path sorts each
//! projected column once and counts with a binary search. Both compute the
//! same integer counts, so their results are bit-identical.

use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;

use super::{dot, DirectionMatrix};
use crate::error::{Error, Result};

const ROW_BLOCK: usize = 32;

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

#[inline]
fn depth_from_counts(total_min: u64, n: usize, n_proj: usize) -> f64 {
    total_min as f64 / (n as f64 * n_proj as f64)
}

/// Direct double loop over directions and reference points, `O(n_proj·n·m)`.
pub fn irw_depth_reference(x: &[f64], reference: &Array2<f64>, directions: &DirectionMatrix) -> Result<f64> {
    let (n, m) = reference.dim();
    if n == 0 {
        return Err(Error::invalid("reference sample", "must contain at least one point"));
    }
    check_dim("query dimension", m, x.len())?;
    check_dim("direction dimension", m, directions.dim())?;
    let reference = reference.as_standard_layout();
    let rows = reference.as_slice().expect("standard layout");

    let mut total = 0u64;
    for k in 0..directions.n_proj() {
        let u = directions.row(k);
        let t = dot(u, x);
        let at_or_below = rows
            .chunks_exact(m)
            .filter(|xi| dot(u, xi) <= t)
            .count();
        total += at_or_below.min(n - at_or_below) as u64;
    }
    Ok(depth_from_counts(total, n, directions.n_proj()))
}

/// Reference points with their projections sorted per direction.
#[derive(Debug, Clone)]
pub struct ProjectionBank {
    reference: Array2<f64>,
    directions: Arc<DirectionMatrix>,
    /// `n_proj` runs of `n` ascending projections, direction-major.
    sorted: Vec<f64>,
}

impl ProjectionBank {
    pub fn n(&self) -> usize {
        self.reference.nrows()
    }

    pub fn dim(&self) -> usize {
        self.reference.ncols()
    }

    pub fn reference(&self) -> &Array2<f64> {
        &self.reference
    }

    pub fn directions(&self) -> &Arc<DirectionMatrix> {
        &self.directions
    }

    /// Sorted projections of the reference sample onto direction `k`.
    pub fn sorted_projections(&self, k: usize) -> &[f64] {
        let n = self.n();
        &self.sorted[k * n..(k + 1) * n]
    }

    /// Fast depths for many queries (rows of `queries`), in row order.
    pub fn depths(&self, queries: &Array2<f64>) -> Result<Vec<f64>> {
        check_dim("query dimension", self.dim(), queries.ncols())?;
        let queries = queries.as_standard_layout();
        queries
            .as_slice()
            .expect("standard layout")
            .par_chunks(self.dim())
            .map(|q| irw_depth_fast(q, self))
            .collect()
    }
}

/// Projects `reference` onto every direction and sorts each column.
pub fn build_projection_bank(reference: Array2<f64>, directions: Arc<DirectionMatrix>) -> Result<ProjectionBank> {
    let (n, m) = reference.dim();
    if n == 0 {
        return Err(Error::invalid("reference sample", "must contain at least one point"));
    }
    check_dim("direction dimension", m, directions.dim())?;
    if let Some(index) = reference.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "reference sample",
            index,
        });
    }
    let reference = reference.as_standard_layout().into_owned();
    let n_proj = directions.n_proj();
    let rows = reference.as_slice().expect("standard layout");

    // sample-major projections, computed in row blocks so each direction is
    // reused while hot
    let mut projected = vec![0.0f64; n * n_proj];
    projected
        .par_chunks_mut(ROW_BLOCK * n_proj)
        .zip(rows.par_chunks(ROW_BLOCK * m))
        .for_each(|(out, block)| {
            let block_rows = block.len() / m;
            for k in 0..n_proj {
                let u = directions.row(k);
                for r in 0..block_rows {
                    out[r * n_proj + k] = dot(u, &block[r * m..(r + 1) * m]);
                }
            }
        });

    let mut sorted = vec![0.0f64; n * n_proj];
    sorted.par_chunks_mut(n).enumerate().for_each(|(k, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = projected[i * n_proj + k];
        }
        col.sort_unstable_by(f64::total_cmp);
    });

    Ok(ProjectionBank {
        reference,
        directions,
        sorted,
    })
}

/// IRW depth by binary search in the sorted tables, `O(n_proj·(m + log n))`.
pub fn irw_depth_fast(x: &[f64], bank: &ProjectionBank) -> Result<f64> {
    check_dim("query dimension", bank.dim(), x.len())?;
    let n = bank.n();
    let directions = &bank.directions;
    let mut total = 0u64;
    for k in 0..directions.n_proj() {
        let t = dot(directions.row(k), x);
        let at_or_below = bank.sorted_projections(k).partition_point(|&p| p <= t);
        total += at_or_below.min(n - at_or_below) as u64;
    }
    Ok(depth_from_counts(total, n, directions.n_proj()))
}

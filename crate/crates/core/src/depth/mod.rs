//! Depth functions: integrated rank-weighted (IRW) depth over random
//! projections, and Mahalanobis depth.

mod directions;
mod irw;
mod mahalanobis;

pub use directions::{sample_directions, DirectionMatrix};
pub use irw::{build_projection_bank, irw_depth_fast, irw_depth_reference, ProjectionBank};
pub use mahalanobis::{
    covariance, fit_gaussian_bank, mahalanobis_depth, precision_from_covariance, GaussianBank,
};

/// Dot product with a fixed accumulation order.
///
/// Every projection in the crate goes through this function so that a point
/// projected while building a bank and the same point projected as a query
/// produce identical bits.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

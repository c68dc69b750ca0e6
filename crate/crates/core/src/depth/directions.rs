use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// `n_proj` unit vectors in `R^m`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMatrix {
    rows: Array2<f64>,
    seed: u64,
}

impl DirectionMatrix {
    /// Wraps explicit directions, e.g. ones read back from disk.
    pub fn from_rows(rows: Array2<f64>, seed: u64) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid("direction matrix", "must have at least one row and column"));
        }
        for (k, row) in rows.outer_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm.is_nan() || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "direction matrix",
                    format!("row {k} has norm {norm}, expected 1"),
                ));
            }
        }
        Ok(DirectionMatrix {
            rows: rows.as_standard_layout().into_owned(),
            seed,
        })
    }

    pub fn n_proj(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.dim();
        &self.rows.as_slice().expect("standard layout")[k * m..(k + 1) * m]
    }
}

/// Draws `n_proj` directions uniformly on the unit sphere of `R^m` by
/// normalizing standard Gaussian vectors.
///
/// Draws are sequential from a ChaCha8 stream seeded with `seed`, so the
/// result depends only on `(m, n_proj, seed)`.
pub fn sample_directions(m: usize, n_proj: usize, seed: u64) -> Result<DirectionMatrix> {
    if m == 0 || n_proj == 0 {
        return Err(Error::invalid(
            "direction sampling",
            format!("need m >= 1 and n_proj >= 1, got m={m}, n_proj={n_proj}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(m * n_proj);
    let mut row = vec![0.0f64; m];
    for _ in 0..n_proj {
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            // zero (or denormal) norm has probability zero; redraw
            if norm > f64::MIN_POSITIVE {
                data.extend(row.iter().map(|v| v / norm));
                break;
            }
        }
    }
    Ok(DirectionMatrix {
        rows: Array2::from_shape_vec((n_proj, m), data).expect("sized above"),
        seed,
    })
}

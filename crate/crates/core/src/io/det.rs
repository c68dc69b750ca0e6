//! `DET1` detector container.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "DET1"
//! 4       4        version, u32 LE (= 1)
//! 8       1        score kind: 0 irw, 1 mahalanobis, 2 msp, 3 energy
//! 9       1        aggregation: 0 pm, 1 last, 2 logits, 3 cat
//! 10      1        class selection: 0 predicted, 1 best
//! 11      1        reserved, 0
//! 12      8        n_proj, u64 LE
//! 20      8        seed, u64 LE
//! 28      8        temperature, f64 LE
//! 36      8        shrinkage, f64 LE
//! 44      4        C, u32 LE
//! 48      4        m, u32 LE
//! 52      8·C      per-class training counts n_y, u64 LE
//! body (all f64 LE, row-major):
//!   irw:          directions (n_proj × m), then for each class y its
//!                 aggregated training rows (n_y × m)
//!   mahalanobis:  class means (C × m), then the tied precision (m × m)
//!   msp, energy:  empty
//! ```
//!
//! Sorted projection tables are rebuilt on load.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::{io_err, write_atomically};
use crate::aggregation::AggregationKind;
use crate::depth::{build_projection_bank, DirectionMatrix, GaussianBank};
use crate::error::{Error, Result};
use crate::model::{ClassSelection, DetectorConfig, ScoreKind};
use crate::scores::{ClassBanks, Detector};

pub const DET_MAGIC: [u8; 4] = *b"DET1";
pub const DET_VERSION: u32 = 1;
const FIXED_HEADER_LEN: u64 = 52;

fn code<T: PartialEq + Copy>(all: &[T], v: T) -> u8 {
    all.iter().position(|&x| x == v).expect("variant listed in ALL") as u8
}

fn decode<T: Copy>(path: &Path, all: &[T], what: &str, c: u8) -> Result<T> {
    all.get(c as usize).copied().ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("unknown {what} code {c}"),
    })
}

fn write_f64s<'a, W: Write>(w: &mut W, values: impl IntoIterator<Item = &'a f64>) -> std::io::Result<()> {
    for &v in values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

/// Writes `det` as `DET1`.
pub fn store_detector(det: &Detector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let cfg = det.config();
    let classes = u32::try_from(det.classes()).map_err(|_| Error::invalid("class count", "exceeds u32"))?;
    let dim = u32::try_from(det.dim()).map_err(|_| Error::invalid("feature dimension", "exceeds u32"))?;
    write_atomically(path, |w| {
        w.write_all(&DET_MAGIC)?;
        w.write_u32::<LE>(DET_VERSION)?;
        w.write_u8(code(ScoreKind::ALL, cfg.score_kind))?;
        w.write_u8(code(AggregationKind::ALL, cfg.aggregation))?;
        w.write_u8(code(ClassSelection::ALL, cfg.class_selection))?;
        w.write_u8(0)?;
        w.write_u64::<LE>(cfg.n_proj as u64)?;
        w.write_u64::<LE>(cfg.seed)?;
        w.write_f64::<LE>(cfg.temperature)?;
        w.write_f64::<LE>(cfg.shrinkage)?;
        w.write_u32::<LE>(classes)?;
        w.write_u32::<LE>(dim)?;
        for &n in det.class_counts() {
            w.write_u64::<LE>(n as u64)?;
        }
        match det.banks() {
            ClassBanks::Irw { directions, banks } => {
                write_f64s(w, directions.rows().iter())?;
                for bank in banks {
                    write_f64s(w, bank.reference().iter())?;
                }
            }
            ClassBanks::Mahalanobis { banks } => {
                for bank in banks {
                    write_f64s(w, bank.mean().iter())?;
                }
                if let Some(first) = banks.first() {
                    write_f64s(w, first.precision().iter())?;
                }
            }
            ClassBanks::None => {}
        }
        Ok(())
    })
}

struct Reader<'p> {
    inner: BufReader<File>,
    path: &'p Path,
}

impl Reader<'_> {
    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let mut v = vec![0f64; len];
        self.inner.read_f64_into::<LE>(&mut v).map_err(io_err(self.path))?;
        Ok(v)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = self.f64s(rows * cols)?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("sized above"))
    }
}

fn checked_body_len(kind: ScoreKind, n_proj: u64, classes: u64, dim: u64, counts: &[u64]) -> Option<u64> {
    let floats = match kind {
        ScoreKind::Irw => {
            let rows = counts.iter().try_fold(n_proj, |acc, &n| acc.checked_add(n))?;
            rows.checked_mul(dim)?
        }
        ScoreKind::Mahalanobis => classes.checked_add(dim)?.checked_mul(dim)?,
        ScoreKind::Msp | ScoreKind::Energy => 0,
    };
    floats.checked_mul(8)
}

/// Reads a `DET1` file and rebuilds the detector.
pub fn load_detector(path: impl AsRef<Path>) -> Result<Detector> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let actual = file.metadata().map_err(io_err(path))?.len();
    let truncated = |expected: u64| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        actual,
    };
    if actual < FIXED_HEADER_LEN {
        return Err(truncated(FIXED_HEADER_LEN));
    }
    let mut r = Reader {
        inner: BufReader::new(file),
        path,
    };
    let e = io_err(path);
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };

    let mut magic = [0u8; 4];
    r.inner.read_exact(&mut magic).map_err(&e)?;
    if magic != DET_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: DET_MAGIC,
            found: magic,
        });
    }
    let version = r.inner.read_u32::<LE>().map_err(&e)?;
    if version != DET_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            supported: DET_VERSION,
        });
    }
    let mut codes = [0u8; 4];
    r.inner.read_exact(&mut codes).map_err(&e)?;
    let score_kind = decode(path, ScoreKind::ALL, "score kind", codes[0])?;
    let aggregation = decode(path, AggregationKind::ALL, "aggregation", codes[1])?;
    let class_selection = decode(path, ClassSelection::ALL, "class selection", codes[2])?;
    let n_proj = r.inner.read_u64::<LE>().map_err(&e)?;
    let seed = r.inner.read_u64::<LE>().map_err(&e)?;
    let temperature = r.inner.read_f64::<LE>().map_err(&e)?;
    let shrinkage = r.inner.read_f64::<LE>().map_err(&e)?;
    let classes = u64::from(r.inner.read_u32::<LE>().map_err(&e)?);
    let dim = u64::from(r.inner.read_u32::<LE>().map_err(&e)?);

    let counts_end = classes
        .checked_mul(8)
        .and_then(|c| c.checked_add(FIXED_HEADER_LEN))
        .ok_or_else(|| malformed("class count overflows".into()))?;
    if actual < counts_end {
        return Err(truncated(counts_end));
    }
    let mut counts = vec![0u64; classes as usize];
    r.inner.read_u64_into::<LE>(&mut counts).map_err(&e)?;
    let expected = checked_body_len(score_kind, n_proj, classes, dim, &counts)
        .and_then(|b| b.checked_add(counts_end))
        .ok_or_else(|| malformed("declared sizes overflow".into()))?;
    if actual < expected {
        return Err(truncated(expected));
    }
    if actual > expected {
        return Err(malformed(format!("{} trailing bytes", actual - expected)));
    }

    let to_usize = |v: u64| usize::try_from(v).map_err(|_| malformed(format!("extent {v} too large")));
    let (n_proj, classes, dim) = (to_usize(n_proj)?, to_usize(classes)?, to_usize(dim)?);
    let counts = counts.into_iter().map(to_usize).collect::<Result<Vec<_>>>()?;
    let config = DetectorConfig {
        score_kind,
        aggregation,
        n_proj,
        temperature,
        seed,
        shrinkage,
        class_selection,
    };

    let banks = match score_kind {
        ScoreKind::Irw => {
            let directions = Arc::new(DirectionMatrix::from_rows(r.matrix(n_proj, dim)?, seed)?);
            let banks = counts
                .iter()
                .map(|&n| build_projection_bank(r.matrix(n, dim)?, Arc::clone(&directions)))
                .collect::<Result<Vec<_>>>()?;
            ClassBanks::Irw { directions, banks }
        }
        ScoreKind::Mahalanobis => {
            let means = r.matrix(classes, dim)?;
            let precision = Arc::new(r.matrix(dim, dim)?);
            let banks = means
                .outer_iter()
                .map(|mean| GaussianBank::from_parts(Array1::from(mean.to_vec()), Arc::clone(&precision), shrinkage))
                .collect::<Result<Vec<_>>>()?;
            ClassBanks::Mahalanobis { banks }
        }
        ScoreKind::Msp | ScoreKind::Energy => ClassBanks::None,
    };
    Detector::from_parts(config, classes, dim, counts, banks)
}

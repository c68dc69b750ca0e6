//! `EMB1` embedding container.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "EMB1"
//! 4       4           version, u32 LE (= 1)
//! 8       8           n, u64 LE
//! 16      4           L, u32 LE
//! 20      4           d, u32 LE
//! 24      4           C, u32 LE
//! 28      4·n·L·d     features, f32 LE, sample-major, then layer, then dimension
//! ..      4·n·C       logits, f32 LE, row-major
//! ..      4·n         gold labels, i32 LE (-1 = unknown)
//! ..      4·n         predicted labels, i32 LE (-1 = derive by argmax)
//! ```

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{io_err, write_atomically};
use crate::error::{Error, Result};
use crate::model::{validate_bundle, EmbeddingBundle};

pub const EMB_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB_VERSION: u32 = 1;
pub const EMB_HEADER_LEN: u64 = 28;

/// Exact file length for the given extents, `None` on overflow.
pub fn emb_file_len(n: u64, layers: u64, dim: u64, classes: u64) -> Option<u64> {
    let floats = n.checked_mul(layers)?.checked_mul(dim)?.checked_add(n.checked_mul(classes)?)?;
    floats
        .checked_mul(4)?
        .checked_add(n.checked_mul(8)?)?
        .checked_add(EMB_HEADER_LEN)
}

fn to_usize(path: &Path, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("extent {v} does not fit in memory"),
    })
}

/// Reads and validates an `EMB1` file.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<EmbeddingBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let actual = file.metadata().map_err(io_err(path))?.len();
    if actual < EMB_HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: EMB_HEADER_LEN,
            actual,
        });
    }
    let mut r = BufReader::new(file);
    let e = io_err(path);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(&e)?;
    if magic != EMB_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: EMB_MAGIC,
            found: magic,
        });
    }
    let version = r.read_u32::<LE>().map_err(&e)?;
    if version != EMB_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            supported: EMB_VERSION,
        });
    }
    let n = r.read_u64::<LE>().map_err(&e)?;
    let layers = u64::from(r.read_u32::<LE>().map_err(&e)?);
    let dim = u64::from(r.read_u32::<LE>().map_err(&e)?);
    let classes = u64::from(r.read_u32::<LE>().map_err(&e)?);

    let expected = emb_file_len(n, layers, dim, classes).ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        reason: "header extents overflow".into(),
    })?;
    if actual < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes after the declared tensors", actual - expected),
        });
    }

    let (n, layers, dim, classes) = (
        to_usize(path, n)?,
        to_usize(path, layers)?,
        to_usize(path, dim)?,
        to_usize(path, classes)?,
    );
    let mut features = vec![0f32; n * layers * dim];
    r.read_f32_into::<LE>(&mut features).map_err(&e)?;
    let mut logits = vec![0f32; n * classes];
    r.read_f32_into::<LE>(&mut logits).map_err(&e)?;
    let mut gold = vec![0i32; n];
    r.read_i32_into::<LE>(&mut gold).map_err(&e)?;
    let mut predicted = vec![0i32; n];
    r.read_i32_into::<LE>(&mut predicted).map_err(&e)?;

    EmbeddingBundle::from_parts(n, layers, dim, classes, features, logits, gold, predicted)
}

/// Writes `bundle` as `EMB1`. Identical bundles produce identical bytes.
pub fn write_bundle(bundle: &EmbeddingBundle, path: impl AsRef<Path>) -> Result<()> {
    validate_bundle(bundle)?;
    let path = path.as_ref();
    let extent = |what: &'static str, v: usize| {
        u32::try_from(v).map_err(|_| Error::invalid(what, format!("{v} does not fit the u32 header field")))
    };
    let layers = extent("layer count", bundle.layers())?;
    let dim = extent("embedding dimension", bundle.dim())?;
    let classes = extent("class count", bundle.classes())?;

    write_atomically(path, |w| {
        w.write_all(&EMB_MAGIC)?;
        w.write_u32::<LE>(EMB_VERSION)?;
        w.write_u64::<LE>(bundle.n() as u64)?;
        w.write_u32::<LE>(layers)?;
        w.write_u32::<LE>(dim)?;
        w.write_u32::<LE>(classes)?;
        for &v in bundle.features().iter() {
            w.write_f32::<LE>(v)?;
        }
        for &v in bundle.logits().iter() {
            w.write_f32::<LE>(v)?;
        }
        for &v in bundle.gold_labels() {
            w.write_i32::<LE>(v)?;
        }
        for &v in bundle.predicted_labels() {
            w.write_i32::<LE>(v)?;
        }
        Ok(())
    })
}

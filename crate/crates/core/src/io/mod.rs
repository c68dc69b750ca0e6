//! On-disk formats: `EMB1` embedding bundles, `DET1` detectors, score files
//! and evaluation reports. Byte layouts are documented in `docs/FORMAT.md`.

mod det;
mod emb;
mod report;
mod scores;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

pub use det::{load_detector, store_detector, DET_MAGIC, DET_VERSION};
pub use emb::{emb_file_len, read_bundle, write_bundle, EMB_HEADER_LEN, EMB_MAGIC, EMB_VERSION};
pub use report::{parse_report, read_report, render_report, write_report, ReportDoc};
pub use scores::{read_scores, render_scores, write_scores, ScoreLine};

use crate::error::{Error, Result};

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub(crate) fn write_atomically(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<&mut File>) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Lower-case hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

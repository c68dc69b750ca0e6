//! Plain-text score files: a `#` header, then one tab-separated line per
//! sample with its index, predicted label and score (9 significant digits).

use std::io::Write;
use std::path::Path;

use super::{io_err, write_atomically};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreLine {
    pub predicted: usize,
    pub score: f64,
}

const HEADER: &str = "# index\tpredicted\tscore";

pub fn render_scores(lines: &[ScoreLine]) -> String {
    let mut out = String::with_capacity(32 * (lines.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for (i, l) in lines.iter().enumerate() {
        out.push_str(&format!("{i}\t{}\t{:.8e}\n", l.predicted, l.score));
    }
    out
}

pub fn write_scores(lines: &[ScoreLine], path: impl AsRef<Path>) -> Result<()> {
    let text = render_scores(lines);
    write_atomically(path.as_ref(), |w| w.write_all(text.as_bytes()))
}

/// Reads the score column of a score file.
pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let malformed = |line: usize, reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut scores = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line
            .split('\t')
            .nth(2)
            .ok_or_else(|| malformed(no + 1, "expected three tab-separated fields"))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| malformed(no + 1, "score is not a number"))?;
        if !v.is_finite() {
            return Err(malformed(no + 1, "score is not finite"));
        }
        scores.push(v);
    }
    if scores.is_empty() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: "no scores".into(),
        });
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_read_back() {
        let lines = [
            ScoreLine { predicted: 0, score: 0.25 },
            ScoreLine { predicted: 2, score: -1.234_567_891_23 },
        ];
        let text = render_scores(&lines);
        assert_eq!(text, "# index\tpredicted\tscore\n0\t0\t2.50000000e-1\n1\t2\t-1.23456789e0\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        write_scores(&lines, &p).unwrap();
        assert_eq!(read_scores(&p).unwrap(), vec![0.25, -1.23456789]);
    }

    #[test]
    fn empty_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        std::fs::write(&p, "# index\tpredicted\tscore\n").unwrap();
        assert!(read_scores(&p).is_err());
        std::fs::write(&p, "0\t1\n").unwrap();
        assert!(read_scores(&p).is_err());
    }
}

//! Plain-text matrices: an `F C` header, F rows of C numbers, then a
//! `clips: i0 i1 ...` line listing the first row of every clip.

use crate::error::{Error, Result};
use ctxsel_core::numcore::Matrix;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMatrix {
    pub matrix: Matrix,
    pub clip_starts: Vec<usize>,
}

impl ClipMatrix {
    /// Renders with shortest round-trip float formatting, so parsing the text
    /// gives back the same bits.
    pub fn to_text(&self) -> String {
        let m = &self.matrix;
        let mut out = format!("{} {}\n", m.rows(), m.cols());
        for row in m.iter_rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push_str("clips:");
        for s in &self.clip_starts {
            write!(out, " {s}").unwrap();
        }
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("matrix file", detail);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("header {header:?} is not `F C`"))))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(bad(format!("header {header:?} is not `F C`")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = lines.next().ok_or_else(|| bad(format!("expected {rows} rows")))?;
            let before = data.len();
            for t in line.split_whitespace() {
                data.push(t.parse::<f64>().map_err(|_| bad(format!("line {}: {t:?} is not a number", no + 1)))?);
            }
            if data.len() - before != cols {
                return Err(bad(format!("line {}: expected {cols} values", no + 1)));
            }
        }
        let (no, clips) = lines.next().ok_or_else(|| bad("missing `clips:` line".into()))?;
        let rest = clips
            .strip_prefix("clips:")
            .ok_or_else(|| bad(format!("line {}: expected `clips:`", no + 1)))?;
        let clip_starts = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("line {}: bad clip index {t:?}", no + 1))))
            .collect::<Result<Vec<usize>>>()?;
        if let Some((no, _)) = lines.next() {
            return Err(bad(format!("line {}: trailing content", no + 1)));
        }
        Ok(Self { matrix: Matrix::new(rows, cols, data)?, clip_starts })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format { what, detail } => Error::Format { what: format!("{what} {}", path.display()), detail },
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(Error::io(path))
    }
}

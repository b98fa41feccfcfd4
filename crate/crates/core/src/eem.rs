//! Stacks of excitation-emission matrices stored as one CSV per sample.
//!
//! A pattern such as `data/sample_{}.csv` selects every file in `data/`
//! whose name is `sample_` followed by a decimal index and `.csv`. Indices
//! must be contiguous; the lowest one becomes slice 0.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor3::{Matrix, Tensor3};

const PLACEHOLDER: &str = "{}";

struct Pattern {
    dir: PathBuf,
    prefix: String,
    suffix: String,
}

impl Pattern {
    fn parse(pattern: &str) -> Result<Self> {
        let path = Path::new(pattern);
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidArgument(format!("pattern {pattern:?} has no file name")))?;
        let mut parts = name.split(PLACEHOLDER);
        let (prefix, suffix) = match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(s), None) => (p.to_string(), s.to_string()),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "pattern {pattern:?} must contain exactly one {PLACEHOLDER} in its file name"
                )))
            }
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        Ok(Self { dir, prefix, suffix })
    }

    /// Index and zero-padded width (0 when unpadded).
    fn index_of(&self, name: &str) -> Option<(u64, usize)> {
        let digits = name.strip_prefix(&self.prefix)?.strip_suffix(&self.suffix)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let width = if digits.len() > 1 && digits.starts_with('0') { digits.len() } else { 0 };
        Some((digits.parse().ok()?, width))
    }

    fn path(&self, index: u64, width: usize) -> PathBuf {
        self.dir.join(format!("{}{index:0width$}{}", self.prefix, self.suffix))
    }
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, &e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let row = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Csv {
                    file: path.to_path_buf(),
                    row,
                    col: c + 1,
                    msg: format!("not a finite number: {cell:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::Csv {
                    file: path.to_path_buf(),
                    row,
                    col: values.len().min(first.len()) + 1,
                    msg: format!("expected {} columns, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            file: path.to_path_buf(),
            row: 0,
            col: 0,
            msg: "no data rows".into(),
        });
    }
    let ncols = rows[0].len();
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    if let csv::ErrorKind::Io(io) = e.kind() {
        return Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display())));
    }
    let (row, col) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (0, 0),
    };
    Error::Csv {
        file: path.to_path_buf(),
        row,
        col,
        msg: e.to_string(),
    }
}

/// Files matched by `pattern`, ordered by index.
pub fn eem_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let pat = Pattern::parse(pattern)?;
    let mut found: Vec<(u64, usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(&pat.dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some((idx, width)) = name.to_str().and_then(|n| pat.index_of(n)) {
            found.push((idx, width, entry.path()));
        }
    }
    found.sort_by_key(|(idx, _, _)| *idx);
    if found.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pattern {pattern:?} matched {} file(s); at least 2 samples are needed",
            found.len()
        )));
    }
    let width = found.iter().map(|f| f.1).max().unwrap_or(0);
    for pair in found.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.0 == a.0 {
            return Err(Error::InvalidArgument(format!(
                "index {} appears twice: {} and {}",
                a.0,
                a.2.display(),
                b.2.display()
            )));
        }
        if b.0 != a.0 + 1 {
            return Err(Error::MissingSample(pat.path(a.0 + 1, width)));
        }
    }
    Ok(found.into_iter().map(|(_, _, p)| p).collect())
}

/// Reads every matched sample and stacks them along mode 3.
pub fn load_eem_csv(pattern: &str) -> Result<Tensor3> {
    let files = eem_files(pattern)?;
    let mut slices = Vec::with_capacity(files.len());
    for f in &files {
        let m = read_matrix(f)?;
        if let Some(first) = slices.first() {
            let first: &Matrix = first;
            if first.shape() != m.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "{} is {}x{} but {} is {}x{}",
                    f.display(),
                    m.nrows(),
                    m.ncols(),
                    files[0].display(),
                    first.nrows(),
                    first.ncols()
                )));
            }
        }
        slices.push(m);
    }
    Tensor3::from_slices(&slices)
}

/// Writes slice `k` to the pattern with index `k`, values in exact
/// round-trip notation.
pub fn write_eem_csv(t: &Tensor3, pattern: &str) -> Result<Vec<PathBuf>> {
    let pat = Pattern::parse(pattern)?;
    let [n1, n2, _] = t.dims();
    t.slices()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = pat.path(k as u64, 0);
            let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
            for i in 0..n1 {
                let row: Vec<String> = (0..n2).map(|j| format!("{:e}", s[(i, j)])).collect();
                writeln!(out, "{}", row.join(","))?;
            }
            out.flush()?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_parsing() {
        let p = Pattern::parse("dir/s_{}.csv").unwrap();
        assert_eq!(p.dir, PathBuf::from("dir"));
        assert_eq!(p.index_of("s_12.csv"), Some((12, 0)));
        assert_eq!(p.index_of("s_007.csv"), Some((7, 3)));
        assert_eq!(p.index_of("s_.csv"), None);
        assert_eq!(p.index_of("s_1a.csv"), None);
        assert_eq!(p.path(3, 2), PathBuf::from("dir/s_03.csv"));
        assert!(Pattern::parse("x.csv").is_err());
        assert!(Pattern::parse("{}_{}.csv").is_err());
        assert_eq!(Pattern::parse("{}.csv").unwrap().dir, PathBuf::from("."));
    }
}

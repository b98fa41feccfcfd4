//! The `.t3` text format.
//!
//! ```text
//! # optional comments
//! n1 n2 n3
//! a(1,1,1) a(1,2,1) ... a(1,n2,1)
//! ...
//! ```
//!
//! After the dimension line come `n1·n2·n3` whitespace-separated floats, slice
//! by slice, each slice row-major. Lines whose first non-blank character is
//! `#` are ignored.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

pub fn read_t3<R: BufRead>(reader: R) -> Result<Tensor3> {
    let mut dims: Option<[usize; 3]> = None;
    let mut values = Vec::new();
    let mut last_line = 0;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        last_line = lineno;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match dims {
            None => {
                let parts: Vec<&str> = trimmed.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected `n1 n2 n3`, found {} fields", parts.len()),
                    });
                }
                let mut d = [0usize; 3];
                for (slot, p) in d.iter_mut().zip(&parts) {
                    *slot = p.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("invalid dimension `{p}`"),
                    })?;
                    if *slot == 0 {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "dimensions must be positive".into(),
                        });
                    }
                }
                values.reserve(d[0] * d[1] * d[2]);
                dims = Some(d);
            }
            Some(d) => {
                for (col, tok) in trimmed.split_whitespace().enumerate() {
                    let x: f64 = tok.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("field {}: `{tok}` is not a number", col + 1),
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("field {}: non-finite value", col + 1),
                        });
                    }
                    values.push(x);
                    if values.len() > d[0] * d[1] * d[2] {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("more than {} values", d[0] * d[1] * d[2]),
                        });
                    }
                }
            }
        }
    }

    let d = dims.ok_or(Error::Parse {
        line: last_line,
        msg: "missing dimension line".into(),
    })?;
    let expected = d[0] * d[1] * d[2];
    if values.len() != expected {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Tensor3::new(d, values)
}

/// Writes `t` so that [`read_t3`] recovers it bit for bit.
pub fn write_t3<W: Write>(t: &Tensor3, mut out: W) -> Result<()> {
    let [n1, n2, n3] = t.dims();
    writeln!(out, "{n1} {n2} {n3}")?;
    for (k, slice) in t.as_slice().chunks(n1 * n2).enumerate() {
        writeln!(out, "# slice {}", k + 1)?;
        for row in slice.chunks(n2) {
            let mut first = true;
            for x in row {
                if !first {
                    out.write_all(b" ")?;
                }
                first = false;
                // `{:e}` gives the shortest representation that parses back exactly
                write!(out, "{x:e}")?;
            }
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

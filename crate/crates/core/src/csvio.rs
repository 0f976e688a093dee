//! Two-column `frame_index,<value>` CSV files used for scores, decisions
//! and labels.

use std::fmt::Display;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shortest round-trip text for `v`, switching to exponent notation for
/// very large or very small magnitudes.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-6..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub fn write_indexed<W, T>(out: W, column: &str, values: impl IntoIterator<Item = T>) -> Result<()>
where
    W: Write,
    T: Display,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", column])?;
    for (i, v) in values.into_iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the named column; frame indices must run 0, 1, 2, ...
pub fn read_indexed<R, T>(input: R, column: &str) -> Result<Vec<T>>
where
    R: Read,
    T: FromStr,
{
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::invalid(format!("missing column `{column}`")))?;
    let idx_col = headers.iter().position(|h| h.trim() == "frame_index");
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if let Some(ic) = idx_col {
            let idx: usize = rec
                .get(ic)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad frame index on row {}", i + 1)))?;
            if idx != i {
                return Err(Error::invalid(format!(
                    "frame index {idx} out of order on row {}",
                    i + 1
                )));
            }
        }
        let field = rec.get(col).unwrap_or("").trim();
        let v = field
            .parse()
            .map_err(|_| Error::invalid(format!("cannot parse `{field}` in column `{column}`")))?;
        values.push(v);
    }
    Ok(values)
}

/// Binary values are written as 0/1.
pub fn write_binary<W: Write>(out: W, column: &str, values: &[bool]) -> Result<()> {
    write_indexed(out, column, values.iter().map(|&b| u8::from(b)))
}

pub fn read_binary<R: Read>(input: R, column: &str) -> Result<Vec<bool>> {
    read_indexed::<_, u8>(input, column)?
        .into_iter()
        .map(|v| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::invalid(format!("non-binary value {other} in `{column}`"))),
        })
        .collect()
}

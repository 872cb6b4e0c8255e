//! JSON-lines snapshot files: one `{"t": .., "x": [[..]], "z": [[..]]}`
//! object per line, `z` optional.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sequence::{Snapshot, SnapshotSequence};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    t: f64,
    x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<Vec<f64>>>,
}

fn rows_f64<T: Scalar>(m: &Dense<T>, what: &str, index: usize) -> Result<Vec<Vec<f64>>> {
    if !m.is_finite() {
        return Err(Error::invalid(
            format!("entries[{index}].{what}"),
            "non-finite values cannot be written",
        ));
    }
    Ok((0..m.rows())
        .map(|r| m.row(r).iter().map(|v| v.to_f64_exact()).collect())
        .collect())
}

/// Writes one line per snapshot. Floats use the shortest decimal that
/// parses back to the same bits; `f32` values are widened exactly first.
pub fn write_snapshots<T: Scalar, W: Write>(seq: &SnapshotSequence<T>, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<writer>", e);
    for (i, s) in seq.entries().iter().enumerate() {
        let line = Line {
            t: s.t,
            x: rows_f64(&s.x, "x", i)?,
            z: s.z.as_ref().map(|z| rows_f64(z, "z", i)).transpose()?,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io("<writer>", e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: None,
        line: Some(line),
        message: message.into(),
    }
}

fn matrix<T: Scalar>(rows: Vec<Vec<f64>>, what: &str, line: usize) -> Result<Dense<T>> {
    if rows.is_empty() {
        return Err(parse_err(line, format!("`{what}` has no rows")));
    }
    let width = rows[0].len();
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(parse_err(
            line,
            format!("`{what}` rows must be non-empty and equally long"),
        ));
    }
    let mut data = Vec::with_capacity(rows.len() * width);
    for v in rows.iter().flatten() {
        let narrowed = T::of(*v);
        if narrowed.to_f64_exact() != *v {
            return Err(parse_err(
                line,
                format!("`{what}` value {v} is not representable at this precision"),
            ));
        }
        data.push(narrowed);
    }
    Dense::from_vec(rows.len(), width, data)
}

/// Reads a snapshot stream. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_snapshots<T: Scalar, R: Read>(r: R) -> Result<SnapshotSequence<T>> {
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| parse_err(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        if !parsed.t.is_finite() {
            return Err(parse_err(n, "`t` is not finite"));
        }
        let x = matrix(parsed.x, "x", n)?;
        let z = parsed.z.map(|z| matrix(z, "z", n)).transpose()?;
        entries.push(Snapshot { t: parsed.t, x, z });
    }
    SnapshotSequence::new(entries)
}

pub fn write_snapshot_file<T: Scalar>(path: impl AsRef<Path>, seq: &SnapshotSequence<T>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshots(seq, BufWriter::new(f)).map_err(|e| with_path(e, path))
}

pub fn read_snapshot_file<T: Scalar>(path: impl AsRef<Path>) -> Result<SnapshotSequence<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshots(f).map_err(|e| with_path(e, path))
}

pub(crate) fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse {
            path: None,
            line,
            message,
        } => Error::Parse {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Reads every line of a text file, mapping failures to I/O errors.
pub(crate) fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

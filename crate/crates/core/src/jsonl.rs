//! Line-delimited JSON helpers.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

/// Reads every non-blank line of `path` as one `T`.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: display.clone(),
        source,
    })?;
    parse_lines(BufReader::new(file), &display)
}

pub fn parse_lines<T: DeserializeOwned, R: BufRead>(
    reader: R,
    origin: &str,
) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: origin.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
            path: origin.to_string(),
            line: idx + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Serialises records one per line. Output is byte-stable for identical input.
pub fn to_string<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialises"));
        out.push('\n');
    }
    out
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

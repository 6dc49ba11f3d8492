//! Sample and coefficient file formats.
//!
//! * `.i16`: raw little-endian signed 16-bit samples, no header.
//! * `.csv`: one floating-point sample per line.
//! * sidecar: `<file>.json` next to the data file carrying rate and lane
//!   count ([`StreamHeader`]).

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: odd byte count {len} for an i16 file")]
    TruncatedI16 { path: PathBuf, len: usize },
    #[error("{path}:{line}: cannot parse `{text}` as a sample")]
    BadCsv {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{path}: bad sidecar header: {source}")]
    BadHeader {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}: unknown sample format (expected .i16 or .csv)")]
    UnknownFormat(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    I16,
    Csv,
}

impl SampleFormat {
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("i16") => Ok(SampleFormat::I16),
            Some("csv") => Ok(SampleFormat::Csv),
            _ => Err(IoError::UnknownFormat(path.to_path_buf())),
        }
    }
}

/// Stream metadata stored in the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub sample_rate_hz: f64,
    #[serde(default = "one")]
    pub lanes: usize,
    pub format: SampleFormat,
    #[serde(default)]
    pub count: Option<usize>,
}

fn one() -> usize {
    1
}

/// `data.i16` -> `data.i16.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_header(data: &Path) -> Result<StreamHeader, IoError> {
    let path = sidecar_path(data);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|source| IoError::BadHeader { path, source })
}

pub fn write_header(data: &Path, header: &StreamHeader) -> Result<(), IoError> {
    let path = sidecar_path(data);
    let text = serde_json::to_string_pretty(header).expect("header serialises");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_i16(path: &Path) -> Result<Vec<i64>, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() % 2 != 0 {
        return Err(IoError::TruncatedI16 {
            path: path.to_path_buf(),
            len: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as i64)
        .collect())
}

/// Values outside the i16 range are saturated.
pub fn write_i16(path: &Path, samples: &[i64]) -> Result<(), IoError> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for &s in samples {
        let v = s.clamp(i16::MIN as i64, i16::MAX as i64) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let v = text.parse::<f64>().map_err(|_| IoError::BadCsv {
            path: path.to_path_buf(),
            line: i + 1,
            text: text.to_string(),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_csv(path: &Path, samples: &[f64]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for v in samples {
        writeln!(w, "{v}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Write rows of `(x, y)` with a header line.
pub fn write_xy_csv(path: &Path, header: &str, rows: &[(f64, f64)]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}").map_err(io_err(path))?;
    for (x, y) in rows {
        writeln!(w, "{x},{y}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i16_round_trip_and_saturation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.i16");
        write_i16(&p, &[0, 1, -1, 32767, -32768, 40000]).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], &[0, 0, 1, 0]);
        assert_eq!(read_i16(&p).unwrap(), vec![0, 1, -1, 32767, -32768, 32767]);
    }

    #[test]
    fn odd_length_i16_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.i16");
        fs::write(&p, [1u8, 2, 3]).unwrap();
        assert!(matches!(read_i16(&p), Err(IoError::TruncatedI16 { .. })));
    }

    #[test]
    fn csv_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, &[0.5, -0.25, 1e-9]).unwrap();
        assert_eq!(read_csv(&p).unwrap(), vec![0.5, -0.25, 1e-9]);
        let h = StreamHeader {
            sample_rate_hz: 20e6,
            lanes: 80,
            format: SampleFormat::Csv,
            count: Some(3),
        };
        write_header(&p, &h).unwrap();
        assert!(sidecar_path(&p).ends_with("x.csv.json"));
        assert_eq!(read_header(&p).unwrap(), h);

        fs::write(&p, "1.0\nabc\n").unwrap();
        match read_csv(&p) {
            Err(IoError::BadCsv { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

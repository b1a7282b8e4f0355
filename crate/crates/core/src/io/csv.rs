//! Diagnostics CSV: one header line, then one row per record. Reals are
//! written with 17 significant digits so rows read back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::stepping::{DiagnosticsSink, SimState};

/// Writes the header on the first row only.
pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
    header_written: bool,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(writer: W) -> Self {
        Self {
            inner: csv::WriterBuilder::new().has_headers(false).from_writer(writer),
            header_written: false,
        }
    }

    pub fn write_row(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        let map = |e: csv::Error| Error::Diagnostics(e.to_string());
        if !self.header_written {
            self.inner.write_record(DiagnosticsRecord::COLUMNS).map_err(map)?;
            self.header_written = true;
        }
        let values = record.values();
        let row = values.iter().enumerate().map(|(i, v)| {
            if i == 1 {
                record.step.to_string()
            } else {
                format!("{v:.16e}")
            }
        });
        self.inner.write_record(row).map_err(map)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Diagnostics(e.to_string()))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Diagnostics(e.to_string()))
    }
}

/// CSV sink bound to a file; flushes after every row so partial output
/// survives a failed run.
pub struct CsvSink {
    path: PathBuf,
    writer: DiagnosticsWriter<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: DiagnosticsWriter::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DiagnosticsSink for CsvSink {
    fn emit(&mut self, _state: &SimState, record: &DiagnosticsRecord) -> Result<()> {
        self.writer.write_row(record)?;
        self.writer.flush()
    }
}

/// Parses a diagnostics CSV written by [`DiagnosticsWriter`].
pub fn read_diagnostics<R: Read>(reader: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Diagnostics(e.to_string()))?.clone();
    let expected: Vec<&str> = DiagnosticsRecord::COLUMNS.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Diagnostics(format!(
            "unexpected header; expected columns {}",
            expected.join(",")
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Diagnostics(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn read_diagnostics_file(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_diagnostics(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_record_row() {
        let mut w = DiagnosticsWriter::new(Vec::new());
        let rec = DiagnosticsRecord {
            t: 0.5,
            ..DiagnosticsRecord::default()
        };
        w.write_row(&rec).unwrap();
        w.write_row(&rec).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines.iter().filter(|l| l.starts_with("t,step")).count(), 1);
        assert!(lines[1].starts_with("5.0000000000000000e-1,0,0.0000000000000000e0"));
    }

    #[test]
    fn round_trip_is_exact() {
        let rec = DiagnosticsRecord {
            t: 0.1 + 0.2,
            step: 17,
            mass_n: std::f64::consts::PI,
            mass_m: 1.0 / 3.0,
            energy_residual: -1.234_567_890_123_456_7e-300,
            acc_grad_u: f64::MIN_POSITIVE,
            dist_c: 123_456_789.123_456_79,
            ..DiagnosticsRecord::default()
        };
        let mut w = DiagnosticsWriter::new(Vec::new());
        w.write_row(&rec).unwrap();
        let bytes = w.into_inner().unwrap();
        let back = read_diagnostics(bytes.as_slice()).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_diagnostics("a,b\n1,2\n".as_bytes()).is_err());
    }
}

//! Artifact writing: pretty JSON reports and CSV tables, each persisted
//! atomically through a temporary file in the destination directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::NamedTempFile;

use crate::error::CliError;

/// Bumped whenever a report's required keys or their meaning change.
pub const SCHEMA_VERSION: u32 = 1;

pub struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|source| CliError::Output { path: d.display().to_string(), source })?;
        }
        Ok(Artifacts { dir })
    }

    /// Writes `name` with the bytes produced by `fill`; a no-op without an
    /// output directory.
    pub fn write(&self, name: &str, fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        let io = |source| CliError::Output { path: path.display().to_string(), source };
        let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush().map_err(io)?;
        }
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn write_json(&self, name: &str, report: &Value) -> Result<(), CliError> {
        self.write(name, |w| write_json(w, report, &Path::new(name).display().to_string()))
    }
}

pub fn write_json(w: &mut dyn Write, report: &Value, label: &str) -> Result<(), CliError> {
    let io = |source| CliError::Output { path: label.to_string(), source };
    serde_json::to_writer_pretty(&mut *w, report).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)
}

/// CSV with a header row, `.` decimals and LF line endings.
pub fn write_table(w: &mut dyn Write, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let err = |e: csv::Error| CliError::Output { path: "csv".into(), source: e.into() };
    out.write_record(header).map_err(err)?;
    for row in rows {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    out.flush().map_err(|source| CliError::Output { path: "csv".into(), source })
}

//! CSV tables with a provenance comment line.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Placeholder recorded when the build carries no version description.
pub const GIT_DESCRIBE: &str = match option_env!("DYNASC_GIT_DESCRIBE") {
    Some(v) => v,
    None => "unknown",
};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file_name: &str, header: &[&str]) -> Self {
        Self {
            file_name: file_name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comment line, header, then rows.
    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::Numeric(format!("csv flush: {e}")))?;
        let mut out = format!("#config-hash={config_hash} #git-describe={GIT_DESCRIBE}\n");
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write(&self, dir: &Path, config_hash: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(&self.file_name);
        std::fs::write(&path, self.to_csv(config_hash)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(format!("csv: {e}"))
}

/// Shortest representation that round-trips.
pub fn num(v: f64) -> String {
    v.to_string()
}

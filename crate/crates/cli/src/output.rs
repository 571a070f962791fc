//! Atomic artifact writes: each file is written to a temporary sibling and
//! renamed into place, so readers never see a partial file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub struct OutDir {
    root: PathBuf,
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| out_err(&root, e))?;
        Ok(Self { root })
    }

    #[cfg(test)]
    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        Self::create(self.root.join(name))
    }

    /// Runs `fill` against a buffered temporary file and renames it to `name`.
    pub fn write_with<F, E>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<&mut NamedTempFile>) -> Result<(), E>,
        E: std::fmt::Display,
    {
        let target = self.root.join(name);
        let mut tmp = NamedTempFile::new_in(&self.root).map_err(|e| out_err(&target, e))?;
        {
            let mut w = BufWriter::new(&mut tmp);
            fill(&mut w).map_err(|e| out_err(&target, e))?;
            w.flush().map_err(|e| out_err(&target, e))?;
        }
        tmp.persist(&target)
            .map_err(|e| out_err(&target, e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize + ?Sized>(
        &self,
        name: &str,
        value: &T,
    ) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| costeff_core::inference::write_json(value, w))
    }

    /// A CSV table from a header and stringified rows.
    pub fn write_table(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        self.write_with(name, |w| -> Result<(), csv::Error> {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(header)?;
            for row in rows {
                wtr.write_record(row)?;
            }
            wtr.flush()?;
            Ok(())
        })
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

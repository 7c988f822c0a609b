use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Output directory that remembers which files it wrote.
pub struct OutputDir {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Write `rows` as `<stem>.csv` or `<stem>.json` depending on the chosen format.
    pub fn table<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<(), CliError> {
        match self.format {
            Format::Csv => self.csv(&format!("{stem}.csv"), rows),
            Format::Json => self.json(&format!("{stem}.json"), rows),
        }
    }
}

//! The JSON run summary: per-assertion pass/fail, CSV schema versions and the
//! effective seed/threads/runtime.

use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: String,
}

impl Assertion {
    pub fn new(name: &str, pass: bool, value: f64, threshold: impl Into<String>) -> Self {
        Assertion { name: name.to_string(), pass, value, threshold: threshold.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CsvFile {
    pub file: String,
    pub schema: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub runtime_seconds: f64,
    pub pass: bool,
    pub assertions: Vec<Assertion>,
    pub csv_files: Vec<CsvFile>,
}

impl Summary {
    pub fn new(command: &str, seed: u64, threads: usize) -> Self {
        Summary {
            schema_version: 1,
            command: command.to_string(),
            seed,
            threads,
            runtime_seconds: 0.0,
            pass: true,
            assertions: Vec::new(),
            csv_files: Vec::new(),
        }
    }

    pub fn push(&mut self, a: Assertion) {
        self.pass &= a.pass;
        self.assertions.push(a);
    }

    pub fn csv(&mut self, file: &str, schema: &str) {
        self.csv_files.push(CsvFile { file: file.to_string(), schema: schema.to_string() });
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        ticketlab_core::data::write_atomic(&out.join("summary.json"), &bytes)?;
        Ok(())
    }
}

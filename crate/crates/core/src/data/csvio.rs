//! CSV emission: comma separator, '.' decimal point, LF line endings, fields
//! quoted only when they contain separators. Writes are atomic.

use crate::error::Result;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Header plus stringified rows for one report type.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("csv header");
        for row in &self.rows {
            w.write_record(row).expect("csv row");
        }
        w.into_inner().expect("csv flush")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

/// Shortest round-trip decimal form; deterministic across runs and platforms.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes through a temp file and rename so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

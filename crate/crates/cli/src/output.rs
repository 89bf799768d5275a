//! Output files: CSV rendering and write-then-rename.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Files produced by a run, written together once everything has succeeded.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<Vec<u8>>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        self.files
            .iter()
            .map(|(name, bytes)| {
                let path = dir.join(name);
                write_atomic(&path, bytes)?;
                Ok(path)
            })
            .collect()
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent.display(), e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path.display(), e)
    })
}

/// CSV document with a header row; numbers use shortest round-trip formatting.
pub fn csv_document<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| CliError::io("csv", e))?;
    for row in rows {
        wtr.write_record(row).map_err(|e| CliError::io("csv", e))?;
    }
    wtr.into_inner().map_err(|e| CliError::io("csv", e))
}

pub fn json_document<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

/// Reads a `(k, y)` CSV with a header row and contiguous `k = 1, 2, ...`.
pub fn read_observations(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    parse_observations(&text)
}

pub fn parse_observations(text: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut ys = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CliError::Input(format!("line {line}: {e}")))?;
        if record.len() != 2 {
            return Err(CliError::Input(format!(
                "line {line}: expected 2 columns (k, y), found {}",
                record.len()
            )));
        }
        let k: usize = record[0]
            .parse()
            .map_err(|_| CliError::Input(format!("line {line}: index `{}` is not a positive integer", &record[0])))?;
        if k != ys.len() + 1 {
            return Err(CliError::Input(format!(
                "line {line}: expected k = {}, found {k}",
                ys.len() + 1
            )));
        }
        let y: f64 = record[1]
            .parse()
            .map_err(|_| CliError::Input(format!("line {line}: value `{}` is not a number", &record[1])))?;
        if !y.is_finite() {
            return Err(CliError::Input(format!("line {line}: value is not finite")));
        }
        ys.push(y);
    }
    if ys.is_empty() {
        return Err(CliError::Input("no observations".into()));
    }
    Ok(ys)
}

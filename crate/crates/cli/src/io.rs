//! JSON config loading and CSV input/output.

use crate::error::{CliError, CliResult};
use serde::de::DeserializeOwned;
use std::fs;
use std::path::{Path, PathBuf};

/// Parse a JSON file, reporting the field path of any mismatch.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::Config(format!("{what} {}: at '{}': {}", path.display(), e.path(), e.inner())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// `name` under `dir` unless it is absolute.
pub fn output_path(dir: &Path, name: Option<&str>, default: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name.unwrap_or(default)))
}

/// A count series with optional covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub counts: Vec<u64>,
    pub covariates: Option<Vec<Vec<f64>>>,
}

pub fn read_series(path: &Path, count_column: &str, covariate_columns: &[String]) -> CliResult<Series> {
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| data_err(format!("no column named '{name}'")))
    };
    let xi = column(count_column)?;
    let ci = covariate_columns.iter().map(|c| column(c)).collect::<CliResult<Vec<_>>>()?;
    let mut counts = Vec::new();
    let mut covs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let x = field(xi);
        counts.push(
            x.parse::<u64>()
                .map_err(|_| data_err(format!("line {line}, column '{count_column}': '{x}' is not a non-negative integer")))?,
        );
        let row = ci
            .iter()
            .zip(covariate_columns)
            .map(|(&i, name)| {
                let v = field(i);
                v.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| data_err(format!("line {line}, column '{name}': '{v}' is not a finite number")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        covs.push(row);
    }
    if counts.is_empty() {
        return Err(data_err("no data rows".into()));
    }
    Ok(Series { counts, covariates: (!covariate_columns.is_empty()).then_some(covs) })
}

/// Write rows of already formatted fields under a header.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Config(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

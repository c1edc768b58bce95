//! Output artifacts with provenance.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A JSON result document: `kind`, `version`, `seed` and `config`, then the
/// result's own fields.
#[derive(Serialize)]
pub struct Artifact<'a, T: Serialize> {
    pub kind: &'a str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    #[serde(flatten)]
    pub result: T,
}

pub fn config_value<C: Serialize>(config: &C) -> Value {
    serde_json::to_value(config).unwrap_or(Value::Null)
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f =
                File::create(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn io_err(e: io::Error) -> CliError {
    CliError::Usage(format!("write failed: {e}"))
}

pub fn write_json<T: Serialize>(
    path: Option<&Path>,
    artifact: &Artifact<'_, T>,
) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, artifact).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// CSV with a leading `#` provenance line, then a header and rows.
pub struct CsvOut {
    out: Box<dyn Write>,
}

impl CsvOut {
    pub fn create(
        path: Option<&Path>,
        kind: &str,
        seed: Option<u64>,
        config: &Value,
        header: &[&str],
    ) -> Result<Self, CliError> {
        let mut out = open_output(path)?;
        let seed = seed.map_or("null".to_string(), |s| s.to_string());
        writeln!(
            out,
            "# maxent-income {VERSION} kind={kind} seed={seed} config={config}"
        )
        .map_err(io_err)?;
        writeln!(out, "{}", header.join(",")).map_err(io_err)?;
        Ok(Self { out })
    }

    pub fn row<I, D>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = D>,
        D: std::fmt::Display,
    {
        let line: Vec<String> = fields.into_iter().map(|f| f.to_string()).collect();
        writeln!(self.out, "{}", line.join(",")).map_err(io_err)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(io_err)
    }
}

/// Empty CSV field for missing values.
pub fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

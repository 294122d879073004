use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, which round-trips every f64.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV file: `# key=value` provenance lines, a header row, then records.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(dir: &Path, name: &str, provenance: &[(String, String)], columns: &[&str]) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut file = BufWriter::new(File::create(&path)?);
        for (k, v) in provenance {
            writeln!(file, "# {k}={v}")?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns).map_err(csv_err)?;
        Ok(Self { path, writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes a schema-versioned JSON report with the provenance block.
pub fn write_json(dir: &Path, name: &str, provenance: &[(String, String)], body: Value) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let mut prov = Map::new();
    for (k, v) in provenance {
        prov.insert(k.clone(), Value::String(v.clone()));
    }
    let doc = json!({ "schema_version": SCHEMA_VERSION, "provenance": prov, "results": body });
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// JSON number, or null for non-finite values.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

//! Command results and their CSV / JSON renderings.
//!
//! A report is a map of summary values plus an optional table. JSON output
//! puts the summary and every table column (as an array) into one object.
//! CSV output writes the table, with the summary either as a `# ` comment
//! line (stdout) or as a `<stem>.summary.json` file next to `--out`. A report
//! without a table becomes a single CSV row.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn column(&self, j: usize) -> Value {
        Value::Array(self.rows.iter().map(|r| r[j].clone()).collect())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub summary: Map<String, Value>,
    pub table: Option<Table>,
}

/// JSON value of a float; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialise")
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.summary.insert(key.to_string(), value.into());
        self
    }

    pub fn set_num(&mut self, key: &str, value: f64) -> &mut Self {
        self.summary.insert(key.to_string(), num(value));
        self
    }

    pub fn set_ser<T: Serialize>(&mut self, key: &str, value: &T) -> &mut Self {
        self.summary.insert(key.to_string(), to_value(value));
        self
    }

    pub fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }

    pub fn json(&self) -> Value {
        let mut out = self.summary.clone();
        if let Some(t) = &self.table {
            for (j, c) in t.columns.iter().enumerate() {
                out.insert(c.clone(), t.column(j));
            }
        }
        Value::Object(out)
    }

    fn csv_table(&self) -> Table {
        match &self.table {
            Some(t) => t.clone(),
            None => {
                let mut t = Table::new(self.summary.keys().cloned());
                t.push(self.summary.values().cloned().collect());
                t
            }
        }
    }

    /// Writes the report to `out` (or stdout) in `format`.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<(), CliError> {
        let body = match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json()).expect("json value serialises");
                s.push('\n');
                s.into_bytes()
            }
            Format::Csv => {
                let mut buf = Vec::new();
                if self.table.is_some() {
                    match out {
                        Some(path) => write_file(&sidecar(path), summary_json(&self.summary).as_bytes())?,
                        None => {
                            let line = serde_json::to_string(&Value::Object(self.summary.clone())).expect("summary serialises");
                            writeln!(buf, "# {line}").expect("writes to memory");
                        }
                    }
                }
                write_csv(&self.csv_table(), &mut buf)?;
                buf
            }
        };
        match out {
            Some(path) => write_file(path, &body),
            None => {
                let mut stdout = std::io::stdout().lock();
                match stdout.write_all(&body).and_then(|_| stdout.flush()) {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
                        path: "<stdout>".into(),
                        source: e,
                    }),
                    _ => Ok(()),
                }
            }
        }
    }
}

fn summary_json(summary: &Map<String, Value>) -> String {
    let mut s = serde_json::to_string_pretty(&Value::Object(summary.clone())).expect("summary serialises");
    s.push('\n');
    s
}

/// `run.csv` → `run.summary.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("summary.json")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_csv(table: &Table, buf: &mut Vec<u8>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(buf);
    let csv_err = |e: csv::Error| CliError::Usage(format!("csv output: {e}"));
    w.write_record(&table.columns).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(cell)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: "<csv buffer>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Report {
        let mut r = Report::new();
        r.set_num("integral", 1e-17).set("nodes", 3);
        let mut t = Table::new(["t", "G"]);
        t.push(vec![num(0.0), num(0.5)]);
        t.push(vec![num(0.5), num(f64::NAN)]);
        r.with_table(t)
    }

    #[test]
    fn json_merges_columns() {
        let v = sample().json();
        assert_eq!(v["t"], json!([0.0, 0.5]));
        assert_eq!(v["G"], json!([0.5, null]));
        assert_eq!(v["nodes"], json!(3));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&sample().csv_table(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,G\n0.0,0.5\n0.5,\n");
        let mut single = Report::new();
        single.set_num("kstar", 0.65).set("jumps", json!([1.0, 2.0]));
        let mut buf = Vec::new();
        write_csv(&single.csv_table(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "jumps,kstar\n\"[1.0,2.0]\",0.65\n");
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("a/run.csv")), PathBuf::from("a/run.summary.json"));
        assert_eq!(sidecar(Path::new("run")), PathBuf::from("run.summary.json"));
    }
}

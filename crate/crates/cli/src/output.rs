//! Output directory handling. Every file written here names the hash of
//! the configuration that produced it: CSV files in a leading `#` comment,
//! JSON files in a `config_hash` field, tag files in their header
//! annotation.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Stage};

/// Format of report panels and tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A file read back as a stage input, with its digest for provenance.
pub struct Input {
    pub name: String,
    pub bytes: Vec<u8>,
    pub sha256: String,
}

pub struct Outputs {
    root: PathBuf,
    config_hash: String,
    pub format: Format,
}

impl Outputs {
    pub fn new(root: PathBuf, config_hash: String, format: Format) -> Self {
        Self {
            root,
            config_hash,
            format,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// First line of every CSV output.
    pub fn csv_stamp(&self) -> String {
        format!("# rrs config_hash={}\n", self.config_hash)
    }

    /// Annotation stored in tag-file headers.
    pub fn tag_annotation(&self, label: &str) -> String {
        format!("rrs config_hash={} label={label}", self.config_hash)
    }

    pub fn write(&self, stage: Stage, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let io = |source| CliError::Io {
            stage,
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut file = fs::File::create(&path).map_err(io)?;
        file.write_all(bytes).map_err(io)?;
        log::debug!("wrote {}", path.display());
        Ok(())
    }

    /// Writes a JSON object with the configuration hash merged in.
    pub fn write_json<T: Serialize>(&self, stage: Stage, rel: &str, value: &T) -> Result<(), CliError> {
        let mut value = serde_json::to_value(value).expect("output values serialise");
        match &mut value {
            Value::Object(map) => {
                map.insert("config_hash".into(), Value::String(self.config_hash.clone()));
            }
            other => {
                value = json!({ "config_hash": self.config_hash, "value": other.take() });
            }
        }
        let mut text = serde_json::to_string_pretty(&value).expect("output values serialise");
        text.push('\n');
        self.write(stage, rel, text.as_bytes())
    }

    pub fn read(&self, stage: Stage, rel: &str, needs: Stage) -> Result<Input, CliError> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput {
                stage,
                path: path.clone(),
                needs,
            },
            _ => CliError::Io {
                stage,
                path: path.clone(),
                source,
            },
        })?;
        Ok(Input {
            name: rel.to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
            bytes,
        })
    }

    /// Rejects an input that was produced under another configuration.
    pub fn check_hash(&self, stage: Stage, rel: &str, found: Option<&str>) -> Result<(), CliError> {
        match found {
            Some(h) if h == self.config_hash => Ok(()),
            other => Err(CliError::ForeignInput {
                stage,
                path: self.root.join(rel),
                found: other.unwrap_or("<none>").to_string(),
                expected: self.config_hash.clone(),
            }),
        }
    }

    /// Hash recorded in the leading comment of a CSV output.
    pub fn csv_hash(text: &str) -> Option<&str> {
        text.lines()
            .next()?
            .strip_prefix("# rrs config_hash=")
            .map(str::trim)
    }

    /// Writes a plot panel with `x, y, y_err, model_y` columns.
    pub fn write_panel(&self, rel_stem: &str, panel: &Panel) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let mut text = self.csv_stamp();
                text.push_str(&format!("# x: {}, y: {}\n", panel.x_label, panel.y_label));
                text.push_str("x,y,y_err,model_y\n");
                for row in &panel.rows {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        row.x,
                        row.y,
                        row.y_err,
                        row.model_y.map(|m| m.to_string()).unwrap_or_default()
                    ));
                }
                self.write(Stage::Report, &format!("{rel_stem}.csv"), text.as_bytes())
            }
            Format::Json => self.write_json(Stage::Report, &format!("{rel_stem}.json"), panel),
        }
    }

    /// Writes a table with named columns.
    pub fn write_table(&self, rel_stem: &str, table: &Table) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let mut text = self.csv_stamp();
                text.push_str(&table.columns.join(","));
                text.push('\n');
                for row in &table.rows {
                    let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
                    text.push_str(&cells.join(","));
                    text.push('\n');
                }
                self.write(Stage::Report, &format!("{rel_stem}.csv"), text.as_bytes())
            }
            Format::Json => {
                let rows: Vec<BTreeMap<&str, Value>> = table
                    .rows
                    .iter()
                    .map(|r| table.columns.iter().map(String::as_str).zip(r.iter().map(Cell::to_json)).collect())
                    .collect();
                self.write_json(Stage::Report, &format!("{rel_stem}.json"), &json!({ "rows": rows }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelRow {
    pub x: f64,
    pub y: f64,
    pub y_err: f64,
    pub model_y: Option<f64>,
}

/// One figure panel: measured points with errors and the model through them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panel {
    pub x_label: String,
    pub y_label: String,
    pub rows: Vec<PanelRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
    Missing,
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(v) if v.is_finite() => v.to_string(),
            Cell::Number(_) | Cell::Missing => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Number(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Number(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Number)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

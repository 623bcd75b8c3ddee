//! Delimited table files and their sidecar schema.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Declared category order for categorical columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
}

/// Sidecar schema, stored as TOML:
///
/// ```toml
/// version = 1
/// target = "label"
/// labels = ["no", "yes"]          # optional; fixes the class order
/// delimiter = ","                  # optional
/// missing = ["", "NA", "?"]        # optional
///
/// [[columns]]
/// name = "age"
/// kind = "numeric"
///
/// [[columns]]
/// name = "color"
/// kind = "categorical"
/// categories = ["red", "green"]    # optional
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub version: u32,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    pub columns: Vec<ColumnSpec>,
}

fn default_delimiter() -> char {
    ','
}

fn default_missing() -> Vec<String> {
    ["", "NA", "NaN", "nan", "?", "null"].iter().map(|s| s.to_string()).collect()
}

impl Schema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text).map_err(|e| Error::schema(None, None, e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::schema(
                None,
                None,
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::schema(None, None, "delimiter must be a single ASCII character"));
        }
        let mut seen = HashMap::new();
        for c in &self.columns {
            if c.name == self.target {
                return Err(Error::schema(None, Some(&c.name), "target column must not be listed among feature columns"));
            }
            if seen.insert(c.name.as_str(), ()).is_some() {
                return Err(Error::schema(None, Some(&c.name), "duplicate column"));
            }
            if c.kind == ColumnKind::Numeric && c.categories.is_some() {
                return Err(Error::schema(None, Some(&c.name), "numeric column cannot declare categories"));
            }
        }
        if self.columns.is_empty() {
            return Err(Error::schema(None, None, "schema declares no feature columns"));
        }
        Ok(())
    }

    pub fn is_missing(&self, raw: &str) -> bool {
        self.missing.iter().any(|m| m == raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

/// Rows of a table in file order, parsed against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<ColumnSpec>,
    pub target: String,
    pub rows: Vec<Vec<Cell>>,
    pub targets: Vec<String>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads a delimited file with a header row. Row numbers in errors are
    /// file line numbers.
    pub fn from_path(path: &Path, schema: &Schema) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(schema.delimiter as u8)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::schema(Some(1), None, e.to_string()))?
            .clone();
        let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let target_idx = *position
            .get(schema.target.as_str())
            .ok_or_else(|| Error::schema(Some(1), Some(&schema.target), "target column missing from table"))?;
        for h in headers.iter() {
            if h != schema.target && !schema.columns.iter().any(|c| c.name == h) {
                return Err(Error::schema(Some(1), Some(h), "column is not declared in the schema"));
            }
        }
        let col_idx: Vec<usize> = schema
            .columns
            .iter()
            .map(|c| {
                position
                    .get(c.name.as_str())
                    .copied()
                    .ok_or_else(|| Error::schema(Some(1), Some(&c.name), "declared column missing from table"))
            })
            .collect::<Result<_>>()?;

        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize);
                Error::schema(line, None, e.to_string())
            })?;
            let line = rec.position().map_or(rows.len() + 2, |p| p.line() as usize);
            let target = rec.get(target_idx).unwrap_or("");
            if schema.is_missing(target) {
                return Err(Error::schema(Some(line), Some(&schema.target), "missing target value"));
            }
            targets.push(target.to_string());

            let mut row = Vec::with_capacity(col_idx.len());
            for (spec, &i) in schema.columns.iter().zip(&col_idx) {
                let raw = rec.get(i).unwrap_or("");
                let cell = if schema.is_missing(raw) {
                    Cell::Missing
                } else {
                    match spec.kind {
                        ColumnKind::Numeric => match raw.parse::<f64>() {
                            Ok(v) if v.is_finite() => Cell::Number(v),
                            _ => {
                                return Err(Error::schema(
                                    Some(line),
                                    Some(&spec.name),
                                    format!("expected a finite number, found {raw:?}"),
                                ))
                            }
                        },
                        ColumnKind::Categorical => Cell::Text(raw.to_string()),
                    }
                };
                row.push(cell);
            }
            rows.push(row);
        }
        Ok(Self {
            columns: schema.columns.clone(),
            target: schema.target.clone(),
            rows,
            targets,
        })
    }
}

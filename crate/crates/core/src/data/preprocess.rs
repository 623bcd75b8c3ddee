//! Median imputation + standardization for numeric columns, constant
//! imputation + one-hot encoding for categorical columns.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::table::{Cell, ColumnKind, RawTable, Schema};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Token standing in for missing categorical values.
pub const MISSING_TOKEN: &str = "<missing>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnTransform {
    Numeric {
        name: String,
        median: f64,
        mean: f64,
        std: f64,
        /// Zero-variance column: always encodes to 0.
        constant: bool,
    },
    Categorical {
        name: String,
        /// One-hot slot order; the last slot is [`MISSING_TOKEN`].
        categories: Vec<String>,
    },
}

impl ColumnTransform {
    pub fn name(&self) -> &str {
        match self {
            ColumnTransform::Numeric { name, .. } | ColumnTransform::Categorical { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            ColumnTransform::Numeric { .. } => 1,
            ColumnTransform::Categorical { categories, .. } => categories.len(),
        }
    }
}

/// Fitted preprocessing statistics. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub fitted_on: String,
    pub columns: Vec<ColumnTransform>,
    /// Dense class index → label value.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Declared label set, or distinct target values in order of first appearance.
pub fn label_set(table: &RawTable, schema: &Schema) -> Vec<String> {
    if let Some(labels) = &schema.labels {
        return labels.clone();
    }
    let mut seen = Vec::new();
    for t in &table.targets {
        if !seen.contains(t) {
            seen.push(t.clone());
        }
    }
    seen
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Fits statistics on the rows `indices` of `table`.
pub fn fit_preprocessor(
    table: &RawTable,
    schema: &Schema,
    indices: &[usize],
    fitted_on: impl Into<String>,
) -> Result<PreprocessModel> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("cannot fit preprocessing on zero rows"));
    }
    let mut warnings = Vec::new();
    let mut columns = Vec::with_capacity(table.columns.len());
    for (c, spec) in table.columns.iter().enumerate() {
        let cells = indices.iter().map(|&i| &table.rows[i][c]);
        match spec.kind {
            ColumnKind::Numeric => {
                let mut observed: Vec<f64> = cells
                    .clone()
                    .filter_map(|cell| match cell {
                        Cell::Number(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                let med = median(&mut observed).unwrap_or_else(|| {
                    warnings.push(format!("column {:?} is entirely missing; imputing 0", spec.name));
                    0.0
                });
                let imputed: Vec<f64> = cells
                    .map(|cell| match cell {
                        Cell::Number(v) => *v,
                        _ => med,
                    })
                    .collect();
                let n = imputed.len() as f64;
                let mean = imputed.iter().sum::<f64>() / n;
                let std = (imputed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let constant = !(std > 1e-12 * mean.abs().max(1.0));
                columns.push(ColumnTransform::Numeric {
                    name: spec.name.clone(),
                    median: med,
                    mean,
                    std: if constant { 1.0 } else { std },
                    constant,
                });
            }
            ColumnKind::Categorical => {
                let mut categories = spec.categories.clone().unwrap_or_default();
                if spec.categories.is_none() {
                    for cell in cells {
                        if let Cell::Text(s) = cell {
                            if !categories.contains(s) {
                                categories.push(s.clone());
                            }
                        }
                    }
                }
                categories.push(MISSING_TOKEN.to_string());
                columns.push(ColumnTransform::Categorical {
                    name: spec.name.clone(),
                    categories,
                });
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(PreprocessModel {
        fitted_on: fitted_on.into(),
        columns,
        labels: label_set(table, schema),
        warnings,
    })
}

impl PreprocessModel {
    /// Width of the encoded feature vector.
    pub fn output_dim(&self) -> usize {
        self.columns.iter().map(ColumnTransform::width).sum()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, value: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == value)
            .ok_or_else(|| Error::UnknownLabel(value.to_string()))
    }

    /// Encodes rows `indices` of `table` into a feature matrix and class indices.
    pub fn transform(&self, table: &RawTable, indices: &[usize]) -> Result<(Matrix, Vec<usize>)> {
        if table.columns.len() != self.columns.len() {
            return Err(Error::schema(
                None,
                None,
                format!(
                    "table has {} feature columns, preprocessing was fitted on {}",
                    table.columns.len(),
                    self.columns.len()
                ),
            ));
        }
        let by_name: HashMap<&str, usize> = table.columns.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
        let mut sources = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            let &src = by_name
                .get(col.name())
                .ok_or_else(|| Error::schema(None, Some(col.name()), "column not present in table"))?;
            let kind_ok = matches!(
                (col, table.columns[src].kind),
                (ColumnTransform::Numeric { .. }, ColumnKind::Numeric)
                    | (ColumnTransform::Categorical { .. }, ColumnKind::Categorical)
            );
            if !kind_ok {
                return Err(Error::schema(None, Some(col.name()), "column kind differs from fitted schema"));
            }
            sources.push(src);
        }

        let width = self.output_dim();
        let mut data = vec![0.0; indices.len() * width];
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            let out = &mut data[r * width..(r + 1) * width];
            let mut offset = 0;
            for (col, &src) in self.columns.iter().zip(&sources) {
                let cell = &table.rows[i][src];
                match col {
                    ColumnTransform::Numeric {
                        median,
                        mean,
                        std,
                        constant,
                        ..
                    } => {
                        let v = match cell {
                            Cell::Number(v) => *v,
                            _ => *median,
                        };
                        out[offset] = if *constant { 0.0 } else { (v - mean) / std };
                    }
                    ColumnTransform::Categorical { categories, .. } => {
                        let key = match cell {
                            Cell::Text(s) => s.as_str(),
                            _ => MISSING_TOKEN,
                        };
                        // Unseen categories leave the whole block at zero.
                        if let Some(k) = categories.iter().position(|c| c == key) {
                            out[offset + k] = 1.0;
                        }
                    }
                }
                offset += col.width();
            }
            labels.push(self.label_index(&table.targets[i])?);
        }
        Ok((Matrix::from_vec(indices.len(), width, data)?, labels))
    }
}

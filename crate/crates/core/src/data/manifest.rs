//! The segmented-dataset manifest: segment plan, split membership and frozen
//! preprocessing statistics, stored as hashed JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::preprocess::{fit_preprocessor, label_set, PreprocessModel};
use crate::data::segment::{plan_segments, stratified_split, SegmentPlan, MAX_SEGMENT_ROWS, MIN_SEGMENT_ROWS, TRAIN_FRACTION};
use crate::data::table::{RawTable, Schema};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::trainer::{Segment, SegmentData};

pub const MANIFEST_FORMAT: &str = "imlp-dataset-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

/// One segment's row range and split, in source-table row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub segment: usize,
    pub start: usize,
    pub end: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub table: FileRef,
    pub schema: FileRef,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub plan: SegmentPlan,
    pub preprocessor: PreprocessModel,
    pub segments: Vec<SegmentEntry>,
    /// SHA-256 of the manifest serialized with this field empty.
    pub content_hash: String,
}

/// Segments `table`, splits every segment and fits preprocessing on the
/// first segment's training rows.
pub fn build_manifest(
    table: &RawTable,
    schema: &Schema,
    table_ref: FileRef,
    schema_ref: FileRef,
    split_seed: u64,
) -> Result<DatasetManifest> {
    if table.is_empty() {
        return Err(Error::EmptyInput("table has no data rows"));
    }
    let labels = label_set(table, schema);
    let label_idx: Vec<usize> = table
        .targets
        .iter()
        .map(|t| {
            labels
                .iter()
                .position(|l| l == t)
                .ok_or_else(|| Error::UnknownLabel(t.clone()))
        })
        .collect::<Result<_>>()?;

    let plan = plan_segments(table.len(), MIN_SEGMENT_ROWS, MAX_SEGMENT_ROWS)?;
    let mut segments = Vec::with_capacity(plan.len());
    for (i, &(start, end)) in plan.bounds.iter().enumerate() {
        let split = stratified_split(&label_idx[start..end], TRAIN_FRACTION, derive_seed(split_seed, i as u64))
            .map_err(|e| e.in_segment(i + 1))?;
        segments.push(SegmentEntry {
            segment: i + 1,
            start,
            end,
            train: split.train.iter().map(|r| r + start).collect(),
            test: split.test.iter().map(|r| r + start).collect(),
        });
    }
    let preprocessor = fit_preprocessor(table, schema, &segments[0].train, "segment 1 train split")?;
    let mut manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        table: table_ref,
        schema: schema_ref,
        n_rows: table.len(),
        n_features: preprocessor.output_dim(),
        n_classes: preprocessor.n_classes(),
        split_seed,
        train_fraction: TRAIN_FRACTION,
        plan,
        preprocessor,
        segments,
        content_hash: String::new(),
    };
    manifest.content_hash = manifest.compute_hash()?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn compute_hash(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.content_hash.clear();
        let bytes = serde_json::to_vec(&copy).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// Parses and checks format, version and content hash.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::schema(Some(e.line()), None, format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::schema(
                None,
                None,
                format!("unsupported manifest {} v{}", m.format, m.version),
            ));
        }
        if m.compute_hash()? != m.content_hash {
            return Err(Error::schema(None, None, "manifest content hash does not match its contents"));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Encodes every segment of `table` with the frozen preprocessing.
    pub fn encode_stream(&self, table: &RawTable) -> Result<Vec<Segment>> {
        if table.len() != self.n_rows {
            return Err(Error::schema(
                None,
                None,
                format!("table has {} rows, manifest expects {}", table.len(), self.n_rows),
            ));
        }
        self.segments
            .iter()
            .map(|s| {
                let part = |rows: &[usize]| -> Result<SegmentData> {
                    let (x, y) = self.preprocessor.transform(table, rows)?;
                    SegmentData::new(x, y, rows.to_vec())
                };
                Ok(Segment {
                    train: part(&s.train)?,
                    test: part(&s.test)?,
                })
            })
            .collect::<Result<_>>()
    }

    /// Plain-text summary of the preprocessing, one line per column.
    pub fn summary(&self) -> String {
        use crate::data::preprocess::ColumnTransform;
        let mut out = format!(
            "rows {}  segments {}  features {}  classes {} {:?}\nfitted on {}\n",
            self.n_rows,
            self.segments.len(),
            self.n_features,
            self.n_classes,
            self.preprocessor.labels,
            self.preprocessor.fitted_on
        );
        for c in &self.preprocessor.columns {
            match c {
                ColumnTransform::Numeric {
                    name,
                    median,
                    mean,
                    std,
                    constant,
                } => out.push_str(&format!(
                    "numeric     {name}: median {median}, mean {mean}, std {std}{}\n",
                    if *constant { " (constant)" } else { "" }
                )),
                ColumnTransform::Categorical { name, categories } => {
                    out.push_str(&format!("categorical {name}: {} slots {:?}\n", categories.len(), categories))
                }
            }
        }
        for w in &self.preprocessor.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: usize) -> (RawTable, Schema) {
        let schema = Schema::from_toml_str(
            "version = 1\ntarget = \"y\"\n[[columns]]\nname = \"a\"\nkind = \"numeric\"\n[[columns]]\nname = \"c\"\nkind = \"categorical\"\n",
        )
        .unwrap();
        let mut csv = String::from("a,c,y\n");
        for i in 0..n {
            csv.push_str(&format!("{},{},{}\n", i % 13, ["u", "v", "w"][i % 3], ["p", "q"][(i / 3) % 2]));
        }
        (RawTable::from_reader(csv.as_bytes(), &schema).unwrap(), schema)
    }

    fn refs() -> (FileRef, FileRef) {
        let f = |p: &str| FileRef {
            path: p.into(),
            sha256: "0".repeat(64),
        };
        (f("t.csv"), f("t.toml"))
    }

    #[test]
    fn two_thousand_rows_make_four_segments() {
        let (t, s) = inputs(2000);
        let (a, b) = refs();
        let m = build_manifest(&t, &s, a, b, 42).unwrap();
        assert_eq!(m.segments.len(), 4);
        assert!(m.segments.iter().all(|e| e.end - e.start == 500 && e.train.len() == 425));
        assert_eq!(m.n_features, 1 + 4);
    }

    #[test]
    fn round_trip_and_hash() {
        let (t, s) = inputs(700);
        let (a, b) = refs();
        let m = build_manifest(&t, &s, a.clone(), b.clone(), 42).unwrap();
        let again = build_manifest(&t, &s, a, b, 42).unwrap();
        assert_eq!(m.content_hash, again.content_hash);
        let back = DatasetManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let tampered = m.to_json().unwrap().replacen("\"split_seed\": 42", "\"split_seed\": 43", 1);
        assert!(DatasetManifest::from_json(&tampered).is_err());
    }

    #[test]
    fn encoded_stream_matches_splits() {
        let (t, s) = inputs(1100);
        let (a, b) = refs();
        let m = build_manifest(&t, &s, a, b, 1).unwrap();
        let stream = m.encode_stream(&t).unwrap();
        assert_eq!(stream.len(), m.segments.len());
        for (seg, e) in stream.iter().zip(&m.segments) {
            assert_eq!(seg.train.row_ids, e.train);
            assert_eq!(seg.test.x.cols(), m.n_features);
        }
    }
}

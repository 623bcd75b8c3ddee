//! Table ingestion, preprocessing, segmentation and splitting.

pub mod manifest;
pub mod preprocess;
pub mod segment;
pub mod table;

pub use manifest::{build_manifest, DatasetManifest, FileRef};
pub use preprocess::{fit_preprocessor, PreprocessModel};
pub use segment::{plan_segments, stratified_split, SegmentPlan, Split};
pub use table::{RawTable, Schema};

//! File formats and dataset ingestion.

pub mod manifest;
pub mod pgm;
pub mod prep;

pub use manifest::{load_manifest, DatasetManifest, LabeledDataset, ManifestEntry, RangeTag};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};

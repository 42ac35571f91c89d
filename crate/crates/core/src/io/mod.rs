//! Readers and writers for every on-disk artifact of the pipeline.

pub mod manifest;
pub mod matrix;
pub mod tsv;
pub mod wav;

pub use manifest::{read_manifest, write_manifest, UtteranceManifestEntry};
pub use matrix::{read_matrix, write_matrix, DenseMatrix};
pub use tsv::{read_alignment, read_duration_model, write_alignment, write_duration_model};
pub use wav::{load_wav, write_wav, AudioBuffer};

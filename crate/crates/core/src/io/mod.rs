//! Persistence: binary matrices, bundle manifests, component caches and
//! front CSV files.

pub mod cache;
pub mod front_csv;
pub mod manifest;
pub mod matrix_file;

pub use cache::{load_components, save_components, source_hash};
pub use front_csv::{read_front_csv, write_front_csv};
pub use manifest::{load_bundle, save_bundle, Manifest, ManifestTask};
pub use matrix_file::{read_matrix, write_matrix};

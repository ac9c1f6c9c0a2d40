//! File formats for keypoint sequences and dataset manifests, plus the
//! synthetic motion generator.

pub mod manifest;
pub mod sequence;
pub mod synth;

pub use manifest::{load_manifest, load_split, save_manifest, DatasetManifest, ManifestEntry, Split};
pub use sequence::{format_sequence, load_full_pose, load_sequence, parse_full_pose, parse_sequence, save_sequence};
pub use synth::{generate_sequence, generate_sequences, generate_synthetic, SyntheticSpec};

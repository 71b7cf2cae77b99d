//! On-disk formats and the synthetic compositional benchmark.

mod checkpoint;
mod features;
mod manifest;
mod synthetic;

pub use checkpoint::{
    get_model, get_stack, put_model, put_stack, Checkpoint, Entry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use features::{
    decode_region_features, encode_region_features, read_region_features, write_region_features,
    LabeledGrid, RegionFeatureSet, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use manifest::{
    assemble_dataset, load_dataset, parse_edges, parse_phrase_records, parse_split, ClassEntry,
    ClassInfo, Dataset, DatasetManifest, PhraseRecord, Sample,
};
pub use synthetic::{generate_synthetic_world, SyntheticWorld, SyntheticWorldSpec};

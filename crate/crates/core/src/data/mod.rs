//! Paired dataset ingestion, patching, augmentation and splitting.

pub mod augment;
pub mod dataset;
pub mod patches;
pub mod resize;
pub mod split;

pub use augment::{augment, augment_all, patch_seed, AugmentSpec, BlurKind, Transform};
pub use dataset::{scan_pairs, ColorMode, PairRecord, PairedDataset};
pub use patches::{
    axis_origins, extract_patches, pair_patches, prepare_target, Patch, PatchSet, DEFAULT_TRAIN_STRIDE, PATCH_SIZE,
    TRAINING_SCALES,
};
pub use resize::resize_bilinear;
pub use split::{split, split_indices, train_count, DEFAULT_TRAIN_FRACTION};

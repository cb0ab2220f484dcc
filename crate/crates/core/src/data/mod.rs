//! Seeded dataset generators, IDX image loading, checkpoint persistence and
//! CSV emission.

pub mod checkpoint;
pub mod csvio;
pub mod gen;
pub mod idx;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointGroup};
pub use csvio::{fmt_f64, write_atomic, CsvTable};
pub use gen::{
    gen_shape_images, normalized_signals, shape_mask, ImageDataset, ShapeDatasetConfig,
    ShapeKind, SignalDataset, SignalDatasetConfig, ToyTask,
};
pub use idx::load_idx;

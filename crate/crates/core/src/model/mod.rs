//! Transformer encoder with task embeddings and per-task output heads.

mod checkpoint;
mod config;
mod encoder;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_checkpoint_for, parse_checkpoint, save_checkpoint, Checkpoint,
    CheckpointMeta, OptimizerState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{HeadSpec, ModelConfig};
pub use encoder::{parameter_shapes, Encoded, HeadLabels, Model};

#[cfg(test)]
mod tests;

//! Minimal dense-tensor kernel with reverse-mode autodiff, the layers the
//! policy needs, an AdamW optimizer, cosine learning-rate decay, and a
//! versioned checkpoint format.

mod checkpoint;
mod graph;
mod layers;
mod optim;

pub use checkpoint::{
    copy_values, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
};
pub use graph::{Graph, NodeId, Shape};
pub use layers::{
    multi_head_attention, sinusoidal_encoding, Binder, DecoderLayerParams, EncoderLayerParams,
    LayerNormParams, LinearParams, MhaParams, MlpParams,
};
pub use optim::{cosine_lr, AdamW, AdamWConfig, Init, ParamEntry, ParamId, ParamStore};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: String,
        lhs: String,
        rhs: String,
    },
    #[error("non-finite gradient for parameter {param}; training aborted")]
    NonFiniteGradient { param: String },
    #[error("checkpoint is malformed: {reason} at byte offset {offset}")]
    MalformedCheckpoint { reason: String, offset: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Small MLP encoder with normalized embeddings, replaceable classifier
//! head, student/teacher pairs with EMA tracking, and checkpoint IO.

mod checkpoint;
mod encoder;
mod network;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, fnv1a64, load_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION, MAGIC,
};
pub use encoder::{DenseLayer, EncoderCache, EncoderParams};
pub use network::{ClassifierHead, Network, NetworkOutput, NetworkPair};

/// Default encoder widths after the input: one tanh hidden layer of 64,
/// 16-dimensional embedding.
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_FEATURE_DIM: usize = 16;

pub fn default_dims(input_dim: usize) -> Vec<usize> {
    vec![input_dim, DEFAULT_HIDDEN, DEFAULT_FEATURE_DIM]
}

//! Feed-forward tanh networks with hand-written reverse and forward
//! differentiation, plus the normalized surrogate wrapper and its file format.

mod io;
mod mlp;
mod surrogate;

pub use io::{from_bytes, load_model, save_model, to_bytes, FORMAT_VERSION, MAGIC};
pub use mlp::{glorot_bound, Activation, Mlp, Pass, Scratch};
pub use surrogate::{NnInput, Normalization, Provenance, QueryScratch, Surrogate};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model file version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(String),
}

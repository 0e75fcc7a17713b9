//! A small transducer: self-attention encoder, tanh recurrent prediction
//! network and a feed-forward joint network, with hand-written backward
//! passes so every hidden layer can receive its own distillation gradient.

mod backward;
mod checkpoint;
mod config;
mod decode;
mod error;
mod forward;
mod params;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use config::{ContextPolicy, ModelConfig};
pub use decode::{greedy_decode, greedy_search, DecodeResult, JointScorer, MAX_EMISSIONS_PER_FRAME};
pub use error::{ModelError, Result};
pub use forward::{forward, ForwardTrace};
pub use params::{Params, ToyTransducer};

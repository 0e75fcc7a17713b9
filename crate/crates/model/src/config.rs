use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Which encoder frames each position may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ContextPolicy {
    /// Every frame sees the whole utterance.
    Full,
    /// Frame `t` sees `[t - left_frames, t + right_frames]`.
    Causal { left_frames: usize, right_frames: usize },
}

impl ContextPolicy {
    /// The streaming policy: 16 frames of history, no lookahead.
    pub const STREAMING: ContextPolicy = ContextPolicy::Causal {
        left_frames: 16,
        right_frames: 0,
    };

    /// Inclusive 0-based window of visible frames for position `t`.
    pub fn window(&self, t: usize, t_len: usize) -> (usize, usize) {
        match *self {
            ContextPolicy::Full => (0, t_len - 1),
            ContextPolicy::Causal { left_frames, right_frames } => {
                (t.saturating_sub(left_frames), (t + right_frames).min(t_len - 1))
            }
        }
    }

    pub fn is_streaming(&self) -> bool {
        matches!(self, ContextPolicy::Causal { right_frames: 0, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Vocabulary size including blank at index 0.
    pub vocab: usize,
    pub feature_dim: usize,
    /// Width of every encoder, decoder and joint layer.
    pub hidden_dim: usize,
    #[serde(default = "default_encoder_layers")]
    pub encoder_layers: usize,
    #[serde(default = "default_decoder_layers")]
    pub decoder_layers: usize,
    pub context: ContextPolicy,
    pub seed: u64,
}

fn default_encoder_layers() -> usize {
    2
}

fn default_decoder_layers() -> usize {
    1
}

impl ModelConfig {
    pub fn new(vocab: usize, feature_dim: usize, hidden_dim: usize, context: ContextPolicy, seed: u64) -> Self {
        Self {
            vocab,
            feature_dim,
            hidden_dim,
            encoder_layers: default_encoder_layers(),
            decoder_layers: default_decoder_layers(),
            context,
            seed,
        }
    }

    pub fn with_context(&self, context: ContextPolicy) -> Self {
        Self { context, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(ModelError::Config("vocab must include blank and one token".into()));
        }
        if self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(ModelError::Config("need at least one encoder and one decoder layer".into()));
        }
        Ok(())
    }
}

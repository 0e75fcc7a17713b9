use atkd_core::{Tensor, TokenSequence, BLANK};
use ndarray::{Array1, Array2};

use crate::error::{ModelError, Result};
use crate::forward::{encode, joint_logits, recurrent_step, to_array};
use crate::params::ToyTransducer;

/// Upper bound on non-blank emissions at a single frame.
pub const MAX_EMISSIONS_PER_FRAME: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    pub tokens: TokenSequence,
    /// 1-based frame of the first non-blank emission.
    pub first_emission_frame: Option<usize>,
}

/// What greedy search needs from a transducer.
pub trait JointScorer {
    type State: Clone;

    fn frames(&self) -> usize;
    /// Prediction-network state after the blank start symbol.
    fn initial_state(&self) -> Self::State;
    fn advance(&self, state: &Self::State, token: usize) -> Self::State;
    fn logits(&self, frame: usize, state: &Self::State) -> Vec<f64>;
}

fn argmax(x: &[f64]) -> usize {
    // first index wins ties
    x.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Frame-synchronous greedy search: at each frame keep emitting the argmax
/// token until blank wins or the per-frame cap is hit.
pub fn greedy_search<S: JointScorer>(scorer: &S) -> DecodeResult {
    let mut state = scorer.initial_state();
    let mut tokens = Vec::new();
    let mut first = None;
    for t in 0..scorer.frames() {
        for _ in 0..MAX_EMISSIONS_PER_FRAME {
            let k = argmax(&scorer.logits(t, &state));
            if k == BLANK {
                break;
            }
            first.get_or_insert(t + 1);
            tokens.push(k);
            state = scorer.advance(&state, k);
        }
    }
    DecodeResult {
        tokens: TokenSequence::from_vec_unchecked(tokens),
        first_emission_frame: first,
    }
}

struct ModelScorer<'a> {
    model: &'a ToyTransducer,
    enc_out: Array2<f64>,
}

impl JointScorer for ModelScorer<'_> {
    /// Per-layer hidden vectors.
    type State = Vec<Array1<f64>>;

    fn frames(&self) -> usize {
        self.enc_out.nrows()
    }

    fn initial_state(&self) -> Self::State {
        let d = self.model.config.hidden_dim;
        let zeros = vec![Array1::zeros(d); self.model.params.decoder.len()];
        self.advance(&zeros, BLANK)
    }

    fn advance(&self, state: &Self::State, token: usize) -> Self::State {
        let p = &self.model.params;
        let mut x = p.embedding.row(token).to_owned();
        let mut next = Vec::with_capacity(state.len());
        for (layer, prev) in p.decoder.iter().zip(state) {
            x = recurrent_step(layer, x.view(), prev.view());
            next.push(x.clone());
        }
        next
    }

    fn logits(&self, frame: usize, state: &Self::State) -> Vec<f64> {
        let dec = state.last().expect("at least one decoder layer");
        joint_logits(&self.model.params, self.enc_out.row(frame), dec.view()).to_vec()
    }
}

/// Greedy decode of one utterance.
pub fn greedy_decode(model: &ToyTransducer, features: &Tensor) -> Result<DecodeResult> {
    if features.rank() != 2 || features.shape()[1] != model.config.feature_dim {
        return Err(ModelError::Shape(format!(
            "features {:?}, model expects [T, {}]",
            features.shape(),
            model.config.feature_dim
        )));
    }
    let x = to_array(features)?;
    let caches = encode(&model.params, model.config.context, &x);
    let enc_out = caches.into_iter().last().expect("at least one encoder layer").h2;
    Ok(greedy_search(&ModelScorer { model, enc_out }))
}

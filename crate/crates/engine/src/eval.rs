use atkd_model::{greedy_decode, ToyTransducer};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::synth::Utterance;

/// Levenshtein distance with unit costs.
pub fn edit_distance(reference: &[usize], hypothesis: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

/// Summed edit distance over summed reference length.
pub fn token_error_rate<'a>(pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> Result<f64> {
    let (mut errors, mut total, mut n) = (0usize, 0usize, 0usize);
    for (r, h) in pairs {
        errors += edit_distance(r, h);
        total += r.len();
        n += 1;
    }
    if n == 0 {
        return Err(EngineError::EmptyEval);
    }
    if total == 0 {
        return Err(EngineError::Config("references contain no tokens".into()));
    }
    Ok(errors as f64 / total as f64)
}

/// Relative error reduction in percent, positive when `model` beats `baseline`.
pub fn relative_reduction(baseline: f64, model: f64) -> f64 {
    100.0 * (baseline - model) / baseline
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub ter: f64,
    /// Mean 1-based first-emission frame over utterances with any emission.
    pub mean_first_emission_frame: Option<f64>,
    pub utterances: usize,
}

pub fn evaluate(model: &ToyTransducer, eval: &[Utterance]) -> Result<EvalMetrics> {
    if eval.is_empty() {
        return Err(EngineError::EmptyEval);
    }
    let decoded = eval
        .iter()
        .map(|u| greedy_decode(model, &u.features))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let ter = token_error_rate(
        eval.iter()
            .zip(&decoded)
            .map(|(u, d)| (u.tokens.tokens(), d.tokens.tokens())),
    )?;
    let firsts: Vec<f64> = decoded.iter().filter_map(|d| d.first_emission_frame).map(|f| f as f64).collect();
    let mean_first_emission_frame = (!firsts.is_empty()).then(|| firsts.iter().sum::<f64>() / firsts.len() as f64);
    Ok(EvalMetrics {
        ter,
        mean_first_emission_frame,
        utterances: eval.len(),
    })
}

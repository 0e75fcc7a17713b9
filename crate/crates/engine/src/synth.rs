//! Synthetic transduction task.
//!
//! Each token `k` owns a Gaussian bump over the feature axis centred at
//! `(k - 1) * (F - 1) / (V - 2)`. An utterance of `U` tokens is
//! `frames_per_token * U` frames long. With `temporal_spread = 0` every frame
//! of a token is its bump; otherwise frame `t` mixes the bumps of all tokens
//! with weights `exp(-(t - c_u)^2 / (2 s^2))`, `c_u` being the middle frame of
//! token `u`, normalized to sum to one. Gaussian noise is added on top.

use atkd_core::{Tensor, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevels {
    pub train: f64,
    pub clean: f64,
    pub noisy: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            train: 0.3,
            clean: 0.1,
            noisy: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTaskConfig {
    /// Vocabulary size including blank.
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub frames_per_token: usize,
    pub feature_dim: usize,
    /// Standard deviation of the bump along the feature axis.
    pub bump_width: f64,
    /// Standard deviation, in frames, of each token's time envelope.
    pub temporal_spread: f64,
    pub noise: NoiseLevels,
    pub train_size: usize,
    /// Size of each evaluation split.
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for SynthTaskConfig {
    fn default() -> Self {
        Self {
            vocab: 8,
            min_len: 2,
            max_len: 8,
            frames_per_token: 2,
            feature_dim: 8,
            bump_width: 1.0,
            temporal_spread: 0.5,
            noise: NoiseLevels::default(),
            train_size: 2000,
            eval_size: 400,
            seed: 0,
        }
    }
}

impl SynthTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if self.vocab < 3 {
            return bad("vocab must hold blank and at least two tokens");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.frames_per_token == 0 || self.feature_dim < 2 {
            return bad("frames_per_token >= 1 and feature_dim >= 2 required");
        }
        if !(self.bump_width > 0.0) {
            return bad("bump_width must be positive");
        }
        if !(self.temporal_spread >= 0.0 && self.temporal_spread.is_finite()) {
            return bad("temporal_spread must be finite and non-negative");
        }
        let n = self.noise;
        if [n.train, n.clean, n.noisy].iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise levels must be finite and non-negative");
        }
        Ok(())
    }

    /// Noise-free feature vector for token `k` (1-based).
    pub fn template(&self, k: usize) -> Vec<f64> {
        let centre = (k - 1) as f64 * (self.feature_dim - 1) as f64 / (self.vocab - 2) as f64;
        let w2 = 2.0 * self.bump_width * self.bump_width;
        (0..self.feature_dim)
            .map(|f| (-(f as f64 - centre).powi(2) / w2).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// `[T, F]`.
    pub features: Tensor,
    pub tokens: TokenSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub clean: Vec<Utterance>,
    pub noisy: Vec<Utterance>,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One utterance at noise level `sigma`.
pub fn sample_utterance(config: &SynthTaskConfig, sigma: f64, rng: &mut impl Rng) -> Utterance {
    let u = rng.gen_range(config.min_len..=config.max_len);
    let tokens: Vec<usize> = (0..u).map(|_| rng.gen_range(1..config.vocab)).collect();
    let tokens = TokenSequence::from_vec_unchecked(tokens);
    let mut features = render(config, &tokens);
    if sigma != 0.0 {
        features.data_mut().iter_mut().for_each(|x| *x += sigma * gaussian(rng));
    }
    Utterance { features, tokens }
}

/// Noise-free features `[frames_per_token * U, F]` for a token sequence.
pub fn render(config: &SynthTaskConfig, tokens: &TokenSequence) -> Tensor {
    let (fpt, f_dim) = (config.frames_per_token, config.feature_dim);
    let t_len = tokens.len() * fpt;
    let templates: Vec<Vec<f64>> = tokens.tokens().iter().map(|&k| config.template(k)).collect();
    let mut data = Vec::with_capacity(t_len * f_dim);
    for t in 0..t_len {
        if config.temporal_spread == 0.0 {
            data.extend_from_slice(&templates[t / fpt]);
            continue;
        }
        let s2 = 2.0 * config.temporal_spread * config.temporal_spread;
        let w: Vec<f64> = (0..tokens.len())
            .map(|u| {
                let c = (u * fpt) as f64 + (fpt - 1) as f64 / 2.0;
                (-(t as f64 - c).powi(2) / s2).exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        data.extend((0..f_dim).map(|f| w.iter().zip(&templates).map(|(wu, tp)| wu * tp[f]).sum::<f64>() / z));
    }
    Tensor::new(vec![t_len, f_dim], data).expect("synthetic features are finite")
}

/// Draw `n` utterances from an independent stream.
pub fn sample_split(config: &SynthTaskConfig, sigma: f64, n: usize, stream: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    (0..n).map(|_| sample_utterance(config, sigma, &mut rng)).collect()
}

/// Train, clean and noisy splits, each from its own random stream.
pub fn generate(config: &SynthTaskConfig) -> Result<Corpus> {
    config.validate()?;
    Ok(Corpus {
        train: sample_split(config, config.noise.train, config.train_size, 1),
        clean: sample_split(config, config.noise.clean, config.eval_size, 2),
        noisy: sample_split(config, config.noise.noisy, config.eval_size, 3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_features_are_templates() {
        let cfg = SynthTaskConfig {
            temporal_spread: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = sample_utterance(&cfg, 0.0, &mut rng);
            assert_eq!(u.features.shape(), &[2 * u.tokens.len(), 8]);
            for (i, row) in u.features.rows().enumerate() {
                assert_eq!(row, cfg.template(u.tokens.tokens()[i / 2]).as_slice());
            }
        }
    }

    #[test]
    fn spread_mixes_neighbours() {
        let cfg = SynthTaskConfig {
            temporal_spread: 1.0,
            ..Default::default()
        };
        let toks = TokenSequence::new(vec![1, 7], 8).unwrap();
        let x = render(&cfg, &toks);
        // frame 1 belongs to token 1 but already carries some of token 7
        assert!(x.get(&[1, 7]) > cfg.template(1)[7]);
        assert!(x.get(&[1, 0]) > x.get(&[2, 0]));
        let one = TokenSequence::new(vec![3], 8).unwrap();
        for (a, b) in render(&cfg, &one).rows().next().unwrap().iter().zip(cfg.template(3)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn lengths_and_tokens_in_range() {
        let cfg = SynthTaskConfig {
            train_size: 100,
            eval_size: 1,
            seed: 3,
            ..Default::default()
        };
        let c = generate(&cfg).unwrap();
        assert_eq!(c.train.len(), 100);
        for u in &c.train {
            assert!((2..=8).contains(&u.tokens.len()));
            assert!(u.tokens.tokens().iter().all(|&k| (1..8).contains(&k)));
        }
    }

    #[test]
    fn seed_determines_corpus() {
        let cfg = SynthTaskConfig {
            train_size: 20,
            eval_size: 5,
            seed: 7,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthTaskConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().train, generate(&other).unwrap().train);
    }

    #[test]
    fn first_and_last_templates_peak_at_the_edges() {
        let cfg = SynthTaskConfig::default();
        assert_eq!(cfg.template(1)[0], 1.0);
        assert_eq!(cfg.template(7)[7], 1.0);
    }
}

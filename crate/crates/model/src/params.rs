use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::Result;

/// Affine map `x·w + b` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }
}

/// Single-head self-attention followed by a tanh feed-forward block, each
/// with a residual connection.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ff1: Dense,
    pub ff2: Dense,
}

/// `h_u = tanh(x_u·wx + h_{u-1}·wh + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentLayer {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub input: Dense,
    pub encoder: Vec<EncoderLayer>,
    /// `[V, d]`; row 0 (blank) is the start-of-history symbol.
    pub embedding: Array2<f64>,
    pub decoder: Vec<RecurrentLayer>,
    pub joint_enc: Array2<f64>,
    pub joint_dec: Array2<f64>,
    pub joint_bias: Array1<f64>,
    pub output: Dense,
}

impl Params {
    /// Zero-valued parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (f, d, v) = (config.feature_dim, config.hidden_dim, config.vocab);
        Self {
            input: Dense::zeros(f, d),
            encoder: (0..config.encoder_layers)
                .map(|_| EncoderLayer {
                    wq: Array2::zeros((d, d)),
                    wk: Array2::zeros((d, d)),
                    wv: Array2::zeros((d, d)),
                    wo: Array2::zeros((d, d)),
                    ff1: Dense::zeros(d, d),
                    ff2: Dense::zeros(d, d),
                })
                .collect(),
            embedding: Array2::zeros((v, d)),
            decoder: (0..config.decoder_layers)
                .map(|_| RecurrentLayer {
                    wx: Array2::zeros((d, d)),
                    wh: Array2::zeros((d, d)),
                    b: Array1::zeros(d),
                })
                .collect(),
            joint_enc: Array2::zeros((d, d)),
            joint_dec: Array2::zeros((d, d)),
            joint_bias: Array1::zeros(d),
            output: Dense::zeros(d, v),
        }
    }

    /// Uniform `(−1/√fan_in, 1/√fan_in)` for every slot, drawn in slot order.
    pub fn init(config: &ModelConfig) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (name, mut view) in p.slots_mut() {
            let fan_in = fan_in(&name, view.shape(), config);
            let bound = 1.0 / (fan_in as f64).sqrt();
            view.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound));
        }
        p
    }

    /// Named views of every parameter tensor in a fixed order.
    pub fn slots(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        out.push(("input.w".to_string(), self.input.w.view().into_dyn()));
        out.push(("input.b".to_string(), self.input.b.view().into_dyn()));
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.wq"), l.wq.view().into_dyn()));
            out.push((format!("encoder.{i}.wk"), l.wk.view().into_dyn()));
            out.push((format!("encoder.{i}.wv"), l.wv.view().into_dyn()));
            out.push((format!("encoder.{i}.wo"), l.wo.view().into_dyn()));
            out.push((format!("encoder.{i}.ff1.w"), l.ff1.w.view().into_dyn()));
            out.push((format!("encoder.{i}.ff1.b"), l.ff1.b.view().into_dyn()));
            out.push((format!("encoder.{i}.ff2.w"), l.ff2.w.view().into_dyn()));
            out.push((format!("encoder.{i}.ff2.b"), l.ff2.b.view().into_dyn()));
        }
        out.push(("decoder.embedding".to_string(), self.embedding.view().into_dyn()));
        for (j, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder.{j}.wx"), l.wx.view().into_dyn()));
            out.push((format!("decoder.{j}.wh"), l.wh.view().into_dyn()));
            out.push((format!("decoder.{j}.b"), l.b.view().into_dyn()));
        }
        out.push(("joint.enc".to_string(), self.joint_enc.view().into_dyn()));
        out.push(("joint.dec".to_string(), self.joint_dec.view().into_dyn()));
        out.push(("joint.bias".to_string(), self.joint_bias.view().into_dyn()));
        out.push(("joint.out.w".to_string(), self.output.w.view().into_dyn()));
        out.push(("joint.out.b".to_string(), self.output.b.view().into_dyn()));
        out
    }

    /// Mutable counterpart of [`Params::slots`], same order.
    pub fn slots_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        out.push(("input.w".to_string(), self.input.w.view_mut().into_dyn()));
        out.push(("input.b".to_string(), self.input.b.view_mut().into_dyn()));
        for (i, l) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}.wq"), l.wq.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.wk"), l.wk.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.wv"), l.wv.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.wo"), l.wo.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.ff1.w"), l.ff1.w.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.ff1.b"), l.ff1.b.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.ff2.w"), l.ff2.w.view_mut().into_dyn()));
            out.push((format!("encoder.{i}.ff2.b"), l.ff2.b.view_mut().into_dyn()));
        }
        out.push(("decoder.embedding".to_string(), self.embedding.view_mut().into_dyn()));
        for (j, l) in self.decoder.iter_mut().enumerate() {
            out.push((format!("decoder.{j}.wx"), l.wx.view_mut().into_dyn()));
            out.push((format!("decoder.{j}.wh"), l.wh.view_mut().into_dyn()));
            out.push((format!("decoder.{j}.b"), l.b.view_mut().into_dyn()));
        }
        out.push(("joint.enc".to_string(), self.joint_enc.view_mut().into_dyn()));
        out.push(("joint.dec".to_string(), self.joint_dec.view_mut().into_dyn()));
        out.push(("joint.bias".to_string(), self.joint_bias.view_mut().into_dyn()));
        out.push(("joint.out.w".to_string(), self.output.w.view_mut().into_dyn()));
        out.push(("joint.out.b".to_string(), self.output.b.view_mut().into_dyn()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.slots().iter().map(|(_, v)| v.len()).sum()
    }

    /// All values concatenated in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slots().into_iter().flat_map(|(_, v)| v.iter().copied().collect::<Vec<_>>()).collect()
    }

    /// Inverse of [`Params::flatten`].
    pub fn assign_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for (_, mut v) in self.slots_mut() {
            v.iter_mut().for_each(|x| *x = *it.next().expect("flat length matches"));
        }
        assert!(it.next().is_none(), "flat length matches");
    }

    /// `self += scale * other`, restricted to slots accepted by `keep`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64, keep: impl Fn(&str) -> bool) {
        for ((name, mut dst), (_, src)) in self.slots_mut().into_iter().zip(other.slots()) {
            if keep(&name) {
                dst.zip_mut_with(&src, |d, s| *d += scale * s);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut v) in self.slots_mut() {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slots()
            .iter()
            .map(|(_, v)| v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slots().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }
}

fn fan_in(name: &str, shape: &[usize], config: &ModelConfig) -> usize {
    match name {
        "decoder.embedding" => 1,
        n if n.ends_with(".b") || n == "joint.bias" => {
            // a bias shares the fan-in of the weight it is added to
            if n.starts_with("input") {
                config.feature_dim
            } else {
                config.hidden_dim
            }
        }
        _ => shape[0],
    }
}

/// Parameters plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransducer {
    pub config: ModelConfig,
    pub params: Params,
}

impl ToyTransducer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Self { config, params })
    }

    /// Same weights under a different attention policy.
    pub fn with_context(&self, context: crate::ContextPolicy) -> Self {
        Self {
            config: self.config.with_context(context),
            params: self.params.clone(),
        }
    }
}

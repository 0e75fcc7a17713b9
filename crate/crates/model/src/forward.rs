use atkd_core::{HiddenStack, ProbLattice, Tensor, TokenSequence, BLANK};
use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::config::ContextPolicy;
use crate::error::{ModelError, Result};
use crate::params::{EncoderLayer, Params, RecurrentLayer, ToyTransducer};

pub(crate) struct EncoderCache {
    pub h_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub attn: Array2<f64>,
    pub ctx: Array2<f64>,
    pub h1: Array2<f64>,
    pub f1: Array2<f64>,
    pub h2: Array2<f64>,
}

pub(crate) struct DecoderCache {
    pub x_in: Array2<f64>,
    pub h: Array2<f64>,
}

/// Everything one forward pass produced, kept for the backward pass.
pub struct ForwardTrace {
    pub(crate) x: Array2<f64>,
    pub(crate) history: Vec<usize>,
    pub(crate) encoder: Vec<EncoderCache>,
    pub(crate) decoder: Vec<DecoderCache>,
    /// `tanh` activations of the joint network, `[T·(U+1), d]`.
    pub(crate) joint_act: Array2<f64>,
    logits: Tensor,
    probs: ProbLattice,
}

impl ForwardTrace {
    pub fn t_len(&self) -> usize {
        self.x.nrows()
    }

    pub fn u_len(&self) -> usize {
        self.history.len()
    }

    /// Pre-softmax joint outputs `[T, U+1, V]`.
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn probs(&self) -> &ProbLattice {
        &self.probs
    }

    /// Encoder layer outputs `E_1..E_N`, each `[T, d]`.
    pub fn encoder_hidden(&self) -> HiddenStack {
        HiddenStack::new(self.encoder.iter().map(|c| to_tensor(&c.h2)).collect())
    }

    /// Decoder layer outputs `D_1..D_M`, each `[U+1, d]`.
    pub fn decoder_hidden(&self) -> HiddenStack {
        HiddenStack::new(self.decoder.iter().map(|c| to_tensor(&c.h)).collect())
    }

    /// Encoder layers followed by decoder layers.
    pub fn hidden(&self) -> HiddenStack {
        let mut layers = self.encoder_hidden().layers;
        layers.extend(self.decoder_hidden().layers);
        HiddenStack::new(layers)
    }
}

pub(crate) fn to_tensor(a: &Array2<f64>) -> Tensor {
    Tensor::new(vec![a.nrows(), a.ncols()], a.iter().copied().collect()).expect("finite activations")
}

pub(crate) fn to_array(t: &Tensor) -> Result<Array2<f64>> {
    if t.rank() != 2 {
        return Err(ModelError::Shape(format!("expected a matrix, got {:?}", t.shape())));
    }
    Ok(Array2::from_shape_vec((t.shape()[0], t.shape()[1]), t.data().to_vec()).expect("shape checked"))
}

/// Sinusoidal position code, `[T, d]`.
pub(crate) fn positional_encoding(t_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t_len, d), |(t, i)| {
        let rate = 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
        let angle = t as f64 / rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn attention_layer(layer: &EncoderLayer, h: &Array2<f64>, policy: ContextPolicy) -> EncoderCache {
    let t_len = h.nrows();
    let scale = 1.0 / (h.ncols() as f64).sqrt();
    let q = h.dot(&layer.wq);
    let k = h.dot(&layer.wk);
    let v = h.dot(&layer.wv);
    let mut attn = q.dot(&k.t()) * scale;
    for t in 0..t_len {
        let (lo, hi) = policy.window(t, t_len);
        let mut row = attn.row_mut(t);
        let max = row.slice(s![lo..=hi]).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut sum = 0.0;
        for (j, a) in row.iter_mut().enumerate() {
            if j < lo || j > hi {
                *a = 0.0;
            } else {
                *a = (*a - max).exp();
                sum += *a;
            }
        }
        row.mapv_inplace(|a| a / sum);
    }
    let ctx = attn.dot(&v);
    let h1 = h + &ctx.dot(&layer.wo);
    let f1 = (h1.dot(&layer.ff1.w) + &layer.ff1.b).mapv(f64::tanh);
    let h2 = &h1 + &(f1.dot(&layer.ff2.w) + &layer.ff2.b);
    EncoderCache {
        h_in: h.clone(),
        q,
        k,
        v,
        attn,
        ctx,
        h1,
        f1,
        h2,
    }
}

pub(crate) fn recurrent_step(layer: &RecurrentLayer, x: ArrayView1<f64>, prev: ArrayView1<f64>) -> Array1<f64> {
    (x.dot(&layer.wx) + prev.dot(&layer.wh) + &layer.b).mapv(f64::tanh)
}

fn recurrent_layer(layer: &RecurrentLayer, x: &Array2<f64>) -> DecoderCache {
    let d = layer.wh.nrows();
    let mut h = Array2::zeros((x.nrows(), d));
    let mut prev = Array1::zeros(d);
    for u in 0..x.nrows() {
        let next = recurrent_step(layer, x.row(u), prev.view());
        h.row_mut(u).assign(&next);
        prev = next;
    }
    DecoderCache { x_in: x.clone(), h }
}

pub(crate) fn encode(params: &Params, policy: ContextPolicy, x: &Array2<f64>) -> Vec<EncoderCache> {
    let d = params.input.w.ncols();
    let mut h = x.dot(&params.input.w) + &params.input.b + positional_encoding(x.nrows(), d);
    let mut caches = Vec::with_capacity(params.encoder.len());
    for layer in &params.encoder {
        let c = attention_layer(layer, &h, policy);
        h = c.h2.clone();
        caches.push(c);
    }
    caches
}

/// Joint network output for one encoder frame and one decoder state.
pub(crate) fn joint_logits(params: &Params, enc: ArrayView1<f64>, dec: ArrayView1<f64>) -> Array1<f64> {
    let z = (enc.dot(&params.joint_enc) + dec.dot(&params.joint_dec) + &params.joint_bias).mapv(f64::tanh);
    z.dot(&params.output.w) + &params.output.b
}

/// Runs encoder, teacher-forced decoder (history prefixed with blank) and
/// joint network over the full `T x (U+1)` lattice.
pub fn forward(model: &ToyTransducer, features: &Tensor, history: &TokenSequence) -> Result<ForwardTrace> {
    let cfg = &model.config;
    let p = &model.params;
    if features.rank() != 2 || features.shape()[1] != cfg.feature_dim {
        return Err(ModelError::Shape(format!(
            "features {:?}, model expects [T, {}]",
            features.shape(),
            cfg.feature_dim
        )));
    }
    if let Some(&k) = history.tokens().iter().find(|&&k| k >= cfg.vocab || k == BLANK) {
        return Err(ModelError::Shape(format!("history token {k} outside vocabulary")));
    }
    let x = to_array(features)?;
    let encoder = encode(p, cfg.context, &x);

    let mut tokens = Vec::with_capacity(history.len() + 1);
    tokens.push(BLANK);
    tokens.extend_from_slice(history.tokens());
    let mut dec_in = p.embedding.select(Axis(0), &tokens);
    let mut decoder = Vec::with_capacity(p.decoder.len());
    for layer in &p.decoder {
        let c = recurrent_layer(layer, &dec_in);
        dec_in = c.h.clone();
        decoder.push(c);
    }

    let enc_out = &encoder.last().expect("at least one encoder layer").h2;
    let dec_out = &decoder.last().expect("at least one decoder layer").h;
    let (t_len, u1, d) = (enc_out.nrows(), dec_out.nrows(), enc_out.ncols());
    let pe = enc_out.dot(&p.joint_enc);
    let pd = dec_out.dot(&p.joint_dec) + &p.joint_bias;
    let mut joint_act = Array2::zeros((t_len * u1, d));
    for t in 0..t_len {
        for u in 0..u1 {
            let mut row = joint_act.row_mut(t * u1 + u);
            row.assign(&pe.row(t));
            row += &pd.row(u);
            row.mapv_inplace(f64::tanh);
        }
    }
    let logits = joint_act.dot(&p.output.w) + &p.output.b;
    let logits = Tensor::new(vec![t_len, u1, cfg.vocab], logits.into_iter().collect())?;
    let probs = ProbLattice::from_logits(&logits)?;

    Ok(ForwardTrace {
        x,
        history: tokens,
        encoder,
        decoder,
        joint_act,
        logits,
        probs,
    })
}

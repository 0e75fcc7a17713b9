//! Elementary operations on probability vectors. Entropies are in nats.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance on `sum(dist) == 1` for validated inputs.
pub const DIST_TOL: f64 = 1e-9;

/// Max-subtracted softmax of one slice, written into `out`.
pub fn softmax_slice(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax over the last axis.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let mut out = logits.clone();
    for (src, dst) in logits.rows().zip(out.rows_mut()) {
        softmax_slice(src, dst);
    }
    Ok(out)
}

/// Log-softmax over the last axis.
pub fn log_softmax(logits: &Tensor) -> Result<Tensor> {
    let mut out = logits.clone();
    for (src, dst) in logits.rows().zip(out.rows_mut()) {
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + src.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        for (o, &z) in dst.iter_mut().zip(src) {
            *o = z - lse;
        }
    }
    Ok(out)
}

/// Checks non-negativity and unit sum.
pub fn validate(dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(Error::Dimension("empty distribution".into()));
    }
    if let Some(x) = dist.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("invalid probability {x}")));
    }
    let s: f64 = dist.iter().sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(Error::Domain(format!("distribution sums to {s}")));
    }
    Ok(())
}

/// Shannon entropy without validation; `0 log 0 = 0`.
pub fn entropy_unchecked(dist: &[f64]) -> f64 {
    -dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Shannon entropy in nats, in `[0, log V]`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    validate(dist)?;
    let v = dist.len() as f64;
    Ok(entropy_unchecked(dist).clamp(0.0, v.ln()))
}

/// `KL(p || q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("length {} vs {}", p.len(), q.len())));
    }
    validate(p)?;
    validate(q)?;
    let mut kl = 0.0;
    for (v, (&pv, &qv)) in p.iter().zip(q).enumerate() {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            return Err(Error::Domain(format!(
                "support violation at index {v}: p = {pv}, q = 0"
            )));
        }
        kl += pv * (pv / qv).ln();
    }
    Ok(kl.max(0.0))
}

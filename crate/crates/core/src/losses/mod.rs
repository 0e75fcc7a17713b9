//! Training losses and their analytic gradients.

mod hidden;
mod kl;
mod rnnt;
mod total;

pub use hidden::{hidden_mse, HiddenMse};
pub use kl::{output_kl, smoothed_output_kl, smoothed_output_kl_against, KlDirection, KlResult, SmoothedKlResult};
pub use rnnt::{rnnt_loss, rnnt_loss_bruteforce, RnntLossResult, BRUTEFORCE_MAX_T, BRUTEFORCE_MAX_U};
pub use total::{total_kd_loss, KdLossBreakdown};

use crate::tensor::Tensor;

/// Chains `∂L/∂p` through a cell-wise softmax `p = softmax(z)`.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Tensor {
    let mut out = grad_probs.clone();
    for (p, g) in probs.rows().zip(out.rows_mut()) {
        let dot: f64 = p.iter().zip(g.iter()).map(|(p, g)| p * g).sum();
        g.iter_mut().zip(p).for_each(|(g, p)| *g = p * (*g - dot));
    }
    out
}

/// Chains `∂L/∂log p` through a cell-wise log-softmax.
pub fn log_softmax_backward(probs: &Tensor, grad_log_probs: &Tensor) -> Tensor {
    let mut out = grad_log_probs.clone();
    for (p, g) in probs.rows().zip(out.rows_mut()) {
        let total: f64 = g.iter().sum();
        g.iter_mut().zip(p).for_each(|(g, p)| *g -= p * total);
    }
    out
}

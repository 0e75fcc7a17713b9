//! Transducer loss by the forward-backward recursion over the `T x (U+1)`
//! alignment lattice.

use crate::error::{Error, Result};
use crate::tensor::{ProbLattice, Tensor, TokenSequence, BLANK};

pub const BRUTEFORCE_MAX_T: usize = 6;
pub const BRUTEFORCE_MAX_U: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RnntLossResult {
    /// `−log P(y | x)`.
    pub loss: f64,
    /// `∂loss/∂log Q`, shape `[T, U+1, V]`.
    pub grad_logprobs: Tensor,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn check_shapes(shape: &[usize], target: &TokenSequence) -> Result<()> {
    if shape.len() != 3 {
        return Err(Error::Shape(format!("expected [T, U+1, V], got {shape:?}")));
    }
    if shape[1] != target.len() + 1 {
        return Err(Error::Shape(format!(
            "lattice has {} token positions, target needs {}",
            shape[1],
            target.len() + 1
        )));
    }
    if let Some(&k) = target.tokens().iter().find(|&&k| k >= shape[2] || k == BLANK) {
        return Err(Error::Shape(format!("target token {k} not in vocabulary of {}", shape[2])));
    }
    Ok(())
}

/// Negative log-likelihood of `target` summed over all monotone alignments,
/// with the gradient with respect to the log-probabilities.
pub fn rnnt_loss(log_probs: &Tensor, target: &TokenSequence) -> Result<RnntLossResult> {
    check_shapes(log_probs.shape(), target)?;
    let (t_len, u1, v) = (log_probs.shape()[0], log_probs.shape()[1], log_probs.shape()[2]);
    let y = target.tokens();
    let lp = |t: usize, u: usize, k: usize| log_probs.data()[(t * u1 + u) * v + k];
    let at = |t: usize, u: usize| t * u1 + u;

    let mut alpha = vec![f64::NEG_INFINITY; t_len * u1];
    alpha[0] = 0.0;
    for t in 0..t_len {
        for u in 0..u1 {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                a = log_add(a, alpha[at(t - 1, u)] + lp(t - 1, u, BLANK));
            }
            if u > 0 {
                a = log_add(a, alpha[at(t, u - 1)] + lp(t, u - 1, y[u - 1]));
            }
            alpha[at(t, u)] = a;
        }
    }

    let mut beta = vec![f64::NEG_INFINITY; t_len * u1];
    let last = at(t_len - 1, u1 - 1);
    beta[last] = lp(t_len - 1, u1 - 1, BLANK);
    for t in (0..t_len).rev() {
        for u in (0..u1).rev() {
            if t == t_len - 1 && u == u1 - 1 {
                continue;
            }
            let mut b = f64::NEG_INFINITY;
            if t + 1 < t_len {
                b = log_add(b, beta[at(t + 1, u)] + lp(t, u, BLANK));
            }
            if u + 1 < u1 {
                b = log_add(b, beta[at(t, u + 1)] + lp(t, u, y[u]));
            }
            beta[at(t, u)] = b;
        }
    }

    let log_lik = alpha[last] + lp(t_len - 1, u1 - 1, BLANK);
    if !log_lik.is_finite() {
        return Err(Error::Domain("target has zero probability under the lattice".into()));
    }

    let mut grad = vec![0.0; log_probs.len()];
    for t in 0..t_len {
        for u in 0..u1 {
            let a = alpha[at(t, u)];
            let base = (t * u1 + u) * v;
            let blank_next = if t + 1 < t_len {
                beta[at(t + 1, u)]
            } else if u + 1 == u1 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            grad[base + BLANK] = -(a + lp(t, u, BLANK) + blank_next - log_lik).exp();
            if u + 1 < u1 {
                let k = y[u];
                grad[base + k] = -(a + lp(t, u, k) + beta[at(t, u + 1)] - log_lik).exp();
            }
        }
    }

    Ok(RnntLossResult {
        loss: (-log_lik).max(0.0),
        grad_logprobs: Tensor::new(log_probs.shape().to_vec(), grad)?,
    })
}

/// Explicit sum over every alignment path. Exponential; only for small
/// lattices (`T <= 6`, `U <= 4`).
pub fn rnnt_loss_bruteforce(probs: &ProbLattice, target: &TokenSequence) -> Result<f64> {
    check_shapes(probs.tensor().shape(), target)?;
    let (t_len, u_len) = (probs.t_len(), target.len());
    if t_len > BRUTEFORCE_MAX_T || u_len > BRUTEFORCE_MAX_U {
        return Err(Error::Range(format!(
            "brute force limited to T <= {BRUTEFORCE_MAX_T}, U <= {BRUTEFORCE_MAX_U}; got T = {t_len}, U = {u_len}"
        )));
    }
    fn walk(p: &ProbLattice, y: &[usize], t: usize, u: usize, acc: f64) -> f64 {
        let (t_last, u_last) = (p.t_len() - 1, y.len());
        let cell = p.cell(t, u);
        if t == t_last && u == u_last {
            return acc * cell[BLANK];
        }
        let mut total = 0.0;
        if u < u_last {
            total += walk(p, y, t, u + 1, acc * cell[y[u]]);
        }
        if t < t_last {
            total += walk(p, y, t + 1, u, acc * cell[BLANK]);
        }
        total
    }
    Ok(-walk(probs, target.tokens(), 0, 0, 1.0).ln())
}

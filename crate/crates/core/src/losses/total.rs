/// Weighted combination of the hidden and output objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdLossBreakdown {
    pub l_rnnt: f64,
    pub l_hidden: f64,
    pub l_output_kl: f64,
    pub l_total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl KdLossBreakdown {
    /// `l_rnnt + l_output_kl`.
    pub fn l_output(&self) -> f64 {
        self.l_rnnt + self.l_output_kl
    }
}

/// `alpha * l_hidden + beta * (l_rnnt + l_output_kl)`. Weights are expected
/// to be non-negative.
pub fn total_kd_loss(l_hidden: f64, l_rnnt: f64, l_output_kl: f64, alpha: f64, beta: f64) -> KdLossBreakdown {
    KdLossBreakdown {
        l_rnnt,
        l_hidden,
        l_output_kl,
        l_total: alpha * l_hidden + beta * (l_rnnt + l_output_kl),
        alpha,
        beta,
    }
}

//! Entropy-targeted power-transformation smoothing.
//!
//! A distribution `Q` is smoothed by `Q^γ / Σ Q^γ` with `γ ∈ [0, 1]`. The
//! exponent is chosen so the entropy of the result moves toward a target,
//! using the first-order expansion of the transformed entropy around `γ = 1`:
//!
//! ```text
//! H(γ) ≈ H + (H² − E[(log Q)²]) (γ − 1)
//! γ    = 1 + (target − H) / (H² − E[(log Q)²])
//! ```
//!
//! [`adaptive_smooth`] iterates that step a fixed number of times on every
//! lattice cell independently. [`oracle_gamma`] solves the same problem
//! exactly by bisection and exists to validate the expansion.

use serde::{Deserialize, Serialize};

use crate::dist::{self, entropy_unchecked};
use crate::error::{Error, Result};
use crate::tensor::{ProbLattice, Tensor};

pub const DEFAULT_STEPS: usize = 2;
pub const DEFAULT_DEGENERATE_EPS: f64 = 1e-12;
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// Slack allowed when comparing a requested target against `log V`.
const TARGET_SLACK: f64 = 1e-12;

/// Entropy the smoother aims for. Serialized as `"max"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TargetRepr", into = "TargetRepr")]
pub enum EntropyTarget {
    /// `log V` for the vocabulary of the input.
    Max,
    Nats(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetRepr {
    Word(String),
    Nats(f64),
}

impl TryFrom<TargetRepr> for EntropyTarget {
    type Error = String;

    fn try_from(r: TargetRepr) -> std::result::Result<Self, String> {
        match r {
            TargetRepr::Nats(h) => Ok(EntropyTarget::Nats(h)),
            TargetRepr::Word(w) if w == "max" => Ok(EntropyTarget::Max),
            TargetRepr::Word(w) => w
                .parse()
                .map(EntropyTarget::Nats)
                .map_err(|_| format!("target entropy must be \"max\" or a number, got {w:?}")),
        }
    }
}

impl From<EntropyTarget> for TargetRepr {
    fn from(t: EntropyTarget) -> Self {
        match t {
            EntropyTarget::Max => TargetRepr::Word("max".into()),
            EntropyTarget::Nats(h) => TargetRepr::Nats(h),
        }
    }
}

impl std::str::FromStr for EntropyTarget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        EntropyTarget::try_from(TargetRepr::Word(s.to_string()))
    }
}

impl EntropyTarget {
    pub fn resolve(self, vocab: usize) -> Result<f64> {
        let max = (vocab as f64).ln();
        match self {
            EntropyTarget::Max => Ok(max),
            EntropyTarget::Nats(h) if h > 0.0 && h <= max + TARGET_SLACK => Ok(h.min(max)),
            EntropyTarget::Nats(h) => Err(Error::Domain(format!(
                "target entropy {h} outside (0, log {vocab} = {max}]"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub target_entropy: EntropyTarget,
    /// Number of Taylor/power steps per cell; 0 is the identity.
    pub max_steps: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub degenerate_eps: f64,
    pub prob_floor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            target_entropy: EntropyTarget::Max,
            max_steps: DEFAULT_STEPS,
            gamma_min: 0.0,
            gamma_max: 1.0,
            degenerate_eps: DEFAULT_DEGENERATE_EPS,
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }
}

impl SmoothingConfig {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            max_steps: steps,
            ..Self::default()
        }
    }

    pub fn with_target(mut self, target: EntropyTarget) -> Self {
        self.target_entropy = target;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.gamma_min && self.gamma_min <= self.gamma_max && self.gamma_max <= 1.0) {
            return Err(Error::Domain(format!(
                "gamma clamp [{}, {}] not inside [0, 1]",
                self.gamma_min, self.gamma_max
            )));
        }
        if !(self.prob_floor > 0.0 && self.degenerate_eps >= 0.0) {
            return Err(Error::Domain("prob_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// `dist^γ / Σ dist^γ`, computed in log space.
pub fn power_transform(dist: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if dist.iter().all(|&p| p == 0.0) {
        return Err(Error::Domain("all-zero distribution".into()));
    }
    dist::validate(dist)?;
    Ok(power_unchecked(dist, gamma))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma {gamma} must be finite and >= 0")));
    }
    Ok(())
}

/// Power transform of a positive (not necessarily normalized) vector.
pub(crate) fn power_unchecked(x: &[f64], gamma: f64) -> Vec<f64> {
    if gamma == 0.0 {
        return vec![1.0 / x.len() as f64; x.len()];
    }
    let max = x.iter().copied().fold(0.0, f64::max);
    let max_log = max.ln();
    let mut out: Vec<f64> = x
        .iter()
        .map(|&p| if p > 0.0 { (gamma * (p.ln() - max_log)).exp() } else { 0.0 })
        .collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= s);
    out
}

/// Entropy of `power_transform(dist, gamma)` from the closed form
/// `log Σ Q^γ − γ Σ Q^γ log Q / Σ Q^γ`.
pub fn transformed_entropy(dist: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    dist::validate(dist)?;
    Ok(transformed_entropy_unchecked(dist, gamma))
}

fn transformed_entropy_unchecked(dist: &[f64], gamma: f64) -> f64 {
    let v = dist.len() as f64;
    if gamma == 0.0 {
        return v.ln();
    }
    let max_log = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut s, mut s_log) = (0.0, 0.0);
    for &p in dist.iter().filter(|&&p| p > 0.0) {
        let lp = p.ln();
        let w = (gamma * (lp - max_log)).exp();
        s += w;
        s_log += w * lp;
    }
    // log Σ Q^γ = γ·max_log + ln s
    let h = gamma * max_log + s.ln() - gamma * s_log / s;
    h.clamp(0.0, v.ln())
}

/// `E[(log Q)²]` under `Q`.
fn second_log_moment(dist: &[f64]) -> f64 {
    dist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let l = p.ln();
            p * l * l
        })
        .sum()
}

/// First-order approximation of the transformed entropy around `γ = 1`.
pub fn taylor_entropy(dist: &[f64], gamma: f64) -> Result<f64> {
    dist::validate(dist)?;
    let h = entropy_unchecked(dist);
    Ok(h + (h * h - second_log_moment(dist)) * (gamma - 1.0))
}

/// Unclamped Taylor exponent; `None` when the denominator is degenerate.
pub fn taylor_gamma_raw(dist: &[f64], target: f64, degenerate_eps: f64) -> Option<f64> {
    let h = entropy_unchecked(dist);
    let denom = h * h - second_log_moment(dist);
    if denom.abs() < degenerate_eps {
        None
    } else {
        Some(1.0 + (target - h) / denom)
    }
}

/// Clamped Taylor exponent with the default degenerate threshold.
pub fn taylor_gamma(dist: &[f64], target_entropy: f64) -> Result<f64> {
    dist::validate(dist)?;
    let target = EntropyTarget::Nats(target_entropy).resolve(dist.len())?;
    Ok(taylor_gamma_raw(dist, target, DEFAULT_DEGENERATE_EPS).map_or(1.0, |g| g.clamp(0.0, 1.0)))
}

/// Bisection for `γ ∈ [0, 1]` with `|H(γ) − target| < tol`.
pub fn oracle_gamma(dist: &[f64], target_entropy: f64, tol: f64) -> Result<f64> {
    dist::validate(dist)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be > 0")));
    }
    let f = |g: f64| transformed_entropy_unchecked(dist, g) - target_entropy;
    let (f_lo, f_hi) = (f(0.0), f(1.0));
    if f_lo.abs() < tol {
        return Ok(0.0);
    }
    if f_hi.abs() < tol {
        return Ok(1.0);
    }
    // H(γ) is non-increasing, so a root needs H(0) >= target >= H(1).
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::Range(format!(
            "target {target_entropy} outside achievable [{}, {}] on γ ∈ [0, 1]",
            f_hi + target_entropy,
            f_lo + target_entropy
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < tol {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1e-300) {
            break;
        }
    }
    Err(Error::Range(format!(
        "bisection stalled at γ ≈ {lo}; tolerance {tol} below attainable precision"
    )))
}

/// Per-step exponents for every lattice cell, row-major `[cells, steps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    pub steps: usize,
    pub values: Vec<f64>,
}

impl GammaTable {
    pub fn cell(&self, index: usize) -> &[f64] {
        &self.values[index * self.steps..(index + 1) * self.steps]
    }

    pub fn n_cells(&self) -> usize {
        self.values.len().checked_div(self.steps).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingResult {
    pub smoothed: ProbLattice,
    pub gammas: GammaTable,
    /// `[T, U+1, Z+1]`: entropy before the first step and after each step.
    pub entropy_trace: Tensor,
}

impl SmoothingResult {
    /// `[T, U+1, Z]` view of the exponents; `None` when `Z = 0`.
    pub fn gammas_tensor(&self) -> Option<Tensor> {
        let s = self.smoothed.tensor().shape();
        (self.gammas.steps > 0).then(|| {
            Tensor::new(vec![s[0], s[1], self.gammas.steps], self.gammas.values.clone())
                .expect("gamma table matches lattice")
        })
    }
}

/// Floors entries at `floor` and renormalizes.
pub fn floor_renormalize(q: &[f64], floor: f64) -> Vec<f64> {
    let mut out: Vec<f64> = q.iter().map(|&p| p.max(floor)).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= s);
    out
}

struct CellRun {
    out: Vec<f64>,
    gammas: Vec<f64>,
    entropies: Vec<f64>,
}

fn smooth_cell(q: &[f64], target: f64, cfg: &SmoothingConfig) -> CellRun {
    let mut cur = floor_renormalize(q, cfg.prob_floor);
    let mut gammas = Vec::with_capacity(cfg.max_steps);
    let mut entropies = Vec::with_capacity(cfg.max_steps + 1);
    entropies.push(entropy_unchecked(&cur));
    for _ in 0..cfg.max_steps {
        let g = taylor_gamma_raw(&cur, target, cfg.degenerate_eps)
            .map_or(1.0, |g| g.clamp(cfg.gamma_min, cfg.gamma_max));
        cur = power_unchecked(&cur, g);
        gammas.push(g);
        entropies.push(entropy_unchecked(&cur));
    }
    CellRun {
        out: cur,
        gammas,
        entropies,
    }
}

/// Runs the iterative Taylor smoother on every `(t, u)` cell.
pub fn adaptive_smooth(lattice: &ProbLattice, config: &SmoothingConfig) -> Result<SmoothingResult> {
    config.validate()?;
    let target = config.target_entropy.resolve(lattice.vocab())?;
    let shape = lattice.tensor().shape().to_vec();
    let z = config.max_steps;
    let mut smoothed = Vec::with_capacity(lattice.tensor().len());
    let mut gammas = Vec::with_capacity(lattice.n_cells() * z);
    let mut trace = Vec::with_capacity(lattice.n_cells() * (z + 1));
    for cell in lattice.cells() {
        let run = smooth_cell(cell, target, config);
        smoothed.extend(run.out);
        gammas.extend(run.gammas);
        trace.extend(run.entropies);
    }
    Ok(SmoothingResult {
        smoothed: ProbLattice::new(Tensor::new(shape.clone(), smoothed)?)?,
        gammas: GammaTable { steps: z, values: gammas },
        entropy_trace: Tensor::new(vec![shape[0], shape[1], z + 1], trace)?,
    })
}

/// Floors, renormalizes and applies the given exponents in order. Accepts
/// any positive vector so it can be probed off the simplex.
pub fn apply_frozen_cell(q: &[f64], gammas: &[f64], floor: f64) -> Vec<f64> {
    gammas
        .iter()
        .fold(floor_renormalize(q, floor), |cur, &g| power_unchecked(&cur, g))
}

/// Vector-Jacobian product of [`apply_frozen_cell`] with respect to `q`.
pub fn frozen_cell_vjp(q: &[f64], gammas: &[f64], floor: f64, upstream: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = q.iter().map(|&p| p.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    let mut states = Vec::with_capacity(gammas.len() + 1);
    states.push(floored.iter().map(|p| p / total).collect::<Vec<f64>>());
    for &g in gammas {
        let next = power_unchecked(states.last().unwrap(), g);
        states.push(next);
    }
    let mut grad = upstream.to_vec();
    // y = x^γ / Σ x^γ  =>  ∂L/∂x_w = γ y_w (u_w − <u, y>) / x_w
    for (k, &g) in gammas.iter().enumerate().rev() {
        let (x, y) = (&states[k], &states[k + 1]);
        let dot: f64 = grad.iter().zip(y).map(|(u, y)| u * y).sum();
        for ((gw, &xw), &yw) in grad.iter_mut().zip(x).zip(y) {
            *gw = g * yw * (*gw - dot) / xw;
        }
    }
    // renormalization then floor
    let y0 = &states[0];
    let dot: f64 = grad.iter().zip(y0).map(|(u, y)| u * y).sum();
    grad.iter_mut()
        .zip(q)
        .for_each(|(gw, &p)| *gw = if p > floor { (*gw - dot) / total } else { 0.0 });
    grad
}

/// Backward pass of the smoother with the exponents held constant.
pub fn smooth_gradient(
    lattice: &ProbLattice,
    upstream: &Tensor,
    gammas: &GammaTable,
    prob_floor: f64,
) -> Result<Tensor> {
    if upstream.shape() != lattice.tensor().shape() {
        return Err(Error::Shape(format!(
            "upstream {:?} vs lattice {:?}",
            upstream.shape(),
            lattice.tensor().shape()
        )));
    }
    if gammas.steps > 0 && gammas.n_cells() != lattice.n_cells() {
        return Err(Error::Shape(format!(
            "{} gamma cells for {} lattice cells",
            gammas.n_cells(),
            lattice.n_cells()
        )));
    }
    let mut out = upstream.clone();
    for (i, (q, g)) in lattice.cells().zip(out.rows_mut()).enumerate() {
        let steps = if gammas.steps == 0 { &[][..] } else { gammas.cell(i) };
        let vjp = frozen_cell_vjp(q, steps, prob_floor, g);
        g.copy_from_slice(&vjp);
    }
    Ok(out)
}

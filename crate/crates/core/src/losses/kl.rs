//! Output-layer distillation: tempered KL and entropy-smoothed KL.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::softmax_backward;
use crate::smoothing::{adaptive_smooth, power_unchecked, smooth_gradient, GammaTable, SmoothingConfig, SmoothingResult};
use crate::tensor::{ProbLattice, Tensor};

/// Argument order of the per-cell KL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(student || teacher)`.
    #[default]
    StudentFirst,
    /// `KL(teacher || student)`.
    TeacherFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlResult {
    /// Mean KL over `(t, u)` cells.
    pub loss: f64,
    /// Gradient with respect to the student logits (`log Q^S` up to a
    /// per-cell constant).
    pub grad_logits: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedKlResult {
    pub loss: f64,
    pub grad_logits: Tensor,
    /// Gradient with respect to the student probabilities.
    pub grad_probs: Tensor,
    pub student_gammas: GammaTable,
    pub teacher_gammas: GammaTable,
}

/// KL between two cells and its gradient with respect to the first
/// distribution of the pair when `dir` is student-first (or the second
/// otherwise), returned as `∂KL/∂student`.
fn cell_kl(student: &[f64], teacher: &[f64], dir: KlDirection, grad: &mut [f64]) -> Result<f64> {
    let mut kl = 0.0;
    match dir {
        KlDirection::StudentFirst => {
            for ((&s, &t), g) in student.iter().zip(teacher).zip(grad.iter_mut()) {
                if s == 0.0 {
                    *g = 0.0;
                    continue;
                }
                if t == 0.0 {
                    return Err(Error::Domain("teacher has zero mass where student does not".into()));
                }
                let r = (s / t).ln();
                kl += s * r;
                *g = r + 1.0;
            }
        }
        KlDirection::TeacherFirst => {
            for ((&s, &t), g) in student.iter().zip(teacher).zip(grad.iter_mut()) {
                if t == 0.0 {
                    *g = 0.0;
                    continue;
                }
                if s == 0.0 {
                    return Err(Error::Domain("student has zero mass where teacher does not".into()));
                }
                kl += t * (t / s).ln();
                *g = -t / s;
            }
        }
    }
    Ok(kl.max(0.0))
}

fn mean_kl(student: &ProbLattice, teacher: &ProbLattice, dir: KlDirection) -> Result<(f64, Tensor)> {
    student.same_shape(teacher)?;
    let n = student.n_cells() as f64;
    let mut grad = Tensor::zeros(student.tensor().shape().to_vec())?;
    let mut total = 0.0;
    for ((s, t), g) in student.cells().zip(teacher.cells()).zip(grad.rows_mut()) {
        total += cell_kl(s, t, dir, g)?;
        g.iter_mut().for_each(|x| *x /= n);
    }
    Ok((total / n, grad))
}

fn temper(lattice: &ProbLattice, temperature: f64) -> Result<ProbLattice> {
    if temperature == 1.0 {
        return Ok(lattice.clone());
    }
    let mut t = lattice.tensor().clone();
    for row in t.rows_mut() {
        let p = power_unchecked(row, 1.0 / temperature);
        row.copy_from_slice(&p);
    }
    ProbLattice::new(t)
}

/// Mean per-cell `KL` between temperature-softened lattices.
///
/// Each side is recomputed as `softmax(log Q / τ)`. The gradient is with
/// respect to the student logits of the untempered lattice.
pub fn output_kl(
    student: &ProbLattice,
    teacher: &ProbLattice,
    temperature: f64,
    direction: KlDirection,
) -> Result<KlResult> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!("temperature {temperature} must be > 0")));
    }
    student.same_shape(teacher)?;
    let (s, t) = (temper(student, temperature)?, temper(teacher, temperature)?);
    let (loss, grad_probs) = mean_kl(&s, &t, direction)?;
    let mut grad_logits = softmax_backward(s.tensor(), &grad_probs);
    if temperature != 1.0 {
        grad_logits.data_mut().iter_mut().for_each(|g| *g /= temperature);
    }
    Ok(KlResult { loss, grad_logits })
}

/// Mean per-cell KL after smoothing both lattices with [`adaptive_smooth`].
///
/// Each lattice gets its own exponents. The gradient treats the student's
/// exponents as constants; the teacher side carries no gradient.
pub fn smoothed_output_kl(
    student: &ProbLattice,
    teacher: &ProbLattice,
    config: &SmoothingConfig,
    direction: KlDirection,
) -> Result<SmoothedKlResult> {
    student.same_shape(teacher)?;
    let t = adaptive_smooth(teacher, config)?;
    smoothed_output_kl_against(student, &t, config, direction)
}

/// Same as [`smoothed_output_kl`] with the teacher side already smoothed
/// under `config`, so a fixed teacher is smoothed once.
pub fn smoothed_output_kl_against(
    student: &ProbLattice,
    teacher: &SmoothingResult,
    config: &SmoothingConfig,
    direction: KlDirection,
) -> Result<SmoothedKlResult> {
    let t = teacher;
    student.same_shape(&t.smoothed)?;
    let s = adaptive_smooth(student, config)?;
    let (loss, upstream) = mean_kl(&s.smoothed, &t.smoothed, direction)?;
    let grad_probs = smooth_gradient(student, &upstream, &s.gammas, config.prob_floor)?;
    let grad_logits = softmax_backward(student.tensor(), &grad_probs);
    Ok(SmoothedKlResult {
        loss,
        grad_logits,
        grad_probs,
        student_gammas: s.gammas,
        teacher_gammas: t.gammas.clone(),
    })
}

use crate::error::Result;
use crate::tensor::{HiddenStack, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenMse {
    pub loss: f64,
    /// `∂loss/∂student`, one tensor per layer.
    pub grad: HiddenStack,
}

/// Sum over layers of the element-mean squared error between student and
/// teacher activations.
pub fn hidden_mse(student: &HiddenStack, teacher: &HiddenStack) -> Result<HiddenMse> {
    student.check_compatible(teacher)?;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(student.len());
    for (s, t) in student.layers.iter().zip(&teacher.layers) {
        let n = s.len() as f64;
        let mut sq = 0.0;
        let g: Vec<f64> = s
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| {
                let d = a - b;
                sq += d * d;
                2.0 * d / n
            })
            .collect();
        loss += sq / n;
        grads.push(Tensor::new(s.shape().to_vec(), g)?);
    }
    Ok(HiddenMse {
        loss,
        grad: HiddenStack::new(grads),
    })
}

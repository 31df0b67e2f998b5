//! Central finite-difference verification of tape gradients.
//!
//! The checker only ever runs the forward pass of the function under test,
//! so it stays independent of the backward sweep it validates.

use super::tensor::Tensor;

/// Result of one finite-difference comparison.
#[derive(Debug)]
pub struct GradCheckReport {
    /// Largest relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Coordinates checked.
    pub count: usize,
}

/// Compare an analytic gradient against central differences of `f`.
///
/// `inputs` are the leaf tensors of the function; `grads` the analytic
/// gradients (same order and shapes). Every coordinate of every input is
/// perturbed by `eps`. The relative error of coordinate j is
/// `|fd - an| / max(1, |fd|, |an|)`.
pub fn check_gradients<F>(
    mut f: F,
    inputs: &[Tensor],
    grads: &[Tensor],
    eps: f64,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(inputs.len(), grads.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut count = 0;
    for i in 0..inputs.len() {
        assert_eq!(inputs[i].shape(), grads[i].shape(), "gradient shape mismatch");
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = f(&work);
            work[i].data_mut()[j] = orig - eps;
            let minus = f(&work);
            work[i].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let an = grads[i].data()[j];
            let denom = 1.0_f64.max(fd.abs()).max(an.abs());
            let rel = (fd - an).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            count += 1;
        }
    }
    GradCheckReport { max_rel_err, count }
}

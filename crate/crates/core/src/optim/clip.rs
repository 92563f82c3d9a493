use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Euclidean norm of all entries of all matrices taken together.
pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_of_squares).sum::<f64>().sqrt()
}

/// Rescales every gradient by `max_norm / joint_norm` when the joint norm
/// exceeds `max_norm`. Returns the joint norm measured before clipping.
pub fn clip_global_norm_in_place(grads: &mut [Matrix], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0 && max_norm.is_finite()) {
        return Err(Error::invalid(format!(
            "max_norm must be positive, got {max_norm}"
        )));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

pub fn clip_global_norm(grads: &[Matrix], max_norm: f64) -> Result<Vec<Matrix>> {
    let mut out = grads.to_vec();
    clip_global_norm_in_place(&mut out, max_norm)?;
    Ok(out)
}

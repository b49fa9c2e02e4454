//! Exact Gaussian posterior mean by matrix-free conjugate gradients.

use crate::error::{NfcError, Result};
use crate::forward_ops::LinearOperator;
use crate::grid::{ImageTensor, Shape};

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: ImageTensor,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `M z = b` for symmetric positive definite `M` given as a closure.
/// Stops when `‖b − Mz‖ ≤ tol·‖b‖`.
pub fn conjugate_gradient(
    b: &ImageTensor,
    tol: f64,
    max_iter: usize,
    mut apply: impl FnMut(&ImageTensor) -> Result<ImageTensor>,
) -> Result<CgOutcome> {
    let bnorm = b.norm_sq().sqrt();
    let mut z = ImageTensor::zeros(b.shape());
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            solution: z,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.norm_sq();
    for it in 1..=max_iter {
        let mp = apply(&p)?;
        let alpha = rs / p.dot(&mp)?;
        z.add_scaled(&p, alpha)?;
        r.add_scaled(&mp, -alpha)?;
        let rs_new = r.norm_sq();
        if rs_new.sqrt() <= tol * bnorm {
            return Ok(CgOutcome {
                solution: z,
                iterations: it,
                residual: rs_new.sqrt(),
            });
        }
        let beta = rs_new / rs;
        p = r.zip_map(&p, |ri, pi| ri + beta * pi)?;
        rs = rs_new;
    }
    Err(NfcError::Numerical(format!(
        "conjugate gradients did not reach {tol:e} in {max_iter} iterations (residual {:e})",
        rs.sqrt() / bnorm
    )))
}

/// `μ + s²Aᵀ(s²AAᵀ + σ_y²I)⁻¹(y − Aμ)`, solved on the measurement space.
pub fn gaussian_posterior_oracle(
    mu: &ImageTensor,
    s: f64,
    op: &LinearOperator,
    y: &ImageTensor,
    sigma_y: f64,
) -> Result<ImageTensor> {
    if !(sigma_y > 0.0) {
        return Err(NfcError::param("sigma_y", format!("must be positive, got {sigma_y}")));
    }
    if !(s > 0.0) {
        return Err(NfcError::param("s", format!("must be positive, got {s}")));
    }
    let rhs = y.sub(&op.apply(mu)?)?;
    let out: Shape = op.output_shape();
    let (s2, n2) = (s * s, sigma_y * sigma_y);
    let cg = conjugate_gradient(&rhs, 1e-12, 10 * out.len(), |v| {
        let mut m = op.apply(&op.adjoint(v)?)?.scale(s2);
        m.add_scaled(v, n2)?;
        Ok(m)
    })?;
    let mut post = mu.clone();
    post.add_scaled(&op.adjoint(&cg.solution)?, s2)?;
    Ok(post)
}

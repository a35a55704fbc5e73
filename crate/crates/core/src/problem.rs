//! Box-constrained root-finding problems `f(x) = 0, x ∈ Ω`.

use crate::projector::{BoxDomain, DomainError};
use crate::{Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("residual is not finite at the evaluation point")]
    NonFinite,
}

/// A square system with an analytic Jacobian on a box domain.
///
/// Implementors provide the raw evaluators; the checked methods reject points
/// outside the domain before evaluating.
pub trait RootProblem: Send + Sync {
    fn domain(&self) -> &BoxDomain;

    /// `f(x)`; only called with `x` in the domain.
    fn eval_residual(&self, x: &Vector) -> Vector;

    /// `J_f(x)`; only called with `x` in the domain.
    fn eval_jacobian(&self, x: &Vector) -> Matrix;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn residual(&self, x: &Vector) -> Result<Vector, ProblemError> {
        self.domain().check(x)?;
        let f = self.eval_residual(x);
        if f.iter().all(|v| v.is_finite()) {
            Ok(f)
        } else {
            Err(ProblemError::NonFinite)
        }
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix, ProblemError> {
        self.domain().check(x)?;
        Ok(self.eval_jacobian(x))
    }

    fn residual_norm(&self, x: &Vector) -> Result<f64, ProblemError> {
        Ok(self.residual(x)?.norm())
    }

    /// `Θ(x) = ½‖f(x)‖²`.
    fn theta(&self, x: &Vector) -> Result<f64, ProblemError> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    /// `∇Θ(x) = J_f(x)ᵀ f(x)`.
    fn grad_theta(&self, x: &Vector) -> Result<Vector, ProblemError> {
        let f = self.residual(x)?;
        Ok(self.eval_jacobian(x).tr_mul(&f))
    }
}

type VecFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type MatFn = dyn Fn(&Vector) -> Matrix + Send + Sync;

/// A [`RootProblem`] assembled from closures.
pub struct FnProblem {
    domain: BoxDomain,
    residual: Box<VecFn>,
    jacobian: Box<MatFn>,
}

impl FnProblem {
    pub fn new<F, J>(domain: BoxDomain, residual: F, jacobian: J) -> Self
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        J: Fn(&Vector) -> Matrix + Send + Sync + 'static,
    {
        Self {
            domain,
            residual: Box::new(residual),
            jacobian: Box::new(jacobian),
        }
    }
}

impl std::fmt::Debug for FnProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnProblem").field("domain", &self.domain).finish_non_exhaustive()
    }
}

impl RootProblem for FnProblem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn eval_residual(&self, x: &Vector) -> Vector {
        (self.residual)(x)
    }

    fn eval_jacobian(&self, x: &Vector) -> Matrix {
        (self.jacobian)(x)
    }
}

/// Central-difference Jacobian with step `h_i = step·(1 + |x_i|)`.
///
/// Test oracle only; solvers use the analytic Jacobian.
pub fn finite_difference_jacobian<P: RootProblem + ?Sized>(p: &P, x: &Vector, step: f64) -> Matrix {
    let n = x.len();
    let m = p.eval_residual(x).len();
    let mut jac = Matrix::zeros(m, n);
    for i in 0..n {
        let h = step * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (p.eval_residual(&xp) - p.eval_residual(&xm)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    jac
}

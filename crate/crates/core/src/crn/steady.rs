use std::sync::Arc;

use super::{ConservationBasis, CrnError, CrnNetwork};
use crate::problem::RootProblem;
use crate::projector::BoxDomain;
use crate::{Matrix, Vector};

/// A network, its conservation basis and the moiety totals `c` selecting one
/// compatibility class.
#[derive(Debug, Clone)]
pub struct SteadyStateTarget {
    network: Arc<CrnNetwork>,
    basis: Arc<ConservationBasis>,
    moieties: Vector,
}

impl SteadyStateTarget {
    pub fn new(network: Arc<CrnNetwork>, basis: Arc<ConservationBasis>, moieties: Vector) -> Result<Self, CrnError> {
        if basis.n_species() != network.n_species() {
            return Err(CrnError::Invalid("basis does not match the network".into()));
        }
        if moieties.len() != basis.n_moieties() {
            return Err(CrnError::Moieties(format!(
                "expected {} totals, got {}",
                basis.n_moieties(),
                moieties.len()
            )));
        }
        if let Some(i) = moieties.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(CrnError::Moieties(format!("total {i} must be positive, got {}", moieties[i])));
        }
        Ok(Self {
            network,
            basis,
            moieties,
        })
    }

    /// Totals `c = N x` of a nonnegative state.
    pub fn from_state(network: Arc<CrnNetwork>, basis: Arc<ConservationBasis>, state: &Vector) -> Result<Self, CrnError> {
        network.fluxes(state)?;
        let c = basis.matrix_f64() * state;
        Self::new(network, basis, c)
    }

    pub fn network(&self) -> &CrnNetwork {
        &self.network
    }

    pub fn basis(&self) -> &ConservationBasis {
        &self.basis
    }

    pub fn moieties(&self) -> &Vector {
        &self.moieties
    }
}

/// The square system `f(x) = [S₂ v(x, k); N x − c]` on `ℝ₊ⁿ`.
#[derive(Debug, Clone)]
pub struct SteadyStateProblem {
    target: SteadyStateTarget,
    domain: BoxDomain,
    s2: Matrix,
    n: Matrix,
}

pub fn steady_state_problem(target: &SteadyStateTarget) -> SteadyStateProblem {
    let net = target.network();
    let basis = target.basis();
    let s = net.stoichiometry_f64();
    let dependent = basis.dependent_species();
    let s2 = Matrix::from_fn(dependent.len(), net.n_reactions(), |r, j| s[(dependent[r], j)]);
    SteadyStateProblem {
        target: target.clone(),
        domain: BoxDomain::nonnegative(net.n_species()),
        s2,
        n: basis.matrix_f64(),
    }
}

impl SteadyStateProblem {
    pub fn target(&self) -> &SteadyStateTarget {
        &self.target
    }

    /// `S₂`: rows of `S` for the non-pivot species.
    pub fn reduced_stoichiometry(&self) -> &Matrix {
        &self.s2
    }

    pub fn conservation_matrix(&self) -> &Matrix {
        &self.n
    }

    /// `‖N x − c‖`.
    pub fn moiety_residual(&self, x: &Vector) -> f64 {
        (&self.n * x - self.target.moieties()).norm()
    }
}

impl RootProblem for SteadyStateProblem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn eval_residual(&self, x: &Vector) -> Vector {
        let v = self.target.network().fluxes_unchecked(x);
        let top = &self.s2 * v;
        let bottom = &self.n * x - self.target.moieties();
        let mut f = Vector::zeros(top.len() + bottom.len());
        f.rows_mut(0, top.len()).copy_from(&top);
        f.rows_mut(top.len(), bottom.len()).copy_from(&bottom);
        f
    }

    fn eval_jacobian(&self, x: &Vector) -> Matrix {
        let jz = self.target.network().flux_jacobian_unchecked(x);
        let top = &self.s2 * jz;
        let (q, p) = (top.nrows(), self.n.nrows());
        let mut jac = Matrix::zeros(q + p, x.len());
        jac.rows_mut(0, q).copy_from(&top);
        jac.rows_mut(q, p).copy_from(&self.n);
        jac
    }
}

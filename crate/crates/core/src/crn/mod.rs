//! Mass-action chemical reaction networks.
//!
//! A network with stoichiometric matrix `S` and rate constants `k` evolves as
//! `ẋ = S v(x, k)` with `v_j = k_j ∏ x_i^{p_ij}`. On a compatibility class
//! `N x = c` its stable state solves the square system built by
//! [`steady_state_problem`].

mod conservation;
mod parse;
mod sampling;
mod steady;

pub use conservation::{conservation_basis, extreme_conservation_vectors, rank, ConservationBasis};
pub use parse::{parse_model, parse_moieties, parse_network, parse_state, ModelFile};
pub use sampling::{nnls, sample_on_scc, sample_on_scc_with, NnlsResult};
pub use steady::{steady_state_problem, SteadyStateProblem, SteadyStateTarget};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrnError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: reaction has {units} reactant units (at most 2 allowed)")]
    TooManyReactants { line: usize, units: u32 },
    #[error("line {line}: unknown species '{name}'")]
    UnknownSpecies { line: usize, name: String },
    #[error("line {line}: rate constant must be positive and finite, got {rate}")]
    NonPositiveRate { line: usize, rate: f64 },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("network is not weakly elemented: {0}")]
    NotWeaklyElemented(String),
    #[error("concentrations must be nonnegative (species {index} is {value})")]
    NegativeConcentration { index: usize, value: f64 },
    #[error("moiety totals: {0}")]
    Moieties(String),
    #[error("could not sample a point on the compatibility class after {attempts} attempts")]
    SamplingFailed { attempts: usize },
}

/// One mass-action reaction. Multiplicity lists hold `(species, count)` with
/// distinct species.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    pub rate: f64,
}

impl Reaction {
    pub fn new(reactants: Vec<(usize, u32)>, products: Vec<(usize, u32)>, rate: f64) -> Result<Self, CrnError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(CrnError::NonPositiveRate { line: 0, rate });
        }
        let reactants = merge_terms(reactants);
        let units: u32 = reactants.iter().map(|&(_, m)| m).sum();
        if units > 2 {
            return Err(CrnError::TooManyReactants { line: 0, units });
        }
        Ok(Self {
            reactants,
            products: merge_terms(products),
            rate,
        })
    }

    pub fn reactant_units(&self) -> u32 {
        self.reactants.iter().map(|&(_, m)| m).sum()
    }

    /// `∏ x_i^{p_ij}` with `0⁰ = 1`.
    fn monomial(&self, x: &Vector) -> f64 {
        self.reactants.iter().map(|&(i, m)| x[i].powi(m as i32)).product()
    }
}

fn merge_terms(terms: Vec<(usize, u32)>) -> Vec<(usize, u32)> {
    let mut merged: Vec<(usize, u32)> = Vec::with_capacity(terms.len());
    for (s, m) in terms {
        if m == 0 {
            continue;
        }
        match merged.iter_mut().find(|(t, _)| *t == s) {
            Some(entry) => entry.1 += m,
            None => merged.push((s, m)),
        }
    }
    merged
}

/// Species, reactions and the integer stoichiometric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    stoich: DMatrix<i64>,
    stoich_f: Matrix,
}

impl CrnNetwork {
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, CrnError> {
        let n = species.len();
        let r = reactions.len();
        if n == 0 || r == 0 {
            return Err(CrnError::Invalid("network needs at least one species and one reaction".into()));
        }
        for (i, name) in species.iter().enumerate() {
            if species[..i].contains(name) {
                return Err(CrnError::Invalid(format!("duplicate species '{name}'")));
            }
        }
        let mut stoich = DMatrix::<i64>::zeros(n, r);
        for (j, rx) in reactions.iter().enumerate() {
            if let Some(&(i, _)) = rx.reactants.iter().chain(&rx.products).find(|&&(i, _)| i >= n) {
                return Err(CrnError::Invalid(format!("reaction {j} references species index {i}")));
            }
            for &(i, m) in &rx.reactants {
                stoich[(i, j)] -= m as i64;
            }
            for &(i, m) in &rx.products {
                stoich[(i, j)] += m as i64;
            }
        }
        let stoich_f = stoich.map(|v| v as f64);
        Ok(Self {
            species,
            reactions,
            stoich,
            stoich_f,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn rates(&self) -> Vector {
        Vector::from_iterator(self.n_reactions(), self.reactions.iter().map(|r| r.rate))
    }

    /// `S` as an `n × r` integer matrix.
    pub fn stoichiometry(&self) -> &DMatrix<i64> {
        &self.stoich
    }

    pub fn stoichiometry_f64(&self) -> &Matrix {
        &self.stoich_f
    }

    fn check_state(&self, x: &Vector) -> Result<(), CrnError> {
        if x.len() != self.n_species() {
            return Err(CrnError::Invalid(format!(
                "state has {} entries, network has {} species",
                x.len(),
                self.n_species()
            )));
        }
        match x.iter().position(|&v| !(v >= 0.0)) {
            Some(index) => Err(CrnError::NegativeConcentration { index, value: x[index] }),
            None => Ok(()),
        }
    }

    /// Reaction fluxes `v(x, k)`.
    pub fn fluxes(&self, x: &Vector) -> Result<Vector, CrnError> {
        self.check_state(x)?;
        Ok(self.fluxes_unchecked(x))
    }

    pub(crate) fn fluxes_unchecked(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.n_reactions(), self.reactions.iter().map(|r| r.rate * r.monomial(x)))
    }

    /// `diag(k)·J_z(x)`, the `r × n` derivative of the fluxes.
    pub fn flux_jacobian(&self, x: &Vector) -> Result<Matrix, CrnError> {
        self.check_state(x)?;
        Ok(self.flux_jacobian_unchecked(x))
    }

    pub(crate) fn flux_jacobian_unchecked(&self, x: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(self.n_reactions(), self.n_species());
        for (j, rx) in self.reactions.iter().enumerate() {
            for (a, &(i, m)) in rx.reactants.iter().enumerate() {
                let own = m as f64 * x[i].powi(m as i32 - 1);
                let others: f64 = rx
                    .reactants
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .map(|(_, &(l, ml))| x[l].powi(ml as i32))
                    .product();
                jac[(j, i)] = rx.rate * own * others;
            }
        }
        jac
    }

    /// Right-hand side `S v(x, k)` of the kinetic ODE.
    pub fn rhs(&self, x: &Vector) -> Result<Vector, CrnError> {
        self.check_state(x)?;
        Ok(self.rhs_unchecked(x))
    }

    pub(crate) fn rhs_unchecked(&self, x: &Vector) -> Vector {
        &self.stoich_f * self.fluxes_unchecked(x)
    }

    pub(crate) fn rhs_jacobian_unchecked(&self, x: &Vector) -> Matrix {
        &self.stoich_f * self.flux_jacobian_unchecked(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn net(text: &str) -> CrnNetwork {
        parse_network(text).unwrap()
    }

    #[test]
    fn flux_examples() {
        let n = net("reaction 3 : A + B -> C");
        assert_eq!(n.fluxes(&v(&[2.0, 5.0, 0.0])).unwrap(), v(&[30.0]));

        let n = net("reaction 1 : 2 A -> B");
        assert_eq!(n.fluxes(&v(&[3.0, 0.0])).unwrap(), v(&[9.0]));

        let n = net("reaction 4 : A + B -> C\nreaction 2 : C -> A");
        assert_eq!(n.fluxes(&v(&[0.0, 5.0, 1.0])).unwrap(), v(&[0.0, 2.0]));
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        // Production from nothing has an empty monomial.
        let n = net("species A\nreaction 1.5 : -> A\nreaction 1 : A ->");
        assert_eq!(n.fluxes(&v(&[0.0])).unwrap(), v(&[1.5, 0.0]));
    }

    #[test]
    fn negative_state_is_rejected() {
        let n = net("reaction 1 : A -> B");
        assert!(matches!(
            n.fluxes(&v(&[-1.0, 0.0])),
            Err(CrnError::NegativeConcentration { index: 0, .. })
        ));
        assert!(n.flux_jacobian(&v(&[0.0, -1e-300])).is_err());
    }

    #[test]
    fn flux_jacobian_examples() {
        let n = net("reaction 1 : 2 A -> B");
        assert_eq!(n.flux_jacobian(&v(&[3.0, 0.0])).unwrap()[(0, 0)], 6.0);

        let n = net("reaction 2 : A + B -> C");
        let j = n.flux_jacobian(&v(&[2.0, 5.0, 0.0])).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)], j[(0, 2)]), (10.0, 4.0, 0.0));
    }

    #[test]
    fn repeated_reactant_terms_merge() {
        let r = Reaction::new(vec![(0, 1), (0, 1)], vec![(1, 1)], 1.0).unwrap();
        assert_eq!(r.reactants, vec![(0, 2)]);
        assert!(Reaction::new(vec![(0, 2), (1, 1)], vec![], 1.0).is_err());
        assert!(Reaction::new(vec![(0, 1)], vec![], 0.0).is_err());
    }
}

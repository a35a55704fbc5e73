//! Box-constrained root finding with the NLPC method.
//!
//! The solver alternates projected Newton steps with projected gradient
//! steps on `Θ(x) = ½‖f(x)‖²`. Iterates are kept feasible by a non-linear
//! projection that reverts each infeasible coordinate to its current value
//! instead of clamping it onto the boundary.
//!
//! The [`crn`] module builds such systems from mass-action chemical reaction
//! networks (steady states on a stoichiometric compatibility class), and
//! [`dynamics`] integrates the same networks in time as a baseline.

// `!(v >= 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod crn;
pub mod dynamics;
pub mod linalg;
pub mod networks;
pub mod problem;
pub mod projector;
pub mod solver;

pub use crn::{ConservationBasis, CrnError, CrnNetwork, Reaction, SteadyStateTarget};
pub use dynamics::{IntegratorConfig, IntegratorError, Trajectory};
pub use problem::{FnProblem, ProblemError, RootProblem};
pub use projector::{BoxDomain, DomainError, IndexSets, ProjectorKind};
pub use solver::{IterationRecord, SolveOutcome, SolveStatus, SolverConfig, StepKind};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

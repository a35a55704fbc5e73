//! Experiment drivers behind the command-line tool: repeated solves from
//! sampled starts, the NLPC/dynamics comparison and the projector ablation.
//!
//! Starts are independent and run on the rayon pool; results are collected
//! in start order so the CSV output does not depend on scheduling.

use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::crn::{
    conservation_basis, parse_model, sample_on_scc_with, steady_state_problem, ConservationBasis, CrnError, CrnNetwork,
    ModelFile, SteadyStateProblem, SteadyStateTarget,
};
use crate::dynamics::{dynamic_steady_state, IntegratorConfig, IntegratorError};
use crate::problem::RootProblem;
use crate::projector::ProjectorKind;
use crate::solver::{nlpc_solve_with_restarts, sci, SolveError, SolveOutcome, SolverConfig};
use crate::Vector;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Network(#[from] CrnError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("{0}")]
    Spec(String),
}

/// A parsed network prepared for steady-state solving.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub network: Arc<CrnNetwork>,
    pub basis: Arc<ConservationBasis>,
    pub target: SteadyStateTarget,
    pub problem: Arc<SteadyStateProblem>,
    /// Full initial state when one was given through `conc` lines.
    pub initial_state: Option<Vector>,
}

impl Model {
    /// Builds the model from network text. Moiety totals come from explicit
    /// `moiety` lines when present, otherwise from `conc` lines (`c = N x`).
    pub fn from_text(name: &str, text: &str) -> Result<Self, BenchError> {
        Self::from_file(name, parse_model(text)?, None, None)
    }

    /// As [`Self::from_text`], with totals or a state from separate files
    /// taking precedence over lines in the network file.
    pub fn from_file(
        name: &str,
        file: ModelFile,
        moieties: Option<Vec<(usize, f64)>>,
        state: Option<Vec<(usize, f64)>>,
    ) -> Result<Self, BenchError> {
        let network = Arc::new(file.network);
        let basis = Arc::new(conservation_basis(&network)?);
        let n = network.n_species();
        let state_entries = state.unwrap_or(file.concentrations);
        let initial_state = if state_entries.is_empty() {
            None
        } else {
            let mut x = Vector::zeros(n);
            for (i, v) in state_entries {
                x[i] = v;
            }
            if let Some(i) = x.iter().position(|&v| !(v >= 0.0)) {
                return Err(CrnError::NegativeConcentration { index: i, value: x[i] }.into());
            }
            Some(x)
        };
        let moiety_entries = moieties.unwrap_or(file.moieties);
        let target = if !moiety_entries.is_empty() {
            let p = basis.n_moieties();
            let mut c = Vector::from_element(p, f64::NAN);
            for (i, v) in moiety_entries {
                if i >= p {
                    return Err(CrnError::Moieties(format!("index {i} out of range (network has {p} moieties)")).into());
                }
                c[i] = v;
            }
            if let Some(i) = c.iter().position(|v| v.is_nan()) {
                return Err(CrnError::Moieties(format!("no total given for moiety {i}")).into());
            }
            SteadyStateTarget::new(network.clone(), basis.clone(), c)?
        } else if let Some(x) = &initial_state {
            SteadyStateTarget::from_state(network.clone(), basis.clone(), x)?
        } else if basis.n_moieties() == 0 {
            SteadyStateTarget::new(network.clone(), basis.clone(), Vector::zeros(0))?
        } else {
            return Err(BenchError::Spec(
                "moiety totals are required: add 'moiety' or 'conc' lines, or pass --moieties/--state".into(),
            ));
        };
        let problem = Arc::new(steady_state_problem(&target));
        Ok(Self {
            name: name.to_string(),
            network,
            basis,
            target,
            problem,
            initial_state,
        })
    }

    pub fn bundled(name: &str) -> Result<Self, BenchError> {
        let net = crate::networks::by_name(name).ok_or_else(|| BenchError::Spec(format!("no bundled network '{name}'")))?;
        Self::from_text(name, net.text)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub starts: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub integrator: IntegratorConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            starts: 50,
            seed: 0,
            solver: SolverConfig::default(),
            integrator: IntegratorConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.starts == 0 {
            return Err(BenchError::Spec("at least one start is required".into()));
        }
        self.solver.validate().map_err(SolveError::from)?;
        self.integrator.validate()?;
        Ok(())
    }
}

/// Seed of start `index`, derived from the master seed with SplitMix64.
pub fn start_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The first draw of a start's sampler is its initial point; later draws
/// feed restarts.
fn start_sampler(model: &Model, seed: u64) -> impl FnMut() -> Option<Vector> + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move || sample_on_scc_with(&model.target, &mut rng).ok()
}

pub fn initial_point(model: &Model, seed: u64) -> Option<Vector> {
    start_sampler(model, seed)()
}

#[derive(Debug, Clone)]
pub struct StartResult {
    pub start_index: usize,
    pub seed: u64,
    pub outcome: SolveOutcome,
    pub wall_time_s: f64,
}

fn solve_start(model: &Model, spec: &ExperimentSpec, solver: &SolverConfig, index: usize) -> Result<StartResult, BenchError> {
    let seed = start_seed(spec.seed, index);
    let sampler = start_sampler(model, seed);
    let clock = Instant::now();
    let outcome = nlpc_solve_with_restarts(model.problem.as_ref(), sampler, solver)?;
    let wall_time_s = clock.elapsed().as_secs_f64();
    Ok(StartResult {
        start_index: index,
        seed,
        outcome,
        wall_time_s,
    })
}

/// Solves from `spec.starts` sampled starts with the spec's solver settings.
pub fn run_solve(model: &Model, spec: &ExperimentSpec) -> Result<Vec<StartResult>, BenchError> {
    spec.validate()?;
    (0..spec.starts)
        .into_par_iter()
        .map(|i| solve_start(model, spec, &spec.solver, i))
        .collect()
}

pub const SOLVE_CSV_HEADER: &str =
    "start_index,seed,status,iterations,restarts,wall_time_s,residual_norm,zero_component_fraction";

pub fn write_solve_csv<W: Write>(model: &Model, rows: &[StartResult], mut out: W) -> io::Result<()> {
    writeln!(out, "{SOLVE_CSV_HEADER}")?;
    let n = model.network.n_species() as f64;
    for r in rows {
        let zeros = r.outcome.point.iter().filter(|&&v| v == 0.0).count() as f64;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.start_index,
            r.seed,
            r.outcome.status.name(),
            r.outcome.iterations,
            r.outcome.restarts,
            sci(r.wall_time_s),
            sci(r.outcome.residual_norm),
            sci(zeros / n)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Nlpc,
    Dynamic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nlpc => "nlpc",
            Method::Dynamic => "dynamic",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub start_index: usize,
    pub seed: u64,
    pub method: Method,
    /// Solver status for NLPC; "ok" or the integrator error for dynamics.
    pub status: String,
    pub wall_time_s: f64,
    /// `‖f(x)‖` through the model's steady-state problem.
    pub residual_norm: f64,
    pub point: Option<Vector>,
}

/// Runs NLPC and the dynamic baseline from the same sampled starts.
pub fn run_compare(model: &Model, spec: &ExperimentSpec) -> Result<Vec<CompareRow>, BenchError> {
    spec.validate()?;
    let per_start: Vec<Result<[CompareRow; 2], BenchError>> = (0..spec.starts)
        .into_par_iter()
        .map(|i| {
            let nlpc = solve_start(model, spec, &spec.solver, i)?;
            let seed = nlpc.seed;
            let x0 = initial_point(model, seed).ok_or(SolveError::NoStartingPoint)?;
            let clock = Instant::now();
            let dynamic = dynamic_steady_state(&model.network, &x0, &spec.integrator);
            let wall_time_s = clock.elapsed().as_secs_f64();
            let (status, residual_norm, point) = match dynamic {
                Ok(x) => ("ok".to_string(), residual(model.problem.as_ref(), &x), Some(x)),
                Err(e) => (format!("error: {e}"), f64::NAN, None),
            };
            Ok([
                CompareRow {
                    start_index: i,
                    seed,
                    method: Method::Nlpc,
                    status: nlpc.outcome.status.name().to_string(),
                    wall_time_s: nlpc.wall_time_s,
                    residual_norm: residual(model.problem.as_ref(), &nlpc.outcome.point),
                    point: Some(nlpc.outcome.point),
                },
                CompareRow {
                    start_index: i,
                    seed,
                    method: Method::Dynamic,
                    status,
                    wall_time_s,
                    residual_norm,
                    point,
                },
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * spec.starts);
    for pair in per_start {
        rows.extend(pair?);
    }
    Ok(rows)
}

/// Shared residual evaluator for both methods.
pub fn residual<P: RootProblem + ?Sized>(problem: &P, x: &Vector) -> f64 {
    problem.residual_norm(x).unwrap_or(f64::NAN)
}

pub const COMPARE_CSV_HEADER: &str = "start_index,seed,method,status,wall_time_s,residual_norm";

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{COMPARE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.start_index,
            r.seed,
            r.method.name(),
            r.status.replace(',', ";"),
            sci(r.wall_time_s),
            sci(r.residual_norm)
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub start_index: usize,
    pub variant: ProjectorKind,
    pub restarts: usize,
    pub max_zero_component_pct: f64,
    pub max_cond_estimate_log10: f64,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Solves every start with both projectors, paired by start seed.
pub fn run_ablation(model: &Model, spec: &ExperimentSpec) -> Result<Vec<AblationRow>, BenchError> {
    spec.validate()?;
    let n = model.network.n_species() as f64;
    let per_start: Vec<Result<Vec<AblationRow>, BenchError>> = (0..spec.starts)
        .into_par_iter()
        .map(|i| {
            [ProjectorKind::Nonlinear, ProjectorKind::Orthogonal]
                .into_iter()
                .map(|variant| {
                    let solver = SolverConfig {
                        projector: variant,
                        ..spec.solver.clone()
                    };
                    let r = solve_start(model, spec, &solver, i)?;
                    Ok(AblationRow {
                        start_index: i,
                        variant,
                        restarts: r.outcome.restarts,
                        max_zero_component_pct: 100.0 * r.outcome.max_zero_components() as f64 / n,
                        max_cond_estimate_log10: r.outcome.max_cond_estimate().map_or(f64::NAN, f64::log10),
                        converged: r.outcome.converged(),
                        wall_time_s: r.wall_time_s,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * spec.starts);
    for pair in per_start {
        rows.extend(pair?);
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str =
    "start_index,variant,restarts,max_zero_component_pct,max_cond_estimate_log10,converged";

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{ABLATION_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.start_index,
            r.variant.name(),
            r.restarts,
            sci(r.max_zero_component_pct),
            sci(r.max_cond_estimate_log10),
            r.converged
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..100).map(|i| start_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_eq!(start_seed(7, 3), seeds[3]);
        assert_ne!(start_seed(8, 3), seeds[3]);
    }

    #[test]
    fn model_requires_totals() {
        let err = Model::from_text("x", "reaction 1 : A -> B\nreaction 1 : B -> A").unwrap_err();
        assert!(matches!(err, BenchError::Spec(_)));
        let m = Model::from_text("x", "reaction 1 : A -> B\nreaction 1 : B -> A\nmoiety 0 4").unwrap();
        assert_eq!(m.target.moieties().as_slice(), &[4.0]);
        assert!(Model::from_text("x", "reaction 1 : A -> B\nreaction 1 : B -> A\nmoiety 1 4").is_err());
    }

    #[test]
    fn explicit_moieties_override_state() {
        let m = Model::from_text("x", "reaction 1 : A -> B\nreaction 1 : B -> A\nconc A 1\nmoiety 0 5").unwrap();
        assert_eq!(m.target.moieties().as_slice(), &[5.0]);
        assert_eq!(m.initial_state.as_ref().unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn all_bundled_networks_load() {
        for net in crate::networks::ALL {
            let m = Model::bundled(net.name).unwrap();
            assert!(m.basis.n_moieties() >= 1, "{}", net.name);
        }
    }
}

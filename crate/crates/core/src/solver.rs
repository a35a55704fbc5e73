//! The NLPC iteration: projected Newton steps with Armijo backtracking on
//! `‖f‖`, falling back to projected gradient steps on `Θ = ½‖f‖²`.

use std::io::{self, Write};

use thiserror::Error;

use crate::linalg::Lu;
use crate::problem::{ProblemError, RootProblem};
use crate::projector::ProjectorKind;
use crate::Vector;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid solver parameter {name} = {value}: {reason}")]
    Invalid { name: &'static str, value: f64, reason: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("the initial-point source produced no points")]
    NoStartingPoint,
}

/// Parameters of the iteration. Defaults follow the CRN experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop once `‖f(x)‖ ≤ tau`.
    pub tau: f64,
    /// Backtracking base; trial steps are `alpha^j`, `j = 0, 1, …`.
    pub alpha: f64,
    pub sigma_newton: f64,
    pub sigma_gradient: f64,
    /// Anti-stall constant comparing moved and shrinkable displacements.
    pub rho: f64,
    /// `J`: Newton trials are `j = 0..=J`.
    pub max_newton_backtracks: usize,
    /// Number of stepsizes tried before a forced gradient step.
    pub max_gradient_backtracks: usize,
    pub max_iterations: usize,
    pub max_restarts: usize,
    pub normalize_gradient: bool,
    /// Starting points whose Jacobian condition estimate is not below this
    /// are discarded.
    pub jacobian_condition_limit: f64,
    /// Threshold on `‖P(x − ∇Θ(x)) − x‖` below which a non-root is declared
    /// stationary.
    pub stationarity_tol: f64,
    pub projector: ProjectorKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1e-12,
            alpha: 0.79,
            sigma_newton: 1e-4,
            sigma_gradient: 1e-4,
            rho: 1e-2,
            max_newton_backtracks: 20,
            max_gradient_backtracks: 40,
            max_iterations: 250,
            max_restarts: 50,
            normalize_gradient: true,
            jacobian_condition_limit: 1e17,
            stationarity_tol: 1e-10,
            projector: ProjectorKind::Nonlinear,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let open_unit = |name, value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid { name, value, reason: "must lie in (0, 1)" })
            }
        };
        let positive = |name, value: f64| {
            if value > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid { name, value, reason: "must be positive" })
            }
        };
        let at_least_one = |name, value: usize| {
            if value >= 1 {
                Ok(())
            } else {
                Err(ConfigError::Invalid { name, value: value as f64, reason: "must be at least 1" })
            }
        };
        positive("tau", self.tau)?;
        open_unit("alpha", self.alpha)?;
        open_unit("sigma_newton", self.sigma_newton)?;
        open_unit("sigma_gradient", self.sigma_gradient)?;
        open_unit("rho", self.rho)?;
        at_least_one("max_newton_backtracks", self.max_newton_backtracks)?;
        at_least_one("max_gradient_backtracks", self.max_gradient_backtracks)?;
        at_least_one("max_iterations", self.max_iterations)?;
        positive("jacobian_condition_limit", self.jacobian_condition_limit)?;
        positive("stationarity_tol", self.stationarity_tol)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// First record of an attempt: the starting point itself.
    Start,
    Newton,
    Gradient,
    /// Gradient step taken after the backtracking budget ran out.
    GradientForced,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Start => "start",
            StepKind::Newton => "newton",
            StepKind::Gradient => "gradient",
            StepKind::GradientForced => "gradient-forced",
        }
    }
}

/// State after iteration `k` of one attempt, and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub kind: StepKind,
    /// `alpha^j` of the accepted trial; 0 for the start record.
    pub stepsize: f64,
    pub residual_norm: f64,
    pub theta: f64,
    pub zero_components: usize,
    /// Condition estimate of `J_f(x_k)` when a Newton direction was computed
    /// at this iterate.
    pub cond_estimate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    StationaryNotRoot,
    BudgetExhausted,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::StationaryNotRoot => "stationary-not-root",
            SolveStatus::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub point: Vector,
    pub residual_norm: f64,
    pub restarts: usize,
    /// Iterations summed over all attempts.
    pub iterations: usize,
    /// Status of every attempt that was run (screened-out draws excluded).
    pub attempts: Vec<SolveStatus>,
    /// Records of every attempt, each starting with a [`StepKind::Start`].
    pub trace: Vec<IterationRecord>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn max_zero_components(&self) -> usize {
        self.trace.iter().map(|r| r.zero_components).max().unwrap_or(0)
    }

    pub fn max_cond_estimate(&self) -> Option<f64> {
        self.trace
            .iter()
            .filter_map(|r| r.cond_estimate)
            .fold(None, |acc, c| Some(acc.map_or(c, |a: f64| a.max(c))))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonDirection {
    pub direction: Vector,
    pub cond_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NewtonError {
    #[error("Newton system is singular (condition estimate {cond_estimate:e})")]
    Singular { cond_estimate: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Solves `J_f(x) d = −f(x)` by pivoted LU.
pub fn newton_direction<P: RootProblem + ?Sized>(p: &P, x: &Vector) -> Result<NewtonDirection, NewtonError> {
    let f = p.residual(x)?;
    let jac = p.eval_jacobian(x);
    let lu = Lu::factor(&jac);
    let cond_estimate = lu.condition_estimate();
    let direction = lu.solve(&(-&f)).ok_or(NewtonError::Singular { cond_estimate })?;
    let solve_residual = (&jac * &direction + &f).norm();
    if !direction.iter().all(|v| v.is_finite()) || !(solve_residual <= 1e-8 * (1.0 + f.norm())) {
        return Err(NewtonError::Singular { cond_estimate });
    }
    Ok(NewtonDirection { direction, cond_estimate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedStep {
    pub point: Vector,
    pub stepsize: f64,
    pub residual_norm: f64,
}

/// Backtracks along `d`, accepting the first `j ≤ J` with
/// `‖f(𝓟(x + αʲd; x))‖ ≤ sqrt(1 − αʲσ_N)·‖f(x)‖`.
///
/// Returns `None` when all `J + 1` trials fail.
pub fn try_newton_step<P: RootProblem + ?Sized>(
    p: &P,
    x: &Vector,
    d: &Vector,
    cfg: &SolverConfig,
) -> Result<Option<AcceptedStep>, ProblemError> {
    let f_norm = p.residual_norm(x)?;
    Ok(newton_backtrack(p, x, f_norm, d, cfg))
}

fn newton_backtrack<P: RootProblem + ?Sized>(
    p: &P,
    x: &Vector,
    f_norm: f64,
    d: &Vector,
    cfg: &SolverConfig,
) -> Option<AcceptedStep> {
    let dom = p.domain();
    let mut step = 1.0;
    for _ in 0..=cfg.max_newton_backtracks {
        let candidate = dom.project_unchecked(cfg.projector, &(x + step * d), x);
        let bound = (1.0 - step * cfg.sigma_newton).sqrt() * f_norm;
        if let Ok(c_norm) = p.residual_norm(&candidate) {
            if c_norm <= bound {
                return Some(AcceptedStep {
                    point: candidate,
                    stepsize: step,
                    residual_norm: c_norm,
                });
            }
        }
        step *= cfg.alpha;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStep {
    pub point: Vector,
    pub stepsize: f64,
    /// True when no trial satisfied both acceptance conditions and the last
    /// tested point was taken anyway.
    pub forced: bool,
}

/// Projected gradient step along `−∇Θ(x)` (unit-normalized when configured).
///
/// A trial `x⁺ = 𝓟(x + αʲd; x)` is accepted when
/// `Θ(x⁺) ≤ Θ(x) + σ_G ∇Θ(x)ᵀ(x⁺ − x)` and the clamped displacement over
/// the moved coordinates is at least `ρ` times that over the shrinkable ones.
pub fn gradient_step<P: RootProblem + ?Sized>(
    p: &P,
    x: &Vector,
    cfg: &SolverConfig,
) -> Result<GradientStep, ProblemError> {
    let dom = p.domain();
    let f = p.residual(x)?;
    let theta = 0.5 * f.norm_squared();
    let grad = p.eval_jacobian(x).tr_mul(&f);
    let mut d = -&grad;
    if cfg.normalize_gradient {
        let norm = d.norm();
        if norm > 0.0 {
            d /= norm;
        }
    }
    // P_i(x_i + d_i) − x_i, independent of the trial stepsize.
    let clamp_disp: Vec<f64> = (0..x.len())
        .map(|i| dom.clamp_coord(i, x[i] + d[i]) - x[i])
        .collect();

    let mut step = 1.0;
    let mut last = x.clone();
    for _ in 0..cfg.max_gradient_backtracks {
        let candidate = dom.project_unchecked(cfg.projector, &(x + step * &d), x);
        let sufficient_decrease = match p.theta(&candidate) {
            Ok(t) => t <= theta + cfg.sigma_gradient * grad.dot(&(&candidate - x)),
            Err(_) => false,
        };
        if sufficient_decrease {
            let sets = dom.index_sets_unchecked(x, &d, step);
            let sum_sq = |idx: &[usize]| idx.iter().map(|&i| clamp_disp[i].powi(2)).sum::<f64>().sqrt();
            if sum_sq(&sets.moved) >= cfg.rho * sum_sq(&sets.shrinkable) {
                return Ok(GradientStep {
                    point: candidate,
                    stepsize: step,
                    forced: false,
                });
            }
        }
        last = candidate;
        step *= cfg.alpha;
    }
    let stepsize = step / cfg.alpha;
    // A forced step must still land on a point where f is evaluable.
    if p.residual(&last).is_err() {
        last = x.clone();
    }
    Ok(GradientStep {
        point: last,
        stepsize,
        forced: true,
    })
}

/// `‖P(x − ∇Θ(x)) − x‖ ≤ tol`, with `P` the orthogonal box projector.
pub fn is_stationary<P: RootProblem + ?Sized>(p: &P, x: &Vector, tol: f64) -> Result<bool, ProblemError> {
    Ok(stationarity_residual(p, x)? <= tol)
}

pub fn stationarity_residual<P: RootProblem + ?Sized>(p: &P, x: &Vector) -> Result<f64, ProblemError> {
    let grad = p.grad_theta(x)?;
    Ok((p.domain().project_orthogonal_unchecked(&(x - grad)) - x).norm())
}

fn count_zeros(x: &Vector) -> usize {
    x.iter().filter(|&&v| v == 0.0).count()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Newton,
    Gradient,
}

/// One NLPC run from `x0`.
pub fn nlpc_solve<P: RootProblem + ?Sized>(p: &P, x0: &Vector, cfg: &SolverConfig) -> Result<SolveOutcome, SolveError> {
    cfg.validate()?;
    let mut trace = Vec::new();
    let (status, point, iterations) = run_attempt(p, x0.clone(), cfg, &mut trace, None)?;
    let residual_norm = p.residual_norm(&point)?;
    Ok(SolveOutcome {
        status,
        point,
        residual_norm,
        restarts: 0,
        iterations,
        attempts: vec![status],
        trace,
    })
}

fn run_attempt<P: RootProblem + ?Sized>(
    p: &P,
    mut x: Vector,
    cfg: &SolverConfig,
    trace: &mut Vec<IterationRecord>,
    start_cond: Option<f64>,
) -> Result<(SolveStatus, Vector, usize), SolveError> {
    let mut f_norm = p.residual_norm(&x)?;
    trace.push(IterationRecord {
        k: 0,
        kind: StepKind::Start,
        stepsize: 0.0,
        residual_norm: f_norm,
        theta: 0.5 * f_norm * f_norm,
        zero_components: count_zeros(&x),
        cond_estimate: start_cond,
    });
    let mut phase = Phase::Newton;
    let mut k = 0;
    loop {
        if f_norm <= cfg.tau {
            return Ok((SolveStatus::Converged, x, k));
        }
        if k >= cfg.max_iterations {
            return Ok((SolveStatus::BudgetExhausted, x, k));
        }
        if phase == Phase::Newton {
            let accepted = match newton_direction(p, &x) {
                Ok(nd) => {
                    if let Some(last) = trace.last_mut() {
                        last.cond_estimate = Some(nd.cond_estimate);
                    }
                    newton_backtrack(p, &x, f_norm, &nd.direction, cfg)
                }
                Err(NewtonError::Singular { cond_estimate }) => {
                    if let Some(last) = trace.last_mut() {
                        last.cond_estimate = Some(cond_estimate);
                    }
                    None
                }
                Err(NewtonError::Problem(e)) => return Err(e.into()),
            };
            if let Some(step) = accepted {
                x = step.point;
                f_norm = step.residual_norm;
                k += 1;
                trace.push(IterationRecord {
                    k,
                    kind: StepKind::Newton,
                    stepsize: step.stepsize,
                    residual_norm: f_norm,
                    theta: 0.5 * f_norm * f_norm,
                    zero_components: count_zeros(&x),
                    cond_estimate: None,
                });
                continue;
            }
            phase = Phase::Gradient;
        }

        if is_stationary(p, &x, cfg.stationarity_tol)? {
            return Ok((SolveStatus::StationaryNotRoot, x, k));
        }
        let step = gradient_step(p, &x, cfg)?;
        x = step.point;
        f_norm = p.residual_norm(&x)?;
        k += 1;
        trace.push(IterationRecord {
            k,
            kind: if step.forced { StepKind::GradientForced } else { StepKind::Gradient },
            stepsize: step.stepsize,
            residual_norm: f_norm,
            theta: 0.5 * f_norm * f_norm,
            zero_components: count_zeros(&x),
            cond_estimate: None,
        });
        if !step.forced {
            phase = Phase::Newton;
        }
    }
}

/// Runs NLPC from points drawn from `sampler` until one attempt converges or
/// `max_restarts` restarts have been spent.
///
/// Each draw after the first counts as a restart, including draws discarded
/// by the Jacobian condition screen.
pub fn nlpc_solve_with_restarts<P, S>(p: &P, mut sampler: S, cfg: &SolverConfig) -> Result<SolveOutcome, SolveError>
where
    P: RootProblem + ?Sized,
    S: FnMut() -> Option<Vector>,
{
    cfg.validate()?;
    let mut trace = Vec::new();
    let mut attempts = Vec::new();
    let mut iterations = 0;
    let mut last_point: Option<Vector> = None;
    let mut draws = 0;

    for draw in 0..=cfg.max_restarts {
        let Some(x0) = sampler() else { break };
        draws += 1;
        p.domain().check(&x0).map_err(ProblemError::from)?;
        let cond = Lu::factor(&p.eval_jacobian(&x0)).condition_estimate();
        if !(cond < cfg.jacobian_condition_limit) {
            last_point = Some(x0);
            continue;
        }
        let (status, point, its) = run_attempt(p, x0, cfg, &mut trace, Some(cond))?;
        iterations += its;
        attempts.push(status);
        if status == SolveStatus::Converged {
            let residual_norm = p.residual_norm(&point)?;
            return Ok(SolveOutcome {
                status,
                point,
                residual_norm,
                restarts: draw,
                iterations,
                attempts,
                trace,
            });
        }
        last_point = Some(point);
    }

    let point = last_point.ok_or(SolveError::NoStartingPoint)?;
    let residual_norm = p.residual_norm(&point)?;
    Ok(SolveOutcome {
        status: SolveStatus::BudgetExhausted,
        point,
        residual_norm,
        restarts: draws - 1,
        iterations,
        attempts,
        trace,
    })
}

pub const TRACE_CSV_HEADER: &str = "k,step_kind,stepsize,residual_norm,theta,zero_components,cond_estimate";

/// Formats a float in scientific notation with 17 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            r.kind.name(),
            sci(r.stepsize),
            sci(r.residual_norm),
            sci(r.theta),
            r.zero_components,
            r.cond_estimate.map(sci).unwrap_or_default()
        )?;
    }
    Ok(())
}

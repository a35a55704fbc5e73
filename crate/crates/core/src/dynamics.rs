//! Time integration of `ẋ = S v(x, k)` for the dynamic baseline.
//!
//! The stepper is a 6-stage L-stable Rosenbrock method of order 4 with an
//! embedded order-3 error estimate and a predictive (Gustafsson) step-size
//! controller. The Jacobian is evaluated once per step and reused while a
//! step is retried with a smaller size.

use std::io::{self, Write};

use thiserror::Error;

use crate::crn::{CrnError, CrnNetwork};
use crate::linalg::Lu;
use crate::solver::sci;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator setting: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] CrnError),
    #[error("maximum number of internal steps reached at t = {time:e}")]
    MaxSteps { time: f64 },
    #[error("step size underflow at t = {time:e}")]
    StepUnderflow { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub horizon: f64,
    pub max_steps: usize,
    /// Number of equally spaced output times on `[0, horizon]`; a single
    /// sample reports only the final time.
    pub samples: usize,
    /// Stop early once `‖S v(x)‖` drops to this value.
    pub early_exit_residual: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            horizon: 2.5e7,
            max_steps: 500_000,
            samples: 2,
            early_exit_residual: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(IntegratorError::Config("tolerances must be positive".into()));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(IntegratorError::Config(format!("horizon must be finite and nonnegative, got {}", self.horizon)));
        }
        if self.samples == 0 {
            return Err(IntegratorError::Config("at least one output sample is required".into()));
        }
        if self.max_steps == 0 {
            return Err(IntegratorError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn output_times(&self) -> Vec<f64> {
        if self.horizon == 0.0 {
            return vec![0.0];
        }
        if self.samples == 1 {
            return vec![self.horizon];
        }
        let last = (self.samples - 1) as f64;
        (0..self.samples)
            .map(|i| if i + 1 == self.samples { self.horizon } else { self.horizon * i as f64 / last })
            .collect()
    }
}

/// A negative component reset to zero after an accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampEvent {
    pub time: f64,
    pub species: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub clamp_events: Vec<ClampEvent>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least one time")
    }

    pub fn write_csv<W: Write>(&self, species: &[String], mut out: W) -> io::Result<()> {
        writeln!(out, "t,{}", species.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(sci(*t)).chain(x.iter().map(|&v| sci(v))).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

// Rosenbrock coefficients (Shampine/Hairer–Wanner order 4(3), γ = 1/4).
const GAM: f64 = 0.25;
const A21: f64 = 0.1544e+01;
const A31: f64 = 0.9466785280815826e+00;
const A32: f64 = 0.2557011698983284e+00;
const A41: f64 = 0.3314825187068521e+01;
const A42: f64 = 0.2896124015972201e+01;
const A43: f64 = 0.9986419139977817e+00;
const A51: f64 = 0.1221224509226641e+01;
const A52: f64 = 0.6019134481288629e+01;
const A53: f64 = 0.1253708332932087e+02;
const A54: f64 = -0.687886036105895e+00;
const C21: f64 = -0.56688e+01;
const C31: f64 = -0.2430093356833875e+01;
const C32: f64 = -0.2063599157091915e+00;
const C41: f64 = -0.1073529058151375e+00;
const C42: f64 = -0.9594562251023355e+01;
const C43: f64 = -0.2047028614809616e+02;
const C51: f64 = 0.7496443313967647e+01;
const C52: f64 = -0.1024680431464352e+02;
const C53: f64 = -0.3399990352819905e+02;
const C54: f64 = 0.117089089320616e+02;
const C61: f64 = 0.8083246795921522e+01;
const C62: f64 = -0.7981132988064893e+01;
const C63: f64 = -0.3152159432874371e+02;
const C64: f64 = 0.1631930543123136e+02;
const C65: f64 = -0.6058818238834054e+01;

struct StepResult {
    y: Vector,
    err: f64,
}

/// One Rosenbrock step of size `h` from `y`. `None` if `I/(γh) − J` is
/// singular.
fn rosenbrock_step(net: &CrnNetwork, y: &Vector, f0: &Vector, jac: &Matrix, h: f64, cfg: &IntegratorConfig) -> Option<StepResult> {
    let n = y.len();
    let mut a = -jac;
    for i in 0..n {
        a[(i, i)] += 1.0 / (GAM * h);
    }
    let lu = Lu::factor(&a);
    let f = |x: &Vector| net.rhs_unchecked(x);

    let k1 = lu.solve(f0)?;
    let k2 = lu.solve(&(f(&(y + A21 * &k1)) + (C21 / h) * &k1))?;
    let k3 = lu.solve(&(f(&(y + A31 * &k1 + A32 * &k2)) + (C31 * &k1 + C32 * &k2) / h))?;
    let k4 = lu.solve(&(f(&(y + A41 * &k1 + A42 * &k2 + A43 * &k3)) + (C41 * &k1 + C42 * &k2 + C43 * &k3) / h))?;
    let y5 = y + A51 * &k1 + A52 * &k2 + A53 * &k3 + A54 * &k4;
    let k5 = lu.solve(&(f(&y5) + (C51 * &k1 + C52 * &k2 + C53 * &k3 + C54 * &k4) / h))?;
    let y6 = y5 + &k5;
    let e = lu.solve(&(f(&y6) + (C61 * &k1 + C62 * &k2 + C63 * &k3 + C64 * &k4 + C65 * &k5) / h))?;
    let y_new = y6 + &e;

    let mut sum = 0.0;
    for i in 0..n {
        let scale = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
        sum += (e[i] / scale).powi(2);
    }
    let err = (sum / n as f64).sqrt();
    if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
        return Some(StepResult { y: y_new, err: f64::INFINITY });
    }
    Some(StepResult { y: y_new, err })
}

struct Controller {
    first: bool,
    rejected: bool,
    h_old: f64,
    err_old: f64,
}

impl Controller {
    const SAFE: f64 = 0.9;
    const FAC_MAX: f64 = 5.0;
    const FAC_MIN: f64 = 1.0 / 6.0;

    /// Returns `(accepted, next h)`.
    fn update(&mut self, err: f64, h: f64) -> (bool, f64) {
        if !err.is_finite() {
            self.rejected = true;
            return (false, h * Self::FAC_MIN);
        }
        let mut fac = (err.powf(0.25) / Self::SAFE).clamp(Self::FAC_MIN, Self::FAC_MAX);
        let mut h_new = h / fac;
        if err <= 1.0 {
            if !self.first {
                let pred = ((self.h_old / h) * (err * err / self.err_old).powf(0.25) / Self::SAFE)
                    .clamp(Self::FAC_MIN, Self::FAC_MAX);
                fac = fac.max(pred);
                h_new = h / fac;
            }
            self.first = false;
            self.h_old = h;
            self.err_old = err.max(0.01);
            if self.rejected {
                h_new = h_new.min(h);
            }
            self.rejected = false;
            (true, h_new)
        } else {
            self.rejected = true;
            (false, h_new)
        }
    }
}

fn initial_step(y: &Vector, f0: &Vector, cfg: &IntegratorConfig) -> f64 {
    let scale = |i: usize| cfg.atol + cfg.rtol * y[i].abs();
    let n = y.len() as f64;
    let d0 = (y.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(cfg.horizon.max(f64::MIN_POSITIVE))
}

/// Integrates from `x0` over `[0, cfg.horizon]`, recording states at the
/// configured output times.
pub fn integrate(net: &CrnNetwork, x0: &Vector, cfg: &IntegratorConfig) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    net.fluxes(x0)?;

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        clamp_events: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let outputs = cfg.output_times();
    let mut t = 0.0;
    let mut y = x0.clone();
    let mut f0 = net.rhs_unchecked(&y);
    let mut h = initial_step(&y, &f0, cfg);
    let mut ctrl = Controller {
        first: true,
        rejected: false,
        h_old: h,
        err_old: 1.0,
    };

    for &t_out in &outputs {
        while t < t_out {
            if let Some(limit) = cfg.early_exit_residual {
                if f0.norm() <= limit {
                    traj.times.push(t);
                    traj.states.push(y);
                    return Ok(traj);
                }
            }
            if traj.accepted_steps + traj.rejected_steps >= cfg.max_steps {
                return Err(IntegratorError::MaxSteps { time: t });
            }
            let jac = net.rhs_jacobian_unchecked(&y);
            loop {
                let remaining = t_out - t;
                let lands = h >= remaining * (1.0 - 1e-12);
                let h_try = if lands { remaining } else { h };
                if h_try <= f64::EPSILON * t.abs().max(1.0) {
                    return Err(IntegratorError::StepUnderflow { time: t });
                }
                let (accepted, h_next) = match rosenbrock_step(net, &y, &f0, &jac, h_try, cfg) {
                    Some(step) => {
                        let (ok, h_next) = ctrl.update(step.err, h_try);
                        if ok {
                            y = step.y;
                        }
                        (ok, h_next)
                    }
                    None => {
                        ctrl.rejected = true;
                        (false, 0.5 * h_try)
                    }
                };
                if accepted {
                    traj.accepted_steps += 1;
                    t = if lands { t_out } else { t + h_try };
                    for i in 0..y.len() {
                        if y[i] < 0.0 {
                            traj.clamp_events.push(ClampEvent { time: t, species: i, value: y[i] });
                            y[i] = 0.0;
                        }
                    }
                    f0 = net.rhs_unchecked(&y);
                    // A step shortened to hit an output time does not shrink
                    // the proposal for the next one.
                    h = if lands { h_next.max(h) } else { h_next };
                    break;
                }
                traj.rejected_steps += 1;
                if traj.accepted_steps + traj.rejected_steps >= cfg.max_steps {
                    return Err(IntegratorError::MaxSteps { time: t });
                }
                h = h_next;
            }
        }
        traj.times.push(t_out);
        traj.states.push(y.clone());
    }
    Ok(traj)
}

/// Final state of [`integrate`]; no convergence test is applied.
pub fn dynamic_steady_state(net: &CrnNetwork, x0: &Vector, cfg: &IntegratorConfig) -> Result<Vector, IntegratorError> {
    let cfg = IntegratorConfig { samples: 1, ..cfg.clone() };
    Ok(integrate(net, x0, &cfg)?.final_state().clone())
}

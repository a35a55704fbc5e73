//! `nlpc`: steady states of mass-action networks from the command line.
//!
//! Exit status is 0 on success, 1 when a run finishes but some start fails
//! to converge (or the integrator fails), and 2 on usage, input or I/O
//! errors.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlpc::bench::{self, BenchError, ExperimentSpec, Method, Model};
use nlpc::crn::{parse_model, parse_moieties, parse_state};
use nlpc::dynamics::integrate;
use nlpc::{IntegratorConfig, SolverConfig};
use thiserror::Error;

use config::Options;

#[derive(Debug, Parser)]
#[command(name = "nlpc", version, about = "Steady states of mass-action networks with the NLPC method")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve from sampled starts and report one row per start.
    Solve(Options),
    /// Solve and integrate from the same starts; one row per start and method.
    Compare(Options),
    /// Solve every start with both projectors.
    Ablation(Options),
    /// Integrate the mass-action ODE and write the trajectory.
    Dynamics(Options),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: BenchError },
    #[error(transparent)]
    Run(#[from] BenchError),
    /// The run completed but did not reach its goal.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn input_error(path: &Path, e: impl Into<BenchError>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn load_model(opts: &Options) -> Result<Model, CliError> {
    let path = opts
        .network
        .as_deref()
        .ok_or_else(|| CliError::Usage("--network is required".into()))?;
    let file = parse_model(&read(path)?).map_err(|e| input_error(path, e))?;
    let moieties = match &opts.moieties {
        Some(p) => Some(parse_moieties(&read(p)?).map_err(|e| input_error(p, e))?),
        None => None,
    };
    let state = match &opts.state {
        Some(p) => Some(parse_state(&read(p)?, &file.network).map_err(|e| input_error(p, e))?),
        None => None,
    };
    let name = path.file_stem().map_or("network".into(), |s| s.to_string_lossy().into_owned());
    Model::from_file(&name, file, moieties, state).map_err(|e| input_error(path, e))
}

fn experiment(opts: &Options) -> ExperimentSpec {
    let mut solver = SolverConfig::default();
    let mut integrator = IntegratorConfig::default();
    if let Some(v) = opts.variant {
        solver.projector = v;
    }
    if let Some(v) = opts.tau {
        solver.tau = v;
    }
    if let Some(v) = opts.max_iterations {
        solver.max_iterations = v;
    }
    if let Some(v) = opts.max_restarts {
        solver.max_restarts = v;
    }
    if let Some(v) = opts.horizon {
        integrator.horizon = v;
    }
    if let Some(v) = opts.samples {
        integrator.samples = v;
    }
    if let Some(v) = opts.rtol {
        integrator.rtol = v;
    }
    if let Some(v) = opts.atol {
        integrator.atol = v;
    }
    if let Some(v) = opts.max_steps {
        integrator.max_steps = v;
    }
    integrator.early_exit_residual = opts.early_exit_residual;
    let defaults = ExperimentSpec::default();
    ExperimentSpec {
        starts: opts.starts.unwrap_or(defaults.starts),
        seed: opts.seed.unwrap_or(defaults.seed),
        solver,
        integrator,
    }
}

fn with_output(opts: &Options, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let io_error = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    match &opts.out {
        Some(path) => {
            let file = File::create(path).map_err(io_error(path))?;
            let mut out = BufWriter::new(file);
            body(&mut out).and_then(|_| out.flush()).map_err(io_error(path))
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            body(&mut out).and_then(|_| out.flush()).map_err(io_error(Path::new("<stdout>")))
        }
    }
}

fn count_failures(total: usize, failed: usize, what: &str) -> Result<(), CliError> {
    if failed == 0 {
        eprintln!("{total}/{total} {what} converged");
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} of {total} {what} did not converge")))
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Solve,
    Compare,
    Ablation,
    Dynamics,
}

impl Command {
    fn split(self) -> (Action, Options) {
        match self {
            Command::Solve(o) => (Action::Solve, o),
            Command::Compare(o) => (Action::Compare, o),
            Command::Ablation(o) => (Action::Ablation, o),
            Command::Dynamics(o) => (Action::Dynamics, o),
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let (action, mut opts) = command.split();
    if let Some(path) = opts.config.clone() {
        opts.merge_config(&read(&path)?, &path)?;
    }
    let model = load_model(&opts)?;
    let spec = experiment(&opts);
    spec.validate()?;

    match action {
        Action::Solve => {
            let rows = bench::run_solve(&model, &spec)?;
            with_output(&opts, |out| bench::write_solve_csv(&model, &rows, out))?;
            let failed = rows.iter().filter(|r| !r.outcome.converged()).count();
            count_failures(rows.len(), failed, "starts")
        }
        Action::Compare => {
            let rows = bench::run_compare(&model, &spec)?;
            with_output(&opts, |out| bench::write_compare_csv(&rows, out))?;
            let nlpc: Vec<_> = rows.iter().filter(|r| r.method == Method::Nlpc).collect();
            let failed = nlpc.iter().filter(|r| r.status != "converged").count();
            count_failures(nlpc.len(), failed, "NLPC starts")
        }
        Action::Ablation => {
            let rows = bench::run_ablation(&model, &spec)?;
            with_output(&opts, |out| bench::write_ablation_csv(&rows, out))?;
            let nonlinear: Vec<_> = rows.iter().filter(|r| r.variant == nlpc::ProjectorKind::Nonlinear).collect();
            let failed = nonlinear.iter().filter(|r| !r.converged).count();
            count_failures(nonlinear.len(), failed, "nonlinear-projector starts")
        }
        Action::Dynamics => {
            let x0 = match &model.initial_state {
                Some(x) => x.clone(),
                None => bench::initial_point(&model, bench::start_seed(spec.seed, 0))
                    .ok_or_else(|| CliError::Failed("could not sample an initial state".into()))?,
            };
            let traj = integrate(&model.network, &x0, &spec.integrator).map_err(|e| CliError::Failed(e.to_string()))?;
            with_output(&opts, |out| traj.write_csv(model.network.species(), out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlpc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Command-line options and the `key = value` config file that mirrors them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use nlpc::ProjectorKind;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Network file.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// File of `moiety <index> <value>` lines.
    #[arg(long, conflicts_with = "state")]
    pub moieties: Option<PathBuf>,
    /// File of `conc <species> <value>` lines; totals are taken from it.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Number of sampled starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` file with defaults for any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Projector used by `solve` and `compare`.
    #[arg(long, value_parser = ProjectorKind::from_str)]
    pub variant: Option<ProjectorKind>,
    /// Integration horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Stop integrating once ‖S v(x)‖ is at most this value.
    #[arg(long)]
    pub early_exit_residual: Option<f64>,
    /// Output times written by `dynamics`.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_restarts: Option<usize>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize, path: &Path) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("{}:{line}: invalid value '{value}' for '{key}'", path.display())))
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

impl Options {
    /// Fills options not given on the command line from `text`. Relative
    /// paths in the file are resolved against the file's directory.
    pub fn merge_config(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        let base = path.parent().unwrap_or(Path::new(""));
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Usage(format!("{}:{line}: expected 'key = value'", path.display())));
            };
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            let file = || base.join(value);
            match key.as_str() {
                "network" => fill(&mut self.network, file()),
                "moieties" => fill(&mut self.moieties, file()),
                "state" => fill(&mut self.state, file()),
                "out" => fill(&mut self.out, file()),
                "starts" => fill(&mut self.starts, parse(&key, value, line, path)?),
                "seed" => fill(&mut self.seed, parse(&key, value, line, path)?),
                "variant" => fill(&mut self.variant, parse(&key, value, line, path)?),
                "horizon" => fill(&mut self.horizon, parse(&key, value, line, path)?),
                "early-exit-residual" => fill(&mut self.early_exit_residual, parse(&key, value, line, path)?),
                "samples" => fill(&mut self.samples, parse(&key, value, line, path)?),
                "tau" => fill(&mut self.tau, parse(&key, value, line, path)?),
                "max-iterations" => fill(&mut self.max_iterations, parse(&key, value, line, path)?),
                "max-restarts" => fill(&mut self.max_restarts, parse(&key, value, line, path)?),
                "rtol" => fill(&mut self.rtol, parse(&key, value, line, path)?),
                "atol" => fill(&mut self.atol, parse(&key, value, line, path)?),
                "max-steps" => fill(&mut self.max_steps, parse(&key, value, line, path)?),
                "config" => return Err(CliError::Usage(format!("{}:{line}: config files cannot nest", path.display()))),
                other => return Err(CliError::Usage(format!("{}:{line}: unknown key '{other}'", path.display()))),
            }
        }
        if self.moieties.is_some() && self.state.is_some() {
            return Err(CliError::Usage("--moieties and --state cannot be combined".into()));
        }
        Ok(())
    }
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otfair_cli::commands::{self, VerifyOptions};
use otfair_cli::{CliError, FileConfig, Overrides, Result, RunConfig};

/// Optimal-transport score fairness: move group score distributions toward
/// their common barycenter by a tunable degree theta.
#[derive(Parser)]
#[command(name = "otfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Append fair scores to the input and write the fairness report.
    Transform(Common),
    /// Write the fairness report only.
    Audit(Common),
    /// Tabulate the fairness/utility trade-off over several thetas.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated thetas in [0, 1].
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Write the barycenter (quantile grid, or weighted support for vector
    /// scores).
    Barycenter(Common),
    /// Generate a synthetic population (two-gaussian unless [synth] is
    /// configured).
    Synth(Common),
    /// Cross-check transport computations on a small input against
    /// brute-force oracles.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_barycenter: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON report file.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    score_columns: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    group_columns: Option<Vec<String>>,
    #[arg(long)]
    theta: Option<f64>,
    /// Per-group theta as GROUP=THETA, group values joined with '/'.
    #[arg(long = "theta-override", value_name = "GROUP=THETA")]
    theta_overrides: Vec<String>,
    /// size, uniform or explicit.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    min_group_size: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    support_size: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn resolve(&self, thetas: Option<Vec<f64>>) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let theta_overrides = self
            .theta_overrides
            .iter()
            .map(|s| {
                let (k, v) = s
                    .rsplit_once('=')
                    .ok_or_else(|| CliError::validation(format!("--theta-override {s:?} is not GROUP=THETA")))?;
                let t = v
                    .parse::<f64>()
                    .map_err(|_| CliError::validation(format!("--theta-override {s:?}: {v:?} is not a number")))?;
                Ok((k.to_string(), t))
            })
            .collect::<Result<Vec<_>>>()?;
        let flags = Overrides {
            input: self.input.clone(),
            id_column: self.id_column.clone(),
            score_columns: self.score_columns.clone(),
            group_columns: self.group_columns.clone(),
            theta: self.theta,
            theta_overrides,
            weights: self.weights.clone(),
            grid_size: self.grid_size,
            min_group_size: self.min_group_size,
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
            support_size: self.support_size,
            threshold: self.threshold,
            top_k: self.top_k,
            seed: self.seed,
            output: self.output.clone(),
            report: self.report.clone(),
            thetas,
        };
        RunConfig::resolve(file, flags)
    }
}

fn read_input(cfg: &RunConfig) -> Result<Vec<u8>> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::validation("no input file given (use --input or `input` in the config)"))?;
    fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn warn(report: &otfair_core::FairnessReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform(c) => {
            let cfg = c.resolve(None)?;
            let out = commands::transform(&read_input(&cfg)?, &cfg)?;
            warn(&out.report);
            emit(cfg.output.as_deref(), &out.csv)?;
            if let Some(p) = &cfg.report {
                emit(Some(p), &out.report_json)?;
            }
        }
        Command::Audit(c) => {
            let cfg = c.resolve(None)?;
            let (report, json) = commands::audit(&read_input(&cfg)?, &cfg)?;
            warn(&report);
            emit(c.output.as_deref().or(cfg.report.as_deref()), &json)?;
        }
        Command::Sweep { common, thetas } => {
            let cfg = common.resolve(thetas)?;
            let (_, table) = commands::sweep(&read_input(&cfg)?, &cfg)?;
            emit(common.output.as_deref().or(cfg.sweep_output.as_deref()), &table)?;
        }
        Command::Barycenter(c) => {
            let cfg = c.resolve(None)?;
            let table = commands::barycenter(&read_input(&cfg)?, &cfg)?;
            emit(c.output.as_deref().or(cfg.barycenter_output.as_deref()), &table)?;
        }
        Command::Synth(c) => {
            let cfg = c.resolve(None)?;
            emit(cfg.output.as_deref(), &commands::synth(&cfg)?)?;
        }
        Command::Verify {
            common,
            corrupt_barycenter,
        } => {
            let cfg = common.resolve(None)?;
            let checks = commands::verify(&read_input(&cfg)?, &cfg, VerifyOptions { corrupt_barycenter })?;
            let mut text = String::new();
            for c in &checks {
                text.push_str(&c.line());
                text.push('\n');
            }
            emit(common.output.as_deref(), text.as_bytes())?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

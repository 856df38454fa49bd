use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infolim::io::{self, MdpDocument, PolicyDocument};
use infolim::{build_custom_grid, build_paper_grid, uniform_policy, Error, Mdp};
use infolim_cli::{
    evaluate, exit_kind, parse_beta_list, run_algorithm, sweep, sweep_csv, Algorithm, BetaArg,
    ExitKind, SolveInputs, SolveReportJson, DEFAULT_HORIZON,
};

#[derive(Parser)]
#[command(name = "infolim", version, about = "Information-limited MDP solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a grid world and write it as an MDP file.
    Build {
        /// Use the default 20-state grid.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        paper: bool,
        /// Grid configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one MDP with one algorithm and β.
    Solve {
        #[command(flatten)]
        source: MdpSource,
        #[arg(long, value_enum)]
        alg: Algorithm,
        #[arg(long, default_value = "inf")]
        beta: BetaArg,
        #[command(flatten)]
        inputs: InputFiles,
        /// Policy output (actions × states matrix); standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report output; standard error when absent.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the prior the policy is measured against.
        #[arg(long)]
        prior_out: Option<PathBuf>,
    },
    /// Solve over a list of β values and write one CSV row per (algorithm, β).
    Sweep {
        #[command(flatten)]
        source: MdpSource,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        alg: Vec<Algorithm>,
        /// Comma separated; `inf` allowed; empty for a header-only table.
        #[arg(long, allow_hyphen_values = true)]
        beta_list: String,
        #[command(flatten)]
        inputs: InputFiles,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a policy analytically and optionally by rollouts.
    Eval {
        #[command(flatten)]
        source: MdpSource,
        #[arg(long)]
        policy: PathBuf,
        /// Prior for the information cost; uniform over admissible actions when absent.
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long, default_value = "inf")]
        beta: BetaArg,
        #[arg(long, default_value_t = 0)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MdpSource {
    /// MDP interchange file.
    #[arg(long, conflicts_with = "paper", required_unless_present = "paper")]
    mdp: Option<PathBuf>,
    /// Use the default 20-state grid instead of a file.
    #[arg(long)]
    paper: bool,
}

impl MdpSource {
    fn load(&self) -> Result<Mdp, Error> {
        match &self.mdp {
            Some(path) => io::read_mdp(path),
            None => Ok(build_paper_grid().0),
        }
    }
}

#[derive(Args)]
struct InputFiles {
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    penalty: Option<PathBuf>,
    #[arg(long, default_value_t = infolim::free_energy::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = infolim::free_energy::DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

impl InputFiles {
    fn load(&self, mdp: &Mdp) -> Result<SolveInputs, Error> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Invalid(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(SolveInputs {
            prior: self
                .prior
                .as_ref()
                .map(|p| io::read_policy(p, mdp))
                .transpose()?,
            weights: self
                .weights
                .as_ref()
                .map(|p| io::read_weights(p, mdp))
                .transpose()?,
            penalty: self
                .penalty
                .as_ref()
                .map(|p| io::read_penalty(p, mdp))
                .transpose()?,
            tol: self.tol,
            max_iters: self.max_iters,
        })
    }

    fn describe(path: &Option<PathBuf>, default: &str) -> String {
        path.as_ref()
            .map_or_else(|| default.to_string(), |p| p.display().to_string())
    }
}

enum Failure {
    Lib(Error),
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<S: serde::Serialize>(value: &S) -> Result<String, Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Build { config, out, .. } => {
            let mdp: Mdp = match config {
                Some(path) => build_custom_grid(&io::read_grid_config(path)?)?.0,
                None => build_paper_grid().0,
            };
            emit(out.as_deref(), &json(&MdpDocument::from_mdp(&mdp))?)?;
        }
        Command::Solve {
            source,
            alg,
            beta,
            inputs,
            out,
            report,
            prior_out,
        } => {
            let mdp = source.load()?;
            let loaded = inputs.load(&mdp)?;
            let outcome = run_algorithm(&mdp, alg, beta, &loaded)?;
            let summary = SolveReportJson::new(
                alg,
                beta,
                &outcome,
                InputFiles::describe(&inputs.prior, "uniform over admissible actions"),
                InputFiles::describe(&inputs.weights, "uniform over non-terminal states"),
            );
            emit(
                out.as_deref(),
                &json(&PolicyDocument::from_policy(&mdp, &outcome.policy))?,
            )?;
            if let Some(path) = prior_out {
                io::write_policy(path, &mdp, &outcome.prior)?;
            }
            let text = json(&summary)?;
            match report {
                Some(path) => std::fs::write(path, text).map_err(Error::from)?,
                None => eprint!("{text}"),
            }
        }
        Command::Sweep {
            source,
            alg,
            beta_list,
            inputs,
            out,
        } => {
            let betas = parse_beta_list(&beta_list).map_err(Error::Invalid)?;
            let mdp = source.load()?;
            let loaded = inputs.load(&mdp)?;
            let rows = sweep(&mdp, &alg, &betas, &loaded);
            emit(out.as_deref(), &sweep_csv(&rows))?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                return Err(Failure::Partial(format!(
                    "{failed} of {} sweep rows failed",
                    rows.len()
                )));
            }
        }
        Command::Eval {
            source,
            policy,
            prior,
            beta,
            rollouts,
            seed,
            horizon,
            out,
        } => {
            let mdp = source.load()?;
            let pi = io::read_policy(&policy, &mdp)?;
            let prior = match prior {
                Some(path) => io::read_policy(path, &mdp)?,
                None => uniform_policy(&mdp),
            };
            let report = evaluate(&mdp, &pi, &prior, beta, rollouts, horizon, seed)?;
            emit(out.as_deref(), &json(&report)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_kind(&e) as u8)
        }
        Err(Failure::Partial(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(ExitKind::Solver as u8)
        }
    }
}

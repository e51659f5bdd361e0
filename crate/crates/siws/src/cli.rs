//! Command-line interface.
//!
//! Exit codes: 0 success, 1 a verdict is negative (not certified,
//! violated assumptions, unmet expectations), 2 invalid input.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use siws_core::assumptions::{check_all, check_schedule};
use siws_core::stability::{
    certify_all, certify_auto, reproduction_comparison, slow_variation_constants, DEFAULT_SIGMA,
};

use crate::config::{load_config, Config};
use crate::experiments::{run_experiment, Bundle, Experiment, ExperimentError, NAMED_EXPERIMENTS};
use crate::report::{self, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "siws",
    version,
    about = "Multi-virus SIWS epidemic simulation and stability certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check assumptions, certify, simulate and write CSV and JSON artifacts.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Seed for the initial-state sampler (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Fixed number of steps (default: run until certified viruses decay).
        #[arg(long)]
        horizon: Option<usize>,
        /// Add per-node columns to the CSV.
        #[arg(long)]
        per_node: bool,
        /// Write every n-th instant to the CSV.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Certify disease-free stability for every virus.
    Certify {
        #[command(flatten)]
        config: ConfigArg,
        /// Report every certificate, not only the strongest applicable one.
        #[arg(long)]
        all: bool,
        /// Decay parameter of the slow-variation budget, in (0, 1).
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Instants examined for time-varying schedules (default: one full cover).
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the well-posedness checks.
    Check {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Slow-variation constants and the admissible variation budget.
    Kappa {
        #[command(flatten)]
        config: ConfigArg,
        /// Safety factor σ in (0, 1) of the variation budget
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Number of instants scanned (default: one joint period)
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a shipped experiment (fig2, fig3, fig4, fig5 or all).
    Reproduce {
        /// Experiment name or `all`
        name: String,
        /// Output directory
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Seed for the initial-state sampler
        #[arg(long)]
        seed: Option<u64>,
        /// Fixed number of steps (default: run until certified viruses decay)
        #[arg(long)]
        horizon: Option<usize>,
        /// Add per-node columns to the CSV
        #[arg(long)]
        per_node: bool,
        /// Write every n-th instant to the CSV
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare spectral radii with and without the resource layer.
    #[command(name = "compare-r0", alias = "compare-R0")]
    CompareR0 {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Stability(#[from] siws_core::StabilityError),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

fn load(arg: &ConfigArg) -> Result<Config, CliError> {
    Ok(load_config(&arg.config)?)
}

fn emit(out: &mut dyn Write, format: Format, text: String, json: String) -> Result<(), CliError> {
    out.write_all(
        match format {
            Format::Text => text,
            Format::Json => json,
        }
        .as_bytes(),
    )?;
    Ok(())
}

fn run_bundle(
    experiment: &mut Experiment,
    per_node: bool,
    stride: usize,
    out_dir: &Path,
) -> Result<(Bundle, Vec<PathBuf>), CliError> {
    experiment.per_node = per_node;
    experiment.stride = stride.max(1);
    let bundle = run_experiment(experiment)?;
    let written = bundle.write(out_dir)?;
    Ok((bundle, written))
}

fn written_text(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| format!("wrote {}\n", p.display())).collect()
}

/// Executes a parsed command, writing the report to `out`. Returns the
/// exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate {
            config,
            out: dir,
            seed,
            horizon,
            per_node,
            stride,
            output,
        } => {
            let cfg = load(&config)?;
            let mut experiment = Experiment::from_config(&cfg, seed, horizon)?;
            let (bundle, written) = run_bundle(&mut experiment, per_node, stride, &dir)?;
            let text = report::bundle_text(&bundle) + &written_text(&written);
            emit(out, output.format, text, report::to_json(&bundle))?;
            let ok = bundle.assumptions.passed() && bundle.final_certificates().all(|c| c.is_certified());
            Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Certify {
            config,
            all,
            sigma,
            horizon,
            output,
        } => {
            let cfg = load(&config)?;
            let schedule = &cfg.schedule;
            let horizon = horizon.unwrap_or_else(|| schedule.joint_cover());
            let mut attempts = Vec::new();
            for r in 0..schedule.shape().m {
                attempts.push(if all {
                    certify_all(schedule, r, horizon, sigma)?
                } else {
                    certify_auto(schedule, r, horizon, sigma)?
                });
            }
            let certified = if all {
                attempts.iter().all(|a| a.iter().any(|c| c.is_certified()))
            } else {
                attempts.iter().all(|a| a.last().is_some_and(|c| c.is_certified()))
            };
            let mut text = String::new();
            if let Some(first) = attempts.first().and_then(|a| a.first()) {
                text.push_str(&report::assumptions_text(&first.assumptions));
            }
            text.push_str("Certificates\n");
            text.push_str(&report::certificates_text(&attempts));
            text.push_str(if certified {
                "disease-free equilibrium: CERTIFIED for every virus\n"
            } else {
                "disease-free equilibrium: NOT CERTIFIED\n"
            });
            emit(out, output.format, text, report::to_json(&attempts))?;
            Ok(if certified { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Check {
            config,
            seed,
            horizon,
            output,
        } => {
            let cfg = load(&config)?;
            let schedule = &cfg.schedule;
            let horizon = horizon.unwrap_or_else(|| schedule.joint_cover());
            let has_initial = cfg.file.initial.is_some() || cfg.file.initial_state.is_some();
            let report = if has_initial {
                let experiment = Experiment::from_config(&cfg, seed, None)?;
                check_all(schedule, &experiment.initial_state()?, horizon)
            } else {
                check_schedule(schedule, horizon)
            };
            emit(
                out,
                output.format,
                report::assumptions_text(&report),
                report::to_json(&report),
            )?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Kappa {
            config,
            sigma,
            horizon,
            output,
        } => {
            let cfg = load(&config)?;
            let schedule = &cfg.schedule;
            let mut rows = Vec::new();
            for r in 0..schedule.shape().m {
                let h = horizon.unwrap_or_else(|| schedule.viruses()[r].cover());
                rows.push((r, slow_variation_constants(schedule, r, h, sigma)?.0));
            }
            let json: Vec<_> = rows
                .iter()
                .map(
                    |(r, c)| serde_json::json!({"virus": r + 1, "certified": report::within_budget(c), "constants": c}),
                )
                .collect();
            emit(out, output.format, report::kappa_text(&rows), report::to_json(&json))?;
            Ok(EXIT_OK)
        }
        Command::Reproduce {
            name,
            out: dir,
            seed,
            horizon,
            per_node,
            stride,
            output,
        } => {
            let names: Vec<&str> = if name == "all" {
                NAMED_EXPERIMENTS.iter().map(|(n, _)| *n).collect()
            } else {
                vec![name.as_str()]
            };
            let results: Vec<Result<(Bundle, Vec<PathBuf>), CliError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = names
                    .iter()
                    .map(|n| {
                        let dir = &dir;
                        scope.spawn(move || {
                            let cfg = crate::experiments::named_config(n)?;
                            let mut experiment = Experiment::from_config(&cfg, seed, horizon)?;
                            run_bundle(&mut experiment, per_node, stride, dir)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("experiment thread panicked"))
                    .collect()
            });
            let mut bundles = Vec::new();
            let mut text = String::new();
            for result in results {
                let (bundle, written) = result?;
                text.push_str(&report::bundle_text(&bundle));
                text.push_str(&written_text(&written));
                bundles.push(bundle);
            }
            let ok = bundles
                .iter()
                .all(|b| b.summary.as_ref().is_some_and(|s| s.expectations_met != Some(false)));
            text.push_str(if ok {
                "reproduction: all expectations met\n"
            } else {
                "reproduction: expectations NOT met\n"
            });
            emit(out, output.format, text, report::to_json(&bundles))?;
            Ok(if ok { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::CompareR0 { config, output } => {
            let cfg = load(&config)?;
            let schedule = &cfg.schedule;
            let mut rows = Vec::new();
            for r in 0..schedule.shape().m {
                rows.push((
                    r,
                    reproduction_comparison(&schedule.viruses()[r].frames()[0], schedule.shape())?,
                ));
            }
            let json: Vec<_> = rows
                .iter()
                .map(|(r, c)| serde_json::json!({"virus": r + 1, "comparison": c}))
                .collect();
            emit(out, output.format, report::r0_text(&rows), report::to_json(&json))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the exit code; errors go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_INVALID;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

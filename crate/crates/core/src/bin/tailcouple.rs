use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tailcouple::cli;
use tailcouple::coupled::BiasInputs;
use tailcouple::sample::Sample;

#[derive(Parser)]
#[command(
    name = "tailcouple",
    version,
    about = "Coupled tail-risk measure estimation for heavy-tailed losses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a coupled risk measure from a loss CSV (one value per line,
    /// optional header) and print a JSON report.
    Estimate {
        /// Input CSV path.
        #[arg(long)]
        input: PathBuf,
        /// First measure: mean, pht:rho=<r>, cte:t=<t>.
        #[arg(long)]
        measure1: String,
        /// Second measure (ignored by the first coupling unless estimable).
        #[arg(long, default_value = "mean")]
        measure2: String,
        /// Transform for the first measure: identity or power:beta=<b>.
        #[arg(long, default_value = "identity")]
        transform1: String,
        #[arg(long, default_value = "identity")]
        transform2: String,
        /// Coupling: first, ratio, zenga:p=<p>.
        #[arg(long, default_value = "first")]
        coupling: String,
        /// Threshold rank: auto (n^0.45), scan, pow:<a>, frac:<c>, or an
        /// explicit integer.
        #[arg(long, default_value = "auto")]
        k: String,
        /// Two-sided interval level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Second-order bias inputs (optional; zero means no bias term).
        #[arg(long)]
        bias_b1: Option<f64>,
        #[arg(long)]
        bias_omega1: Option<f64>,
        #[arg(long)]
        bias_b2: Option<f64>,
        #[arg(long)]
        bias_omega2: Option<f64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a seeded Monte Carlo experiment against a synthetic model and
    /// print a JSON report with bias, RMSE, and interval coverage.
    Simulate {
        /// Model: pareto:gamma=<g>, burr:lambda=<l>,tau=<t>, frechet:gamma=<g>.
        #[arg(long)]
        model: String,
        /// First measure.
        #[arg(long)]
        measure: String,
        #[arg(long, default_value = "mean")]
        measure2: String,
        #[arg(long, default_value = "first")]
        coupling: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Seed; falls back to TAILCOUPLE_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the first replicate's sample as a CSV.
        #[arg(long)]
        emit_sample: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit the Hill trajectory (k, gamma_hat, in_theory_range) as CSV rows.
    ScanK {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "identity")]
        transform: String,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate the Brownian-bridge functionals and compare their empirical
    /// moments with the analytic table (JSON).
    BridgeCheck {
        #[arg(long, default_value_t = 0.6)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Second rho for the cross-basis table.
        #[arg(long)]
        rho2: Option<f64>,
        #[arg(long, default_value_t = 0.005)]
        k_over_n: f64,
        #[arg(long, default_value_t = 20_000)]
        grid: usize,
        #[arg(long, default_value_t = 4000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn resolve_seed(cli_seed: Option<u64>) -> u64 {
    cli_seed
        .or_else(|| {
            std::env::var("TAILCOUPLE_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn bias_inputs(
    b1: Option<f64>,
    o1: Option<f64>,
    b2: Option<f64>,
    o2: Option<f64>,
) -> Option<BiasInputs> {
    if b1.is_none() && o1.is_none() && b2.is_none() && o2.is_none() {
        return None;
    }
    Some(BiasInputs {
        b1: b1.unwrap_or(0.0),
        omega1: o1.unwrap_or(0.0),
        b2: b2.unwrap_or(0.0),
        omega2: o2.unwrap_or(0.0),
    })
}

fn run(command: Command) -> tailcouple::Result<(String, Option<PathBuf>)> {
    match command {
        Command::Estimate {
            input,
            measure1,
            measure2,
            transform1,
            transform2,
            coupling,
            k,
            alpha,
            bias_b1,
            bias_omega1,
            bias_b2,
            bias_omega2,
            output,
        } => {
            let sample = Sample::from_csv_path(&input)?;
            let measures =
                cli::parse_measures(&measure1, &measure2, &transform1, &transform2, &coupling)?;
            let bias = bias_inputs(bias_b1, bias_omega1, bias_b2, bias_omega2);
            Ok((cli::cmd_estimate(&sample, &measures, &k, alpha, bias)?, output))
        }
        Command::Simulate {
            model,
            measure,
            measure2,
            coupling,
            n,
            reps,
            k,
            alpha,
            seed,
            emit_sample,
            output,
        } => {
            let measures =
                cli::parse_measures(&measure, &measure2, "identity", "identity", &coupling)?;
            let out = cli::cmd_simulate(
                &model,
                &measures,
                n,
                reps,
                &k,
                alpha,
                resolve_seed(seed),
                emit_sample.as_deref(),
            )?;
            Ok((out, output))
        }
        Command::ScanK {
            input,
            transform,
            from,
            to,
            output,
        } => {
            let sample = Sample::from_csv_path(&input)?;
            Ok((cli::cmd_scan_k(&sample, &transform, from, to)?, output))
        }
        Command::BridgeCheck {
            gamma,
            rho,
            rho2,
            k_over_n,
            grid,
            reps,
            seed,
            output,
        } => Ok((
            cli::cmd_bridge_check(gamma, rho, rho2, k_over_n, grid, reps, resolve_seed(seed))?,
            output,
        )),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((text, output)) => {
            let payload = if text.ends_with('\n') {
                text
            } else {
                format!("{text}\n")
            };
            match output {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, payload) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{payload}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

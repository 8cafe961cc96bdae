use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subshrink_cli::commands::{run_energy, run_fit, run_simulate, run_study, write_energy_fixture, SimulateArgs};
use subshrink_cli::energy::EnergyConfig;
use subshrink_cli::{CliError, CliResult};
use subshrink_core::study::StudyConfig;
use subshrink_sim::ScenarioId;

#[derive(Parser)]
#[command(name = "subshrink", version, about = "Subspace shrinkage P-spline regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an additive model described by a key = value config file.
    Fit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a simulation scenario and summarize the replications.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=3))]
        scenario: u32,
        /// 100 replications with the full chain lengths.
        #[arg(long)]
        paper_scale: bool,
        /// Noise standard deviation; repeat for several levels.
        #[arg(long)]
        sigma: Vec<f64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, default_value = "simulate-out")]
        output: PathBuf,
    },
    /// Tabulate the marginal density and score of the distance to the null space.
    Study {
        /// Comma-separated null-space ranks.
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20])]
        rank: Vec<usize>,
        /// Comma-separated standardized global scales.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 1.0, 10.0])]
        xi: Vec<f64>,
        #[arg(long, default_value = "study-out")]
        output: PathBuf,
    },
    /// Fit each day of a quarter-hourly load curve export.
    Energy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "energy-out")]
        output: PathBuf,
        /// Write a synthetic November 2018 export to --data first.
        #[arg(long)]
        make_fixture: bool,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { config } => {
            let m = run_fit(&config)?;
            println!("wrote {} files", m.files.len() + 1);
        }
        Command::Simulate {
            scenario,
            paper_scale,
            sigma,
            replications,
            output,
        } => {
            let args = SimulateArgs {
                scenario: ScenarioId::from_number(scenario)?,
                paper_scale,
                sigmas: sigma,
                replications,
                output,
            };
            let (reports, _) = run_simulate(&args)?;
            for r in &reports {
                println!("scenario {} sigma {}", r.spec.id.label(), r.spec.sigma);
                for g in &r.summary {
                    println!(
                        "  {:<10} {:<10} {:<4} median kappa {:>8} rmse {:.4}",
                        g.model,
                        g.null_space,
                        g.term,
                        g.median_kappa.map_or("-".into(), |k| format!("{k:.4}")),
                        g.mean_rmse_term_to_truth
                    );
                }
                if !r.failures.is_empty() {
                    eprintln!("  {} replication fits failed", r.failures.len());
                }
            }
        }
        Command::Study { rank, xi, output } => {
            let cfg = StudyConfig {
                ranks: rank,
                xi_tilde: xi,
                ..StudyConfig::default()
            };
            let (rows, _) = run_study(&cfg, &output)?;
            println!("wrote {} rows to {}", rows.len(), output.join("study.csv").display());
        }
        Command::Energy {
            data,
            output,
            make_fixture,
            iterations,
            warmup,
            seed,
        } => {
            if make_fixture {
                write_energy_fixture(&data, seed.unwrap_or(1))?;
            }
            let mut cfg = EnergyConfig::default();
            if let Some(n) = iterations {
                cfg.chain.settings.n_iter = n;
                cfg.chain.settings.warmup = warmup.unwrap_or(n / 6);
            } else if let Some(w) = warmup {
                cfg.chain.settings.warmup = w;
            }
            if let Some(s) = seed {
                cfg.chain.seed = s;
            }
            cfg.chain
                .settings
                .validate()
                .map_err(|e| CliError::config("iterations", e.to_string()))?;
            let (fits, _) = run_energy(&data, &cfg, &output)?;
            for f in &fits {
                let kind = if f.is_weekend { "weekend" } else { "weekday" };
                println!("{} {kind} kappa {:.4}", f.date, f.kappa_mean);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

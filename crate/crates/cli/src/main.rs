use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocflow::verify::{run_suite, Suite};
use ocflow_cli::experiment::run_experiment;
use ocflow_cli::sweep::sweep;

/// Optimal-control guidance for flow-matching priors.
#[derive(Parser)]
#[command(name = "ocflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its report and curves.
    Run { config: PathBuf },
    /// Run a verification suite (geometry, gradients, bounds, convergence,
    /// baselines or all).
    Verify {
        suite: String,
        /// Print the summary as JSON instead of one line per check.
        #[arg(long)]
        json: bool,
    },
    /// Run every *.conf file in a directory.
    Sweep {
        config_dir: PathBuf,
        /// Output root; defaults to `<config-dir>/out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

const CHECK_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const DIVERGENCE: u8 = 3;
/// Tolerance of the stored-J recomputation check.
const REPORT_TOL: f64 = 1e-12;

fn report_code(report: &ocflow_cli::RunReportFile) -> u8 {
    if report.failed() {
        DIVERGENCE
    } else if report.consistency_error() > REPORT_TOL {
        CHECK_FAILURE
    } else {
        0
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => match run_experiment(&config, None) {
            Ok(report) => {
                println!(
                    "{}: status {}, final J {}, best J {}",
                    config.display(),
                    report.status,
                    report.summary.final_j.map_or("n/a".into(), |j| j.to_string()),
                    report.summary.best_j.map_or("n/a".into(), |j| j.to_string()),
                );
                if let Some(d) = &report.status_detail {
                    println!("  {d}");
                }
                report_code(&report)
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code() as u8
            }
        },
        Command::Verify { suite, json } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                match Suite::parse(&suite) {
                    Ok(s) => vec![s],
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(CONFIG_ERROR);
                    }
                }
            };
            let summaries: Vec<_> = suites.into_iter().map(run_suite).collect();
            if json {
                println!("{}", serde_json::to_string_pretty(&summaries).expect("summaries serialize"));
            } else {
                for s in &summaries {
                    for c in &s.checks {
                        println!("{c}");
                    }
                    println!("suite {}: {}", s.suite, if s.passed() { "PASS" } else { "FAIL" });
                }
            }
            if summaries.iter().all(|s| s.passed()) {
                0
            } else {
                CHECK_FAILURE
            }
        }
        Command::Sweep { config_dir, out, jobs } => {
            let out = out.unwrap_or_else(|| config_dir.join("out"));
            match sweep(&config_dir, &out, jobs) {
                Ok(items) => {
                    let mut worst = 0;
                    for item in items {
                        let code = match &item.outcome {
                            Ok(r) => {
                                println!(
                                    "{}: status {}, final J {:?}",
                                    item.config.display(),
                                    r.status,
                                    r.summary.final_j
                                );
                                report_code(r)
                            }
                            Err(e) => {
                                println!("{}: error: {e}", item.config.display());
                                e.exit_code() as u8
                            }
                        };
                        worst = worst.max(code);
                    }
                    worst
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code() as u8
                }
            }
        }
    };
    ExitCode::from(code)
}

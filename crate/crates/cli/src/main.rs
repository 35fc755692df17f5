use std::path::PathBuf;
use std::process::ExitCode;

use attribution_cli::config::{ExperimentConfig, OutputFormat, Overrides};
use attribution_cli::error::{CliError, Result};
use attribution_cli::table::{cmd_table, render, TableId};
use attribution_cli::verify::{cmd_verify, Suite, VerifyOptions};
use attribution_cli::{fit, scenario, simulate, synth};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "attrib", version, about = "Attribution mechanism experiments")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regenerate a closed-form table and compare it with the reference values.
    Table {
        id: TableId,
        /// Directory receiving table_<id>.csv and table_<id>.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Monte Carlo accuracy and fairness for one or more scenarios.
    #[command(after_help = scenario_help())]
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named scenario; may be repeated. Replaces the config's list.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Fitted bundle for `fitted:`, `pair:` and `protocol` scenarios.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Fit click logs with a Gaussian KDE and save the bundle.
    Fit {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Bundle file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite; exits 1 when any check fails.
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random report profiles for the monotonicity sweep.
        #[arg(long, default_value_t = 1000)]
        profiles: usize,
        /// Directory receiving verify_<suite>.<format>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutputFormat,
    },
    /// Write four synthetic platform logs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn scenario_help() -> String {
    format!("Scenario names, for example: {}", scenario::EXAMPLES.join(", "))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Table { id, out } => {
            let report = cmd_table(id, &out)?;
            print!("{}", render(&report));
            if !report.passed() {
                let diff: Vec<String> = report
                    .mismatches()
                    .map(|c| format!("{} {}: got {:.6}, expected {}", c.row, c.column, c.value, c.expected.as_deref().unwrap_or("")))
                    .collect();
                return Err(CliError::CheckFailed(diff.join("\n")));
            }
        }
        Command::Simulate { config, scenarios, seed, samples, repeats, out, format, bundle } => {
            let cfg = ExperimentConfig::resolve(
                config.as_deref(),
                Overrides { scenarios, n_samples: samples, repeats, seed, output_path: out, format, bundle },
            )?;
            let report = simulate::cmd_simulate(&cfg)?;
            print!("{}", simulate::render(&report));
            let dir = cfg.output_path.clone().unwrap_or_else(|| PathBuf::from("."));
            let path = simulate::write_report(&report, &dir, cfg.format)?;
            println!("wrote {}", path.display());
        }
        Command::Fit { inputs, out } => {
            let (_, summary) = fit::cmd_fit(&inputs, &out)?;
            for s in summary {
                println!(
                    "{}: {} samples ({} dropped), bandwidth {:.4}",
                    s.platform_id, s.n_samples, s.dropped, s.bandwidth
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Verify { suite, samples, seed, profiles, out, format } => {
            if samples < 10_000 {
                return Err(CliError::Usage("--samples must be at least 10000".into()));
            }
            let mut opts = VerifyOptions { samples, seed, ..Default::default() };
            opts.dsic.profiles = profiles;
            opts.dsic.seed = seed;
            let report = cmd_verify(suite, &opts)?;
            print!("{}", report.render());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                match format {
                    OutputFormat::Json => std::fs::write(
                        dir.join(format!("verify_{}.json", suite.as_str())),
                        serde_json::to_string_pretty(&report)? + "\n",
                    )?,
                    OutputFormat::Csv => {
                        let mut w = csv::Writer::from_path(dir.join(format!("verify_{}.csv", suite.as_str())))?;
                        for c in &report.checks {
                            w.serialize(c)?;
                        }
                        w.flush()?;
                    }
                }
            }
            if !report.passed() {
                let n = report.checks.iter().filter(|c| !c.passed).count();
                return Err(CliError::CheckFailed(format!("{n} check(s) failed in suite {}", suite.as_str())));
            }
        }
        Command::Synth { out, rows, seed } => {
            for p in synth::cmd_synth(&out, rows, seed)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

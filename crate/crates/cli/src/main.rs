//! Command-line front end: comb spectra, channel plans, scenario
//! simulation, key-rate evaluation, and the published-results reproduction.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use soliton_qkd::run::{comb_csv, qber_csv, reproduce_paper, run};
use soliton_qkd::scenario::bundled;
use soliton_qkd::{KeyRateInput, RunReport, Scenario};

#[derive(Parser)]
#[command(
    name = "soliton-qkd",
    version,
    about = "Simulator for wavelength-multiplexed decoy-state BB84 QKD on a Kerr soliton comb"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scenario's pulse count.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// Directory for file outputs (default: print to stdout where sensible,
    /// `.` for simulate).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Number of concurrent channel simulations (results are identical for
    /// any value).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the comb spectrum as CSV: index, frequency_hz, power_dbm, snr_db.
    Comb {
        /// Scenario file supplying the comb section (bundled tr1_solo if omitted).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// SNR threshold for listed lines, dB above the noise floor.
        #[arg(long, default_value_t = 0.0)]
        threshold_db: f64,
    },
    /// Print the WDM channel plan (channels + crosstalk matrix) as JSON.
    Plan {
        /// Scenario file supplying comb and plan sections (bundled tr1_solo if omitted).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run a scenario: writes the full report JSON and a per-block QBER CSV,
    /// and prints a per-system summary table.
    Simulate { scenario: PathBuf },
    /// Evaluate the decoy-state secret key rate for a gain-set JSON file.
    Keyrate { gains: PathBuf },
    /// Run the bundled scenarios and check them against the published
    /// QBER/SKR figures (exit code 2 if any check fails).
    ReproducePaper,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => {
            Scenario::load(p).with_context(|| format!("loading scenario {}", p.display()))
        }
        None => Ok(Scenario::from_toml(bundled::TR1_SOLO).expect("bundled scenario is valid")),
    }
}

fn write_or_print(out_dir: Option<&Path>, filename: &str, contents: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(filename);
            fs::write(&path, contents)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn summary_table(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:<4} {:>10} {:>12} {:>14} {:>14} {:>12}\n",
        "system", "ch", "E_mu[%]", "Q_mu", "skr_mc[kbps]", "skr_an[kbps]", "sifted_mu"
    ));
    for s in &report.systems {
        out.push_str(&format!(
            "{:<8} {:<4} {:>10.4} {:>12.4e} {:>14.3} {:>14.3} {:>12}\n",
            s.name,
            s.channel.to_string(),
            s.gains_mc.mu.qber * 100.0,
            s.gains_mc.mu.gain,
            s.keyrate_mc.skr_bps / 1e3,
            s.keyrate_analytic.skr_bps / 1e3,
            s.tallies.class(soliton_qkd::IntensityClass::Mu).sifted,
        ));
    }
    out
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Comb {
            scenario,
            threshold_db,
        } => {
            let scenario = load_scenario(scenario.as_deref())?;
            let csv = comb_csv(&scenario.comb_spec(), threshold_db);
            write_or_print(cli.out_dir.as_deref(), "comb.csv", &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan { scenario } => {
            let scenario = load_scenario(scenario.as_deref())?;
            let plan = scenario.build_plan()?;
            let json = serde_json::to_string_pretty(&plan)?;
            write_or_print(cli.out_dir.as_deref(), "plan.json", &(json + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { scenario } => {
            let mut scenario = load_scenario(Some(&scenario))?;
            if let Some(seed) = cli.seed {
                scenario.run.master_seed = seed;
            }
            if let Some(pulses) = cli.pulses {
                scenario.run.pulses = pulses;
            }
            let report = run(&scenario, cli.jobs.max(1))?;
            let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            let json = serde_json::to_string_pretty(&report)?;
            write_or_print(Some(&out_dir), "report.json", &(json + "\n"))?;
            write_or_print(Some(&out_dir), "qber_series.csv", &qber_csv(&report))?;
            print!("{}", summary_table(&report));
            println!("digest: {}", report.numeric_digest());
            Ok(ExitCode::SUCCESS)
        }
        Command::Keyrate { gains } => {
            let text = fs::read_to_string(&gains)
                .with_context(|| format!("reading {}", gains.display()))?;
            let input: KeyRateInput = serde_json::from_str(&text)
                .with_context(|| format!("parsing gain set {}", gains.display()))?;
            let report = input.evaluate()?;
            let json = serde_json::to_string_pretty(&report)?;
            write_or_print(cli.out_dir.as_deref(), "keyrate.json", &(json + "\n"))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ReproducePaper => {
            let summary = reproduce_paper::<f64>(cli.pulses, cli.seed, cli.jobs.max(1));
            print!("{}", summary.table());
            if let Some(dir) = cli.out_dir.as_deref() {
                let json = serde_json::to_string_pretty(&summary)?;
                write_or_print(Some(dir), "reproduce_paper.json", &(json + "\n"))?;
            }
            Ok(if summary.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

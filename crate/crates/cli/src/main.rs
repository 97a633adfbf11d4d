//! `fdsic`: link budget, link simulation and IM3 sweep from a scenario file.
//!
//! Exit status: 0 on success, 1 when the inputs are valid but the budget
//! does not close (a feasibility check failed), 2 on any input error.

mod commands;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{Format, Outcome};
use fdsic_core::exec::Execution;
use scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "fdsic",
    version,
    about = "Full-duplex mm-wave link budget and OFDM link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,

    /// Set a value after the file is parsed: `key=value`. Flat keys name a
    /// system parameter (`enob_bits=5`) or a budget intermediate
    /// (`snr_si_db=44`); dotted keys address any scenario field
    /// (`ofdm.n_symbols=4`). Repeatable, applied in order.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Drop the scenario's pinned budget intermediates (formula-exact run).
    /// `--override` assignments still apply afterwards.
    #[arg(long)]
    no_overrides: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the uplink and the downlink SIC allocation.
    Budget {
        #[command(flatten)]
        common: Common,

        #[arg(long, value_enum, default_value = "table")]
        format: Format,

        /// Also write budget.json and node_track.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the full link and write the report, node powers and
    /// constellations.
    Simulate {
        #[command(flatten)]
        common: Common,

        /// Monte-Carlo frames.
        #[arg(long)]
        frames: Option<usize>,

        /// Base seed of the Monte-Carlo frames.
        #[arg(long)]
        seed: Option<u64>,

        /// Output directory (default: the scenario's `output_dir`, else
        /// `fdsic-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Matched-amplifier IM3 sweep against the two-tone prediction.
    #[command(name = "im3-sweep")]
    Im3Sweep {
        #[command(flatten)]
        common: Common,

        #[arg(long, allow_negative_numbers = true)]
        pin_start: Option<f64>,

        #[arg(long, allow_negative_numbers = true)]
        pin_stop: Option<f64>,

        #[arg(long, allow_negative_numbers = true)]
        pin_step: Option<f64>,

        /// Seed of the OFDM probe frame.
        #[arg(long)]
        seed: Option<u64>,

        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = scenario::load(&common.scenario)?;
    if common.no_overrides {
        s.overrides = Default::default();
    }
    scenario::apply_overrides(&s, &common.overrides)
}

fn out_dir(flag: Option<PathBuf>, s: &Scenario) -> PathBuf {
    flag.or_else(|| s.output_dir.clone())
        .unwrap_or_else(|| Path::new("fdsic-out").to_path_buf())
}

fn run(cli: Cli) -> Result<Outcome> {
    let exec = Execution::default();
    match cli.command {
        Command::Budget {
            common,
            format,
            out,
        } => {
            let s = load(&common)?;
            commands::budget(&s, format, out.as_deref())
        }
        Command::Simulate {
            common,
            frames,
            seed,
            out,
        } => {
            let mut s = load(&common)?;
            if let Some(n) = frames {
                s.monte_carlo.n_frames = n;
            }
            if let Some(seed) = seed {
                s.monte_carlo.base_seed = seed;
            }
            let out = out_dir(out, &s);
            commands::simulate(&s, &out, exec)
        }
        Command::Im3Sweep {
            common,
            pin_start,
            pin_stop,
            pin_step,
            seed,
            out,
        } => {
            let mut s = load(&common)?;
            let w = &mut s.im3_sweep;
            if let Some(v) = pin_start {
                w.pin_start_dbm = v;
            }
            if let Some(v) = pin_stop {
                w.pin_stop_dbm = v;
            }
            if let Some(v) = pin_step {
                w.pin_step_db = v;
            }
            if let Some(v) = seed {
                w.seed = v;
            }
            let out = out_dir(out, &s);
            commands::im3_sweep(&s, &out, exec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<fdsic_core::Error>(),
                    Some(fdsic_core::Error::Infeasible { .. })
                )
            });
            ExitCode::from(if infeasible { 1 } else { 2 })
        }
    }
}

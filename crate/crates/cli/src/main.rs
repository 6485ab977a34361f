//! Command-line driver: validation, one-shot bracket queries, simulation and
//! reduced-vs-oracle comparison, all configured from a single TOML document.
//!
//! Exit codes: 0 on success, 1 on domain failures (validation, integration,
//! comparison), 2 on usage and parse errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{cmd_bracket, cmd_compare, cmd_simulate, cmd_validate, exit_code, CompareOptions, SimulateOptions};
use config::load_config;

#[derive(Parser)]
#[command(name = "staged-reduction", version, about = "Symmetry reduction of mechanical systems by stages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

/// Disk parameter and initial-condition overrides (disk scenario only).
#[derive(Args, Clone, Copy)]
struct DiskArgs {
    /// Mass (kg).
    #[arg(long)]
    m: Option<f64>,
    /// Radius (m).
    #[arg(long)]
    r: Option<f64>,
    /// Thickness ratio.
    #[arg(long)]
    e: Option<f64>,
    /// Diametral moment of inertia (kg m^2).
    #[arg(long)]
    i1: Option<f64>,
    /// Axial moment of inertia (kg m^2).
    #[arg(long)]
    i3: Option<f64>,
    /// Gravity (m/s^2).
    #[arg(long)]
    g: Option<f64>,
    /// Initial tilt (rad).
    #[arg(long)]
    theta0: Option<f64>,
    /// Initial heading (rad).
    #[arg(long)]
    phi0: Option<f64>,
    /// Initial tilt rate (rad/s).
    #[arg(long)]
    thetadot0: Option<f64>,
    /// Initial heading rate (rad/s).
    #[arg(long)]
    phidot0: Option<f64>,
    /// Initial spin rate (rad/s).
    #[arg(long)]
    eta0: Option<f64>,
}

impl DiskArgs {
    fn any_set(&self) -> bool {
        self.m.is_some()
            || self.r.is_some()
            || self.e.is_some()
            || self.i1.is_some()
            || self.i3.is_some()
            || self.g.is_some()
            || self.theta0.is_some()
            || self.phi0.is_some()
            || self.thetadot0.is_some()
            || self.phidot0.is_some()
            || self.eta0.is_some()
    }

    fn into_overrides(self) -> commands::DiskOverrides {
        commands::DiskOverrides {
            m: self.m,
            r: self.r,
            e: self.e,
            i1: self.i1,
            i3: self.i3,
            g: self.g,
            theta0: self.theta0,
            phi0: self.phi0,
            thetadot0: self.thetadot0,
            phidot0: self.phidot0,
            eta0: self.eta0,
            any: self.any_set(),
        }
    }
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Check the algebra axioms, the ideal chain and the bracket assembly.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate the bracket and its stage assembly on two vectors.
    Bracket {
        #[command(flatten)]
        config: ConfigArg,
        /// First vector, comma separated coordinates.
        #[arg(long)]
        u: String,
        /// Second vector, comma separated coordinates.
        #[arg(long)]
        v: String,
    },
    /// Integrate the configured scenario and write a CSV trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured scenario name.
        #[arg(long)]
        scenario: Option<String>,
        /// Step size (s).
        #[arg(long)]
        h: Option<f64>,
        /// Final time (s).
        #[arg(long, value_name = "T")]
        t_end: Option<f64>,
        /// Output CSV path.
        #[arg(long)]
        out: Option<String>,
        /// Disk only: run the full-configuration multiplier oracle.
        #[arg(long)]
        oracle: bool,
        #[command(flatten)]
        disk: DiskArgs,
    },
    /// Run the reduced path and the oracle, report the deviation.
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        /// Step size for both paths (s).
        #[arg(long)]
        h: Option<f64>,
        /// Final time (s).
        #[arg(long, value_name = "T")]
        t_end: Option<f64>,
        /// Must equal --h when given; the two paths share a step.
        #[arg(long)]
        oracle_h: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => load_config(&config.config).and_then(|c| cmd_validate(&c)),
        Command::Bracket { config, u, v } => {
            load_config(&config.config).and_then(|c| cmd_bracket(&c, u, v))
        }
        Command::Simulate {
            config,
            scenario,
            h,
            t_end,
            out,
            oracle,
            disk,
        } => load_config(&config.config).and_then(|c| {
            cmd_simulate(
                &c,
                &SimulateOptions {
                    scenario: scenario.clone(),
                    h: *h,
                    t_end: *t_end,
                    out: out.clone(),
                    oracle: *oracle,
                    disk: disk.into_overrides(),
                },
            )
        }),
        Command::Compare {
            config,
            h,
            t_end,
            oracle_h,
        } => load_config(&config.config).and_then(|c| {
            cmd_compare(
                &c,
                &CompareOptions {
                    h: *h,
                    t_end: *t_end,
                    oracle_h: *oracle_h,
                },
            )
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

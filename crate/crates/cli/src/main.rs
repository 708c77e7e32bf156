//! `niosyn`: synthesize and certify dynamic output-feedback controllers
//! from noisy input-output data.
//!
//! Subcommands compose into the pipeline `collect -> synth -> verify`;
//! `demo` runs the whole pipeline on a built-in benchmark plant, and
//! `simulate` replays a certified controller against a plant under
//! measurement noise. Artifacts are JSON documents that embed the seed and
//! the hash of their input artifact.
//!
//! Exit codes: 0 success, 1 usage or schema error, 2 synthesis infeasible,
//! 3 data richness assumption violated, 4 numerical failure.

mod commands;
mod config;
mod jsonio;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Infeasible,
    AssumptionViolated,
    Numerical,
    Io,
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage | ErrorKind::Io => 1,
            ErrorKind::Infeasible => 2,
            ErrorKind::AssumptionViolated => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self.kind {
            ErrorKind::Usage => "usage",
            ErrorKind::Io => "io",
            ErrorKind::Infeasible => "infeasible",
            ErrorKind::AssumptionViolated => "assumption-violated",
            ErrorKind::Numerical => "numerical-failure",
        }
    }
}

impl From<niosyn_core::synthesis::SynthesisError> for CliError {
    fn from(e: niosyn_core::synthesis::SynthesisError) -> Self {
        use niosyn_core::consistency::ConsistencyError;
        use niosyn_core::synthesis::SynthesisError as SE;
        match e {
            SE::Consistency(ConsistencyError::Assumption2Violated { .. }) => Self {
                kind: ErrorKind::AssumptionViolated,
                message: e.to_string(),
            },
            SE::Solver(niosyn_core::sdp::SdpError::NumericalFailure(_)) => Self {
                kind: ErrorKind::Numerical,
                message: e.to_string(),
            },
            other => Self::schema(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "niosyn", version, about = "Controller synthesis from noisy input-output data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Headroom factor applied on top of the worst-case noise energy bound.
    /// Defaults to 1.0 for `synth` and to the published 2.0 for the demos.
    #[arg(long)]
    pub theta_scale: Option<f64>,
    /// LMI margin; defaults to 1e-6 times the problem scale.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// LMI assembly to solve.
    #[arg(long, value_parser = ["eq18", "zqa"], default_value = "zqa")]
    pub variant: String,
    /// Write the assembled LMI next to the controller for debugging.
    #[arg(long)]
    pub dump_lmi: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a full pipeline on a built-in benchmark plant.
    Demo {
        /// "batch-reactor" (saturated window) or "augmented" (dimension gap).
        #[arg(value_parser = ["batch-reactor", "augmented"])]
        name: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        synth: SynthFlags,
        /// Multiplies the benchmark noise amplitudes (data collection only).
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Output directory for data.json, controller.json, report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Collect noisy input-output data from a configured plant.
    Collect {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Seed override; the config seed is used when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write psi1.csv, psi0.csv, u1.csv.
        #[arg(long)]
        dump_csv: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Synthesize a controller from a data artifact.
    Synth {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        synth: SynthFlags,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Assemble the closed loop of a plant and a controller and certify it.
    Verify {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        /// Seed for the noisy closed-loop run.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        horizon: usize,
        /// Input/output noise amplitudes of the run.
        #[arg(long, default_value_t = 0.01)]
        du_bar: f64,
        #[arg(long, default_value_t = 0.01)]
        dy_bar: f64,
        /// Initial plant state, comma-separated; zero when absent.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Replay a controller against a plant under measurement noise and dump
    /// the trajectories.
    Simulate {
        #[arg(long)]
        plant: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        horizon: usize,
        #[arg(long, default_value_t = 0.01)]
        du_bar: f64,
        #[arg(long, default_value_t = 0.01)]
        dy_bar: f64,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind as CK;
            if matches!(e.kind(), CK::DisplayHelp | CK::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };

    let result = match cli.command {
        Command::Demo { name, seed, synth, noise_scale, out } => {
            commands::cmd_demo(&name, seed, &synth, noise_scale, &out)
        }
        Command::Collect { config, seed, dump_csv, out } => {
            commands::cmd_collect(&config, seed, dump_csv, &out)
        }
        Command::Synth { data, synth, out } => commands::cmd_synth(&data, &synth, &out),
        Command::Verify {
            plant,
            controller,
            seed,
            horizon,
            du_bar,
            dy_bar,
            x0,
            out,
        } => commands::cmd_verify(
            &plant, &controller, seed, horizon, du_bar, dy_bar, x0.as_deref(), &out,
        ),
        Command::Simulate {
            plant,
            controller,
            seed,
            horizon,
            du_bar,
            dy_bar,
            x0,
            out,
        } => commands::cmd_simulate(
            &plant, &controller, seed, horizon, du_bar, dy_bar, x0.as_deref(), &out,
        ),
    };

    match result {
        Ok(()) => {}
        Err(e) => {
            let doc = jsonio::ErrorJson {
                error: jsonio::ErrorBody {
                    kind: e.kind_str().to_string(),
                    message: e.message.clone(),
                    exit_code: e.exit_code(),
                },
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).unwrap_or_else(|_| e.message.clone())
            );
            std::process::exit(e.exit_code());
        }
    }
}

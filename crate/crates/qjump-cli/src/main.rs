mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qjump::Error;
use serde_json::json;

use config::RunConfig;
use io::{resolve_out_dir, Writer};

#[derive(Parser)]
#[command(name = "qjump", version, about = "Quantum-jump simulations of the driven open Jaynes-Cummings model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trajectories (or charge samples).
    #[arg(long, global = true)]
    traj: Option<usize>,
    /// Worker threads for ensembles (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` setting applied after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, PartialEq, Eq)]
enum Command {
    /// Photon-counting trajectories.
    Mcwf,
    /// Heterodyne trajectories.
    Heterodyne {
        #[arg(value_parser = ["run"])]
        action: Option<String>,
    },
    /// Charge-record sampling.
    Charge {
        #[arg(value_parser = ["sample"])]
        action: Option<String>,
    },
    /// Master-equation steady state.
    Steady,
    /// Neoclassical roots and Maxwell-Bloch trajectory.
    Semiclassical,
    /// Null-record curves, localization times and jump overlays.
    Analytics,
    /// Kerr oscillator against its analytic Wigner function.
    Kerr,
    /// Regenerate the benchmark table and compare with the stored copy.
    Bench,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Mcwf => "mcwf",
            Command::Heterodyne { .. } => "heterodyne",
            Command::Charge { .. } => "charge",
            Command::Steady => "steady",
            Command::Semiclassical => "semiclassical",
            Command::Analytics => "analytics",
            Command::Kerr => "kerr",
            Command::Bench => "bench",
        }
    }
}

fn load(cli: &Cli) -> qjump::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.traj {
        cfg.n_traj = n;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cfg.n_traj == 0 {
        return Err(Error::Validation("n_traj must be at least 1".into()));
    }
    if cli.command != Command::Bench {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> qjump::Result<(serde_json::Value, bool)> {
    let cfg = load(cli)?;
    let dir = resolve_out_dir(cli.out.as_deref(), &cfg);
    let mut w = Writer::new(dir, cli.command.name(), &cfg)?;
    let summary = match &cli.command {
        Command::Mcwf => commands::mcwf(&cfg, &mut w)?,
        Command::Heterodyne { .. } => commands::heterodyne(&cfg, &mut w)?,
        Command::Charge { .. } => commands::charge(&cfg, &mut w)?,
        Command::Steady => commands::steady(&cfg, &mut w)?,
        Command::Semiclassical => commands::semiclassical(&cfg, &mut w)?,
        Command::Analytics => commands::analytics(&cfg, &mut w)?,
        Command::Kerr => commands::kerr(&cfg, &mut w)?,
        Command::Bench => return commands::bench(&mut w, cfg.seed),
    };
    Ok((summary, true))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((summary, ok)) => {
            println!("{summary}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            let code = if e.is_validation() { 1 } else { 2 };
            println!("{}", json!({"command": cli.command.name(), "error": e.to_string(), "exit": code}));
            ExitCode::from(code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use zkcyl::diagnostics::{cone_half_angle, SERIES_HEADER};
use zkcyl::error::{Result, ZkError};
use zkcyl::runner::config::{load_config, Leg, SimConfig};
use zkcyl::runner::{self, exit_code_for, scenario, RunReport, EXIT_OK};

/// Spectral solver for the cylindrically symmetric 3D generalized
/// Zakharov–Kuznetsov equation.
#[derive(Parser)]
#[command(name = "zkcyl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the ground state Q and write `ground_state.zks`.
    GroundState {
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (same as `--set output.dir=...`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config value, e.g. `--set grid.N=1024`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the evolution described by a config file.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a named preset.
    Scenario {
        /// One of soliton-validate, perturb-0.99, perturb-1.01, perturb-1.1, gauss-5, gauss-6.5.
        name: Option<String>,
        /// Print the preset names and exit.
        #[arg(long)]
        list: bool,
        /// Print the effective config instead of running.
        #[arg(long)]
        dry_run: bool,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Continue a run from a snapshot.
    Resume {
        snapshot: PathBuf,
        /// Extension leg `T_END:STEPS`; repeat for several legs.
        #[arg(long = "leg", value_name = "T_END:STEPS", value_parser = parse_leg)]
        legs: Vec<Leg>,
        #[arg(long = "set", value_name = "PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Recompute diagnostics of snapshots and print them as CSV.
    Diag {
        /// Snapshot files or run directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also report the radiation cone half-angle at this contour level.
        #[arg(long)]
        cone_level: Option<f64>,
    },
}

fn parse_leg(s: &str) -> std::result::Result<Leg, String> {
    let (t, n) = s.split_once(':').ok_or("expected T_END:STEPS")?;
    Ok(Leg {
        t_end: t.trim().parse().map_err(|e| format!("t_end: {e}"))?,
        steps: n.trim().parse().map_err(|e| format!("steps: {e}"))?,
    })
}

fn report(r: &RunReport) -> Result<i32> {
    let text = serde_json::to_string_pretty(&r.summary).map_err(|e| ZkError::Io(std::io::Error::other(e)))?;
    println!("{text}");
    eprintln!("run directory: {}", r.dir.display());
    Ok(r.exit_code())
}

fn ground_state(config: Option<PathBuf>, out: Option<PathBuf>, mut overrides: Vec<String>) -> Result<i32> {
    if let Some(dir) = out {
        overrides.push(format!("output.dir={:?}", dir.display().to_string()));
    }
    let cfg = match config {
        Some(path) => load_config(&path, &overrides)?,
        None => SimConfig::from_toml_str(
            "[initial]\nkind = \"ground-state\"\n[output]\ndir = \"runs/ground-state\"\n",
            &overrides,
        )?,
    };
    let (_, summary) = runner::run_ground_state(&cfg)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| ZkError::Io(std::io::Error::other(e)))?;
    println!("{text}");
    eprintln!("profile: {}", cfg.output.dir.join("ground_state.zks").display());
    Ok(EXIT_OK)
}

fn diag(paths: Vec<PathBuf>, cone_level: Option<f64>) -> Result<i32> {
    let mut files = vec![];
    for p in paths {
        if p.is_dir() {
            files.extend(runner::list_snapshots(&p)?);
        } else {
            files.push(p);
        }
    }
    let cone_col = if cone_level.is_some() { ",cone_half_angle" } else { "" };
    println!("file,step,{}{cone_col}", SERIES_HEADER.join(","));
    for (path, (snap, rec)) in files.iter().zip(runner::diagnose(&files)?) {
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            path.display(),
            snap.header.step,
            rec.t,
            rec.mass,
            rec.energy,
            rec.linf,
            rec.fourier_tail,
            rec.cheb_tail_i,
            rec.cheb_tail_ii,
            rec.newton_iters
        );
        if let Some(level) = cone_level {
            let field = snap.field(snap.header.config.execution)?;
            match cone_half_angle(&field, level) {
                Ok(angle) => line.push_str(&format!(",{angle}")),
                Err(_) => line.push(','),
            }
        }
        println!("{line}");
    }
    Ok(EXIT_OK)
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GroundState { config, out, overrides } => ground_state(config, out, overrides),
        Command::Evolve { config, overrides } => report(&runner::run(&load_config(&config, &overrides)?, None)?),
        Command::Scenario {
            name,
            list,
            dry_run,
            overrides,
        } => {
            if list {
                scenario::NAMES.iter().for_each(|n| println!("{n}"));
                return Ok(EXIT_OK);
            }
            let name = name.ok_or_else(|| ZkError::Config("scenario name required (see --list)".into()))?;
            let cfg = scenario::scenario_config(&name, &overrides)?;
            if dry_run {
                print!("{}", cfg.to_toml()?);
                return Ok(EXIT_OK);
            }
            report(&runner::run(&cfg, Some(&name))?)
        }
        Command::Resume {
            snapshot,
            legs,
            overrides,
        } => report(&runner::resume(&snapshot, &legs, &overrides)?),
        Command::Diag { paths, cone_level } => diag(paths, cone_level),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}

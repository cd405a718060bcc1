//! Run orchestration: initial data, multi-leg evolution, run-directory output
//! and resumption from snapshots.
//!
//! A run directory holds
//!
//! ```text
//! config.toml           effective configuration
//! series.csv            diagnostics time series
//! snapshots/step_NNNNNNN.zks
//! final.zks             last valid state
//! ground_state.zks      profile, when one was solved for the run
//! summary.json
//! ```

pub mod config;
pub mod scenario;
pub mod snapshot;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{cone_half_angle, drift_report, DiagnosticsRecord, DriftReport, SeriesWriter};
use crate::dynamics::{gaussian_data, resample_x, scale_data, shift_in_x, Discretization, Field, Nonlinearity};
use crate::error::{Result, ZkError};
use crate::ground_state::{solve_from_gaussian, GroundStateProfile};
use crate::integrator::{evolve_with, StageSolver, StepInfo, StepObserver, StopReason};
use config::{InitialData, Leg, SimConfig};
use snapshot::{GridMeta, Snapshot, SnapshotHeader, SnapshotKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BLOW_UP: i32 = 2;
pub const EXIT_SOLVER_FAILURE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Drift above this is flagged in the summary.
pub const DRIFT_THRESHOLD: f64 = 1e-8;

/// Process exit code for an error.
pub fn exit_code_for(err: &ZkError) -> i32 {
    match err {
        ZkError::Config(_) | ZkError::GridMismatch(_) | ZkError::Snapshot(_) | ZkError::Shape(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER_FAILURE,
    }
}

fn exit_code_for_stop(stop: &StopReason) -> i32 {
    if stop.is_blow_up() {
        EXIT_BLOW_UP
    } else {
        EXIT_OK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub stop: StopReason,
    pub exit_code: i32,
    pub t_start: f64,
    pub t_final: f64,
    pub steps: usize,
    pub linf_reference: f64,
    pub final_linf: f64,
    pub max_linf: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftReport>,
    /// Max-norm distance from the initial data shifted by `c·t` (ground-state runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blow_up_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_half_angle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub dir: PathBuf,
    pub final_state: Field,
    /// Every diagnostics record of this invocation, in order.
    pub series: Vec<DiagnosticsRecord>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("step_{step:07}.zks"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| ZkError::Io(std::io::Error::other(e.to_string())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Loads a snapshot onto `disc`, refining or coarsening in x when only `N` differs.
fn load_onto(path: &Path, disc: &Arc<Discretization>, what: &str) -> Result<(Snapshot, Field)> {
    if !path.exists() {
        return Err(ZkError::Config(format!(
            "{what} {} not found; compute it first with `zkcyl ground-state --out {}`",
            path.display(),
            path.parent().map_or(".".into(), |p| p.display().to_string())
        )));
    }
    let snap = Snapshot::load(path)?;
    let target = GridMeta::of(disc);
    let mut diff = snap.header.grid.differences(&target);
    diff.retain(|d| !d.starts_with("N:"));
    if !diff.is_empty() {
        return Err(ZkError::GridMismatch(format!("{}: {}", path.display(), diff.join("; "))));
    }
    let source = snap.field(disc.exec)?;
    let field = if source.disc.same_shape(disc) {
        Field::from_values(disc, source.values)?
    } else {
        resample_x(&source, disc)?
    };
    Ok((snap, field))
}

fn ground_state_snapshot(config: &SimConfig, profile: &GroundStateProfile) -> Result<Snapshot> {
    let header = SnapshotHeader {
        kind: SnapshotKind::GroundState,
        t: 0.0,
        step: 0,
        linf_reference: profile.field.max_abs(),
        residual_norm: Some(profile.residual_norm),
        config: config.clone(),
        grid: GridMeta::of(&profile.field.disc),
    };
    Snapshot::from_field(&profile.field, header)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSummary {
    pub c: f64,
    pub p: Nonlinearity,
    pub mass: f64,
    pub sqrt_mass: f64,
    pub energy: f64,
    pub residual_norm: f64,
    pub newton_iters: usize,
    pub peak: f64,
}

/// Solves for the ground state on the configured grid and writes
/// `ground_state.zks`, `config.toml` and `summary.json` into the output directory.
pub fn run_ground_state(config: &SimConfig) -> Result<(GroundStateProfile, GroundStateSummary)> {
    config.validate()?;
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let disc = config.discretization()?;
    let profile = solve_from_gaussian(&disc, config.physics.c, &config.physics.p, &config.ground_state)?;
    ground_state_snapshot(config, &profile)?.save(&dir.join("ground_state.zks"))?;
    let summary = GroundStateSummary {
        c: profile.c,
        p: profile.nl,
        mass: profile.mass,
        sqrt_mass: profile.mass.sqrt(),
        energy: profile.energy,
        residual_norm: profile.residual_norm,
        newton_iters: profile.newton_iters,
        peak: profile.field.max_abs(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((profile, summary))
}

/// Builds the initial field of a run. Solved ground states are saved into `dir`.
pub fn initial_field(config: &SimConfig, disc: &Arc<Discretization>, dir: &Path) -> Result<Field> {
    match &config.initial {
        InitialData::Gaussian { lambda, alpha } => gaussian_data(disc, *lambda, *alpha),
        InitialData::GroundState { profile: Some(path) } => Ok(load_onto(path, disc, "ground-state profile")?.1),
        InitialData::GroundState { profile: None } => {
            let p = solve_from_gaussian(disc, config.physics.c, &config.physics.p, &config.ground_state)?;
            ground_state_snapshot(config, &p)?.save(&dir.join("ground_state.zks"))?;
            Ok(p.field)
        }
        InitialData::ScaledGroundState { lambda, profile } => {
            let (_, q) = load_onto(profile, disc, "ground-state profile")?;
            Ok(scale_data(&q, *lambda))
        }
        InitialData::File { path } => {
            let snap = Snapshot::load(path)?;
            snap.header.grid.ensure_same(&GridMeta::of(disc))?;
            snap.field_on(disc)
        }
    }
}

struct RunObserver<'a> {
    config: &'a SimConfig,
    dir: &'a Path,
    nl: Nonlinearity,
    series: SeriesWriter,
    records: Vec<DiagnosticsRecord>,
    step_offset: usize,
    skip_initial: bool,
    linf_reference: f64,
    max_linf: f64,
    last_step: usize,
}

impl RunObserver<'_> {
    fn record(&mut self, t: f64, field: &Field, newton_iters: usize) -> Result<()> {
        let rec = DiagnosticsRecord::compute(field, &self.nl, t, newton_iters)?;
        self.series.write(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    fn snapshot(&self, t: f64, step: usize, field: &Field, path: &Path) -> Result<()> {
        let header = SnapshotHeader {
            kind: SnapshotKind::State,
            t,
            step,
            linf_reference: self.linf_reference,
            residual_norm: None,
            config: self.config.clone(),
            grid: GridMeta::of(&field.disc),
        };
        Snapshot::from_field(field, header)?.save(path)
    }
}

impl StepObserver for RunObserver<'_> {
    fn observe(&mut self, info: &StepInfo, field: &Field) -> Result<bool> {
        let step = self.step_offset + info.step;
        self.max_linf = self.max_linf.max(info.linf);
        if info.step == 0 && self.skip_initial {
            return Ok(true);
        }
        self.last_step = step;
        if step % self.config.output.diagnostic_stride == 0 {
            self.record(info.t, field, info.newton_iters)?;
        }
        if step % self.config.output.snapshot_stride == 0 {
            self.snapshot(info.t, step, field, &snapshot_path(self.dir, step))?;
        }
        Ok(true)
    }
}

/// Integrates over `legs` starting from `u0` at time `t0` and global step `step0`,
/// writing diagnostics and snapshots into the configured directory.
#[allow(clippy::too_many_arguments)]
fn integrate(
    config: &SimConfig,
    scenario: Option<&str>,
    u0: Field,
    t0: f64,
    step0: usize,
    legs: &[Leg],
    linf_reference: f64,
    resumed: bool,
) -> Result<RunReport> {
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(dir.join("snapshots"))?;
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;
    let nl = config.physics.p;
    let mut obs = RunObserver {
        config,
        dir: &dir,
        nl,
        series: SeriesWriter::open(&dir.join("series.csv"))?,
        records: vec![],
        step_offset: step0,
        skip_initial: resumed,
        linf_reference,
        max_linf: u0.max_abs(),
        last_step: step0,
    };
    let initial_mass = crate::diagnostics::mass(&u0);
    let initial_energy = crate::diagnostics::energy(&u0, &nl);
    let mut u = u0.clone();
    let mut t = t0;
    let mut stop = StopReason::Completed;
    let mut last_iters = 0;
    for (i, leg) in legs.iter().enumerate() {
        let h = (leg.t_end - t) / leg.steps as f64;
        let solver = StageSolver::precompute(h, &u.disc, config.stepper())?;
        obs.skip_initial = resumed || i > 0;
        let out = evolve_with(&solver, &u, t, leg.steps, Some(&nl), config.detector, linf_reference, &mut obs)?;
        obs.step_offset += out.steps_taken;
        last_iters = out.newton_history.last().copied().unwrap_or(last_iters);
        u = out.field;
        t = out.t;
        log::info!("leg {} ended at t = {t} ({:?})", i + 1, out.stop);
        if out.stop != StopReason::Completed {
            stop = out.stop;
            break;
        }
    }
    let final_step = obs.step_offset;
    if obs.records.last().map(|r| r.t) != Some(t) && (final_step > step0 || !resumed) {
        obs.record(t, &u, last_iters)?;
    }
    obs.snapshot(t, final_step, &u, &snapshot_path(&dir, final_step))?;
    obs.snapshot(t, final_step, &u, &dir.join("final.zks"))?;

    let drift = if obs.records.len() >= 2 {
        Some(drift_report(&obs.records, DRIFT_THRESHOLD)?)
    } else {
        None
    };
    let shift_error = match config.initial {
        InitialData::GroundState { .. } if !resumed => {
            Some(u.max_abs_diff(&shift_in_x(&u0, config.physics.c * (t - t0))))
        }
        _ => None,
    };
    let cone = match config.output.cone_level {
        Some(level) if stop.is_blow_up() => cone_half_angle(&u, level).ok(),
        _ => None,
    };
    let summary = Summary {
        scenario: scenario.map(str::to_string),
        exit_code: exit_code_for_stop(&stop),
        blow_up_time: stop.is_blow_up().then_some(t),
        stop,
        t_start: t0,
        t_final: t,
        steps: final_step - step0,
        linf_reference,
        final_linf: u.max_abs(),
        max_linf: obs.max_linf,
        initial_mass,
        final_mass: crate::diagnostics::mass(&u),
        initial_energy,
        final_energy: crate::diagnostics::energy(&u, &nl),
        drift,
        shift_error,
        cone_half_angle: cone,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunReport {
        summary,
        dir: config.output.dir.clone(),
        final_state: u,
        series: obs.records,
    })
}

/// Executes a configured run from its initial data.
pub fn run(config: &SimConfig, scenario: Option<&str>) -> Result<RunReport> {
    config.validate()?;
    if config.integrator.legs.is_empty() {
        return Err(ZkError::Config("integrator.legs: at least one leg is required".into()));
    }
    std::fs::create_dir_all(&config.output.dir)?;
    let disc = config.discretization()?;
    let u0 = initial_field(config, &disc, &config.output.dir)?;
    let linf = u0.max_abs();
    integrate(config, scenario, u0, 0.0, 0, &config.integrator.legs, linf, false)
}

/// Continues from a snapshot over `legs`, appending to the run directory.
///
/// `overrides` adjust the stored configuration; any change of grid or
/// layout is refused. An empty `legs` list writes the snapshot back unchanged.
pub fn resume(path: &Path, legs: &[Leg], overrides: &[String]) -> Result<RunReport> {
    let snap = Snapshot::load(path)?;
    let config = snap.header.config.with_overrides(overrides)?;
    let disc = config.discretization()?;
    snap.header
        .grid
        .ensure_same(&GridMeta::of(&disc))
        .map_err(|e| ZkError::GridMismatch(format!("cannot resume {}: {e}", path.display())))?;
    let u0 = snap.field_on(&disc)?;
    let t0 = snap.header.t;
    let mut prev = t0;
    for (i, leg) in legs.iter().enumerate() {
        if leg.steps == 0 || !(leg.t_end > prev) {
            return Err(ZkError::Config(format!(
                "extension leg {i}: needs steps >= 1 and t_end > {prev}"
            )));
        }
        prev = leg.t_end;
    }
    let mut config = config;
    config.integrator.legs.extend_from_slice(legs);
    let dir = config.output.dir.clone();
    if legs.is_empty() {
        std::fs::create_dir_all(&dir)?;
        let out = dir.join("final.zks");
        if out != path {
            std::fs::write(&out, snap.to_bytes()?)?;
        }
        let summary = Summary {
            scenario: None,
            stop: StopReason::Completed,
            exit_code: EXIT_OK,
            t_start: t0,
            t_final: t0,
            steps: 0,
            linf_reference: snap.header.linf_reference,
            final_linf: u0.max_abs(),
            max_linf: u0.max_abs(),
            initial_mass: crate::diagnostics::mass(&u0),
            final_mass: crate::diagnostics::mass(&u0),
            initial_energy: crate::diagnostics::energy(&u0, &config.physics.p),
            final_energy: crate::diagnostics::energy(&u0, &config.physics.p),
            drift: None,
            shift_error: None,
            blow_up_time: None,
            cone_half_angle: None,
        };
        return Ok(RunReport {
            summary,
            dir,
            final_state: u0,
            series: vec![],
        });
    }
    integrate(&config, None, u0, t0, snap.header.step, legs, snap.header.linf_reference, true)
}

/// Diagnostics of stored snapshots, in the given order.
pub fn diagnose(paths: &[PathBuf]) -> Result<Vec<(Snapshot, DiagnosticsRecord)>> {
    paths
        .iter()
        .map(|p| {
            let snap = Snapshot::load(p)?;
            let field = snap.field(snap.header.config.execution)?;
            let rec = DiagnosticsRecord::compute(&field, &snap.header.config.physics.p, snap.header.t, 0)?;
            Ok((snap, rec))
        })
        .collect()
}

/// Sorted snapshot files of a run directory.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir.join("snapshots"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "zks"))
        .collect();
    out.sort();
    Ok(out)
}

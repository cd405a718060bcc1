//! Run configuration: a TOML document with every field validated at load.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Discretization, Nonlinearity};
use crate::error::{Result, ZkError};
use crate::ground_state::GroundStateOptions;
use crate::integrator::{DetectorOptions, StageCoupling, StepperOptions};
use crate::par::Execution;
use crate::spectral::TorusGrid;
use crate::transverse::RadialLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L", default = "default_l")]
    pub l: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
}

fn default_l() -> f64 {
    5.0
}
fn default_n() -> usize {
    512
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            l: default_l(),
            n: default_n(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_rho1")]
    pub rho1: f64,
    #[serde(default = "default_n_inner")]
    pub n_inner: usize,
    #[serde(default = "default_n_outer")]
    pub n_outer: usize,
}

fn default_rho0() -> f64 {
    1.0
}
fn default_rho1() -> f64 {
    20.0
}
fn default_n_inner() -> usize {
    20
}
fn default_n_outer() -> usize {
    100
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            rho0: default_rho0(),
            rho1: default_rho1(),
            n_inner: default_n_inner(),
            n_outer: default_n_outer(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default = "Nonlinearity::critical")]
    pub p: Nonlinearity,
    /// Wave speed of the ground state.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    1.0
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            p: Nonlinearity::critical(),
            c: default_c(),
        }
    }
}

/// Uniform stepping from the end of the previous leg to `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub legs: Vec<Leg>,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default)]
    pub coupling: StageCoupling,
}

fn default_newton_tol() -> f64 {
    StepperOptions::default().newton_tol
}
fn default_max_newton() -> usize {
    StepperOptions::default().max_newton
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            legs: vec![],
            newton_tol: default_newton_tol(),
            max_newton: default_max_newton(),
            coupling: StageCoupling::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn stepper(&self) -> StepperOptions {
        StepperOptions {
            newton_tol: self.newton_tol,
            max_newton: self.max_newton,
            coupling: self.coupling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `λ e^{-α(x² + ρ²)}`.
    Gaussian {
        lambda: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// The ground state, read from `profile` or solved on the run grid.
    GroundState {
        #[serde(default)]
        profile: Option<PathBuf>,
    },
    /// `λ Q` for a previously computed profile.
    ScaledGroundState { lambda: f64, profile: PathBuf },
    /// Any snapshot with matching grid.
    File { path: PathBuf },
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Steps between snapshots; the final state is always written.
    #[serde(default = "default_snapshot_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_diagnostic_stride")]
    pub diagnostic_stride: usize,
    /// Contour level for the cone half-angle of a blown-up final state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_level: Option<f64>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("runs/run")
}
fn default_snapshot_stride() -> usize {
    100
}
fn default_diagnostic_stride() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_stride: default_snapshot_stride(),
            diagnostic_stride: default_diagnostic_stride(),
            cone_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub initial: InitialData,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub detector: DetectorOptions,
    #[serde(default)]
    pub ground_state: GroundStateOptions,
    #[serde(default)]
    pub execution: Execution,
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> ZkError {
    ZkError::Config(format!("{path}: {msg}"))
}

impl SimConfig {
    /// Checks every constraint, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(g.l > 0.0 && g.l.is_finite()) {
            return Err(invalid("grid.L", format!("must be positive, got {}", g.l)));
        }
        if g.n < 4 || !g.n.is_power_of_two() {
            return Err(invalid("grid.N", format!("must be a power of two >= 4, got {}", g.n)));
        }
        let l = &self.layout;
        if !(l.rho0 > 0.0) {
            return Err(invalid("layout.rho0", format!("must be positive, got {}", l.rho0)));
        }
        if !(l.rho1 > l.rho0 && l.rho1.is_finite()) {
            return Err(invalid(
                "layout.rho1",
                format!("must exceed rho0 = {}, got {}", l.rho0, l.rho1),
            ));
        }
        if l.n_inner < 4 {
            return Err(invalid("layout.n_inner", format!("must be >= 4, got {}", l.n_inner)));
        }
        if l.n_outer < 4 {
            return Err(invalid("layout.n_outer", format!("must be >= 4, got {}", l.n_outer)));
        }
        if !(self.physics.c > 0.0 && self.physics.c.is_finite()) {
            return Err(invalid("physics.c", format!("must be positive, got {}", self.physics.c)));
        }
        let it = &self.integrator;
        let mut t = 0.0;
        for (i, leg) in it.legs.iter().enumerate() {
            if leg.steps == 0 {
                return Err(invalid(&format!("integrator.legs[{i}].steps"), "must be >= 1"));
            }
            if !(leg.t_end > t && leg.t_end.is_finite()) {
                return Err(invalid(
                    &format!("integrator.legs[{i}].t_end"),
                    format!("must exceed the previous end time {t}, got {}", leg.t_end),
                ));
            }
            t = leg.t_end;
        }
        if !(it.newton_tol > 0.0) {
            return Err(invalid("integrator.newton_tol", "must be positive"));
        }
        if it.max_newton == 0 {
            return Err(invalid("integrator.max_newton", "must be >= 1"));
        }
        match &self.initial {
            InitialData::Gaussian { lambda, alpha } => {
                if !lambda.is_finite() {
                    return Err(invalid("initial.lambda", "must be finite"));
                }
                if !(*alpha > 0.0) {
                    return Err(invalid("initial.alpha", format!("must be positive, got {alpha}")));
                }
            }
            InitialData::ScaledGroundState { lambda, .. } if !lambda.is_finite() => {
                return Err(invalid("initial.lambda", "must be finite"));
            }
            _ => {}
        }
        let o = &self.output;
        if o.snapshot_stride == 0 {
            return Err(invalid("output.snapshot_stride", "must be >= 1"));
        }
        if o.diagnostic_stride == 0 {
            return Err(invalid("output.diagnostic_stride", "must be >= 1"));
        }
        if let Some(level) = o.cone_level {
            if !(level > 0.0 && level.is_finite()) {
                return Err(invalid("output.cone_level", format!("must be positive, got {level}")));
            }
        }
        if !(self.detector.linf_factor > 1.0) {
            return Err(invalid("detector.linf_factor", "must exceed 1"));
        }
        let gs = &self.ground_state;
        if !(gs.tol > 0.0 && gs.accept >= gs.tol) {
            return Err(invalid("ground_state.accept", "must be >= ground_state.tol > 0"));
        }
        if gs.gmres_restart == 0 {
            return Err(invalid("ground_state.gmres_restart", "must be >= 1"));
        }
        Ok(())
    }

    pub fn stepper(&self) -> StepperOptions {
        self.integrator.stepper()
    }

    pub fn discretization(&self) -> Result<Arc<Discretization>> {
        let grid = TorusGrid::new(self.grid.l, self.grid.n)?;
        let l = &self.layout;
        let layout = RadialLayout::new(l.rho0, l.rho1, l.n_inner, l.n_outer)?;
        Ok(Discretization::new(grid, layout, self.execution))
    }

    /// Final time of the last leg.
    pub fn t_end(&self) -> f64 {
        self.integrator.legs.last().map_or(0.0, |l| l.t_end)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ZkError::Config(format!("cannot serialize config: {e}")))
    }

    /// Parses and validates a TOML document with `path=value` overrides applied on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| ZkError::Config(format!("parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: SimConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e| ZkError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies overrides to an already-built config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            self.validate()?;
            return Ok(self.clone());
        }
        Self::from_toml_str(&self.to_toml()?, overrides)
    }
}

/// Sets `a.b.c = value` in a TOML table. The value is parsed as TOML when
/// possible (numbers, booleans, arrays, inline tables) and as a string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ZkError::Config(format!("override {assignment:?} is not of the form path=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ZkError::Config(format!("bad override path {path:?}")));
    }
    let mut table = doc;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ZkError::Config(format!("override path {path:?}: {k} is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ZkError::Config(format!("cannot read {}: {e}", path.display())))?;
    SimConfig::from_toml_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    const SOLITON: &str = r#"
[grid]
L = 5.0
N = 512

[layout]
rho0 = 1.0
rho1 = 20.0
n_inner = 20
n_outer = 100

[physics]
p = "7/3"

[integrator]
legs = [{ t_end = 1.0, steps = 400 }]

[initial]
kind = "ground-state"
"#;

    #[test]
    fn soliton_config_loads() {
        let cfg = SimConfig::from_toml_str(SOLITON, &[]).unwrap();
        assert_eq!(cfg.grid.n, 512);
        assert_eq!(cfg.layout.n_outer, 100);
        assert_eq!(cfg.physics.p.rational(), Rational64::new(7, 3));
        assert_eq!(cfg.integrator.legs, vec![Leg { t_end: 1.0, steps: 400 }]);
        assert_eq!(cfg.output.diagnostic_stride, 10);
        assert_eq!(cfg.stepper().newton_tol, 1e-6);
        let again = SimConfig::from_toml_str(&cfg.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn ordering_violation_names_the_field() {
        let err = SimConfig::from_toml_str(SOLITON, &["layout.rho1=0.5".into()]).unwrap_err();
        assert!(err.to_string().contains("layout.rho1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SOLITON}\n[output]\nbogus = 3\n");
        let err = SimConfig::from_toml_str(&text, &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = SimConfig::from_toml_str(
            SOLITON,
            &["grid.N=1024".into(), "physics.p=\"2\"".into(), "output.dir=/tmp/x".into()],
        )
        .unwrap();
        assert_eq!(cfg.grid.n, 1024);
        assert_eq!(cfg.physics.p.rational(), Rational64::from_integer(2));
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
        assert!(SimConfig::from_toml_str(SOLITON, &["grid.N=1000".into()]).is_err());
        assert!(SimConfig::from_toml_str(SOLITON, &["grid".into()]).is_err());
    }

    #[test]
    fn bad_legs_are_rejected() {
        let err = SimConfig::from_toml_str(
            SOLITON,
            &["integrator.legs=[{t_end=1.0, steps=10}, {t_end=0.5, steps=10}]".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("integrator.legs[1].t_end"), "{err}");
    }
}

//! Named presets for the soliton-stability and blow-up experiments.

use std::path::{Path, PathBuf};

use super::config::{GridConfig, InitialData, IntegratorConfig, Leg, OutputConfig, SimConfig};
use crate::error::{Result, ZkError};

pub const NAMES: [&str; 6] = [
    "soliton-validate",
    "perturb-0.99",
    "perturb-1.01",
    "perturb-1.1",
    "gauss-5",
    "gauss-6.5",
];

/// Where `zkcyl ground-state` writes its profile by default.
pub const DEFAULT_PROFILE: &str = "runs/ground-state/ground_state.zks";

/// Contour level used for the radiation cone of the Gaussian blow-up run.
pub const CONE_LEVEL: f64 = 0.02;

fn legs(list: &[(f64, usize)]) -> Vec<Leg> {
    list.iter().map(|&(t_end, steps)| Leg { t_end, steps }).collect()
}

fn base(name: &str, n: usize, legs: Vec<Leg>, initial: InitialData) -> SimConfig {
    SimConfig {
        grid: GridConfig { l: 5.0, n },
        layout: Default::default(),
        physics: Default::default(),
        integrator: IntegratorConfig {
            legs,
            ..Default::default()
        },
        initial,
        output: OutputConfig {
            dir: Path::new("runs").join(name),
            ..Default::default()
        },
        detector: Default::default(),
        ground_state: Default::default(),
        execution: Default::default(),
    }
}

fn perturbed(name: &str, lambda: f64, n: usize, list: &[(f64, usize)]) -> SimConfig {
    let initial = InitialData::ScaledGroundState {
        lambda,
        profile: PathBuf::from(DEFAULT_PROFILE),
    };
    base(name, n, legs(list), initial)
}

fn gaussian(name: &str, lambda: f64, n: usize, list: &[(f64, usize)]) -> SimConfig {
    base(name, n, legs(list), InitialData::Gaussian { lambda, alpha: 1.0 })
}

/// The preset configuration of a named scenario, before overrides.
pub fn preset(name: &str) -> Result<SimConfig> {
    let cfg = match name {
        "soliton-validate" => base(name, 512, legs(&[(1.0, 400)]), InitialData::GroundState { profile: None }),
        "perturb-0.99" => perturbed(name, 0.99, 512, &[(10.0, 1000)]),
        "perturb-1.01" => perturbed(name, 1.01, 512, &[(50.0, 5000)]),
        "perturb-1.1" => perturbed(name, 1.1, 4096, &[(4.0, 1000), (4.5, 1000)]),
        "gauss-5" => gaussian(name, 5.0, 1024, &[(10.0, 1000)]),
        "gauss-6.5" => {
            let mut cfg = gaussian(name, 6.5, 4096, &[(0.75, 1000), (0.85, 1000)]);
            cfg.output.cone_level = Some(CONE_LEVEL);
            cfg
        }
        other => {
            return Err(ZkError::Config(format!(
                "unknown scenario {other:?}; expected one of {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// The preset with `path=value` overrides applied and validated.
pub fn scenario_config(name: &str, overrides: &[String]) -> Result<SimConfig> {
    preset(name)?.with_overrides(overrides)
}

//! Solitary-wave profile `ΔQ - cQ + Q^p = 0` by Newton–Krylov iteration.
//!
//! The residual is evaluated spectrally in x and by the transverse operator in
//! ρ, with the τ-rows holding the constraint functionals. Newton corrections
//! come from restarted GMRES on finite-difference Jacobian actions, right
//! preconditioned by the per-mode linear part `-k² + L - c`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{energy, mass};
use crate::dynamics::{
    forward_x, gaussian_data, inverse_x, linear_part, power_field, symmetrize_x, Discretization,
    Field, Nonlinearity,
};
use crate::error::{Result, ZkError};
use crate::krylov::{gmres, GmresOptions};
use crate::linalg::RealInverse;
use crate::par;

/// `(3p - 7) / (2(5 - p))`, the ratio `E[Q]/M[Q]` of the ground state.
pub fn energy_mass_ratio(p: Rational64) -> Result<Rational64> {
    let five = Rational64::from_integer(5);
    if p == five {
        return Err(ZkError::Domain("energy/mass ratio is undefined at p = 5".into()));
    }
    Ok((p * 3 - 7) / ((five - p) * 2))
}

/// Discrete residual of the profile equation, τ-rows carrying the constraints.
pub fn residual(q: &Field, c: f64, nl: &Nonlinearity) -> Field {
    let disc = &q.disc;
    let modal = forward_x(disc, &q.values);
    let mut r = linear_part(disc, &modal);
    r += forward_x(disc, &power_field(&q.values, Some(nl)));
    r -= &modal * Complex64::new(c, 0.0);
    let op = &disc.operator;
    for (i, &t) in op.tau_rows.iter().enumerate() {
        let row = op.constraints.row(i).map(|v| Complex64::new(v, 0.0)) * &modal;
        r.set_row(t, &row);
    }
    Field {
        values: inverse_x(disc, &r),
        disc: disc.clone(),
    }
}

/// Inverses of `-k² + L - c` per stored mode, τ-rows holding the constraints.
pub struct LinearPreconditioner {
    disc: Arc<Discretization>,
    inverses: Vec<RealInverse>,
}

impl LinearPreconditioner {
    pub fn new(disc: &Arc<Discretization>, c: f64) -> Result<Self> {
        let op = &disc.operator;
        let m = op.len();
        let ks = disc.grid.half_wavenumbers();
        let inverses = par::map_range(disc.exec, disc.n_modes(), |j| {
            let mut a = op.interior.clone();
            for r in 0..m {
                if !op.is_tau_row(r) {
                    a[(r, r)] -= ks[j] * ks[j] + c;
                }
            }
            for (i, &t) in op.tau_rows.iter().enumerate() {
                a.set_row(t, &op.constraints.row(i));
            }
            RealInverse::new(a)
        });
        let inverses = inverses
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ZkError::Singular("ground-state preconditioner".into()))?;
        Ok(Self {
            disc: disc.clone(),
            inverses,
        })
    }

    pub fn apply(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.disc.n_transverse();
        let mut modal = forward_x(&self.disc, values);
        let mut out = DMatrix::<Complex64>::zeros(modal.nrows(), modal.ncols());
        par::for_each_chunk_pair(
            self.disc.exec,
            modal.as_mut_slice(),
            m,
            out.as_mut_slice(),
            m,
            |j, x, y| self.inverses[j].apply(x, y),
        );
        inverse_x(&self.disc, &out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateOptions {
    /// Converged once the residual max-norm drops below this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// A stagnating iteration is accepted when its residual is below this.
    #[serde(default = "default_accept")]
    pub accept: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default = "default_restart")]
    pub gmres_restart: usize,
    #[serde(default = "default_gmres_tol")]
    pub gmres_tol: f64,
    #[serde(default = "default_gmres_max_restarts")]
    pub gmres_max_restarts: usize,
    /// Amplitude of the Gaussian seed `a·e^{-(x²+ρ²)}`.
    #[serde(default = "default_amplitude")]
    pub seed_amplitude: f64,
    /// Amplitude range tried in turn when the first seed fails.
    #[serde(default = "default_continuation")]
    pub continuation: [f64; 2],
}

fn default_tol() -> f64 {
    1e-10
}
fn default_accept() -> f64 {
    1e-9
}
fn default_max_newton() -> usize {
    40
}
fn default_restart() -> usize {
    30
}
fn default_gmres_tol() -> f64 {
    1e-3
}
fn default_gmres_max_restarts() -> usize {
    20
}
fn default_amplitude() -> f64 {
    3.0
}
fn default_continuation() -> [f64; 2] {
    [2.5, 3.5]
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            accept: default_accept(),
            max_newton: default_max_newton(),
            gmres_restart: default_restart(),
            gmres_tol: default_gmres_tol(),
            gmres_max_restarts: default_gmres_max_restarts(),
            seed_amplitude: default_amplitude(),
            continuation: default_continuation(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateProfile {
    pub field: Field,
    pub c: f64,
    pub nl: Nonlinearity,
    pub residual_norm: f64,
    pub mass: f64,
    pub energy: f64,
    pub newton_iters: usize,
}

/// Largest absolute row sum of the discrete Laplacian, `max_r Σ|L_rc| + k_max²`.
pub fn operator_scale(disc: &Discretization) -> f64 {
    let rows = disc
        .operator
        .interior
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let kmax = disc.grid.half_wavenumbers().last().copied().unwrap_or(0.0);
    rows + kmax * kmax
}

/// Forward-difference Jacobian action `(R(q + εv) - R(q)) / ε`.
///
/// Rounding in `R` grows with the operator scale, so the increment is
/// `√(ε_mach·scale)` relative to the magnitude of `q`.
pub fn jacobian_action(q: &Field, r0: &Field, v: &DMatrix<f64>, c: f64, nl: &Nonlinearity) -> DMatrix<f64> {
    let vmax = v.amax();
    if vmax == 0.0 {
        return DMatrix::zeros(v.nrows(), v.ncols());
    }
    let noise = f64::EPSILON * (1.0 + operator_scale(&q.disc));
    let eps = noise.sqrt() * (1.0 + q.values.amax()) / vmax;
    let shifted = Field {
        values: &q.values + v * eps,
        disc: q.disc.clone(),
    };
    (residual(&shifted, c, nl).values - &r0.values) / eps
}

fn as_matrix(like: &DMatrix<f64>, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(like.nrows(), like.ncols(), data)
}

/// Newton–Krylov solve from `seed`. Converging to (near) zero is reported as
/// [`ZkError::TrivialSolution`].
pub fn solve_ground_state(
    seed: &Field,
    c: f64,
    nl: &Nonlinearity,
    opts: &GroundStateOptions,
) -> Result<GroundStateProfile> {
    if !(c > 0.0) {
        return Err(ZkError::Config(format!("wave speed must be positive, got {c}")));
    }
    let seed_max = seed.max_abs();
    if seed_max == 0.0 {
        return Err(ZkError::Config("ground-state seed must be nonzero".into()));
    }
    let disc = seed.disc.clone();
    let pre = LinearPreconditioner::new(&disc, c)?;
    let gm = GmresOptions {
        restart: opts.gmres_restart,
        tol: opts.gmres_tol,
        max_restarts: opts.gmres_max_restarts,
    };
    let mut q = seed.clone();
    symmetrize_x(&mut q.values, &disc.grid);
    let mut r = residual(&q, c, nl);
    let mut rnorm = r.max_abs();
    let mut iters = 0;
    while rnorm >= opts.tol {
        if iters == opts.max_newton {
            break;
        }
        iters += 1;
        let rhs: Vec<f64> = r.values.iter().map(|v| -v).collect();
        let (y, _) = gmres(
            |v| {
                let pv = pre.apply(&as_matrix(&q.values, v));
                jacobian_action(&q, &r, &pv, c, nl).as_slice().to_vec()
            },
            &rhs,
            gm,
        );
        let delta = pre.apply(&as_matrix(&q.values, &y));
        // backtracking on the residual 2-norm
        let r2 = r.values.norm();
        let mut step = 1.0;
        let mut accepted = None;
        while step >= 1.0 / 64.0 {
            let mut values = &q.values + &delta * step;
            symmetrize_x(&mut values, &disc.grid);
            let trial = Field {
                values,
                disc: disc.clone(),
            };
            let rt = residual(&trial, c, nl);
            if rt.values.norm() < (1.0 - 1e-4 * step) * r2 {
                accepted = Some((trial, rt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, rt)) = accepted else {
            break;
        };
        let new_norm = rt.max_abs();
        log::debug!("newton {iters}: step {step}, residual {new_norm:e}");
        q = trial;
        r = rt;
        rnorm = new_norm;
        if !q.is_finite() {
            return Err(ZkError::SolverFailure {
                reason: "non-finite Newton iterate".into(),
                residual: rnorm,
            });
        }
    }
    if q.max_abs() < 1e-3 * seed_max {
        return Err(ZkError::TrivialSolution);
    }
    if rnorm >= opts.accept {
        return Err(ZkError::SolverFailure {
            reason: format!("Newton stopped after {iters} iterations"),
            residual: rnorm,
        });
    }
    Ok(GroundStateProfile {
        mass: mass(&q),
        energy: energy(&q, nl),
        field: q,
        c,
        nl: *nl,
        residual_norm: rnorm,
        newton_iters: iters,
    })
}

/// Solve from the Gaussian seed, retrying over the continuation amplitudes when
/// the first attempt fails.
pub fn solve_from_gaussian(
    disc: &Arc<Discretization>,
    c: f64,
    nl: &Nonlinearity,
    opts: &GroundStateOptions,
) -> Result<GroundStateProfile> {
    let first = solve_ground_state(&gaussian_data(disc, opts.seed_amplitude, 1.0)?, c, nl, opts);
    let mut err = match first {
        Ok(p) => return Ok(p),
        Err(e) => e,
    };
    let [lo, hi] = opts.continuation;
    for i in 0..=4 {
        let a = lo + (hi - lo) * i as f64 / 4.0;
        if a == opts.seed_amplitude {
            continue;
        }
        log::info!("retrying ground state from seed amplitude {a}");
        match solve_ground_state(&gaussian_data(disc, a, 1.0)?, c, nl, opts) {
            Ok(p) => return Ok(p),
            Err(e) => err = e,
        }
    }
    Err(err)
}

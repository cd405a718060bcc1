//! Two-stage Gauss (Hammer–Hollingsworth) implicit Runge–Kutta stepping of the
//! modal ZK system with a simplified Newton iteration for the stages.
//!
//! The stage system `K_i = J(û_n + h Σ_j a_ij K_j) + N(ũ_i)` is iterated with
//! the linear part `J = -ik(L - k²)` kept implicit and the nonlinear term
//! `N = -ik·FFT(u^p)` lagged. The τ-rows of every stage matrix carry the
//! constraint functionals, so each stage increment satisfies the matching and
//! outer boundary conditions exactly.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    forward_x, inverse_x, linear_part, minus_ik_and_clear_tau, power_field, Discretization, Field,
    Nonlinearity,
};
use crate::error::{Result, ZkError};
use crate::linalg::ComplexInverse;
use crate::par;

/// Butcher tableau of the 2-stage Gauss method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussTableau {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl GaussTableau {
    pub fn new() -> Self {
        let r = 3f64.sqrt() / 6.0;
        Self {
            a: [[0.25, 0.25 - r], [0.25 + r, 0.25]],
            b: [0.5, 0.5],
            c: [0.5 - r, 0.5 + r],
        }
    }

    /// Eigen-decomposition `A = T diag(μ) T⁻¹`, returned as `(μ, T, T⁻¹)`.
    pub fn eigen(&self) -> ([Complex64; 2], [[Complex64; 2]; 2], [[Complex64; 2]; 2]) {
        let a = self.a;
        let mean = 0.5 * (a[0][0] + a[1][1]);
        let half_diff = 0.5 * (a[0][0] - a[1][1]);
        let disc = Complex64::new(half_diff * half_diff + a[0][1] * a[1][0], 0.0).sqrt();
        let mu = [mean + disc, mean - disc];
        // eigenvector of row 1: (a12, μ - a11)
        let col = |m: Complex64| [Complex64::new(a[0][1], 0.0), m - a[0][0]];
        let v1 = col(mu[0]);
        let v2 = col(mu[1]);
        let t = [[v1[0], v2[0]], [v1[1], v2[1]]];
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        let tinv = [
            [t[1][1] / det, -t[0][1] / det],
            [-t[1][0] / det, t[0][0] / det],
        ];
        (mu, t, tinv)
    }
}

impl Default for GaussTableau {
    fn default() -> Self {
        Self::new()
    }
}

/// How the two coupled stage equations are solved inside one Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageCoupling {
    /// Diagonalize the tableau; two decoupled complex solves per mode, the
    /// linear part is inverted exactly.
    #[default]
    Decoupled,
    /// Alternate K₁ / K₂ sweeps with the shared `I - h a₁₁ J` matrix.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperOptions {
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default)]
    pub coupling: StageCoupling,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_newton() -> usize {
    50
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            newton_tol: default_tol(),
            max_newton: default_max_newton(),
            coupling: StageCoupling::Decoupled,
        }
    }
}

/// Per-mode stage-matrix inverses for one step size.
#[derive(Debug)]
pub struct StageSolver {
    h: f64,
    opts: StepperOptions,
    tableau: GaussTableau,
    disc: Arc<Discretization>,
    /// `[mode][matrix]`: two matrices for the decoupled scheme, one for Gauss–Seidel.
    inverses: Vec<Vec<ComplexInverse>>,
}

/// Result of one successful step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub newton_iters: usize,
    pub last_change: f64,
}

/// `I - h μ J` for mode `j` with the τ-rows replaced by the constraint functionals.
pub fn stage_matrix(disc: &Discretization, j: usize, h: f64, mu: Complex64) -> DMatrix<Complex64> {
    let op = &disc.operator;
    let m = op.len();
    let kd = disc.grid.odd_wavenumber(j);
    let k = disc.grid.half_wavenumbers()[j];
    // I - hμ(-ik)(L - k²) = I + i h μ k (L - k²)
    let f = Complex64::new(0.0, h * kd) * mu;
    let mut s = DMatrix::<Complex64>::identity(m, m);
    for r in 0..m {
        if op.is_tau_row(r) {
            continue;
        }
        for c in 0..m {
            s[(r, c)] += f * op.interior[(r, c)];
        }
        s[(r, r)] -= f * (k * k);
    }
    for (c, &t) in op.tau_rows.iter().enumerate() {
        for col in 0..m {
            s[(t, col)] = Complex64::new(op.constraints[(c, col)], 0.0);
        }
    }
    s
}

impl StageSolver {
    /// Factor the stage matrices of every stored mode.
    pub fn precompute(h: f64, disc: &Arc<Discretization>, opts: StepperOptions) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(ZkError::Config(format!("step size must be positive, got {h}")));
        }
        let tableau = GaussTableau::new();
        let mus: Vec<Complex64> = match opts.coupling {
            StageCoupling::Decoupled => tableau.eigen().0.to_vec(),
            StageCoupling::GaussSeidel => vec![Complex64::new(tableau.a[0][0], 0.0)],
        };
        let results = par::map_range(disc.exec, disc.n_modes(), |j| {
            mus.iter()
                .map(|&mu| ComplexInverse::new(stage_matrix(disc, j, h, mu)))
                .collect::<Option<Vec<_>>>()
                .ok_or(ZkError::SingularStage {
                    k: disc.grid.half_wavenumbers()[j],
                    h,
                })
        });
        let inverses = results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            h,
            opts,
            tableau,
            disc: disc.clone(),
            inverses,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn options(&self) -> &StepperOptions {
        &self.opts
    }

    pub fn discretization(&self) -> &Arc<Discretization> {
        &self.disc
    }

    /// Number of cached factorizations.
    pub fn factorization_count(&self) -> usize {
        self.inverses.iter().map(|v| v.len()).sum()
    }

    fn solve_modes(&self, which: usize, rhs: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let m = self.disc.n_transverse();
        let mut src = rhs.clone();
        let mut out = DMatrix::<Complex64>::zeros(rhs.nrows(), rhs.ncols());
        par::for_each_chunk_pair(
            self.disc.exec,
            src.as_mut_slice(),
            m,
            out.as_mut_slice(),
            m,
            |j, x, y| self.inverses[j][which].apply(x, y),
        );
        out
    }

    /// `-ik FFT(ũ^p)` with τ-rows cleared.
    fn nonlinear(&self, u: &DMatrix<f64>, nl: &Nonlinearity) -> DMatrix<Complex64> {
        let mut v = forward_x(&self.disc, &power_field(u, Some(nl)));
        minus_ik_and_clear_tau(&self.disc, &mut v);
        v
    }

    fn linear(&self, modal: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut v = linear_part(&self.disc, modal);
        minus_ik_and_clear_tau(&self.disc, &mut v);
        v
    }

    /// Advance `u` by one step of size `h`. `nl = None` integrates the linear problem.
    pub fn step(&self, u: &Field, nl: Option<&Nonlinearity>) -> Result<(Field, StepStats)> {
        if !Arc::ptr_eq(&u.disc, &self.disc) && !u.disc.same_shape(&self.disc) {
            return Err(ZkError::Shape("field and stage solver grids differ".into()));
        }
        let disc = &self.disc;
        let h = self.h;
        let a = self.tableau.a;
        let un = &u.values;
        let un_hat = forward_x(disc, un);
        let ju = self.linear(&un_hat);

        // explicit warm start K_i = f(u_n)
        let f0 = match nl {
            Some(nl) => &ju + self.nonlinear(un, nl),
            None => ju.clone(),
        };
        let mut k_hat = [f0.clone(), f0];
        let k0 = inverse_x(disc, &k_hat[0]);
        let mut k_phys = [k0.clone(), k0];

        let stage_u = |kp: &[DMatrix<f64>; 2], i: usize| un + (&kp[0] * (h * a[i][0]) + &kp[1] * (h * a[i][1]));

        let mut iters = 0;
        let mut change = f64::INFINITY;
        while iters < self.opts.max_newton {
            iters += 1;
            let new_hat = match self.opts.coupling {
                StageCoupling::Decoupled => {
                    let rhs: Vec<DMatrix<Complex64>> = (0..2)
                        .map(|i| match nl {
                            Some(nl) => &ju + self.nonlinear(&stage_u(&k_phys, i), nl),
                            None => ju.clone(),
                        })
                        .collect();
                    let (_, t, tinv) = self.tableau.eigen();
                    let w: Vec<DMatrix<Complex64>> = (0..2)
                        .map(|j| {
                            let z = rhs[0].map(|c| c * tinv[j][0]) + rhs[1].map(|c| c * tinv[j][1]);
                            self.solve_modes(j, &z)
                        })
                        .collect();
                    [
                        w[0].map(|c| c * t[0][0]) + w[1].map(|c| c * t[0][1]),
                        w[0].map(|c| c * t[1][0]) + w[1].map(|c| c * t[1][1]),
                    ]
                }
                StageCoupling::GaussSeidel => {
                    let mut kh = k_hat.clone();
                    let mut kp = k_phys.clone();
                    for i in 0..2 {
                        let other = 1 - i;
                        let mut rhs = &ju + self.linear(&kh[other]) * Complex64::new(h * a[i][other], 0.0);
                        if let Some(nl) = nl {
                            rhs += self.nonlinear(&stage_u(&kp, i), nl);
                        }
                        kh[i] = self.solve_modes(0, &rhs);
                        kp[i] = inverse_x(disc, &kh[i]);
                    }
                    kh
                }
            };
            let new_phys = [inverse_x(disc, &new_hat[0]), inverse_x(disc, &new_hat[1])];
            change = (0..2)
                .map(|i| {
                    new_phys[i]
                        .iter()
                        .zip(k_phys[i].iter())
                        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                })
                .fold(0.0, f64::max);
            k_hat = new_hat;
            k_phys = new_phys;
            if !change.is_finite() {
                return Err(ZkError::StepFailure {
                    t: f64::NAN,
                    reason: "non-finite stage values".into(),
                });
            }
            // the linear problem is solved exactly by the first pass
            if nl.is_none() && self.opts.coupling == StageCoupling::Decoupled {
                break;
            }
            if change < self.opts.newton_tol {
                break;
            }
        }
        if nl.is_some() && change >= self.opts.newton_tol {
            return Err(ZkError::StepFailure {
                t: f64::NAN,
                reason: format!(
                    "simplified Newton did not converge in {} iterations (last change {change:e})",
                    self.opts.max_newton
                ),
            });
        }
        let b = self.tableau.b;
        let next = un + (&k_phys[0] * (h * b[0]) + &k_phys[1] * (h * b[1]));
        Ok((
            Field {
                values: next,
                disc: disc.clone(),
            },
            StepStats {
                newton_iters: iters,
                last_change: change,
            },
        ))
    }
}

/// Declares blow-up from L∞ growth combined with Newton effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorOptions {
    /// Fire once L∞ exceeds this multiple of the initial L∞ ...
    #[serde(default = "default_linf_factor")]
    pub linf_factor: f64,
    /// ... and the step needed more than this many Newton iterations.
    #[serde(default = "default_newton_trigger")]
    pub newton_trigger: usize,
}

fn default_linf_factor() -> f64 {
    10.0
}

fn default_newton_trigger() -> usize {
    10
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            linf_factor: default_linf_factor(),
            newton_trigger: default_newton_trigger(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StopReason {
    Completed,
    /// L∞ growth with stalled Newton iterations.
    BlowUp { linf: f64, newton_iters: usize },
    /// The stage iteration failed; treated as blow-up by the runner.
    StepFailure { message: String },
    /// The observer asked to stop.
    Requested,
}

impl StopReason {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, StopReason::BlowUp { .. } | StopReason::StepFailure { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub step: usize,
    pub t: f64,
    pub h: f64,
    pub newton_iters: usize,
    pub linf: f64,
}

/// Receives the state after every accepted step (and once for the initial data
/// with `step == 0`). Returning `false` stops the integration.
pub trait StepObserver {
    fn observe(&mut self, info: &StepInfo, field: &Field) -> Result<bool>;
}

impl<F: FnMut(&StepInfo, &Field) -> bool> StepObserver for F {
    fn observe(&mut self, info: &StepInfo, field: &Field) -> Result<bool> {
        Ok(self(info, field))
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub field: Field,
    pub t: f64,
    pub steps_taken: usize,
    pub stop: StopReason,
    pub newton_history: Vec<usize>,
}

/// Uniform steps `h = (t_end - t_start)/n_steps` from `u0`.
///
/// `linf_reference` is the L∞ norm the detector compares against (the
/// initial L∞ of the whole run, which differs from `u0` on resumed legs).
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    u0: &Field,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
    nl: Option<&Nonlinearity>,
    opts: StepperOptions,
    detector: DetectorOptions,
    linf_reference: f64,
    observer: &mut dyn StepObserver,
) -> Result<EvolveOutcome> {
    if n_steps == 0 {
        return Err(ZkError::Config("number of steps must be >= 1".into()));
    }
    if !(t_end > t_start) {
        return Err(ZkError::Config(format!(
            "t_end = {t_end} must exceed t_start = {t_start}"
        )));
    }
    let h = (t_end - t_start) / n_steps as f64;
    let solver = StageSolver::precompute(h, &u0.disc, opts)?;
    evolve_with(&solver, u0, t_start, n_steps, nl, detector, linf_reference, observer)
}

/// As [`evolve`] with a prebuilt solver.
#[allow(clippy::too_many_arguments)]
pub fn evolve_with(
    solver: &StageSolver,
    u0: &Field,
    t_start: f64,
    n_steps: usize,
    nl: Option<&Nonlinearity>,
    detector: DetectorOptions,
    linf_reference: f64,
    observer: &mut dyn StepObserver,
) -> Result<EvolveOutcome> {
    let h = solver.h();
    let mut u = u0.clone();
    let mut history = Vec::with_capacity(n_steps);
    let mut t = t_start;
    let info0 = StepInfo {
        step: 0,
        t,
        h,
        newton_iters: 0,
        linf: u.max_abs(),
    };
    if !observer.observe(&info0, &u)? {
        return Ok(EvolveOutcome {
            field: u,
            t,
            steps_taken: 0,
            stop: StopReason::Requested,
            newton_history: history,
        });
    }
    for n in 1..=n_steps {
        let (next, stats) = match solver.step(&u, nl) {
            Ok(v) => v,
            Err(ZkError::StepFailure { reason, .. }) => {
                return Ok(EvolveOutcome {
                    field: u,
                    t,
                    steps_taken: n - 1,
                    stop: StopReason::StepFailure {
                        message: format!("at t = {t}: {reason}"),
                    },
                    newton_history: history,
                })
            }
            Err(e) => return Err(e),
        };
        // t_start + n h avoids drift from repeated addition
        t = t_start + n as f64 * h;
        history.push(stats.newton_iters);
        let linf = next.max_abs();
        if !linf.is_finite() {
            return Ok(EvolveOutcome {
                field: u,
                t: t - h,
                steps_taken: n - 1,
                stop: StopReason::StepFailure {
                    message: format!("non-finite values at t = {t}"),
                },
                newton_history: history,
            });
        }
        u = next;
        let info = StepInfo {
            step: n,
            t,
            h,
            newton_iters: stats.newton_iters,
            linf,
        };
        let keep_going = observer.observe(&info, &u)?;
        if linf > detector.linf_factor * linf_reference && stats.newton_iters > detector.newton_trigger {
            return Ok(EvolveOutcome {
                field: u,
                t,
                steps_taken: n,
                stop: StopReason::BlowUp {
                    linf,
                    newton_iters: stats.newton_iters,
                },
                newton_history: history,
            });
        }
        if !keep_going {
            return Ok(EvolveOutcome {
                field: u,
                t,
                steps_taken: n,
                stop: StopReason::Requested,
                newton_history: history,
            });
        }
    }
    Ok(EvolveOutcome {
        field: u,
        t,
        steps_taken: n_steps,
        stop: StopReason::Completed,
        newton_history: history,
    })
}

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use zkcyl::dynamics::{forward_x, inverse_x, Discretization, Field};
use zkcyl::integrator::{evolve, DetectorOptions, StepInfo, StepperOptions};
use zkcyl::par::Execution;
use zkcyl::spectral::TorusGrid;
use zkcyl::transverse::RadialLayout;

pub fn small_disc(exec: Execution) -> Arc<Discretization> {
    Discretization::new(
        TorusGrid::new(1.0, 4).unwrap(),
        RadialLayout::new(1.0, 3.0, 4, 4).unwrap(),
        exec,
    )
}

/// `A_j = G⁻¹ J_j`, the generator of the constrained linear flow of mode `j`,
/// where `G` is the identity with constraint rows and `J_j` the linear
/// right-hand side with zeroed constraint rows.
fn generator(disc: &Discretization, j: usize) -> DMatrix<Complex64> {
    let op = &disc.operator;
    let m = op.len();
    let k = disc.grid.half_wavenumbers()[j];
    let ik = Complex64::new(0.0, disc.grid.odd_wavenumber(j));
    let mut g = DMatrix::<Complex64>::identity(m, m);
    let mut jm = DMatrix::<Complex64>::zeros(m, m);
    for r in 0..m {
        if op.is_tau_row(r) {
            continue;
        }
        for c in 0..m {
            let lap = op.interior[(r, c)] - if r == c { k * k } else { 0.0 };
            jm[(r, c)] = -ik * lap;
        }
    }
    for (i, &t) in op.tau_rows.iter().enumerate() {
        for c in 0..m {
            g[(t, c)] = Complex64::new(op.constraints[(i, c)], 0.0);
        }
    }
    g.lu().solve(&jm).unwrap()
}

/// Smooth initial data projected onto the constraint manifold mode by mode.
pub fn consistent_data(disc: &Arc<Discretization>) -> Field {
    let raw = Field::from_fn(disc, |x, rho| (x.sin() + 0.5 * (2.0 * x).cos()) * (-rho * rho).exp());
    let mut modal = forward_x(disc, &raw.values);
    let b = &disc.operator.constraints;
    let bbt = (b * b.transpose()).try_inverse().unwrap();
    let proj = DMatrix::<f64>::identity(b.ncols(), b.ncols()) - b.transpose() * bbt * b;
    let proj = proj.map(|v| Complex64::new(v, 0.0));
    modal = &proj * modal;
    Field::from_values(disc, inverse_x(disc, &modal)).unwrap()
}

/// Exact linear propagation to time `t` by matrix exponentials of each mode's generator.
pub fn exact_linear(u0: &Field, t: f64) -> Field {
    let disc = &u0.disc;
    let mut modal = forward_x(disc, &u0.values);
    for j in 0..disc.n_modes() {
        let prop = (generator(disc, j) * Complex64::new(t, 0.0)).exp();
        let col = &prop * modal.column(j);
        modal.set_column(j, &col);
    }
    Field::from_values(disc, inverse_x(disc, &modal)).unwrap()
}

/// Observed orders of the linear Gauss scheme over the dyadic triplet `n, 2n, 4n` steps to `t`.
pub fn linear_orders(disc: &Arc<Discretization>, t: f64, n: usize) -> (f64, f64, [f64; 3]) {
    let u0 = consistent_data(disc);
    let exact = exact_linear(&u0, t);
    let mut errs = [0.0; 3];
    for (i, steps) in [n, 2 * n, 4 * n].into_iter().enumerate() {
        let mut obs = |_: &StepInfo, _: &Field| true;
        let out = evolve(
            &u0,
            0.0,
            t,
            steps,
            None,
            StepperOptions::default(),
            DetectorOptions::default(),
            u0.max_abs(),
            &mut obs,
        )
        .unwrap();
        errs[i] = out.field.max_abs_diff(&exact);
    }
    ((errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2(), errs)
}

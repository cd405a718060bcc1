//! Fields on the tensor grid, the ZK right-hand side in modal form and
//! initial-data constructors.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZkError};
use crate::par::{self, Execution};
use crate::spectral::{FourierX, TorusGrid};
use crate::transverse::{RadialLayout, TransverseOperator};

/// Everything shared by fields living on one grid: torus, radial layout,
/// assembled transverse operator and FFT plans.
#[derive(Debug)]
pub struct Discretization {
    pub grid: TorusGrid,
    pub operator: TransverseOperator,
    pub fft: FourierX,
    pub exec: Execution,
}

impl Discretization {
    pub fn new(grid: TorusGrid, layout: RadialLayout, exec: Execution) -> Arc<Self> {
        let operator = TransverseOperator::assemble(&layout);
        let fft = FourierX::new(grid.n);
        Arc::new(Self {
            grid,
            operator,
            fft,
            exec,
        })
    }

    pub fn layout(&self) -> &RadialLayout {
        &self.operator.layout
    }

    pub fn nx(&self) -> usize {
        self.grid.n
    }

    pub fn n_modes(&self) -> usize {
        self.grid.n_modes()
    }

    pub fn n_transverse(&self) -> usize {
        self.operator.len()
    }

    pub fn same_shape(&self, other: &Discretization) -> bool {
        self.grid == other.grid
            && self.layout().rho0 == other.layout().rho0
            && self.layout().rho1 == other.layout().rho1
            && self.layout().n_inner == other.layout().n_inner
            && self.layout().n_outer == other.layout().n_outer
    }
}

/// Real solution values, `N` x-nodes by `N_I + N_II + 2` transverse positions.
#[derive(Debug, Clone)]
pub struct Field {
    pub values: DMatrix<f64>,
    pub disc: Arc<Discretization>,
}

/// Fourier-in-x coefficients of a real field: transverse positions by the
/// `N/2 + 1` non-negative wavenumbers. Column `k` is one decoupled mode.
#[derive(Debug, Clone)]
pub struct ModalField {
    pub values: DMatrix<Complex64>,
    pub disc: Arc<Discretization>,
}

impl Field {
    pub fn zeros(disc: &Arc<Discretization>) -> Self {
        Self {
            values: DMatrix::zeros(disc.nx(), disc.n_transverse()),
            disc: disc.clone(),
        }
    }

    pub fn from_values(disc: &Arc<Discretization>, values: DMatrix<f64>) -> Result<Self> {
        if values.shape() != (disc.nx(), disc.n_transverse()) {
            return Err(ZkError::Shape(format!(
                "field is {:?}, grid expects {:?}",
                values.shape(),
                (disc.nx(), disc.n_transverse())
            )));
        }
        Ok(Self {
            values,
            disc: disc.clone(),
        })
    }

    /// Evaluate `f(x, ρ)` on the tensor grid.
    pub fn from_fn(disc: &Arc<Discretization>, f: impl Fn(f64, f64) -> f64) -> Self {
        let rho = &disc.layout().physical_rho;
        let x = &disc.grid.nodes;
        Self {
            values: DMatrix::from_fn(x.len(), rho.len(), |i, m| f(x[i], rho[m])),
            disc: disc.clone(),
        }
    }

    pub fn forward_x(&self) -> ModalField {
        forward_field(self)
    }

    pub fn scaled(&self, lambda: f64) -> Field {
        Field {
            values: &self.values * lambda,
            disc: self.disc.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl ModalField {
    pub fn zeros(disc: &Arc<Discretization>) -> Self {
        Self {
            values: DMatrix::zeros(disc.n_transverse(), disc.n_modes()),
            disc: disc.clone(),
        }
    }

    pub fn inverse_x(&self) -> Field {
        Field {
            values: inverse_x(&self.disc, &self.values),
            disc: self.disc.clone(),
        }
    }
}

/// Transform every transverse column in x. Output is transverse x modes.
pub fn forward_x(disc: &Discretization, values: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = disc.nx();
    let k = disc.n_modes();
    let m = disc.n_transverse();
    let mut spec = DMatrix::<Complex64>::zeros(k, m);
    let mut src = values.clone();
    par::for_each_chunk_pair(
        disc.exec,
        src.as_mut_slice(),
        n,
        spec.as_mut_slice(),
        k,
        |_, col, out| disc.fft.forward(col, out),
    );
    spec.transpose()
}

/// Inverse of [`forward_x`]; the result is real by construction.
pub fn inverse_x(disc: &Discretization, modal: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = disc.nx();
    let k = disc.n_modes();
    let m = disc.n_transverse();
    let mut spec = modal.transpose();
    let mut out = DMatrix::<f64>::zeros(n, m);
    par::for_each_chunk_pair(
        disc.exec,
        spec.as_mut_slice(),
        k,
        out.as_mut_slice(),
        n,
        |_, coeffs, col| disc.fft.inverse(coeffs, col),
    );
    out
}

/// Transform a real field (shape-checked).
pub fn forward_field(field: &Field) -> ModalField {
    ModalField {
        values: forward_x(&field.disc, &field.values),
        disc: field.disc.clone(),
    }
}

/// `mat · values` for a real matrix acting on complex columns.
pub fn apply_real(mat: &DMatrix<f64>, values: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let re = values.map(|c| c.re);
    let im = values.map(|c| c.im);
    let ar = mat * re;
    let ai = mat * im;
    DMatrix::from_fn(values.nrows(), values.ncols(), |r, c| {
        Complex64::new(ar[(r, c)], ai[(r, c)])
    })
}

/// `|u|^p · sign(u)`, the odd extension of the power.
pub fn signed_power(u: f64, p: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(p).copysign(u)
    }
}

/// `|u|^q`.
pub fn abs_power(u: f64, q: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(q)
    }
}

/// Power nonlinearity `u^p` with `p > 1` an integer or a fraction with odd
/// denominator, so that `u^p` is real for negative `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Nonlinearity {
    p: Rational64,
}

impl Nonlinearity {
    pub fn new(p: Rational64) -> Result<Self> {
        if *p.denom() % 2 == 0 {
            return Err(ZkError::Config(format!(
                "p = {p} must have an odd denominator"
            )));
        }
        if p <= Rational64::from_integer(1) {
            return Err(ZkError::Config(format!("p = {p} must exceed 1")));
        }
        Ok(Self { p })
    }

    pub fn critical() -> Self {
        Self {
            p: Rational64::new(7, 3),
        }
    }

    pub fn rational(&self) -> Rational64 {
        self.p
    }

    pub fn p(&self) -> f64 {
        *self.p.numer() as f64 / *self.p.denom() as f64
    }

    /// Real value of `u^p`: odd in `u` when the numerator is odd, even otherwise.
    pub fn power(&self, u: f64) -> f64 {
        if self.p.numer() % 2 != 0 {
            signed_power(u, self.p())
        } else {
            abs_power(u, self.p())
        }
    }

    /// Derivative `p u^{p-1}`.
    pub fn power_derivative(&self, u: f64) -> f64 {
        let q = self.p - Rational64::from_integer(1);
        let v = if q.numer() % 2 != 0 {
            signed_power(u, self.p() - 1.0)
        } else {
            abs_power(u, self.p() - 1.0)
        };
        self.p() * v
    }

    /// Real value of `u^{p+1}` as it appears in the energy density.
    pub fn power_plus_one(&self, u: f64) -> f64 {
        let q = self.p + Rational64::from_integer(1);
        if q.numer() % 2 != 0 {
            signed_power(u, self.p() + 1.0)
        } else {
            abs_power(u, self.p() + 1.0)
        }
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = ZkError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let p = match s.split_once('/') {
            Some((a, b)) => {
                let a: i64 = a.trim().parse().map_err(|_| bad_p(s))?;
                let b: i64 = b.trim().parse().map_err(|_| bad_p(s))?;
                if b <= 0 {
                    return Err(bad_p(s));
                }
                Rational64::new(a, b)
            }
            None => Rational64::from_integer(s.parse().map_err(|_| bad_p(s))?),
        };
        Self::new(p)
    }
}

fn bad_p(s: &str) -> ZkError {
    ZkError::Config(format!("cannot parse p = {s:?} as an integer or fraction a/b"))
}

impl TryFrom<String> for Nonlinearity {
    type Error = ZkError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Nonlinearity> for String {
    fn from(n: Nonlinearity) -> String {
        n.p.to_string()
    }
}

impl std::fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.p)
    }
}

/// Pointwise power of a field.
pub fn power_field(values: &DMatrix<f64>, nl: Option<&Nonlinearity>) -> DMatrix<f64> {
    match nl {
        Some(nl) => values.map(|u| nl.power(u)),
        None => DMatrix::zeros(values.nrows(), values.ncols()),
    }
}

/// Multiply every transverse column of mode `j` by `-i k_j` (Nyquist zeroed)
/// and clear the τ-rows.
pub(crate) fn minus_ik_and_clear_tau(disc: &Discretization, v: &mut DMatrix<Complex64>) {
    let tau = disc.operator.tau_rows;
    for (j, mut col) in v.column_iter_mut().enumerate() {
        let f = Complex64::new(0.0, -disc.grid.odd_wavenumber(j));
        col.iter_mut().for_each(|c| *c *= f);
        for &t in &tau {
            col[t] = Complex64::default();
        }
    }
}

/// `(L - k²) û` per mode with τ-rows zeroed.
pub(crate) fn linear_part(disc: &Discretization, modal: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut lu = apply_real(&disc.operator.interior, modal);
    let ks = disc.grid.half_wavenumbers();
    for (j, mut col) in lu.column_iter_mut().enumerate() {
        let k2 = ks[j] * ks[j];
        for (r, c) in col.iter_mut().enumerate() {
            *c -= modal[(r, j)] * k2;
        }
    }
    for &t in &disc.operator.tau_rows {
        lu.row_mut(t).fill(Complex64::default());
    }
    lu
}

/// Right-hand side of the modal ZK system,
/// `-ik(L - k²)û - ik·FFT(u^p)`, with τ-rows set to zero. Passing `None`
/// for the nonlinearity gives the linear problem.
pub fn modal_rhs(modal: &ModalField, nl: Option<&Nonlinearity>) -> ModalField {
    let disc = &modal.disc;
    let mut out = linear_part(disc, &modal.values);
    if let Some(nl) = nl {
        let u = inverse_x(disc, &modal.values);
        let pw = forward_x(disc, &power_field(&u, Some(nl)));
        out += pw;
    }
    minus_ik_and_clear_tau(disc, &mut out);
    ModalField {
        values: out,
        disc: disc.clone(),
    }
}

/// `λ e^{-α(x² + ρ²)}` on the grid.
pub fn gaussian_data(disc: &Arc<Discretization>, lambda: f64, alpha: f64) -> Result<Field> {
    if !(alpha > 0.0) {
        return Err(ZkError::Config(format!("alpha must be positive, got {alpha}")));
    }
    Ok(Field::from_fn(disc, |x, r| {
        lambda * (-alpha * (x * x + r * r)).exp()
    }))
}

pub fn scale_data(field: &Field, lambda: f64) -> Field {
    field.scaled(lambda)
}

/// Spectral derivative in x (Nyquist zeroed).
pub fn dx(field: &Field) -> Field {
    let disc = &field.disc;
    let mut m = forward_x(disc, &field.values);
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let f = Complex64::new(0.0, disc.grid.odd_wavenumber(j));
        col.iter_mut().for_each(|c| *c *= f);
    }
    Field {
        values: inverse_x(disc, &m),
        disc: disc.clone(),
    }
}

/// Exact spectral translation `u(x) -> u(x - distance)` on the torus.
pub fn shift_in_x(field: &Field, distance: f64) -> Field {
    let disc = &field.disc;
    let mut m = forward_x(disc, &field.values);
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let k = disc.grid.wavenumbers[j];
        let f = Complex64::from_polar(1.0, -k * distance);
        col.iter_mut().for_each(|c| *c *= f);
    }
    Field {
        values: inverse_x(disc, &m),
        disc: disc.clone(),
    }
}

/// Spectral interpolation onto a torus with the same `L` and a different `N`.
pub fn resample_x(field: &Field, target: &Arc<Discretization>) -> Result<Field> {
    let src = &field.disc;
    if src.grid.l != target.grid.l {
        return Err(ZkError::GridMismatch(format!(
            "cannot resample between L = {} and L = {}",
            src.grid.l, target.grid.l
        )));
    }
    if src.n_transverse() != target.n_transverse() {
        return Err(ZkError::GridMismatch(
            "transverse layouts differ".to_string(),
        ));
    }
    let m = forward_x(src, &field.values);
    let mut out = DMatrix::<Complex64>::zeros(target.n_transverse(), target.n_modes());
    let keep = src.n_modes().min(target.n_modes());
    for j in 0..keep {
        let mut c = m.column(j).clone_owned();
        // split a Nyquist bin that becomes interior when refining
        if j == src.n_modes() - 1 && target.n_modes() > src.n_modes() {
            c *= Complex64::new(0.5, 0.0);
        }
        out.set_column(j, &c);
    }
    Ok(Field {
        values: inverse_x(target, &out),
        disc: target.clone(),
    })
}

/// Replace `u(x, ρ)` by `(u(x, ρ) + u(-x, ρ)) / 2`.
pub fn symmetrize_x(values: &mut DMatrix<f64>, grid: &TorusGrid) {
    let n = grid.n;
    for mut col in values.column_iter_mut() {
        for i in 1..n / 2 {
            let j = grid.mirror_index(i);
            let avg = 0.5 * (col[i] + col[j]);
            col[i] = avg;
            col[j] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn small_disc() -> Arc<Discretization> {
        Discretization::new(
            TorusGrid::new(2.0, 32).unwrap(),
            RadialLayout::new(1.0, 8.0, 8, 16).unwrap(),
            Execution::Serial,
        )
    }

    #[test]
    fn powers() {
        let p = 7.0 / 3.0;
        assert_abs_diff_eq!(signed_power(8.0, p), 128.0, epsilon = 1e-12);
        assert_abs_diff_eq!(signed_power(-8.0, p), -128.0, epsilon = 1e-12);
        assert_eq!(signed_power(0.0, p), 0.0);
        assert_abs_diff_eq!(abs_power(-8.0, 10.0 / 3.0), 1024.0, epsilon = 1e-10);
        assert_eq!(abs_power(1.0, 10.0 / 3.0), 1.0);
        let direct = 1.0 / 2f64.powf(10.0 / 3.0);
        assert_abs_diff_eq!(abs_power(0.5, 10.0 / 3.0), direct, epsilon = 1e-16);
        assert_abs_diff_eq!(abs_power(0.5, 10.0 / 3.0), 0.099_212_565_748_012_47, epsilon = 1e-15);
    }

    #[test]
    fn nonlinearity_parsing() {
        let nl: Nonlinearity = "7/3".parse().unwrap();
        assert_eq!(nl, Nonlinearity::critical());
        assert_eq!(nl.to_string(), "7/3");
        let two: Nonlinearity = "2".parse().unwrap();
        assert_eq!(two.power(-3.0), 9.0);
        assert_eq!(two.power_plus_one(-2.0), -8.0);
        assert!("3/2".parse::<Nonlinearity>().is_err());
        assert!("1".parse::<Nonlinearity>().is_err());
        assert!("x".parse::<Nonlinearity>().is_err());
        assert_abs_diff_eq!(nl.power_plus_one(-8.0), 1024.0, epsilon = 1e-10);
    }

    #[test]
    fn round_trip_is_exactly_real() {
        let disc = small_disc();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let vals = DMatrix::from_fn(disc.nx(), disc.n_transverse(), |_, _| rng.gen_range(-1.0..1.0));
        let f = Field::from_values(&disc, vals.clone()).unwrap();
        let back = forward_field(&f).inverse_x();
        let err = (&back.values - &vals).amax();
        assert!(err < 1e-13 * vals.amax().max(1.0), "{err}");
    }

    #[test]
    fn parseval() {
        let disc = small_disc();
        let f = Field::from_fn(&disc, |x, r| (x / 2.0).sin() + (-r * r).exp() * x.cos());
        let m = f.forward_x();
        let n = disc.nx() as f64;
        for c in 0..disc.n_transverse() {
            let phys: f64 = f.values.column(c).iter().map(|v| v * v).sum::<f64>() / n;
            let mut spec = 0.0;
            for j in 0..disc.n_modes() {
                let w = if j == 0 || j == disc.n_modes() - 1 { 1.0 } else { 2.0 };
                spec += w * m.values[(c, j)].norm_sqr();
            }
            assert_abs_diff_eq!(phys, spec, epsilon = 1e-12 * phys.max(1e-300));
        }
    }

    #[test]
    fn zero_and_mean_mode_rhs() {
        let disc = small_disc();
        let nl = Nonlinearity::critical();
        let z = ModalField::zeros(&disc);
        assert_eq!(modal_rhs(&z, Some(&nl)).values.camax(), 0.0);
        // pure k=0 content: x-independent profile
        let f = Field::from_fn(&disc, |_, r| (-r * r).exp());
        let rhs = modal_rhs(&f.forward_x(), Some(&nl));
        assert!(rhs.values.column(0).camax() == 0.0);
    }

    #[test]
    fn gaussian_and_scale() {
        let disc = small_disc();
        let g = gaussian_data(&disc, 0.0, 1.0).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(gaussian_data(&disc, 1.0, 0.0).is_err());
        let g = gaussian_data(&disc, 5.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.max_abs(), 5.0, epsilon = 1e-15);
        assert_eq!(scale_data(&g, 1.0).values, g.values);
    }

    #[test]
    fn shift_cases() {
        let disc = small_disc();
        let l = disc.grid.l;
        let f = Field::from_fn(&disc, |x, r| (x / l).cos() * (-r).exp());
        assert!(shift_in_x(&f, 0.0).max_abs_diff(&f) < 1e-15);
        assert!(shift_in_x(&f, 2.0 * std::f64::consts::PI * l).max_abs_diff(&f) < 1e-13);
        let d = std::f64::consts::PI * l / 2.0;
        let g = Field::from_fn(&disc, |x, r| ((x - d) / l).cos() * (-r).exp());
        assert!(shift_in_x(&f, d).max_abs_diff(&g) < 1e-13);
    }

    #[test]
    fn resample_preserves_band_limited_data() {
        let a = small_disc();
        let b = Discretization::new(
            TorusGrid::new(2.0, 64).unwrap(),
            RadialLayout::new(1.0, 8.0, 8, 16).unwrap(),
            Execution::Serial,
        );
        let f = |x: f64, r: f64| (x / 2.0).sin() * (-r * r).exp() + (3.0 * x / 2.0).cos();
        let fa = Field::from_fn(&a, f);
        let fb = resample_x(&fa, &b).unwrap();
        assert!(fb.max_abs_diff(&Field::from_fn(&b, f)) < 1e-13);
    }
}

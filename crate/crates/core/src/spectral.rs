//! Fourier grid on the torus and Chebyshev collocation kernels.
//!
//! Conventions used throughout the crate:
//!
//! * x-nodes are `x_n = L(-π + 2πn/N)` for `n = 0..N`, so the torus is `[-πL, πL)`.
//! * The forward transform is scaled by `1/N`, the inverse is an unscaled sum, so
//!   `inverse(forward(f)) == f` and the coefficients are Fourier amplitudes.
//! * Only the non-negative half of the spectrum (`N/2 + 1` wavenumbers) is stored;
//!   negative wavenumbers are implied by conjugate symmetry of real fields.
//! * Chebyshev points `l_n = cos(πn/N_c)` run from `+1` down to `-1`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Result, ZkError};

/// Uniform grid on the torus `[-πL, πL)` together with its wavenumber ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    pub l: f64,
    pub n: usize,
    pub nodes: Vec<f64>,
    /// Full FFT-ordered ladder `{0, 1, .., N/2, -N/2+1, .., -1} / L`.
    pub wavenumbers: Vec<f64>,
}

impl TorusGrid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(ZkError::Config(format!("grid.L must be positive, got {l}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(ZkError::Config(format!(
                "grid.N must be a power of two >= 4, got {n}"
            )));
        }
        let nodes = (0..n)
            .map(|i| l * (-PI + 2.0 * PI * i as f64 / n as f64))
            .collect();
        let wavenumbers = (0..n)
            .map(|j| {
                let j = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                j / l
            })
            .collect();
        Ok(Self {
            l,
            n,
            nodes,
            wavenumbers,
        })
    }

    /// Number of stored (non-negative) modes.
    pub fn n_modes(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI * self.l / self.n as f64
    }

    /// Wavenumbers of the stored half spectrum.
    pub fn half_wavenumbers(&self) -> &[f64] {
        &self.wavenumbers[..self.n_modes()]
    }

    /// Wavenumber used for odd derivatives: as `half_wavenumbers` but zero at Nyquist.
    pub fn odd_wavenumber(&self, j: usize) -> f64 {
        if j == self.n / 2 {
            0.0
        } else {
            self.wavenumbers[j]
        }
    }

    /// Index of the node mirrored about `x = 0`.
    pub fn mirror_index(&self, i: usize) -> usize {
        (self.n - i) % self.n
    }
}

/// Real FFT plans for one torus size.
#[derive(Clone)]
pub struct FourierX {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for FourierX {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierX").field("n", &self.n).finish()
    }
}

impl FourierX {
    pub fn new(n: usize) -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            n,
            r2c: planner.plan_fft_forward(n),
            c2r: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward transform of one line of samples into `N/2 + 1` amplitudes.
    pub fn forward(&self, samples: &[f64], out: &mut [Complex64]) {
        let mut input = samples.to_vec();
        self.r2c
            .process(&mut input, out)
            .expect("forward FFT buffer sizes");
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|c| *c *= scale);
    }

    /// Inverse transform; the imaginary parts of the k=0 and Nyquist bins are
    /// discarded, so the output is exactly real.
    pub fn inverse(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let mut spec = coeffs.to_vec();
        spec[0].im = 0.0;
        let last = spec.len() - 1;
        spec[last].im = 0.0;
        self.c2r
            .process(&mut spec, out)
            .expect("inverse FFT buffer sizes");
    }
}

/// Chebyshev collocation kernel of degree `N_c`.
#[derive(Debug, Clone)]
pub struct ChebKernel {
    pub degree: usize,
    pub points: Vec<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

impl ChebKernel {
    pub fn new(degree: usize) -> Result<Self> {
        if degree < 2 {
            return Err(ZkError::Config(format!(
                "Chebyshev degree must be >= 2, got {degree}"
            )));
        }
        let n = degree;
        let theta: Vec<f64> = (0..=n).map(|i| PI * i as f64 / n as f64).collect();
        let points: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
        let weight = |i: usize| {
            let c = if i == 0 || i == n { 2.0 } else { 1.0 };
            if i % 2 == 0 {
                c
            } else {
                -c
            }
        };
        // 1/(x_i - x_j) via the product formula, exact to rounding near ±1
        let inv_diff = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            if i == j {
                0.0
            } else {
                1.0 / (2.0 * ((theta[i] + theta[j]) / 2.0).sin() * ((theta[j] - theta[i]) / 2.0).sin())
            }
        });
        let mut d1 = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            weight(i) / weight(j) * inv_diff[(i, j)]
        });
        negative_sum_diagonal(&mut d1);
        // second derivative by the Weideman–Reddy recursion; equals D·D in exact
        // arithmetic with smaller rounding error
        let mut d2 = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            if i == j {
                0.0
            } else {
                2.0 * d1[(i, j)] * (d1[(i, i)] - inv_diff[(i, j)])
            }
        });
        negative_sum_diagonal(&mut d2);
        Ok(Self {
            degree,
            points,
            d1,
            d2,
        })
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn negative_sum_diagonal(d: &mut DMatrix<f64>) {
    let n = d.nrows();
    for i in 0..n {
        let mut off: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
        off.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        d[(i, i)] = -off.iter().sum::<f64>();
    }
}

/// Chebyshev expansion coefficients of samples at `cos(πj/N_c)` via the fast
/// cosine transform (a real FFT of the even extension).
pub fn cheb_coefficients(samples: &[f64]) -> Result<Vec<f64>> {
    let np1 = samples.len();
    if np1 < 2 {
        return Err(ZkError::Shape(format!(
            "need at least two Chebyshev samples, got {np1}"
        )));
    }
    let n = np1 - 1;
    let mut ext: Vec<f64> = Vec::with_capacity(2 * n);
    ext.extend_from_slice(samples);
    ext.extend(samples[1..n].iter().rev());
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(2 * n);
    let mut spec = fft.make_output_vec();
    fft.process(&mut ext, &mut spec)
        .map_err(|e| ZkError::Shape(e.to_string()))?;
    Ok((0..=n)
        .map(|k| {
            let c = if k == 0 || k == n { 2.0 } else { 1.0 };
            spec[k].re / (n as f64 * c)
        })
        .collect())
}

/// Dense O(N²) cosine sum; reference path for [`cheb_coefficients`].
pub fn cheb_coefficients_dense(samples: &[f64]) -> Result<Vec<f64>> {
    let np1 = samples.len();
    if np1 < 2 {
        return Err(ZkError::Shape(format!(
            "need at least two Chebyshev samples, got {np1}"
        )));
    }
    let n = np1 - 1;
    let cbar = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    Ok((0..=n)
        .map(|k| {
            let s: f64 = (0..=n)
                .map(|j| samples[j] * (PI * (k * j) as f64 / n as f64).cos() / cbar(j))
                .sum();
            2.0 * s / (n as f64 * cbar(k))
        })
        .collect())
}

/// Largest magnitude among the trailing `fraction` of the coefficients.
pub fn tail_magnitude(coeffs: &[f64], fraction: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let fraction = fraction.clamp(f64::MIN_POSITIVE, 1.0);
    let count = ((coeffs.len() as f64 * fraction).ceil() as usize).clamp(1, coeffs.len());
    coeffs[coeffs.len() - count..]
        .iter()
        .fold(0.0, |m, c| m.max(c.abs()))
}

/// Clenshaw–Curtis weights on `cos(πj/N)`, integrating over `[-1, 1]`.
pub fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|i| PI * i as f64 / nf).collect();
    let mut v = vec![1.0; n.saturating_sub(1)];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn torus_grid_n4() {
        let g = TorusGrid::new(1.0, 4).unwrap();
        let expect = [-PI, -PI / 2.0, 0.0, PI / 2.0];
        for (a, b) in g.nodes.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(g.wavenumbers, vec![0.0, 1.0, 2.0, -1.0]);
        assert_eq!(g.half_wavenumbers(), &[0.0, 1.0, 2.0]);
        assert_eq!(g.odd_wavenumber(2), 0.0);
    }

    #[test]
    fn torus_grid_paper_size() {
        let g = TorusGrid::new(5.0, 512).unwrap();
        assert_eq!(g.nodes.len(), 512);
        assert_abs_diff_eq!(g.nodes[0], -5.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(g.nodes[511] + g.spacing(), 5.0 * PI, epsilon = 1e-12);
        for w in g.nodes.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], g.spacing(), epsilon = 1e-12);
        }
    }

    #[test]
    fn torus_grid_rejects_bad_input() {
        assert!(TorusGrid::new(1.0, 6).is_err());
        assert!(TorusGrid::new(1.0, 2).is_err());
        assert!(TorusGrid::new(0.0, 8).is_err());
        assert!(TorusGrid::new(-1.0, 8).is_err());
    }

    #[test]
    fn wavenumbers_closed_under_negation_except_nyquist() {
        let g = TorusGrid::new(2.0, 16).unwrap();
        for (j, k) in g.wavenumbers.iter().enumerate() {
            if j == 8 {
                continue;
            }
            assert!(g.wavenumbers.iter().any(|q| (q + k).abs() < 1e-15));
        }
    }

    #[test]
    fn single_harmonic_spectrum() {
        let l = 3.0;
        let g = TorusGrid::new(l, 32).unwrap();
        let fx = FourierX::new(32);
        let f: Vec<f64> = g.nodes.iter().map(|x| (x / l).cos()).collect();
        let mut c = vec![Complex64::default(); g.n_modes()];
        fx.forward(&f, &mut c);
        for (j, cj) in c.iter().enumerate() {
            if j == 1 {
                assert_abs_diff_eq!(cj.norm(), 0.5, epsilon = 1e-14);
            } else {
                assert!(cj.norm() < 1e-13, "mode {j}: {}", cj.norm());
            }
        }
        let ones = vec![1.0; 32];
        fx.forward(&ones, &mut c);
        assert_abs_diff_eq!(c[0].re, 1.0, epsilon = 1e-15);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn spectral_derivative_in_x() {
        let g = TorusGrid::new(1.0, 64).unwrap();
        let fx = FourierX::new(64);
        let f: Vec<f64> = g.nodes.iter().map(|x| x.sin().exp()).collect();
        let mut c = vec![Complex64::default(); g.n_modes()];
        fx.forward(&f, &mut c);
        for (j, cj) in c.iter_mut().enumerate() {
            *cj *= Complex64::new(0.0, g.odd_wavenumber(j));
        }
        let mut df = vec![0.0; 64];
        fx.inverse(&c, &mut df);
        for (x, d) in g.nodes.iter().zip(df) {
            assert_abs_diff_eq!(d, x.cos() * x.sin().exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn cheb_points_n2() {
        let k = ChebKernel::new(2).unwrap();
        assert_abs_diff_eq!(k.points[0], 1.0);
        assert_abs_diff_eq!(k.points[1], 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(k.points[2], -1.0);
        assert!(ChebKernel::new(1).is_err());
    }

    #[test]
    fn cheb_derivative_cubic() {
        let k = ChebKernel::new(8).unwrap();
        let f = nalgebra::DVector::from_iterator(9, k.points.iter().map(|l| l.powi(3)));
        let df = &k.d1 * f;
        for (l, d) in k.points.iter().zip(df.iter()) {
            assert_abs_diff_eq!(*d, 3.0 * l * l, epsilon = 1e-12);
        }
    }

    #[test]
    fn cheb_corner_entries() {
        for n in [4usize, 20, 100] {
            let k = ChebKernel::new(n).unwrap();
            let corner = (2.0 * (n * n) as f64 + 1.0) / 6.0;
            assert_abs_diff_eq!(k.d1[(0, 0)], corner, epsilon = 1e-11 * corner);
            assert_abs_diff_eq!(k.d1[(n, n)], -corner, epsilon = 1e-11 * corner);
        }
        let k = ChebKernel::new(20).unwrap();
        assert_abs_diff_eq!(k.d1[(0, 0)], 133.5, epsilon = 1e-10);
    }

    #[test]
    fn d2_equals_d_squared() {
        let k = ChebKernel::new(24).unwrap();
        let dd = &k.d1 * &k.d1;
        let scale = dd.amax();
        assert!((&dd - &k.d2).amax() < 1e-12 * scale);
    }

    #[test]
    fn differentiation_exact_on_monomials() {
        for n in [8usize, 20, 40] {
            let k = ChebKernel::new(n).unwrap();
            for m in 1..=n {
                let f = nalgebra::DVector::from_iterator(n + 1, k.points.iter().map(|l| l.powi(m as i32)));
                let df = &k.d1 * f;
                let err = k
                    .points
                    .iter()
                    .zip(df.iter())
                    .map(|(l, d)| (d - m as f64 * l.powi(m as i32 - 1)).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10 * (n * n) as f64, "n={n} m={m} err={err}");
            }
        }
    }

    #[test]
    fn cheb_rows_annihilate_constants() {
        let k = ChebKernel::new(40).unwrap();
        for i in 0..=40 {
            let s: f64 = k.d1.row(i).iter().sum();
            assert!(s.abs() < 1e-12, "row {i}: {s}");
        }
    }

    #[test]
    fn cheb_d1_against_finite_differences() {
        // central differences of the barycentric interpolant at the nodes
        let n = 20;
        let k = ChebKernel::new(n).unwrap();
        let f = |l: f64| (2.0 * l).sin() + l.exp();
        let samples: Vec<f64> = k.points.iter().map(|&l| f(l)).collect();
        let df = &k.d1 * nalgebra::DVector::from_vec(samples);
        for (i, &l) in k.points.iter().enumerate() {
            let h = 1e-5;
            let fd = (f(l + h) - f(l - h)) / (2.0 * h);
            assert_abs_diff_eq!(df[i], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn cheb_coefficients_of_t3_and_constant() {
        let n = 16;
        let k = ChebKernel::new(n).unwrap();
        let t3: Vec<f64> = k.points.iter().map(|l| 4.0 * l.powi(3) - 3.0 * l).collect();
        let a = cheb_coefficients(&t3).unwrap();
        for (i, ai) in a.iter().enumerate() {
            let e = if i == 3 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*ai, e, epsilon = 1e-12);
        }
        let ones = vec![1.0; n + 1];
        let a = cheb_coefficients(&ones).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-15);
        assert!(a[1..].iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn cheb_coefficients_fast_matches_dense() {
        let k = ChebKernel::new(30).unwrap();
        let s: Vec<f64> = k.points.iter().map(|l| (3.0 * l).cos() / (2.0 + l)).collect();
        let fast = cheb_coefficients(&s).unwrap();
        let dense = cheb_coefficients_dense(&s).unwrap();
        for (a, b) in fast.iter().zip(dense) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_coefficients_decay() {
        let k = ChebKernel::new(32).unwrap();
        let s: Vec<f64> = k.points.iter().map(|l| l.exp()).collect();
        let a = cheb_coefficients(&s).unwrap();
        // a_n = 2 I_n(1) for n >= 1 (modified Bessel); I_3(1) = 0.022168424924331902
        assert_abs_diff_eq!(a[3], 2.0 * 0.022_168_424_924_331_902, epsilon = 1e-14);
        assert!(a[20..].iter().all(|x| x.abs() < 1e-14));
        // reconstruction at the nodes
        for (m, &l) in k.points.iter().enumerate() {
            let theta = l.acos();
            let v: f64 = a.iter().enumerate().map(|(n, an)| an * (n as f64 * theta).cos()).sum();
            assert_abs_diff_eq!(v, s[m], epsilon = 1e-12);
        }
    }

    #[test]
    fn tail_magnitude_cases() {
        let k = ChebKernel::new(16).unwrap();
        let s: Vec<f64> = k.points.iter().map(|l| 1.0 + 2.0 * l - l.powi(3)).collect();
        let a = cheb_coefficients(&s).unwrap();
        assert!(tail_magnitude(&a, 0.25) < 1e-14);
        assert_eq!(tail_magnitude(&[1.0; 10], 0.5), 1.0);
        let c = [5.0, 0.1, 0.3, 0.01];
        assert!(tail_magnitude(&c, 0.25) <= tail_magnitude(&c, 0.5));
        assert!(tail_magnitude(&c, 0.5) <= tail_magnitude(&c, 1.0));
    }

    #[test]
    fn clenshaw_curtis_integrates_polynomials() {
        for n in [4usize, 7, 20, 33] {
            let w = clenshaw_curtis_weights(n);
            let k = ChebKernel::new(n).unwrap();
            for m in 0..=n {
                let q: f64 = w.iter().zip(&k.points).map(|(w, l)| w * l.powi(m as i32)).sum();
                let exact = if m % 2 == 0 { 2.0 / (m as f64 + 1.0) } else { 0.0 };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-13);
            }
        }
    }
}

//! Explicit dense inverses for the small per-mode systems.
//!
//! Every mode is solved thousands of times with the same matrix, so the
//! factorization is turned into an explicit inverse once and applied as a
//! split real/imaginary matrix-vector product in the hot loop.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Column-major explicit inverse of a complex matrix.
#[derive(Debug, Clone)]
pub struct ComplexInverse {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexInverse {
    pub fn new(mat: DMatrix<Complex64>) -> Option<Self> {
        let n = mat.nrows();
        let inv = mat.lu().try_inverse()?;
        if inv.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return None;
        }
        let re = inv.iter().map(|c| c.re).collect();
        let im = inv.iter().map(|c| c.im).collect();
        Some(Self { n, re, im })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `y = A⁻¹ x`, accumulated column by column so the inner loop is a plain axpy.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.n;
        let mut yr = vec![0.0; n];
        let mut yi = vec![0.0; n];
        for (c, xc) in x.iter().enumerate().take(n) {
            let ar = &self.re[c * n..(c + 1) * n];
            let ai = &self.im[c * n..(c + 1) * n];
            let (xr, xi) = (xc.re, xc.im);
            for (((yr, yi), &ar), &ai) in yr.iter_mut().zip(yi.iter_mut()).zip(ar).zip(ai) {
                *yr += ar * xr - ai * xi;
                *yi += ar * xi + ai * xr;
            }
        }
        for (out, (r, i)) in y.iter_mut().zip(yr.into_iter().zip(yi)) {
            *out = Complex64::new(r, i);
        }
    }
}

/// Column-major explicit inverse of a real matrix, applied to complex vectors.
#[derive(Debug, Clone)]
pub struct RealInverse {
    n: usize,
    a: Vec<f64>,
}

impl RealInverse {
    pub fn new(mat: DMatrix<f64>) -> Option<Self> {
        let n = mat.nrows();
        let inv = mat.lu().try_inverse()?;
        if inv.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self {
            n,
            a: inv.as_slice().to_vec(),
        })
    }

    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let n = self.n;
        let mut yr = vec![0.0; n];
        let mut yi = vec![0.0; n];
        for (c, xc) in x.iter().enumerate().take(n) {
            let a = &self.a[c * n..(c + 1) * n];
            for ((yr, yi), &a) in yr.iter_mut().zip(yi.iter_mut()).zip(a) {
                *yr += a * xc.re;
                *yi += a * xc.im;
            }
        }
        for (out, (r, i)) in y.iter_mut().zip(yr.into_iter().zip(yi)) {
            *out = Complex64::new(r, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn complex_inverse_solves() {
        let n = 7;
        let a = DMatrix::from_fn(n, n, |r, c| {
            Complex64::new(if r == c { 4.0 } else { 1.0 / (1.0 + (r + 2 * c) as f64) }, 0.3 * (r as f64 - c as f64))
        });
        let x = DVector::from_fn(n, |i, _| Complex64::new(i as f64, 1.0 - i as f64));
        let b = &a * &x;
        let inv = ComplexInverse::new(a).unwrap();
        let mut y = vec![Complex64::default(); n];
        inv.apply(b.as_slice(), &mut y);
        for (u, v) in y.iter().zip(x.iter()) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn singular_is_rejected() {
        let a = DMatrix::<Complex64>::zeros(3, 3);
        assert!(ComplexInverse::new(a).is_none());
        assert!(RealInverse::new(DMatrix::zeros(3, 3)).is_none());
    }

    #[test]
    fn real_inverse_on_complex_vector() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let inv = RealInverse::new(a).unwrap();
        let mut y = vec![Complex64::default(); 2];
        inv.apply(&[Complex64::new(3.0, 5.0), Complex64::new(4.0, 10.0)], &mut y);
        assert!((y[0] - Complex64::new(1.0, 1.0)).norm() < 1e-14);
        assert!((y[1] - Complex64::new(1.0, 3.0)).norm() < 1e-14);
    }
}

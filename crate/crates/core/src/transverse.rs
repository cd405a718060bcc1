//! Two-domain radial discretization.
//!
//! Domain I covers the axis region `0 <= ρ <= ρ0` in the variable `s = ρ²`,
//! mapped by `s = ρ0²(1+l)/2`; domain II covers `ρ0 <= ρ <= ρ1` through the
//! affine map `ρ = ρ0(1+l)/2 + ρ1(1-l)/2`.
//!
//! The transverse index runs monotonically in ρ: positions `0..=N_I` hold
//! domain I from the axis to the interface (native Chebyshev order reversed),
//! positions `N_I+1..=N_I+N_II+1` hold domain II from the interface to `ρ1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, ZkError};
use crate::spectral::{clenshaw_curtis_weights, ChebKernel};

#[derive(Debug, Clone)]
pub struct RadialLayout {
    pub rho0: f64,
    pub rho1: f64,
    pub n_inner: usize,
    pub n_outer: usize,
    pub inner: ChebKernel,
    pub outer: ChebKernel,
    /// Physical ρ at every transverse position.
    pub physical_rho: Vec<f64>,
    /// Weights for `∫₀^{ρ1} f(ρ) ρ dρ`.
    pub quad_weights: Vec<f64>,
}

impl RadialLayout {
    pub fn new(rho0: f64, rho1: f64, n_inner: usize, n_outer: usize) -> Result<Self> {
        if !(rho0 > 0.0 && rho1 > rho0 && rho1.is_finite()) {
            return Err(ZkError::Config(format!(
                "layout requires 0 < rho0 < rho1, got rho0 = {rho0}, rho1 = {rho1}"
            )));
        }
        if n_inner < 4 || n_outer < 4 {
            return Err(ZkError::Config(format!(
                "layout degrees must be >= 4, got n_inner = {n_inner}, n_outer = {n_outer}"
            )));
        }
        let inner = ChebKernel::new(n_inner)?;
        let outer = ChebKernel::new(n_outer)?;
        let cc_i = clenshaw_curtis_weights(n_inner);
        let cc_o = clenshaw_curtis_weights(n_outer);

        let mut physical_rho = Vec::with_capacity(n_inner + n_outer + 2);
        let mut quad_weights = Vec::with_capacity(n_inner + n_outer + 2);
        for m in 0..=n_inner {
            let j = n_inner - m;
            let s = rho0 * rho0 * (1.0 + inner.points[j]) / 2.0;
            physical_rho.push(s.max(0.0).sqrt());
            // ρ dρ = ds/2, ds = ρ0²/2 dl
            quad_weights.push(rho0 * rho0 / 4.0 * cc_i[j]);
        }
        // pin the axis node exactly
        physical_rho[0] = 0.0;
        physical_rho[n_inner] = rho0;
        for j in 0..=n_outer {
            let l = outer.points[j];
            let rho = rho0 * (1.0 + l) / 2.0 + rho1 * (1.0 - l) / 2.0;
            physical_rho.push(rho);
            quad_weights.push(cc_o[j] * rho * (rho1 - rho0) / 2.0);
        }
        physical_rho[n_inner + 1] = rho0;
        *physical_rho.last_mut().unwrap() = rho1;

        Ok(Self {
            rho0,
            rho1,
            n_inner,
            n_outer,
            inner,
            outer,
            physical_rho,
            quad_weights,
        })
    }

    /// Total number of transverse positions, `N_I + N_II + 2`.
    pub fn len(&self) -> usize {
        self.n_inner + self.n_outer + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iface_inner(&self) -> usize {
        self.n_inner
    }

    pub fn iface_outer(&self) -> usize {
        self.n_inner + 1
    }

    pub fn outer_start(&self) -> usize {
        self.n_inner + 1
    }

    pub fn last(&self) -> usize {
        self.len() - 1
    }

    /// `s = ρ²` at the inner positions (axis first).
    pub fn inner_s(&self) -> Vec<f64> {
        (0..=self.n_inner)
            .map(|m| {
                let j = self.n_inner - m;
                self.rho0 * self.rho0 * (1.0 + self.inner.points[j]) / 2.0
            })
            .collect()
    }

    /// Inner D1 in layout order: entry (m, m') is `D[N_I-m, N_I-m']`.
    fn inner_d1(&self) -> DMatrix<f64> {
        let n = self.n_inner;
        DMatrix::from_fn(n + 1, n + 1, |a, b| self.inner.d1[(n - a, n - b)])
    }

    fn inner_d2(&self) -> DMatrix<f64> {
        let n = self.n_inner;
        DMatrix::from_fn(n + 1, n + 1, |a, b| self.inner.d2[(n - a, n - b)])
    }

    /// `dl/ds` on domain I.
    pub fn inner_scale(&self) -> f64 {
        2.0 / (self.rho0 * self.rho0)
    }

    /// `dl/dρ` on domain II (negative: l decreases as ρ grows).
    pub fn outer_scale(&self) -> f64 {
        2.0 / (self.rho0 - self.rho1)
    }

    /// `∂_s` on domain I in layout order.
    pub fn inner_ds(&self) -> DMatrix<f64> {
        self.inner_d1() * self.inner_scale()
    }

    /// `∂_ρ` on domain II.
    pub fn outer_drho(&self) -> DMatrix<f64> {
        &self.outer.d1 * self.outer_scale()
    }

    /// Matrix of `∂_ρ` over all positions: `2ρ ∂_s` on domain I, direct on domain II.
    pub fn rho_derivative(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut out = DMatrix::zeros(m, m);
        let ds = self.inner_ds();
        for a in 0..=self.n_inner {
            let two_rho = 2.0 * self.physical_rho[a];
            for b in 0..=self.n_inner {
                out[(a, b)] = two_rho * ds[(a, b)];
            }
        }
        let dr = self.outer_drho();
        let o = self.outer_start();
        out.view_mut((o, o), (self.n_outer + 1, self.n_outer + 1))
            .copy_from(&dr);
        out
    }

    /// Integrate `f(ρ) ρ dρ` over `[0, ρ1]` from samples at all positions.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        samples
            .iter()
            .zip(&self.quad_weights)
            .map(|(f, w)| f * w)
            .sum()
    }
}

/// `4s∂_ss + 4∂_s` on domain I in layout order.
pub fn inner_operator(layout: &RadialLayout) -> DMatrix<f64> {
    let sc = layout.inner_scale();
    let s = layout.inner_s();
    let d1 = layout.inner_d1();
    let d2 = layout.inner_d2();
    let n = layout.n_inner + 1;
    DMatrix::from_fn(n, n, |a, b| 4.0 * s[a] * sc * sc * d2[(a, b)] + 4.0 * sc * d1[(a, b)])
}

/// `∂_ρρ + (1/ρ)∂_ρ` on domain II.
pub fn outer_operator(layout: &RadialLayout) -> DMatrix<f64> {
    let sc = layout.outer_scale();
    let o = layout.outer_start();
    let n = layout.n_outer + 1;
    DMatrix::from_fn(n, n, |a, b| {
        sc * sc * layout.outer.d2[(a, b)] + sc / layout.physical_rho[o + a] * layout.outer.d1[(a, b)]
    })
}

/// Transverse Laplacian with τ-rows carrying the matching and decay conditions.
#[derive(Debug, Clone)]
pub struct TransverseOperator {
    /// Block operator with the three τ-rows replaced by the constraint functionals.
    pub matrix: DMatrix<f64>,
    /// Same block operator with the τ-rows zeroed.
    pub interior: DMatrix<f64>,
    /// Constraint functionals, one row per entry of `tau_rows`.
    pub constraints: DMatrix<f64>,
    /// Rows replaced by: value matching, derivative matching, `u(ρ1) = 0`.
    pub tau_rows: [usize; 3],
    pub layout: RadialLayout,
}

impl TransverseOperator {
    pub fn assemble(layout: &RadialLayout) -> Self {
        let m = layout.len();
        let ni = layout.n_inner + 1;
        let no = layout.n_outer + 1;
        let o = layout.outer_start();

        let mut interior = DMatrix::zeros(m, m);
        interior
            .view_mut((0, 0), (ni, ni))
            .copy_from(&inner_operator(layout));
        interior
            .view_mut((o, o), (no, no))
            .copy_from(&outer_operator(layout));

        let tau_rows = [layout.iface_inner(), layout.iface_outer(), layout.last()];
        let mut constraints = DMatrix::zeros(3, m);
        // u^I(ρ0²) - u^II(ρ0)
        constraints[(0, layout.iface_inner())] = 1.0;
        constraints[(0, layout.iface_outer())] = -1.0;
        // 2ρ0 u^I_s(ρ0²) - u^II_ρ(ρ0)
        let ds = layout.inner_ds();
        let dr = layout.outer_drho();
        for b in 0..ni {
            constraints[(1, b)] = 2.0 * layout.rho0 * ds[(layout.n_inner, b)];
        }
        for b in 0..no {
            constraints[(1, o + b)] = -dr[(0, b)];
        }
        // u^II(ρ1)
        constraints[(2, layout.last())] = 1.0;

        let mut matrix = interior.clone();
        for (c, &r) in tau_rows.iter().enumerate() {
            interior.row_mut(r).fill(0.0);
            matrix.row_mut(r).copy_from(&constraints.row(c));
        }
        Self {
            matrix,
            interior,
            constraints,
            tau_rows,
            layout: layout.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_tau_row(&self, r: usize) -> bool {
        self.tau_rows.contains(&r)
    }

    /// Constraint residuals `B u` (value match, derivative match, outer value).
    pub fn constraint_residuals(&self, u: &[f64]) -> [f64; 3] {
        let v = DVector::from_column_slice(u);
        let r = &self.constraints * v;
        [r[0], r[1], r[2]]
    }
}

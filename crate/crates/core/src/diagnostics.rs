//! Conserved quantities, resolution metrics and radiation-cone measurement.

use std::f64::consts::PI;
use std::fs::OpenOptions;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dx, Field, Nonlinearity};
use crate::error::{Result, ZkError};
use crate::spectral::{cheb_coefficients, tail_magnitude};

/// Share of trailing coefficients inspected by the resolution metrics.
pub const TAIL_FRACTION: f64 = 0.1;

/// Below this initial magnitude drifts are reported in absolute terms.
pub const ABSOLUTE_DRIFT_FLOOR: f64 = 1e-6;

/// `2π Σ_n Δx ∫ f(x_n, ρ) ρ dρ` for pointwise densities on the grid.
fn integrate_density(field: &Field, density: &DMatrix<f64>) -> f64 {
    let layout = field.disc.layout();
    let h = field.disc.grid.spacing();
    let total: f64 = density
        .row_iter()
        .map(|row| {
            row.iter()
                .zip(&layout.quad_weights)
                .map(|(f, w)| f * w)
                .sum::<f64>()
        })
        .sum();
    2.0 * PI * h * total
}

/// `M[u] = 2π ∫∫ u² ρ dρ dx`.
pub fn mass(field: &Field) -> f64 {
    integrate_density(field, &field.values.map(|u| u * u))
}

/// `E[u] = 2π ∫∫ (½(u_x² + u_ρ²) - u^{p+1}/(p+1)) ρ dρ dx`.
pub fn energy(field: &Field, nl: &Nonlinearity) -> f64 {
    let ux = dx(field).values;
    let urho = &field.values * field.disc.layout().rho_derivative().transpose();
    let p1 = nl.p() + 1.0;
    let mut density = field.values.map(|u| -nl.power_plus_one(u) / p1);
    density.zip_zip_apply(&ux, &urho, |d, a, b| *d += 0.5 * (a * a + b * b));
    integrate_density(field, &density)
}

/// Maximum of `|u|` over the collocation nodes.
pub fn linf(field: &Field) -> f64 {
    field.max_abs()
}

/// Largest Fourier coefficient magnitude among the highest wavenumbers.
pub fn fourier_tail(field: &Field) -> f64 {
    let modal = field.forward_x().values;
    let per_mode: Vec<f64> = modal
        .column_iter()
        .map(|c| c.iter().fold(0.0f64, |m, z| m.max(z.norm())))
        .collect();
    tail_magnitude(&per_mode, TAIL_FRACTION)
}

/// Largest trailing Chebyshev coefficient of domains I and II over all x nodes.
pub fn cheb_tails(field: &Field) -> Result<(f64, f64)> {
    let layout = field.disc.layout();
    let ni = layout.n_inner;
    let start = layout.outer_start();
    let mut tails = (0.0f64, 0.0f64);
    for row in field.values.row_iter() {
        let row: Vec<f64> = row.iter().copied().collect();
        // Chebyshev order runs from l = 1 (interface) to l = -1 (axis)
        let inner: Vec<f64> = row[..=ni].iter().rev().copied().collect();
        let a = cheb_coefficients(&inner)?;
        let b = cheb_coefficients(&row[start..])?;
        tails.0 = tails.0.max(tail_magnitude(&a, TAIL_FRACTION));
        tails.1 = tails.1.max(tail_magnitude(&b, TAIL_FRACTION));
    }
    Ok(tails)
}

/// One row of the diagnostic time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub linf: f64,
    pub fourier_tail: f64,
    pub cheb_tail_i: f64,
    pub cheb_tail_ii: f64,
    pub newton_iters: usize,
}

/// Column names of the time-series file.
pub const SERIES_HEADER: [&str; 8] = [
    "t",
    "mass",
    "energy",
    "linf",
    "fourier_tail",
    "cheb_tail_I",
    "cheb_tail_II",
    "newton_iters",
];

impl DiagnosticsRecord {
    pub fn compute(field: &Field, nl: &Nonlinearity, t: f64, newton_iters: usize) -> Result<Self> {
        let (cheb_tail_i, cheb_tail_ii) = cheb_tails(field)?;
        let rec = Self {
            t,
            mass: mass(field),
            energy: energy(field, nl),
            linf: linf(field),
            fourier_tail: fourier_tail(field),
            cheb_tail_i,
            cheb_tail_ii,
            newton_iters,
        };
        if ![rec.mass, rec.energy, rec.linf].iter().all(|v| v.is_finite()) {
            return Err(ZkError::StepFailure {
                t,
                reason: "non-finite diagnostics (overflow)".into(),
            });
        }
        Ok(rec)
    }

    fn to_row(self) -> [String; 8] {
        [
            format!("{:e}", self.t),
            format!("{:e}", self.mass),
            format!("{:e}", self.energy),
            format!("{:e}", self.linf),
            format!("{:e}", self.fourier_tail),
            format!("{:e}", self.cheb_tail_i),
            format!("{:e}", self.cheb_tail_ii),
            self.newton_iters.to_string(),
        ]
    }
}

/// Appends records to a comma-separated series, writing the header for a new file.
pub struct SeriesWriter {
    inner: csv::Writer<std::fs::File>,
}

impl SeriesWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            inner.write_record(SERIES_HEADER).map_err(csv_error)?;
        }
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.inner.write_record(rec.to_row()).map_err(csv_error)?;
        self.inner.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> ZkError {
    ZkError::Io(std::io::Error::other(e.to_string()))
}

/// Reads a series written by [`SeriesWriter`].
pub fn read_series(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(SERIES_HEADER) {
        return Err(ZkError::Shape(format!(
            "unexpected series header in {}",
            path.display()
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| ZkError::Shape(format!("bad series entry {s:?}: {e}")))
    };
    let mut out = vec![];
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        out.push(DiagnosticsRecord {
            t: parse(&row[0])?,
            mass: parse(&row[1])?,
            energy: parse(&row[2])?,
            linf: parse(&row[3])?,
            fourier_tail: parse(&row[4])?,
            cheb_tail_i: parse(&row[5])?,
            cheb_tail_ii: parse(&row[6])?,
            newton_iters: row[7]
                .parse()
                .map_err(|e| ZkError::Shape(format!("bad iteration count: {e}")))?,
        });
    }
    Ok(out)
}

/// Drift of one conserved quantity against its initial value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub initial: f64,
    /// Largest deviation from the initial value over the series.
    pub max_drift: f64,
    /// `true` when `max_drift` is relative to `|initial|`.
    pub relative: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mass: Drift,
    pub energy: Drift,
}

fn drift_of(values: impl Iterator<Item = f64> + Clone, threshold: f64) -> Drift {
    let mut it = values.clone();
    let initial = it.next().unwrap_or(0.0);
    let dev = values.fold(0.0f64, |m, v| m.max((v - initial).abs()));
    let relative = initial.abs() > ABSOLUTE_DRIFT_FLOOR;
    let max_drift = if relative { dev / initial.abs() } else { dev };
    Drift {
        initial,
        max_drift,
        relative,
        flagged: max_drift > threshold,
    }
}

/// Drift of mass and energy over a series. An initial value below
/// [`ABSOLUTE_DRIFT_FLOOR`] (the ground-state energy) switches to absolute drift.
pub fn drift_report(series: &[DiagnosticsRecord], threshold: f64) -> Result<DriftReport> {
    if series.len() < 2 {
        return Err(ZkError::Shape(format!(
            "drift needs at least two records, got {}",
            series.len()
        )));
    }
    Ok(DriftReport {
        mass: drift_of(series.iter().map(|r| r.mass), threshold),
        energy: drift_of(series.iter().map(|r| r.energy), threshold),
    })
}

/// Half opening angle, in degrees, of the radiation cone trailing the main peak.
///
/// For every x node in the half-plane `x < 0` behind the peak the outermost
/// ρ with `|u| >= level` is located (linear interpolation to the crossing).
/// Nodes within the core, i.e. closer to the peak than the core's own radius
/// at `level`, are skipped. A line `ρ = s·(x_peak - x)` through the peak is
/// fitted to the remaining envelope by least squares and `atan(s)` is returned.
pub fn cone_half_angle(field: &Field, level: f64) -> Result<f64> {
    let max = field.max_abs();
    if !(level > 0.0 && level < max) {
        return Err(ZkError::Domain(format!(
            "contour level {level} must lie in (0, {max})"
        )));
    }
    let grid = &field.disc.grid;
    let rho = &field.disc.layout().physical_rho;
    let (peak_i, _) = field
        .values
        .row_iter()
        .enumerate()
        .map(|(i, r)| (i, r.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
        .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
    let envelope = |i: usize| -> Option<f64> {
        let row = field.values.row(i);
        let last = (0..rho.len()).rev().find(|&j| row[j].abs() >= level)?;
        if last + 1 == rho.len() {
            return Some(rho[last]);
        }
        let (a, b) = (row[last].abs(), row[last + 1].abs());
        let (r0, r1) = (rho[last], rho[last + 1]);
        if r1 == r0 {
            return Some(r0);
        }
        Some(r0 + (a - level) / (a - b) * (r1 - r0))
    };
    let core = envelope(peak_i).unwrap_or(0.0);
    let x_peak = grid.nodes[peak_i];
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &x) in grid.nodes.iter().enumerate() {
        let d = x_peak - x;
        if x >= 0.0 || d <= core {
            continue;
        }
        if let Some(r) = envelope(i) {
            sxy += d * r;
            sxx += d * d;
        }
    }
    if sxx == 0.0 {
        return Err(ZkError::NoRadiation);
    }
    Ok((sxy / sxx).atan().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{gaussian_data, Discretization};
    use crate::par::Execution;
    use crate::spectral::TorusGrid;
    use crate::transverse::RadialLayout;
    use std::sync::Arc;

    fn disc(l: f64, n: usize) -> Arc<Discretization> {
        Discretization::new(
            TorusGrid::new(l, n).unwrap(),
            RadialLayout::new(1.0, 20.0, 20, 100).unwrap(),
            Execution::Serial,
        )
    }

    #[test]
    fn gaussian_masses() {
        let d = disc(5.0, 256);
        for (lambda, expected) in [(5.0, 49.2175), (6.5, 83.1776)] {
            let u = gaussian_data(&d, lambda, 1.0).unwrap();
            let exact = lambda * lambda * (PI / 2.0).powf(1.5);
            let m = mass(&u);
            assert!((m - exact).abs() < 1e-10 * exact, "{m} vs {exact}");
            assert!((m - expected).abs() < 1e-4);
        }
        assert_eq!(mass(&gaussian_data(&d, 0.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn gaussian_energy_matches_closed_form() {
        // for u = λe^{-α r²} in 3D: ½∫|∇u|² = (3/2)λ²α(π/(2α))^{3/2}, ∫u^q = λ^q (π/(qα))^{3/2}
        let d = disc(5.0, 256);
        let nl = Nonlinearity::critical();
        let (lambda, alpha) = (1.0f64, 1.0f64);
        let u = gaussian_data(&d, lambda, alpha).unwrap();
        let q = nl.p() + 1.0;
        let half_grad = 1.5 * lambda * lambda * alpha * (PI / (2.0 * alpha)).powf(1.5);
        let pot = lambda.powf(q) * (PI / (q * alpha)).powf(1.5);
        let exact = half_grad - pot / q;
        let e = energy(&u, &nl);
        assert!((e - exact).abs() < 1e-8 * exact.abs(), "{e} vs {exact}");
    }

    #[test]
    fn zero_field_diagnostics() {
        let d = disc(1.0, 16);
        let z = Field::zeros(&d);
        let r = DiagnosticsRecord::compute(&z, &Nonlinearity::critical(), 0.0, 0).unwrap();
        assert_eq!((r.mass, r.energy, r.linf), (0.0, 0.0, 0.0));
        let rep = drift_report(&[r, r], 1e-10).unwrap();
        assert_eq!(rep.mass.max_drift, 0.0);
        assert_eq!(rep.energy.max_drift, 0.0);
        assert!(drift_report(&[r], 1e-10).is_err());
    }

    #[test]
    fn gaussian_linf_is_amplitude() {
        let d = disc(5.0, 64);
        let u = gaussian_data(&d, 5.0, 1.0).unwrap();
        assert_eq!(linf(&u), 5.0);
    }

    #[test]
    fn drift_falls_back_to_absolute() {
        let mk = |m: f64, e: f64| DiagnosticsRecord {
            t: 0.0,
            mass: m,
            energy: e,
            linf: 1.0,
            fourier_tail: 0.0,
            cheb_tail_i: 0.0,
            cheb_tail_ii: 0.0,
            newton_iters: 0,
        };
        let rep = drift_report(&[mk(10.0, 1e-12), mk(10.0 + 1e-8, 3e-12)], 1e-10).unwrap();
        assert!(rep.mass.relative);
        assert!((rep.mass.max_drift - 1e-9).abs() < 1e-15);
        assert!(rep.mass.flagged);
        assert!(!rep.energy.relative);
        assert!((rep.energy.max_drift - 2e-12).abs() < 1e-20);
        assert!(!rep.energy.flagged);
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let rec = DiagnosticsRecord {
            t: 0.25,
            mass: 63.78,
            energy: -1e-12,
            linf: 4.19,
            fourier_tail: 1e-15,
            cheb_tail_i: 2e-14,
            cheb_tail_ii: 3e-13,
            newton_iters: 4,
        };
        SeriesWriter::open(&path).unwrap().write(&rec).unwrap();
        SeriesWriter::open(&path).unwrap().write(&rec).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,mass,energy,linf,fourier_tail,cheb_tail_I,cheb_tail_II,newton_iters\n"));
        assert_eq!(read_series(&path).unwrap(), vec![rec, rec]);
    }

    #[test]
    fn synthetic_cone() {
        let d = disc(5.0, 256);
        // |u| = 1 on ρ = ½(x_p - x) behind the peak at x_p = 8, decaying outward
        let xp = 8.0;
        let u = Field::from_fn(&d, |x, rho| {
            let back = (xp - x).rem_euclid(10.0 * PI);
            let core = 3.0 * (-((x - xp).powi(2) + rho * rho)).exp();
            let wake = if back < 5.0 * PI { (-(rho - 0.5 * back)).exp().min(2.0) } else { 0.0 };
            core + wake
        });
        let angle = cone_half_angle(&u, 1.0).unwrap();
        assert!((angle - 26.565).abs() < 0.5, "{angle}");
        let scaled = u.scaled(3.0);
        let a3 = cone_half_angle(&scaled, 3.0).unwrap();
        assert!((a3 - angle).abs() < 1e-12);
    }

    #[test]
    fn bump_without_wake_has_no_cone() {
        let d = disc(5.0, 128);
        let u = gaussian_data(&d, 5.0, 1.0).unwrap();
        assert!(matches!(cone_half_angle(&u, 0.5), Err(ZkError::NoRadiation)));
        assert!(cone_half_angle(&u, 6.0).is_err());
    }
}

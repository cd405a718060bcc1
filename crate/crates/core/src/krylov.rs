//! Restarted GMRES with Givens rotations.

/// Outcome of a GMRES solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side norm.
    pub relative_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    pub restart: usize,
    pub tol: f64,
    pub max_restarts: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 30,
            tol: 1e-3,
            max_restarts: 20,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Solve `A x = b` starting from `x = 0`, with `A` given by its action.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> (Vec<f64>, GmresStats) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return (
            x,
            GmresStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let m = opts.restart.max(1);
    let mut total = 0;
    let mut rel = 1.0;
    for _ in 0..opts.max_restarts.max(1) {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= opts.tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&basis[k]);
            total += 1;
            // modified Gram–Schmidt
            for (i, v) in basis.iter().enumerate() {
                let h = dot(&w, v);
                hess[i][k] = h;
                w.iter_mut().zip(v).for_each(|(w, v)| *w -= h * v);
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let (a, b) = (hess[i][k], hess[i + 1][k]);
                hess[i][k] = cs[i] * a + sn[i] * b;
                hess[i + 1][k] = -sn[i] * a + cs[i] * b;
            }
            let (c, s) = givens(hess[k][k], hess[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            hess[k][k] = c * hess[k][k] + s * hess[k + 1][k];
            hess[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k_used = k + 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= opts.tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(x, v)| *x += yi * v);
        }
        if rel <= opts.tol {
            break;
        }
    }
    (
        x,
        GmresStats {
            iterations: total,
            relative_residual: rel,
            converged: rel <= opts.tol,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 50;
        let a = |i: usize, j: usize| {
            if i == j {
                4.0 + i as f64 * 0.1
            } else if j == i + 1 {
                -1.0
            } else if i == j + 2 {
                0.5
            } else {
                0.0
            }
        };
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n).map(|i| (0..n).map(|j| a(i, j) * x[j]).sum()).collect()
        };
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = apply(&x_true);
        let (x, stats) = gmres(
            apply,
            &b,
            GmresOptions {
                restart: 10,
                tol: 1e-12,
                max_restarts: 50,
            },
        );
        assert!(stats.converged);
        let err = x.iter().zip(&x_true).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let (x, s) = gmres(|v| v.to_vec(), &[0.0; 4], GmresOptions::default());
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(s.iterations, 0);
    }
}

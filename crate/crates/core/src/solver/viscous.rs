//! Semi-implicit viscous substep.
//!
//! The stress `2 mu D(u) + lambda div(u) I` is discretised on cell corners:
//! corner gradients average two cell differences, and the operator is the
//! exact gradient of the corner energy
//!
//! ```text
//! E(u) = 1/2 Σ_corners [ 2 mu |D(u)|² + lambda (div u)² ]
//! ```
//!
//! so it is symmetric positive semi-definite and annihilates constants.
//! The implicit system `rho u + dt K u = m*` is solved by Jacobi-preconditioned
//! conjugate gradients.

use crate::error::{Error, Result};
use crate::fields::{PeriodicGrid2D, ScalarField, VectorField2};

/// Corner-averaged viscosity coefficients.
pub(crate) struct CornerCoefficients {
    mu: Vec<f64>,
    lambda: Vec<f64>,
}

impl CornerCoefficients {
    pub(crate) fn from_cells(mu: &ScalarField, lambda: &ScalarField) -> Self {
        let g = *mu.grid();
        let avg = |f: &ScalarField| -> Vec<f64> {
            let mut out = vec![0.0; g.len()];
            for j in 0..g.ny as isize {
                for i in 0..g.nx as isize {
                    out[g.idx(i, j)] =
                        0.25 * (f.at(i, j) + f.at(i + 1, j) + f.at(i, j + 1) + f.at(i + 1, j + 1));
                }
            }
            out
        };
        Self {
            mu: avg(mu),
            lambda: avg(lambda),
        }
    }
}

pub(crate) struct ViscousOperator {
    grid: PeriodicGrid2D,
    coeffs: CornerCoefficients,
}

impl ViscousOperator {
    pub(crate) fn new(grid: PeriodicGrid2D, coeffs: CornerCoefficients) -> Self {
        Self { grid, coeffs }
    }

    /// `K u`, the discrete `-div(2 mu D(u) + lambda div(u) I)`, written into `out`.
    pub(crate) fn apply(&self, u: &[f64], v: &[f64], out_u: &mut [f64], out_v: &mut [f64]) {
        let g = &self.grid;
        let n = g.len();
        let (rx, ry) = (0.5 / g.hx(), 0.5 / g.hy());
        let mut sxx = vec![0.0; n];
        let mut syy = vec![0.0; n];
        let mut sxy = vec![0.0; n];
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                let (k00, k10, k01, k11) = (
                    g.idx(i, j),
                    g.idx(i + 1, j),
                    g.idx(i, j + 1),
                    g.idx(i + 1, j + 1),
                );
                let ux = ((u[k10] + u[k11]) - (u[k00] + u[k01])) * rx;
                let uy = ((u[k01] + u[k11]) - (u[k00] + u[k10])) * ry;
                let vx = ((v[k10] + v[k11]) - (v[k00] + v[k01])) * rx;
                let vy = ((v[k01] + v[k11]) - (v[k00] + v[k10])) * ry;
                let c = k00;
                let (mu, lambda) = (self.coeffs.mu[c], self.coeffs.lambda[c]);
                let div = ux + vy;
                sxx[c] = 2.0 * mu * ux + lambda * div;
                syy[c] = 2.0 * mu * vy + lambda * div;
                sxy[c] = mu * (uy + vx);
            }
        }
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                // corners touching cell (i, j): (i,j) (i-1,j) (i,j-1) (i-1,j-1)
                let (c00, cm0, c0m, cmm) = (
                    g.idx(i, j),
                    g.idx(i - 1, j),
                    g.idx(i, j - 1),
                    g.idx(i - 1, j - 1),
                );
                let k = c00;
                out_u[k] = ((sxx[cm0] + sxx[cmm]) - (sxx[c00] + sxx[c0m])) * rx
                    + ((sxy[c0m] + sxy[cmm]) - (sxy[c00] + sxy[cm0])) * ry;
                out_v[k] = ((sxy[cm0] + sxy[cmm]) - (sxy[c00] + sxy[c0m])) * rx
                    + ((syy[c0m] + syy[cmm]) - (syy[c00] + syy[cm0])) * ry;
            }
        }
    }

    /// Diagonal of `K` for both components.
    fn diagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (ax, ay) = (0.25 / (g.hx() * g.hx()), 0.25 / (g.hy() * g.hy()));
        let mut du = vec![0.0; g.len()];
        let mut dv = vec![0.0; g.len()];
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                let k = g.idx(i, j);
                for c in [
                    g.idx(i, j),
                    g.idx(i - 1, j),
                    g.idx(i, j - 1),
                    g.idx(i - 1, j - 1),
                ] {
                    let (mu, lambda) = (self.coeffs.mu[c], self.coeffs.lambda[c]);
                    du[k] += (2.0 * mu + lambda) * ax + mu * ay;
                    dv[k] += (2.0 * mu + lambda) * ay + mu * ax;
                }
            }
        }
        (du, dv)
    }

    /// Quadratic form `Σ_c [2 mu |D|² + lambda (div)²]` per unit cell area.
    #[cfg(test)]
    pub(crate) fn dissipation(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut ku = vec![0.0; u.len()];
        let mut kv = vec![0.0; v.len()];
        self.apply(u, v, &mut ku, &mut kv);
        u.iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>()
            + v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 5000,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of the viscous substep.
pub(crate) struct ViscousSolution {
    pub momentum: VectorField2,
    pub iterations: usize,
}

/// Solves `rho u + dt K u = m*` and returns the conservative momentum
/// `m* - dt K u`.
pub(crate) fn viscous_substep(
    rho: &ScalarField,
    m_star: &VectorField2,
    op: &ViscousOperator,
    dt: f64,
    opts: CgOptions,
) -> Result<ViscousSolution> {
    let g = *rho.grid();
    let n = g.len();
    let r_rho = rho.values();
    let (bu, bv) = (m_star.x.values(), m_star.y.values());
    let (du, dv) = op.diagonal();
    let pre_u: Vec<f64> = (0..n).map(|k| 1.0 / (r_rho[k] + dt * du[k])).collect();
    let pre_v: Vec<f64> = (0..n).map(|k| 1.0 / (r_rho[k] + dt * dv[k])).collect();

    let apply_a = |xu: &[f64], xv: &[f64], yu: &mut [f64], yv: &mut [f64]| {
        op.apply(xu, xv, yu, yv);
        for k in 0..n {
            yu[k] = r_rho[k] * xu[k] + dt * yu[k];
            yv[k] = r_rho[k] * xv[k] + dt * yv[k];
        }
    };

    let mut xu: Vec<f64> = (0..n).map(|k| bu[k] / r_rho[k]).collect();
    let mut xv: Vec<f64> = (0..n).map(|k| bv[k] / r_rho[k]).collect();
    let b_norm = (dot(bu, bu) + dot(bv, bv)).sqrt();
    let mut au = vec![0.0; n];
    let mut av = vec![0.0; n];
    apply_a(&xu, &xv, &mut au, &mut av);
    let mut ru: Vec<f64> = (0..n).map(|k| bu[k] - au[k]).collect();
    let mut rv: Vec<f64> = (0..n).map(|k| bv[k] - av[k]).collect();
    let mut zu: Vec<f64> = (0..n).map(|k| pre_u[k] * ru[k]).collect();
    let mut zv: Vec<f64> = (0..n).map(|k| pre_v[k] * rv[k]).collect();
    let mut pu = zu.clone();
    let mut pv = zv.clone();
    let mut rz = dot(&ru, &zu) + dot(&rv, &zv);
    let target = opts.rel_tol * b_norm;
    let mut iterations = 0;
    let mut res = (dot(&ru, &ru) + dot(&rv, &rv)).sqrt();
    while res > target {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(Error::ViscousSolve {
                iterations,
                residual: res / b_norm.max(f64::MIN_POSITIVE),
            });
        }
        apply_a(&pu, &pv, &mut au, &mut av);
        let alpha = rz / (dot(&pu, &au) + dot(&pv, &av));
        for k in 0..n {
            xu[k] += alpha * pu[k];
            xv[k] += alpha * pv[k];
            ru[k] -= alpha * au[k];
            rv[k] -= alpha * av[k];
            zu[k] = pre_u[k] * ru[k];
            zv[k] = pre_v[k] * rv[k];
        }
        let rz_new = dot(&ru, &zu) + dot(&rv, &zv);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            pu[k] = zu[k] + beta * pu[k];
            pv[k] = zv[k] + beta * pv[k];
        }
        res = (dot(&ru, &ru) + dot(&rv, &rv)).sqrt();
        iterations += 1;
    }

    // m = m* - dt K u keeps Σ m exact, since K annihilates constants
    op.apply(&xu, &xv, &mut au, &mut av);
    let mx: Vec<f64> = (0..n).map(|k| bu[k] - dt * au[k]).collect();
    let my: Vec<f64> = (0..n).map(|k| bv[k] - dt * av[k]).collect();
    Ok(ViscousSolution {
        momentum: VectorField2 {
            x: ScalarField::from_vec(g, mx)?,
            y: ScalarField::from_vec(g, my)?,
        },
        iterations,
    })
}

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{PeriodicGrid2D, ScalarField};
use crate::error::{Error, Result};

/// Mean tolerance for inputs to the inverse Laplacian, relative to `‖f‖₁`.
pub const MEAN_ZERO_TOL: f64 = 1e-10;

fn fft2(data: &mut [Complex64], g: &PeriodicGrid2D, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (
            planner.plan_fft_inverse(g.nx),
            planner.plan_fft_inverse(g.ny),
        )
    } else {
        (
            planner.plan_fft_forward(g.nx),
            planner.plan_fft_forward(g.ny),
        )
    };
    for r in data.chunks_exact_mut(g.nx) {
        row.process(r);
    }
    let mut column = vec![Complex64::default(); g.ny];
    for i in 0..g.nx {
        for j in 0..g.ny {
            column[j] = data[j * g.nx + i];
        }
        col.process(&mut column);
        for j in 0..g.ny {
            data[j * g.nx + i] = column[j];
        }
    }
}

fn wavenumber(k: usize, n: usize, period: f64) -> f64 {
    let signed = if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * PI * signed / period
}

/// Applies the Fourier multiplier `m(kx, ky)` to `f`.
fn apply_symbol(f: &ScalarField, m: impl Fn(f64, f64) -> f64) -> ScalarField {
    let g = *f.grid();
    let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, &g, false);
    for j in 0..g.ny {
        let ky = wavenumber(j, g.ny, g.ly);
        for i in 0..g.nx {
            let kx = wavenumber(i, g.nx, g.lx);
            buf[j * g.nx + i] *= m(kx, ky);
        }
    }
    fft2(&mut buf, &g, true);
    let norm = 1.0 / g.len() as f64;
    ScalarField::from_vec(g, buf.iter().map(|c| c.re * norm).collect()).expect("same grid")
}

/// Spectral Laplacian `Δf`.
pub fn laplacian_spectral(f: &ScalarField) -> ScalarField {
    apply_symbol(f, |kx, ky| -(kx * kx + ky * ky))
}

/// The unique zero-mean periodic `g` with `-Δg = f`, for zero-mean `f`.
pub fn inv_laplacian_mean_zero(f: &ScalarField) -> Result<ScalarField> {
    let l1 = f.lp_norm(1.0);
    let mean_integral = f.integrate();
    if mean_integral.abs() > MEAN_ZERO_TOL * l1 {
        return Err(Error::NonZeroMean {
            mean: mean_integral / f.grid().area(),
            l1,
        });
    }
    Ok(apply_symbol(f, |kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / k2
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PeriodicGrid2D {
        PeriodicGrid2D::new(32, 16, 2.0, 1.0).unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let out = inv_laplacian_mean_zero(&ScalarField::zeros(grid())).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn sine_eigenfunction() {
        let g = grid();
        let k = 2.0 * PI / g.lx;
        let f = ScalarField::from_fn(g, |x, _| (k * x).sin());
        let u = inv_laplacian_mean_zero(&f).unwrap();
        let exact = f.map(|v| v / (k * k));
        assert!((&u - &exact).max_abs() < 1e-14);
        assert!(u.mean().abs() < 1e-15);
    }

    #[test]
    fn round_trip_identity() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| {
            (PI * x).sin() * (4.0 * PI * y).cos() + (3.0 * PI * x).cos() + (2.0 * PI * y).sin()
        });
        let back = laplacian_spectral(&inv_laplacian_mean_zero(&f).unwrap()).map(|v| -v);
        assert!((&back - &f).max_abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn rejects_nonzero_mean() {
        let f = ScalarField::constant(grid(), 1.0);
        assert!(matches!(
            inv_laplacian_mean_zero(&f),
            Err(Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn shift_equivariance() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| (PI * x + 0.3).sin() * (2.0 * PI * y).cos());
        let a = inv_laplacian_mean_zero(&f.shifted(1, 0)).unwrap();
        let b = inv_laplacian_mean_zero(&f).unwrap().shifted(1, 0);
        assert!((&a - &b).max_abs() < 1e-13);
    }
}

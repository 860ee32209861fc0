//! The invariant suite run by `congesto check`.
//!
//! Law-dependent checks go through [`ConstitutiveLaw`], so a deliberately
//! faulty law can be fed in to confirm the suite catches it.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use crate::config::parse_config;
use crate::constitutive::{e_eps, ConstitutiveLaw, ConstitutiveParams};
use crate::diagnostics::{congestion_metrics, entropy_report};
use crate::error::Result;
use crate::fields::{
    divergence, gradient, inv_laplacian_mean_zero, laplacian_spectral, read_fields, write_fields,
    FieldSet, PeriodicGrid2D, ScalarField, VectorField2,
};
use crate::limits::{incompressible_expansion_residual, regime_product, RateFit};
use crate::solver::{
    build_scenario, drag_update, step, ScenarioKind, ScenarioKnobs, SolverSettings, SolverState,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// Wraps a law and scales its bulk viscosity; a mutation used to confirm
/// that the suite notices a misdefined `lambda`.
pub struct ScaledBulkViscosity<L> {
    pub inner: L,
    pub factor: f64,
}

impl<L: ConstitutiveLaw> ConstitutiveLaw for ScaledBulkViscosity<L> {
    fn params(&self) -> &ConstitutiveParams {
        self.inner.params()
    }
    fn mu(&self, rho: f64) -> Result<f64> {
        self.inner.mu(rho)
    }
    fn dmu(&self, rho: f64) -> Result<f64> {
        self.inner.dmu(rho)
    }
    fn lambda(&self, rho: f64) -> Result<f64> {
        Ok(self.factor * self.inner.lambda(rho)?)
    }
    fn pi(&self, rho: f64) -> Result<f64> {
        self.inner.pi(rho)
    }
    fn dpi(&self, rho: f64) -> Result<f64> {
        self.inner.dpi(rho)
    }
}

pub struct Check {
    pub name: &'static str,
    pub module: &'static str,
    pub run: fn(&dyn ConstitutiveLaw) -> Result<CheckOutcome>,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub module: &'static str,
    pub outcome: CheckOutcome,
    pub elapsed: Duration,
}

/// `n` equispaced densities on `[0, 0.95 phi_star]`.
pub fn sample_grid(p: &ConstitutiveParams, n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |k| 0.95 * p.phi_star * k as f64 / (n - 1) as f64)
}

/// Densities in `(0, 0.95 phi_star]`.
fn density_samples(p: &ConstitutiveParams, n: usize) -> impl Iterator<Item = f64> + '_ {
    (1..=n).map(move |k| 0.95 * p.phi_star * k as f64 / n as f64)
}

fn bd_relation(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let mut worst = 0.0f64;
    for rho in sample_grid(&p, 1000) {
        let lambda = law.lambda(rho)?;
        // the difference cancels badly at small rho; fusing keeps the product exact
        let bd = 2.0 * rho.mul_add(law.dmu(rho)?, -law.mu(rho)?);
        let diff = (lambda - bd).abs();
        if diff > 0.0 {
            worst = worst.max(diff / bd.abs());
        }
    }
    Ok(CheckOutcome::new(
        worst <= 1e-10,
        format!("max rel err {worst:.2e} (tol 1e-10)"),
    ))
}

fn pressure_link(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let mut mismatches = 0;
    for rho in sample_grid(&p, 1000) {
        let expected = (rho / p.phi_star).powf(p.gamma) * (law.mu(rho)? - rho);
        if law.pi(rho)?.to_bits() != expected.to_bits() {
            mismatches += 1;
        }
    }
    Ok(CheckOutcome::new(
        mismatches == 0,
        format!("{mismatches} of 1000 samples differ bitwise"),
    ))
}

fn derivatives(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let mut worst = 0.0f64;
    for rho in density_samples(&p, 50) {
        let h = 1e-6 * rho;
        let fd_mu = (law.mu(rho + h)? - law.mu(rho - h)?) / (2.0 * h);
        let fd_pi = (law.pi(rho + h)? - law.pi(rho - h)?) / (2.0 * h);
        worst = worst
            .max((fd_mu - law.dmu(rho)?).abs() / law.dmu(rho)?)
            .max((fd_pi - law.dpi(rho)?).abs() / law.dpi(rho)?);
    }
    Ok(CheckOutcome::new(
        worst <= 1e-6,
        format!("max rel err vs central difference {worst:.2e}"),
    ))
}

fn monotone_laws(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let mut prev = [0.0f64; 3];
    let mut ok = true;
    for rho in density_samples(&p, 500) {
        let now = [law.mu(rho)?, law.pi(rho)?, law.lambda(rho)?];
        ok &=
            now.iter().zip(&prev).all(|(a, b)| a > b) && law.dmu(rho)? > 0.0 && law.dpi(rho)? > 0.0;
        prev = now;
    }
    Ok(CheckOutcome::new(
        ok,
        "mu, pi, lambda increasing; mu', pi' > 0".into(),
    ))
}

fn potential_energy(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let rho = 0.8 * p.phi_star;
    // Simpson on rho ∫_0^rho pi(s)/s² ds; the integrand has a finite limit at 0
    let n = 20_000;
    let h = rho / n as f64;
    let f = |s: f64| -> Result<f64> {
        let s = s.max(1e-9 * rho);
        Ok(law.pi(s)? / (s * s))
    };
    let mut sum = f(0.0)? + f(rho)?;
    for k in 1..n {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h)?;
    }
    let oracle = rho * sum * h / 3.0;
    let value = rho * e_eps(rho, &p, 0.0)?;
    let rel = (value - oracle).abs() / oracle;
    Ok(CheckOutcome::new(
        rel <= 1e-8,
        format!("rho e(rho) vs Simpson: rel err {rel:.2e}"),
    ))
}

fn stencil_order(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let errs: Vec<f64> = [32usize, 64, 128]
        .iter()
        .map(|&n| {
            let g = PeriodicGrid2D::square(n, 1.0).expect("grid");
            let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
            let gx = ScalarField::from_fn(g, |x, y| {
                2.0 * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).cos()
            });
            (&gradient(&f).x - &gx).max_abs()
        })
        .collect();
    let order = (errs[1] / errs[2]).log2().min((errs[0] / errs[1]).log2());
    Ok(CheckOutcome::new(
        order >= 3.8,
        format!("observed order {order:.3}"),
    ))
}

fn adjointness(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let g = PeriodicGrid2D::new(24, 32, 1.0, 1.5)?;
    let f = ScalarField::from_fn(g, |x, y| (x * 3.0).sin().exp() + y.cos());
    let v = VectorField2::from_fn(g, |x, y| ((2.0 * PI * y).sin() + x, (x * y).cos()));
    let lhs = gradient(&f).dot(&v).integrate();
    let rhs = -f.zip_map(&divergence(&v), |a, b| a * b).integrate();
    let err = (lhs - rhs).abs() / lhs.abs().max(1.0);
    Ok(CheckOutcome::new(
        err <= 1e-12,
        format!("|<grad f, v> + <f, div v>| = {err:.2e}"),
    ))
}

fn inverse_laplacian(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let g = PeriodicGrid2D::new(64, 32, 2.0, 1.0)?;
    let f = ScalarField::from_fn(g, |x, y| {
        (PI * x).sin() * (2.0 * PI * y).cos() + (3.0 * PI * x).cos()
    });
    let back = laplacian_spectral(&inv_laplacian_mean_zero(&f)?);
    // -Δ(-Δ)^{-1} f = f
    let err = back.zip_map(&f, |b, f| b + f).max_abs();
    Ok(CheckOutcome::new(
        err <= 1e-10,
        format!("round trip residual {err:.2e}"),
    ))
}

fn snapshot_round_trip(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let g = PeriodicGrid2D::new(8, 12, 1.0, 3.0)?;
    let mut set = FieldSet::new(g);
    set.push(
        "rho",
        ScalarField::from_fn(g, |x, y| (x * 1e3).sin() / (1.0 + y)),
    )?;
    let mut buf = Vec::new();
    write_fields(&set, &mut buf)?;
    let back = read_fields(&buf[..])?;
    Ok(CheckOutcome::new(
        back == set,
        format!("{} bytes", buf.len()),
    ))
}

fn drag_root(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let (ux, _) = drag_update(1.0, 0.0, 1.0, 1.0);
    let expected = (5f64.sqrt() - 1.0) / 2.0;
    let err = (ux - expected).abs();
    Ok(CheckOutcome::new(
        err <= 1e-15,
        format!("|u+| = {ux} (exact (sqrt5-1)/2)"),
    ))
}

fn mass_conservation(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = ConstitutiveParams {
        theta: 1.0,
        ..*law.params()
    };
    let g = PeriodicGrid2D::square(32, 1.0)?;
    let s = build_scenario(
        ScenarioKind::GaussianBump,
        p,
        g,
        ScenarioKnobs::default(),
        0.05,
        0,
    )?;
    let settings = SolverSettings::for_reference_time(s.t_end);
    let mut state = SolverState::initial(&s)?;
    let m0 = state.mass();
    for _ in 0..20 {
        let dt = crate::solver::compute_dt(&state, &p, &settings)?;
        state = step(&state, &p, dt, &settings)?.0;
    }
    let drift = (state.mass() - m0).abs() / m0;
    Ok(CheckOutcome::new(
        drift <= 1e-13,
        format!("relative mass drift {drift:.2e} over 20 steps"),
    ))
}

fn uniform_state(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let g = PeriodicGrid2D::square(16, 1.0)?;
    let rho = ScalarField::constant(g, 0.3);
    let s = SolverState::from_primitive(rho.clone(), VectorField2::zeros(g), &p)?;
    let settings = SolverSettings::for_reference_time(1.0);
    let (next, _) = step(&s, &p, 0.01, &settings)?;
    let ok = next.rho == rho && next.u.x.max_abs() == 0.0 && next.u.y.max_abs() == 0.0;
    Ok(CheckOutcome::new(
        ok,
        "uniform state at rest is stationary".into(),
    ))
}

fn entropy_initial(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let g = PeriodicGrid2D::square(32, 1.0)?;
    let s = build_scenario(
        ScenarioKind::GaussianBump,
        p,
        g,
        ScenarioKnobs::default(),
        0.0,
        0,
    )?;
    let r = entropy_report(&[SolverState::initial(&s)?], &p)?[0];
    let sum = r.kin_w + r.cross + r.potential + r.theta_term + r.visc_mass;
    let cum =
        r.drag_diss_cum + r.asym_diss_cum + r.grad_rho_diss_cum + r.sym_diss_cum + r.bulk_diss_cum;
    Ok(CheckOutcome::new(
        r.total_lhs == sum && cum == 0.0,
        format!("total_lhs(0) = {:.6e}", r.total_lhs),
    ))
}

fn exclusion_half_packing(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = *law.params();
    let g = PeriodicGrid2D::square(16, 1.0)?;
    let rho = 0.5 * p.phi_star;
    let s = SolverState::from_primitive(ScalarField::constant(g, rho), VectorField2::zeros(g), &p)?;
    let m = congestion_metrics(&s, &p, 0.01)?;
    let expected = 0.5 * (law.mu(rho)? - rho);
    let rel = (m.exclusion_residual_mu - expected).abs() / expected;
    Ok(CheckOutcome::new(
        rel <= 1e-12 && m.congested_fraction == 0.0,
        format!("exclusion residual rel err {rel:.2e}"),
    ))
}

fn regime_slopes(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = ConstitutiveParams {
        a: 2.0,
        ..*law.params()
    };
    let ladder = [1e-2, 3e-3, 1e-3, 3e-4];
    let mut slopes = Vec::new();
    let mut ok = true;
    for s in [p.a / 2.0, 1.0, 1.0 + p.a] {
        let pts: Vec<(f64, f64)> = ladder
            .iter()
            .map(|&e| regime_product(e, s, &p).map(|v| (e, v)))
            .collect::<Result<_>>()?;
        let fit = RateFit::fit("regime", &pts)?;
        ok &= fit.matches(p.a, 0.05);
        slopes.push(format!("{:.4}", fit.slope));
    }
    Ok(CheckOutcome::new(
        ok,
        format!("slopes [{}] (expected {})", slopes.join(", "), p.a),
    ))
}

fn expansion_slope(law: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let p = ConstitutiveParams {
        a: 2.0,
        ..*law.params()
    };
    let pts: Vec<(f64, f64)> = [1e-1, 3e-2, 1e-2, 3e-3]
        .iter()
        .map(|&e| incompressible_expansion_residual(e, p.phi_star, &p).map(|v| (e, v)))
        .collect::<Result<_>>()?;
    let fit = RateFit::fit("expansion", &pts)?;
    Ok(CheckOutcome::new(
        fit.matches(2.0, 0.05),
        format!("slope {:.4} at a = 2", fit.slope),
    ))
}

fn config_round_trip(_: &dyn ConstitutiveLaw) -> Result<CheckOutcome> {
    let c =
        parse_config("scenario = colliding_blobs\neps = 0.05\nlx = 4\nspeed = 25\nkappa = 0.3\n")?;
    let again = parse_config(&c.to_text())?;
    Ok(CheckOutcome::new(
        again == c,
        "parse(to_text(c)) == c".into(),
    ))
}

pub fn registry() -> Vec<Check> {
    vec![
        Check {
            name: "bd_relation",
            module: "constitutive",
            run: bd_relation,
        },
        Check {
            name: "pressure_viscosity_link",
            module: "constitutive",
            run: pressure_link,
        },
        Check {
            name: "derivatives",
            module: "constitutive",
            run: derivatives,
        },
        Check {
            name: "monotone_laws",
            module: "constitutive",
            run: monotone_laws,
        },
        Check {
            name: "potential_energy",
            module: "constitutive",
            run: potential_energy,
        },
        Check {
            name: "stencil_order",
            module: "fields",
            run: stencil_order,
        },
        Check {
            name: "adjointness",
            module: "fields",
            run: adjointness,
        },
        Check {
            name: "inverse_laplacian",
            module: "fields",
            run: inverse_laplacian,
        },
        Check {
            name: "snapshot_round_trip",
            module: "fields",
            run: snapshot_round_trip,
        },
        Check {
            name: "drag_root",
            module: "solver",
            run: drag_root,
        },
        Check {
            name: "mass_conservation",
            module: "solver",
            run: mass_conservation,
        },
        Check {
            name: "uniform_state",
            module: "solver",
            run: uniform_state,
        },
        Check {
            name: "entropy_initial",
            module: "diagnostics",
            run: entropy_initial,
        },
        Check {
            name: "exclusion_half_packing",
            module: "diagnostics",
            run: exclusion_half_packing,
        },
        Check {
            name: "regime_slopes",
            module: "limits",
            run: regime_slopes,
        },
        Check {
            name: "expansion_slope",
            module: "limits",
            run: expansion_slope,
        },
        Check {
            name: "config_round_trip",
            module: "cli_io",
            run: config_round_trip,
        },
    ]
}

/// Runs every registered check; a check that errors counts as failed.
pub fn run_checks(law: &dyn ConstitutiveLaw) -> Vec<CheckResult> {
    registry()
        .into_iter()
        .map(|c| {
            let start = Instant::now();
            let outcome =
                (c.run)(law).unwrap_or_else(|e| CheckOutcome::new(false, format!("error: {e}")));
            CheckResult {
                name: c.name,
                module: c.module,
                outcome,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::SingularLaws;

    #[test]
    fn registry_covers_every_module() {
        let reg = registry();
        assert!(reg.len() >= 12);
        for m in [
            "constitutive",
            "fields",
            "solver",
            "diagnostics",
            "limits",
            "cli_io",
        ] {
            assert!(reg.iter().any(|c| c.module == m), "{m}");
        }
        let mut names: Vec<_> = reg.iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), reg.len());
    }

    #[test]
    fn reference_laws_pass() {
        let law = SingularLaws::new(ConstitutiveParams::with_eps(0.1)).unwrap();
        for r in run_checks(&law) {
            assert!(r.outcome.pass, "{}: {}", r.name, r.outcome.detail);
        }
    }
}

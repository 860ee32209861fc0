//! κ-entropy bookkeeping, effective velocity, congestion monitors and the
//! renormalised-viscosity balance.
//!
//! `∇φ` is never formed from a tabulated `φ`; it is `(mu'(rho)/rho) ∇rho`.
//! Time integrals use the trapezoid rule on the solver's own steps.

use serde::Serialize;

use crate::constitutive::{
    dmu_eps, dpi_eps, lambda_eps, mu1_eps, mu_eps, pi_eps, potential_energy_densities,
    ConstitutiveParams,
};
use crate::error::{Error, Result};
use crate::fields::{divergence, gradient, sym_asym_grad, ScalarField, VectorField2};
use crate::solver::SolverState;

/// Powers `k` of the divergence moments `∫ (rho/phi_star)^k |div u|`.
pub const DIV_MOMENT_POWERS: [i32; 4] = [4, 16, 64, 256];

/// Default congestion band: `rho >= (1 - eta) phi_star`.
pub const DEFAULT_ETA: f64 = 0.01;

/// Terms of the κ-entropy inequality at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EntropyReport {
    pub t: f64,
    /// `∫ rho |u + 2κ∇φ|² / 2`
    pub kin_w: f64,
    /// `∫ rho κ(1-κ) |2∇φ|² / 2`
    pub cross: f64,
    /// `∫ rho e(rho)`
    pub potential: f64,
    /// `r ∫ mu(rho)`
    pub visc_mass: f64,
    pub drag_diss_cum: f64,
    pub asym_diss_cum: f64,
    pub grad_rho_diss_cum: f64,
    pub sym_diss_cum: f64,
    pub bulk_diss_cum: f64,
    /// `theta ∫ rho² / 2`
    pub theta_term: f64,
    pub total_lhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CongestionMetrics {
    pub max_rho_ratio: f64,
    pub eta: f64,
    /// Area fraction of `{rho >= (1 - eta) phi_star}`.
    pub congested_fraction: f64,
    /// `‖(1 - rho/phi_star) mu1(rho)‖_∞`
    pub exclusion_residual_mu: f64,
    /// `‖(1 - rho/phi_star) pi(rho)‖_∞`
    pub exclusion_residual_pi: f64,
    /// `max |div u|` over the congested band, 0 when the band is empty.
    pub div_on_congested: f64,
    pub div_moments: [f64; 4],
}

/// Instantaneous integrands of one state.
#[derive(Debug, Clone, Copy)]
struct InstantTerms {
    kin_w: f64,
    cross: f64,
    potential: f64,
    visc_mass: f64,
    theta_term: f64,
    mu_integral: f64,
    // rates, integrated in time by the tracker
    drag: f64,
    asym: f64,
    grad_rho: f64,
    sym: f64,
    bulk: f64,
    half_lambda_div: f64,
}

/// `2κ (mu'/rho) ∇rho`, the shift from `u` to the effective velocity.
fn grad_phi(state: &SolverState, p: &ConstitutiveParams) -> Result<VectorField2> {
    let floor = p.rho_floor();
    let weight = state.rho.try_map(|r| {
        if r < floor {
            Err(Error::Vacuum { rho: r, floor })
        } else {
            dmu_eps(r, p).map(|d| d / r)
        }
    })?;
    Ok(gradient(&state.rho).scale_by(&weight))
}

/// `w = u + 2κ ∇φ(rho)`.
pub fn effective_velocity(state: &SolverState, p: &ConstitutiveParams) -> Result<VectorField2> {
    p.validate()?;
    let gphi = grad_phi(state, p)?;
    let k2 = 2.0 * p.kappa;
    Ok(VectorField2 {
        x: state.u.x.zip_map(&gphi.x, |u, g| u + k2 * g),
        y: state.u.y.zip_map(&gphi.y, |u, g| u + k2 * g),
    })
}

fn nonnegative(name: &str, f: &ScalarField) -> f64 {
    // integrands are squares times nonnegative coefficients
    assert!(
        f.values().iter().all(|&v| v >= 0.0),
        "dissipation integrand `{name}` has a negative cell"
    );
    f.integrate()
}

fn instant_terms(
    state: &SolverState,
    p: &ConstitutiveParams,
    rho_ref: f64,
) -> Result<InstantTerms> {
    let rho = &state.rho;
    let g = *rho.grid();
    let kappa = p.kappa;
    let mu = rho.try_map(|r| mu_eps(r, p))?;
    let dmu = rho.try_map(|r| dmu_eps(r, p))?;
    let lambda = rho.try_map(|r| lambda_eps(r, p))?;
    let dpi = rho.try_map(|r| dpi_eps(r, p))?;
    let gphi = grad_phi(state, p)?;
    let grad_rho = gradient(rho);
    let div_u = divergence(&state.u);
    let (d, a) = sym_asym_grad(&state.u);

    let w = effective_velocity(state, p)?;
    let kin_w = rho.zip_map(&w.dot(&w), |r, w2| 0.5 * r * w2).integrate();
    let cross = rho
        .zip_map(&gphi.dot(&gphi), |r, g2| {
            2.0 * kappa * (1.0 - kappa) * r * g2
        })
        .integrate();
    let potential =
        ScalarField::from_vec(g, potential_energy_densities(rho.values(), p, rho_ref)?)?
            .integrate();
    let mu_integral = mu.integrate();

    let speed = state.u.magnitude();
    let drag = nonnegative("drag", &rho.zip_map(&speed, |r, s| p.r * r * s * s * s));
    let asym = nonnegative("asym", &mu.zip_map(&a, |m, a| kappa * m * 2.0 * a * a));
    let grad_sq = grad_rho.dot(&grad_rho);
    let coef = {
        let data = (0..g.len())
            .map(|k| {
                let r = rho.values()[k];
                2.0 * kappa
                    * dmu.values()[k]
                    * (p.theta + dpi.values()[k] / r)
                    * grad_sq.values()[k]
            })
            .collect();
        ScalarField::from_vec(g, data)?
    };
    let grad_rho_rate = nonnegative("grad_rho", &coef);
    let sym = nonnegative(
        "sym",
        &mu.zip_map(&d.norm_sq(), |m, d2| (1.0 - kappa) * m * d2),
    );
    // rho mu' - mu = lambda / 2
    let bulk = nonnegative(
        "bulk",
        &lambda.zip_map(&div_u, |l, dv| (1.0 - kappa) * 0.5 * l * dv * dv),
    );
    let half_lambda_div = lambda.zip_map(&div_u, |l, dv| 0.5 * l * dv).integrate();

    Ok(InstantTerms {
        kin_w,
        cross,
        potential,
        visc_mass: p.r * mu_integral,
        theta_term: 0.5 * p.theta * rho.map(|r| r * r).integrate(),
        mu_integral,
        drag,
        asym,
        grad_rho: grad_rho_rate,
        sym,
        bulk,
        half_lambda_div,
    })
}

pub fn congestion_metrics(
    state: &SolverState,
    p: &ConstitutiveParams,
    eta: f64,
) -> Result<CongestionMetrics> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::InvalidParameter {
            name: "eta",
            constraint: "0 < eta < 0.5",
            value: eta,
        });
    }
    let rho = &state.rho;
    let g = *rho.grid();
    let ps = p.phi_star;
    let div_u = divergence(&state.u);
    let threshold = (1.0 - eta) * ps;
    let mut congested = 0usize;
    let mut div_on = 0.0f64;
    let mut excl_mu = 0.0f64;
    let mut excl_pi = 0.0f64;
    let mut moments = [0.0; 4];
    for k in 0..g.len() {
        let r = rho.values()[k];
        let gap = (ps - r) / ps;
        let dv = div_u.values()[k].abs();
        if r >= threshold {
            congested += 1;
            div_on = div_on.max(dv);
        }
        excl_mu = excl_mu.max((gap * mu1_eps(r, p)?).abs());
        excl_pi = excl_pi.max((gap * pi_eps(r, p)?).abs());
        let ratio = r / ps;
        for (m, &power) in moments.iter_mut().zip(&DIV_MOMENT_POWERS) {
            *m += ratio.powi(power) * dv;
        }
    }
    for m in &mut moments {
        *m *= g.cell_area();
    }
    Ok(CongestionMetrics {
        max_rho_ratio: rho.max() / ps,
        eta,
        congested_fraction: congested as f64 / g.len() as f64,
        exclusion_residual_mu: excl_mu,
        exclusion_residual_pi: excl_pi,
        div_on_congested: div_on,
        div_moments: moments,
    })
}

/// One `timeseries.csv` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub px: f64,
    pub py: f64,
    pub entropy: EntropyReport,
    pub congestion: CongestionMetrics,
    pub mu_balance_resid: f64,
}

pub const TIMESERIES_COLUMNS: [&str; 26] = [
    "t",
    "dt",
    "mass",
    "px",
    "py",
    "max_rho_ratio",
    "kin_w",
    "cross",
    "potential",
    "visc_mass",
    "theta_term",
    "drag_cum",
    "asym_cum",
    "gradrho_cum",
    "sym_cum",
    "bulk_cum",
    "total_lhs",
    "excl_resid_mu",
    "excl_resid_pi",
    "congested_frac",
    "div_on_congested",
    "divmom_k4",
    "divmom_k16",
    "divmom_k64",
    "divmom_k256",
    "mu_balance_resid",
];

impl TimeSeriesRow {
    pub fn values(&self) -> [f64; 26] {
        let e = &self.entropy;
        let c = &self.congestion;
        [
            self.t,
            self.dt,
            self.mass,
            self.px,
            self.py,
            c.max_rho_ratio,
            e.kin_w,
            e.cross,
            e.potential,
            e.visc_mass,
            e.theta_term,
            e.drag_diss_cum,
            e.asym_diss_cum,
            e.grad_rho_diss_cum,
            e.sym_diss_cum,
            e.bulk_diss_cum,
            e.total_lhs,
            c.exclusion_residual_mu,
            c.exclusion_residual_pi,
            c.congested_fraction,
            c.div_on_congested,
            c.div_moments[0],
            c.div_moments[1],
            c.div_moments[2],
            c.div_moments[3],
            self.mu_balance_resid,
        ]
    }

    pub fn csv_header() -> String {
        TIMESERIES_COLUMNS.join(",")
    }

    /// Shortest round-trip formatting, so reruns compare bit for bit.
    pub fn csv_line(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsOptions {
    pub eta: f64,
    /// Base point of the potential energy; `None` means 0, which needs `gamma > 0`.
    pub rho_ref: Option<f64>,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            rho_ref: None,
        }
    }
}

/// Folds states in time order into cumulative entropy and balance terms.
#[derive(Debug, Clone)]
pub struct DiagnosticsTracker {
    params: ConstitutiveParams,
    options: DiagnosticsOptions,
    prev: Option<(f64, InstantTerms)>,
    cum: [f64; 5],
    lambda_div_cum: f64,
    mu_integral0: f64,
    warnings: Vec<String>,
}

impl DiagnosticsTracker {
    pub fn new(params: ConstitutiveParams) -> Result<Self> {
        Self::with_options(params, DiagnosticsOptions::default())
    }

    pub fn with_options(params: ConstitutiveParams, options: DiagnosticsOptions) -> Result<Self> {
        params.validate()?;
        if params.gamma == 0.0 && !options.rho_ref.is_some_and(|r| r > 0.0) {
            return Err(Error::Domain {
                rho: options.rho_ref.unwrap_or(0.0),
                reason: "gamma = 0 needs a positive energy base point",
            });
        }
        Ok(Self {
            params,
            options,
            prev: None,
            cum: [0.0; 5],
            lambda_div_cum: 0.0,
            mu_integral0: 0.0,
            warnings: Vec::new(),
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Adds `state`, reached from the previous one after `dt`.
    pub fn observe(&mut self, state: &SolverState, dt: f64) -> Result<TimeSeriesRow> {
        let p = &self.params;
        let terms = instant_terms(state, p, self.options.rho_ref.unwrap_or(0.0))?;
        let rates = |t: &InstantTerms| [t.drag, t.asym, t.grad_rho, t.sym, t.bulk];
        match &self.prev {
            None => self.mu_integral0 = terms.mu_integral,
            Some((t_prev, prev)) => {
                let h = state.t - t_prev;
                let (a, b) = (rates(prev), rates(&terms));
                for i in 0..5 {
                    self.cum[i] += 0.5 * h * (a[i] + b[i]);
                    let scale = a[i].max(b[i]);
                    if scale > 1e-12 && (a[i] - b[i]).abs() > 0.5 * scale {
                        let msg = format!(
                            "t = {}: dissipation rate {i} changed by more than 50% in one step; cadence too coarse for the trapezoid rule",
                            state.t
                        );
                        // the full list stays in `warnings()`; only the first reaches the log
                        if self.warnings.is_empty() {
                            log::warn!("{msg} (further cadence warnings at debug level)");
                        } else {
                            log::debug!("{msg}");
                        }
                        self.warnings.push(msg);
                    }
                }
                self.lambda_div_cum += 0.5 * h * (prev.half_lambda_div + terms.half_lambda_div);
            }
        }
        let entropy = EntropyReport {
            t: state.t,
            kin_w: terms.kin_w,
            cross: terms.cross,
            potential: terms.potential,
            visc_mass: terms.visc_mass,
            drag_diss_cum: self.cum[0],
            asym_diss_cum: self.cum[1],
            grad_rho_diss_cum: self.cum[2],
            sym_diss_cum: self.cum[3],
            bulk_diss_cum: self.cum[4],
            theta_term: terms.theta_term,
            total_lhs: terms.kin_w
                + terms.cross
                + terms.potential
                + terms.theta_term
                + terms.visc_mass
                + self.cum.iter().sum::<f64>(),
        };
        let mu_balance_resid =
            (terms.mu_integral - self.mu_integral0 + self.lambda_div_cum).abs() / self.mu_integral0;
        let (px, py) = state.momentum();
        self.prev = Some((state.t, terms));
        Ok(TimeSeriesRow {
            t: state.t,
            dt,
            mass: state.mass(),
            px,
            py,
            entropy,
            congestion: congestion_metrics(state, p, self.options.eta)?,
            mu_balance_resid,
        })
    }
}

/// Entropy reports along a time-ordered slice of states.
pub fn entropy_report(
    states: &[SolverState],
    p: &ConstitutiveParams,
) -> Result<Vec<EntropyReport>> {
    let mut tracker = DiagnosticsTracker::new(*p)?;
    let mut prev_t = states.first().map(|s| s.t).unwrap_or(0.0);
    states
        .iter()
        .map(|s| {
            let dt = s.t - prev_t;
            prev_t = s.t;
            tracker.observe(s, dt).map(|row| row.entropy)
        })
        .collect()
}

/// `|∫mu(rho(t)) - ∫mu(rho⁰) + ∫₀ᵗ∫ (lambda/2) div u| / ∫mu(rho⁰)` at the last state.
pub fn mu_balance_residual(states: &[SolverState], p: &ConstitutiveParams) -> Result<f64> {
    let first = states
        .first()
        .ok_or_else(|| Error::Config("empty trajectory".into()))?;
    let mu0 = first.rho.try_map(|r| mu_eps(r, p))?.integrate();
    let mut lambda_div_cum = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let mut mu_last = mu0;
    for s in states {
        let lambda = s.rho.try_map(|r| lambda_eps(r, p))?;
        let rate = lambda
            .zip_map(&divergence(&s.u), |l, d| 0.5 * l * d)
            .integrate();
        if let Some((t, r)) = prev {
            lambda_div_cum += 0.5 * (s.t - t) * (r + rate);
        }
        prev = Some((s.t, rate));
        mu_last = s.rho.try_map(|r| mu_eps(r, p))?.integrate();
    }
    Ok((mu_last - mu0 + lambda_div_cum).abs() / mu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PeriodicGrid2D;
    use std::f64::consts::PI;

    fn params() -> ConstitutiveParams {
        ConstitutiveParams::with_eps(0.1)
    }

    fn state_with(rho: ScalarField, u: VectorField2, t: f64) -> SolverState {
        let mut s = SolverState::from_primitive(rho, u, &params()).unwrap();
        s.t = t;
        s
    }

    #[test]
    fn effective_velocity_of_constant_density() {
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let u = VectorField2::from_fn(g, |x, y| ((2.0 * PI * y).sin(), x.cos()));
        let s = state_with(ScalarField::constant(g, 0.3), u.clone(), 0.0);
        let w = effective_velocity(&s, &params()).unwrap();
        assert!((&w.x - &u.x).max_abs() < 1e-15 && (&w.y - &u.y).max_abs() < 1e-15);
        let bad = ConstitutiveParams {
            kappa: 0.0,
            ..params()
        };
        assert!(effective_velocity(&s, &bad).is_err());
    }

    #[test]
    fn effective_velocity_on_density_ramp() {
        let p = params();
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let g = PeriodicGrid2D::square(n, 1.0).unwrap();
                let rho = ScalarField::from_fn(g, |x, _| 0.3 + 0.1 * (2.0 * PI * x).sin());
                let s = state_with(rho, VectorField2::zeros(g), 0.0);
                let w = effective_velocity(&s, &p).unwrap();
                let exact = ScalarField::from_fn(g, |x, _| {
                    let r = 0.3 + 0.1 * (2.0 * PI * x).sin();
                    2.0 * p.kappa * dmu_eps(r, &p).unwrap() * 0.2 * PI * (2.0 * PI * x).cos() / r
                });
                (&w.x - &exact).max_abs()
            })
            .collect();
        assert!(errs[1] < 1e-5, "{errs:?}");
        assert!((errs[0] / errs[1]).log2() > 3.5, "{errs:?}");
    }

    #[test]
    fn half_packing_metrics() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let s = state_with(
            ScalarField::constant(g, 0.5 * p.phi_star),
            VectorField2::zeros(g),
            0.0,
        );
        let m = congestion_metrics(&s, &p, 0.01).unwrap();
        assert_eq!(m.congested_fraction, 0.0);
        let expected = 0.5 * mu1_eps(0.5 * p.phi_star, &p).unwrap();
        assert!((m.exclusion_residual_mu - expected).abs() <= 1e-15 * expected);
        assert_eq!(m.div_on_congested, 0.0);
        assert!(congestion_metrics(&s, &p, 0.7).is_err());
    }

    #[test]
    fn solenoidal_flow_has_zero_moments() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let u = VectorField2::from_fn(g, |_, y| ((2.0 * PI * y).sin(), 0.0));
        let rho = ScalarField::from_fn(g, |x, _| p.phi_star * (0.9 + 0.09 * (2.0 * PI * x).cos()));
        let m = congestion_metrics(&state_with(rho, u, 0.0), &p, 0.05).unwrap();
        assert!(
            m.div_moments.iter().all(|&v| v < 1e-14),
            "{:?}",
            m.div_moments
        );
        assert!(m.congested_fraction > 0.0);
    }

    #[test]
    fn div_moments_are_nonincreasing() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let u = VectorField2::from_fn(g, |x, _| ((2.0 * PI * x).sin(), 0.0));
        let rho = ScalarField::from_fn(g, |x, y| {
            p.phi_star * (0.7 + 0.29 * (2.0 * PI * (x + y)).cos())
        });
        let m = congestion_metrics(&state_with(rho, u, 0.0), &p, 0.01).unwrap();
        assert!(m.div_moments.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.div_moments[0] > 0.0);
    }

    #[test]
    fn initial_report_has_no_dissipation() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let rho = ScalarField::from_fn(g, |x, _| 0.3 + 0.05 * (2.0 * PI * x).cos());
        let u = VectorField2::from_fn(g, |_, y| (0.1 * (2.0 * PI * y).sin(), 0.0));
        let s = state_with(rho, u, 0.0);
        let r = entropy_report(std::slice::from_ref(&s), &p).unwrap()[0];
        assert_eq!(
            [
                r.drag_diss_cum,
                r.asym_diss_cum,
                r.grad_rho_diss_cum,
                r.sym_diss_cum,
                r.bulk_diss_cum
            ],
            [0.0; 5]
        );
        assert_eq!(
            r.total_lhs,
            r.kin_w + r.cross + r.potential + r.theta_term + r.visc_mass
        );
        assert!(r.cross > 0.0 && r.potential > 0.0);
    }

    #[test]
    fn static_uniform_state_keeps_total_constant() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let states: Vec<SolverState> = (0..5)
            .map(|k| {
                state_with(
                    ScalarField::constant(g, 0.4),
                    VectorField2::zeros(g),
                    0.1 * k as f64,
                )
            })
            .collect();
        let reports = entropy_report(&states, &p).unwrap();
        for r in &reports {
            assert!((r.total_lhs - reports[0].total_lhs).abs() <= 1e-12 * reports[0].total_lhs);
        }
        assert_eq!(mu_balance_residual(&states, &p).unwrap(), 0.0);
    }

    #[test]
    fn balance_is_invariant_under_time_shift() {
        let p = params();
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let u = VectorField2::from_fn(g, |x, _| (0.2 * (2.0 * PI * x).sin(), 0.0));
        let make = |t0: f64| -> Vec<SolverState> {
            (0..4)
                .map(|k| {
                    let rho = ScalarField::from_fn(g, |x, _| {
                        0.3 + 0.01 * k as f64 * (2.0 * PI * x).cos()
                    });
                    state_with(rho, u.clone(), t0 + 0.05 * k as f64)
                })
                .collect()
        };
        let a = mu_balance_residual(&make(0.0), &p).unwrap();
        let b = mu_balance_residual(&make(3.0), &p).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn gamma_zero_needs_base_point() {
        let p = ConstitutiveParams {
            gamma: 0.0,
            ..params()
        };
        assert!(DiagnosticsTracker::new(p).is_err());
        let opts = DiagnosticsOptions {
            rho_ref: Some(0.1),
            ..Default::default()
        };
        assert!(DiagnosticsTracker::with_options(p, opts).is_ok());
    }

    #[test]
    fn csv_columns_line_up() {
        assert_eq!(TIMESERIES_COLUMNS.len(), 26);
        assert!(TimeSeriesRow::csv_header().starts_with("t,dt,mass,px,py,max_rho_ratio,kin_w"));
        assert!(TimeSeriesRow::csv_header().ends_with("divmom_k256,mu_balance_resid"));
    }
}

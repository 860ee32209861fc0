//! Parameter sweeps and closed-form checks of the limit regimes: the
//! congestion product `(1 - rho/phi_star) mu1`, the incompressible-start
//! expansion of `pi_eps`, and the mass window of that start.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::constitutive::{pi_eps, ConstitutiveParams, MAX_EXPONENT};
use crate::diagnostics::{mu_balance_residual, CongestionMetrics, DiagnosticsTracker};
use crate::error::{Error, Result};
use crate::fields::{
    divergence, write_fields, FieldSet, PeriodicGrid2D, ScalarField, VectorField2,
};
use crate::solver::{
    build_scenario, run_with, Scenario, ScenarioKind, ScenarioKnobs, SolverSettings, SolverState,
};

/// Largest fit residual (RMS in log space) for which a rate is trusted.
pub const MAX_FIT_RESIDUAL: f64 = 0.1;

/// `(1 - rho/phi_star) mu1(rho)` at `rho = phi_star (1 - eps^s)`, in closed form
/// `phi_star (1 - eps^s) eps^a (e^X - 1)/X` with `X = eps^(1+a-s)`.
pub fn regime_product(eps: f64, s: f64, p: &ConstitutiveParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "s",
            constraint: "s > 0",
            value: s,
        });
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter {
            name: "eps",
            constraint: "0 < eps < 0.5",
            value: eps,
        });
    }
    let x = eps.powf(1.0 + p.a - s);
    if x > MAX_EXPONENT {
        return Err(Error::Overflow {
            rho: p.phi_star * (1.0 - eps.powf(s)),
            exponent: x,
        });
    }
    Ok(p.phi_star * (1.0 - eps.powf(s)) * eps.powf(p.a) * (x.exp_m1() / x))
}

/// Initial density of the incompressible start, `phi_star (1 - eps^a phi_star / pi0)`.
pub fn incompressible_density(eps: f64, pi0: f64, p: &ConstitutiveParams) -> Result<f64> {
    let scale = eps.powf(p.a) * p.phi_star / pi0;
    if !(pi0 > 0.0) || !(1.0 - scale > 0.0) {
        return Err(Error::Domain {
            rho: p.phi_star * (1.0 - scale),
            reason: "incompressible start needs pi0 > 0 and 1 - eps^a phi_star / pi0 > 0",
        });
    }
    Ok(p.phi_star * (1.0 - scale))
}

/// First-order coefficient of `pi_eps(rho0_eps)` in `eps`: `pi0² / (2 phi_star)`.
///
/// The factor 1/2 comes from `(e^(eps pi0/phi_star) - 1)/eps = pi0/phi_star
/// + eps pi0²/(2 phi_star²) + O(eps²)`.
pub fn expansion_first_order(pi0: f64, p: &ConstitutiveParams) -> f64 {
    pi0 * pi0 / (2.0 * p.phi_star)
}

/// `|pi_eps(rho0_eps) - pi0 - eps pi0²/(2 phi_star)|`, the remainder beyond first order.
pub fn incompressible_expansion_residual(
    eps: f64,
    pi0: f64,
    p: &ConstitutiveParams,
) -> Result<f64> {
    let params = ConstitutiveParams { eps, ..*p };
    let rho = incompressible_density(eps, pi0, &params)?;
    let pi = pi_eps(rho, &params)?;
    Ok((pi - pi0 - eps * expansion_first_order(pi0, p)).abs())
}

/// Least-squares slope of `log(value)` against `log(param)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub metric: String,
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    /// RMS deviation from the fitted line, in natural-log units.
    pub residual: f64,
}

impl RateFit {
    /// `points` are `(param, value)` with strictly decreasing `param` and positive values.
    pub fn fit(metric: &str, points: &[(f64, f64)]) -> Result<Self> {
        Self::fit_against(metric, points, |x| x)
    }

    /// Fits against `abscissa(param)` instead of `param`, e.g. `-ln delta`.
    pub fn fit_against(
        metric: &str,
        points: &[(f64, f64)],
        abscissa: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Sweep(format!(
                "rate fit for {metric} needs >= 3 points, got {}",
                points.len()
            )));
        }
        if !points.windows(2).all(|w| w[1].0 < w[0].0) {
            return Err(Error::Sweep(format!(
                "rate fit for {metric}: parameters must strictly decrease"
            )));
        }
        let mut xs = Vec::with_capacity(points.len());
        let mut ys = Vec::with_capacity(points.len());
        for &(param, value) in points {
            let x = abscissa(param);
            if !(x > 0.0 && value > 0.0 && value.is_finite()) {
                return Err(Error::Sweep(format!(
                    "rate fit for {metric}: log of non-positive value at param {param}"
                )));
            }
            xs.push(x.ln());
            ys.push(value.ln());
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = sxy / sxx;
        let residual = (xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(Self {
            metric: metric.to_string(),
            points: points.to_vec(),
            slope,
            residual,
        })
    }

    pub fn is_trusted(&self) -> bool {
        self.residual <= MAX_FIT_RESIDUAL
    }

    /// `|slope - expected| <= tol`, and only if the fit itself is trusted.
    pub fn matches(&self, expected: f64, tol: f64) -> bool {
        self.is_trusted() && (self.slope - expected).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    Eps,
    Delta,
    Theta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eps => "eps",
            SweepParam::Delta => "delta",
            SweepParam::Theta => "theta",
        }
    }

    pub fn apply(self, p: &ConstitutiveParams, value: f64) -> ConstitutiveParams {
        match self {
            SweepParam::Eps => ConstitutiveParams { eps: value, ..*p },
            SweepParam::Delta => ConstitutiveParams { delta: value, ..*p },
            SweepParam::Theta => ConstitutiveParams { theta: value, ..*p },
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(SweepParam::Eps),
            "delta" => Ok(SweepParam::Delta),
            "theta" => Ok(SweepParam::Theta),
            _ => Err(Error::Sweep(format!(
                "unknown sweep parameter {s:?} (eps, delta, theta)"
            ))),
        }
    }
}

/// The fixed part of a sweep: everything except the swept parameter.
#[derive(Debug, Clone)]
pub struct SweepFamily {
    pub kind: ScenarioKind,
    pub params: ConstitutiveParams,
    pub grid: PeriodicGrid2D,
    pub knobs: ScenarioKnobs,
    /// `None` uses the scenario's crossing time.
    pub t_end: Option<f64>,
}

impl SweepFamily {
    pub fn scenario(&self, param: SweepParam, value: f64) -> Result<Scenario> {
        let params = param.apply(&self.params, value);
        let s = build_scenario(self.kind, params, self.grid, self.knobs, 0.0, 0)?;
        let t_end = match self.t_end {
            Some(t) => t,
            None => s.crossing_time().ok_or_else(|| {
                Error::Sweep(format!(
                    "scenario {} has no crossing time; give t_end",
                    s.name
                ))
            })?,
        };
        Ok(s.with_t_end(t_end))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub param_name: &'static str,
    pub param_value: f64,
    pub scenario: String,
    pub final_metrics: CongestionMetrics,
    /// `max_t ‖(1 - rho/phi_star) pi(rho)‖_∞`
    pub peak_exclusion_residual: f64,
    pub peak_max_rho_ratio: f64,
    /// `(1/T) ∫ max_{rho >= 0.99 phi_star} |div u| dt`, trapezoid on the solver steps.
    pub time_avg_div_on_congested: f64,
    /// `max_t` area fraction of `{rho >= phi_star}` (nonzero only with truncation).
    pub overshoot_fraction: f64,
    /// `max_t (total_lhs(t)/total_lhs(0) - 1)`, clipped at 0.
    pub entropy_overshoot: f64,
    /// Final `pi_eps(rho)` as a `CGSF` snapshot, when the sweep writes to disk.
    pub pi_snapshot: Option<PathBuf>,
}

pub const SWEEP_COLUMNS: [&str; 14] = [
    "param_name",
    "param_value",
    "scenario",
    "max_rho_ratio",
    "congested_frac",
    "excl_resid_mu",
    "excl_resid_pi",
    "div_on_congested",
    "peak_excl_resid_pi",
    "peak_max_rho_ratio",
    "time_avg_div_on_congested",
    "overshoot_frac",
    "entropy_overshoot",
    "pi_snapshot",
];

impl SweepRecord {
    pub fn csv_line(&self) -> String {
        let m = &self.final_metrics;
        let snap = self
            .pi_snapshot
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        format!(
            "{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}",
            self.param_name,
            self.param_value,
            self.scenario,
            m.max_rho_ratio,
            m.congested_fraction,
            m.exclusion_residual_mu,
            m.exclusion_residual_pi,
            m.div_on_congested,
            self.peak_exclusion_residual,
            self.peak_max_rho_ratio,
            self.time_avg_div_on_congested,
            self.overshoot_fraction,
            self.entropy_overshoot,
            snap
        )
    }
}

fn pi_field(state: &SolverState, p: &ConstitutiveParams) -> Result<FieldSet> {
    let mut set = FieldSet::new(*state.rho.grid());
    set.push("pi", state.rho.try_map(|r| pi_eps(r, p))?)?;
    set.push("rho", state.rho.clone())?;
    Ok(set)
}

/// Runs one member of a sweep to its end time.
pub fn run_member(
    scenario: &Scenario,
    param: SweepParam,
    value: f64,
    settings: &SolverSettings,
    out_dir: Option<&Path>,
) -> Result<SweepRecord> {
    let p = scenario.params;
    let mut tracker = DiagnosticsTracker::new(p)?;
    let mut peak_excl = 0.0f64;
    let mut peak_ratio = 0.0f64;
    let mut overshoot = 0.0f64;
    let mut entropy_overshoot = 0.0f64;
    let mut lhs0 = None;
    let mut div_integral = 0.0;
    let mut prev_div: Option<(f64, f64)> = None;
    let mut last_metrics = CongestionMetrics::default();
    let final_state = run_with(scenario, settings, |state, dt, _| {
        let row = tracker.observe(state, dt)?;
        let c = row.congestion;
        peak_excl = peak_excl.max(c.exclusion_residual_pi);
        peak_ratio = peak_ratio.max(c.max_rho_ratio);
        let over = state
            .rho
            .values()
            .iter()
            .filter(|&&r| r >= p.phi_star)
            .count();
        overshoot = overshoot.max(over as f64 / state.rho.values().len() as f64);
        let l0 = *lhs0.get_or_insert(row.entropy.total_lhs);
        entropy_overshoot = entropy_overshoot.max(row.entropy.total_lhs / l0 - 1.0);
        if let Some((t, d)) = prev_div {
            div_integral += 0.5 * (state.t - t) * (d + c.div_on_congested);
        }
        prev_div = Some((state.t, c.div_on_congested));
        last_metrics = c;
        Ok(())
    })?;
    let pi_snapshot = match out_dir {
        Some(dir) => {
            let path = dir.join(format!("pi_{}_{value:e}.cgsf", param.name()));
            let file = fs::File::create(&path)?;
            write_fields(&pi_field(&final_state, &p)?, BufWriter::new(file))?;
            Some(path)
        }
        None => None,
    };
    Ok(SweepRecord {
        param_name: param.name(),
        param_value: value,
        scenario: scenario.name.clone(),
        final_metrics: last_metrics,
        peak_exclusion_residual: peak_excl,
        peak_max_rho_ratio: peak_ratio,
        time_avg_div_on_congested: if scenario.t_end > 0.0 {
            div_integral / scenario.t_end
        } else {
            0.0
        },
        overshoot_fraction: overshoot,
        entropy_overshoot: entropy_overshoot.max(0.0),
        pi_snapshot,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub rates: Vec<RateFit>,
}

/// Rate fits for the metrics of a finished ladder. Metrics with non-positive
/// entries (e.g. an empty congested band) are skipped with a warning.
pub fn fit_rates(param: SweepParam, records: &[SweepRecord]) -> Vec<RateFit> {
    if records.len() < 3 {
        return Vec::new();
    }
    let series = |f: fn(&SweepRecord) -> f64| {
        records
            .iter()
            .map(|r| (r.param_value, f(r)))
            .collect::<Vec<_>>()
    };
    let mut fits = Vec::new();
    let mut push = |fit: Result<RateFit>| match fit {
        Ok(f) => fits.push(f),
        Err(e) => log::warn!("{e}"),
    };
    match param {
        SweepParam::Eps => {
            push(RateFit::fit(
                "peak_excl_resid_pi",
                &series(|r| r.peak_exclusion_residual),
            ));
            push(RateFit::fit(
                "time_avg_div_on_congested",
                &series(|r| r.time_avg_div_on_congested),
            ));
        }
        SweepParam::Delta => {
            push(RateFit::fit_against(
                "overshoot_frac",
                &series(|r| r.overshoot_fraction),
                |d| -d.ln(),
            ));
            push(RateFit::fit(
                "peak_excl_resid_pi",
                &series(|r| r.peak_exclusion_residual),
            ));
        }
        SweepParam::Theta => {
            push(RateFit::fit(
                "peak_excl_resid_pi",
                &series(|r| r.peak_exclusion_residual),
            ));
        }
    }
    fits
}

fn write_sweep_csv(dir: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("sweep.csv"))?);
    writeln!(w, "{}", SWEEP_COLUMNS.join(","))?;
    for r in records {
        writeln!(w, "{}", r.csv_line())?;
    }
    w.flush()?;
    Ok(())
}

fn write_rates_csv(dir: &Path, rates: &[RateFit]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("rates.csv"))?);
    writeln!(w, "metric,slope,residual")?;
    for r in rates {
        writeln!(w, "{},{:?},{:?}", r.metric, r.slope, r.residual)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every ladder member (in parallel), then fits rates. With `out_dir`,
/// writes `sweep.csv`, `rates.csv` and one `pi` snapshot per member; a failed
/// member aborts the sweep after the finished records have been written.
pub fn run_sweep(
    family: &SweepFamily,
    param: SweepParam,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::Sweep("empty value list".into()));
    }
    if !values.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Sweep(
            "sweep values must be strictly decreasing".into(),
        ));
    }
    if let Some(&v) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Sweep(format!(
            "sweep values must be positive, got {v}"
        )));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<SweepRecord>> = values
        .par_iter()
        .map(|&v| {
            let scenario = family.scenario(param, v)?;
            let settings = SolverSettings::for_reference_time(scenario.t_end);
            let rec = run_member(&scenario, param, v, &settings, out_dir);
            match &rec {
                Ok(_) => log::info!("sweep member {param} = {v} done"),
                Err(e) => log::error!("sweep member {param} = {v} failed: {e}"),
            }
            rec
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (v, r) in values.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(format!("{param} = {v}: {e}")),
        }
    }
    if let Some(dir) = out_dir {
        write_sweep_csv(dir, &records)?;
    }
    if !failures.is_empty() {
        return Err(Error::Sweep(format!(
            "{} of {} members failed ({} records kept): {}",
            failures.len(),
            values.len(),
            records.len(),
            failures.join("; ")
        )));
    }
    let rates = fit_rates(param, &records);
    if let Some(dir) = out_dir {
        write_rates_csv(dir, &rates)?;
    }
    Ok(SweepOutcome { records, rates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassWindow {
    pub pass: bool,
    /// `phi_star |Ω| (1 - eps^a phi_star / inf pi0)`
    pub lower: f64,
    /// `phi_star |Ω|`, excluded.
    pub upper: f64,
    /// `upper - max_t ∫rho`
    pub margin: f64,
}

/// Checks `lower <= ∫rho(t) < upper` for an incompressible start, given the
/// masses along the run.
pub fn mass_window_check(scenario: &Scenario, masses: &[f64]) -> Result<MassWindow> {
    if scenario.kind != ScenarioKind::IncompressibleStart {
        return Err(Error::Scenario(format!(
            "mass window applies to incompressible_start, not {}",
            scenario.name
        )));
    }
    let p = &scenario.params;
    let k = &scenario.knobs;
    let inf_pi0 = k.pi0 * (1.0 - k.pi0_variation);
    let area = scenario.grid.area();
    let lower = incompressible_density(p.eps, inf_pi0, p)? * area;
    let upper = p.phi_star * area;
    let max_mass = masses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_mass = masses.iter().cloned().fold(f64::INFINITY, f64::min);
    // the cellwise lower bound holds exactly; allow roundoff of the sum
    let slack = 1e-13 * upper;
    Ok(MassWindow {
        pass: !masses.is_empty() && min_mass >= lower - slack && max_mass < upper,
        lower,
        upper,
        margin: upper - max_mass,
    })
}

/// Renormalised-μ balance on a manufactured compression: the velocity
/// `u = (U sin(2πx), 0)` is held fixed on the unit torus and only the
/// continuity equation is advanced (Heun, `dt = cfl h / U`). Returns the
/// balance residual at `t_end`.
pub fn manufactured_compression_residual(
    n: usize,
    p: &ConstitutiveParams,
    speed: f64,
    t_end: f64,
) -> Result<f64> {
    let g = PeriodicGrid2D::square(n, 1.0)?;
    let u = VectorField2::from_fn(g, |x, _| {
        (speed * (2.0 * std::f64::consts::PI * x).sin(), 0.0)
    });
    let mut rho = ScalarField::constant(g, 0.5 * p.phi_star);
    let dt_nominal = 0.4 * g.hx() / speed;
    let steps = (t_end / dt_nominal).ceil() as usize;
    let dt = t_end / steps as f64;
    let flux = |r: &ScalarField| {
        divergence(&VectorField2 {
            x: r.zip_map(&u.x, |a, b| a * b),
            y: r.zip_map(&u.y, |a, b| a * b),
        })
    };
    let mut states = Vec::with_capacity(steps + 1);
    states.push(SolverState::from_primitive(rho.clone(), u.clone(), p)?);
    for k in 1..=steps {
        let k1 = flux(&rho);
        let rho1 = rho.zip_map(&k1, |r, f| r - dt * f);
        let k2 = flux(&rho1);
        let g1 = *rho.grid();
        let next: Vec<f64> = (0..g1.len())
            .map(|i| rho.values()[i] - 0.5 * dt * (k1.values()[i] + k2.values()[i]))
            .collect();
        rho = ScalarField::from_vec(g1, next)?;
        let mut s = SolverState::from_primitive(rho.clone(), u.clone(), p)?;
        s.t = k as f64 * dt;
        states.push(s);
    }
    mu_balance_residual(&states, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::mu1_eps;

    fn p2() -> ConstitutiveParams {
        ConstitutiveParams::with_eps(0.01)
    }

    #[test]
    fn regime_product_matches_constitutive_law() {
        let p = p2();
        for &(eps, s) in &[(0.01, 1.0), (0.05, 2.5), (0.1, 3.0), (0.02, 0.7)] {
            let q = ConstitutiveParams { eps, ..p };
            let rho = p.phi_star * (1.0 - f64::powf(eps, s));
            let gap = (p.phi_star - rho) / p.phi_star;
            let direct = gap * mu1_eps(rho, &q).unwrap();
            let closed = regime_product(eps, s, &p).unwrap();
            assert!(
                (direct - closed).abs() <= 1e-9 * closed,
                "{eps} {s}: {direct} vs {closed}"
            );
        }
    }

    #[test]
    fn regime_product_reference_value() {
        // mpmath: 0.64 (1 - 1e-2) 1e-4 expm1(1e-4)/1e-4
        let v = regime_product(1e-2, 1.0, &p2()).unwrap();
        assert!((v - 6.336316810560264e-5).abs() <= 1e-14 * v, "{v:e}");
    }

    #[test]
    fn regime_product_edge_and_far_limits() {
        let p = p2();
        let edge = regime_product(1e-4, 3.0, &p).unwrap() / 1e-8;
        assert!((edge - p.phi_star * (std::f64::consts::E - 1.0)).abs() < 1e-9);
        assert!(regime_product(0.1, 1e-9, &p).unwrap() < 1e-9);
        assert!(matches!(
            regime_product(0.01, 4.5, &p),
            Err(Error::Overflow { .. })
        ));
        assert!(regime_product(0.7, 1.0, &p).is_err());
        assert!(regime_product(0.1, 0.0, &p).is_err());
    }

    #[test]
    fn regime_product_uniform_bound() {
        let p = p2();
        let bound = p.phi_star * (std::f64::consts::E - 1.0);
        for &eps in &[0.1, 0.03, 0.01, 1e-3] {
            for k in 1..=60 {
                let s = 3.0 * k as f64 / 60.0;
                let v = regime_product(eps, s, &p).unwrap();
                assert!(v <= bound * eps.powf(p.a) * (1.0 + 1e-9), "{eps} {s}");
            }
        }
    }

    #[test]
    fn expansion_remainder_vanishes() {
        let p = p2();
        let r1 = incompressible_expansion_residual(0.1, p.phi_star, &p).unwrap();
        let r2 = incompressible_expansion_residual(0.01, p.phi_star, &p).unwrap();
        assert!(r1 > 0.0 && r2 < r1 / 50.0);
        let eps = 1e-4;
        let q = ConstitutiveParams { eps, ..p };
        let rho = incompressible_density(eps, p.phi_star, &q).unwrap();
        let coef = (pi_eps(rho, &q).unwrap() - p.phi_star) / eps;
        assert!(
            (coef / expansion_first_order(p.phi_star, &p) - 1.0).abs() < 0.01,
            "{coef}"
        );
        assert!(incompressible_expansion_residual(0.9, 0.01, &p).is_err());
    }

    #[test]
    fn rate_fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.03, 0.01, 0.003]
            .iter()
            .map(|&e: &f64| (e, 3.0 * e.powi(2)))
            .collect();
        let f = RateFit::fit("m", &pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.residual < 1e-12);
        assert!(f.matches(2.0, 0.05));
        assert!(RateFit::fit("m", &pts[..2]).is_err());
        let mut rev = pts.clone();
        rev.reverse();
        assert!(RateFit::fit("m", &rev).is_err());
    }

    #[test]
    fn noisy_fit_is_not_trusted() {
        let pts = [(0.1, 1.0), (0.05, 0.1), (0.02, 1.0), (0.01, 0.01)];
        let f = RateFit::fit("m", &pts).unwrap();
        assert!(!f.is_trusted());
        assert!(!f.matches(f.slope, 1.0));
    }

    #[test]
    fn mass_window_reference_bound() {
        let p = ConstitutiveParams::with_eps(0.05);
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let knobs = ScenarioKnobs {
            pi0: p.phi_star,
            pi0_variation: 0.0,
            ..Default::default()
        };
        let s = build_scenario(ScenarioKind::IncompressibleStart, p, g, knobs, 0.0, 0).unwrap();
        let mass = s.rho0.integrate();
        let w = mass_window_check(&s, &[mass, mass]).unwrap();
        assert!((w.lower - 0.6384).abs() < 1e-12, "{}", w.lower);
        assert!(w.pass);
        assert!((w.margin - (0.64 - mass)).abs() < 1e-15);
        assert!(!mass_window_check(&s, &[0.64]).unwrap().pass);
    }

    #[test]
    fn sweep_param_round_trip() {
        for p in [SweepParam::Eps, SweepParam::Delta, SweepParam::Theta] {
            assert_eq!(p.name().parse::<SweepParam>().unwrap(), p);
        }
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn single_member_sweep() {
        let family = SweepFamily {
            kind: ScenarioKind::GaussianBump,
            params: ConstitutiveParams::with_eps(0.1),
            grid: PeriodicGrid2D::square(16, 1.0).unwrap(),
            knobs: Default::default(),
            t_end: Some(0.01),
        };
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&family, SweepParam::Eps, &[0.1], Some(dir.path())).unwrap();
        assert!(out.rates.is_empty());
        assert_eq!(out.records.len(), 1);
        let rec = &out.records[0];
        assert!(rec.pi_snapshot.as_ref().unwrap().exists());
        assert!(rec.peak_max_rho_ratio <= 0.81);
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(run_sweep(&family, SweepParam::Eps, &[0.05, 0.1], None).is_err());
    }

    #[test]
    fn manufactured_balance_converges() {
        let p = ConstitutiveParams::with_eps(0.05);
        let r32 = manufactured_compression_residual(32, &p, 0.1, 0.5).unwrap();
        let r64 = manufactured_compression_residual(64, &p, 0.1, 0.5).unwrap();
        assert!(r64 < r32, "{r32} {r64}");
    }
}

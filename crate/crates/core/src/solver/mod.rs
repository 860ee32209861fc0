//! Time integration of the regularised suspension system.
//!
//! One step is split into
//! 1. explicit Heun convection with pressure `pi(rho) + theta rho²/2`, in
//!    divergence form on `(rho, m)`;
//! 2. a semi-implicit viscous solve with `mu(rho)`, `lambda(rho)` frozen at
//!    the post-convection density (see [`viscous`]);
//! 3. a pointwise implicit drag update `u⁺ (1 + dt r |u⁺|) = u*`, solved exactly.

mod scenario;
mod viscous;

pub use scenario::{build_scenario, Scenario, ScenarioKind, ScenarioKnobs};
pub use viscous::CgOptions;

use crate::constitutive::{dpi_eps, lambda_eps, mu_eps, pi_eps, ConstitutiveParams};
use crate::diagnostics::{DiagnosticsTracker, TimeSeriesRow};
use crate::error::{Error, Result};
use crate::fields::{divergence, ScalarField, VectorField2};
use viscous::{viscous_substep, CornerCoefficients, ViscousOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub t: f64,
    pub rho: ScalarField,
    /// Momentum `rho u`, the prognostic variable.
    pub m: VectorField2,
    /// Velocity derived from `m / rho`.
    pub u: VectorField2,
    pub step_count: u64,
}

impl SolverState {
    pub fn from_primitive(
        rho: ScalarField,
        u: VectorField2,
        p: &ConstitutiveParams,
    ) -> Result<Self> {
        let m = u.scale_by(&rho);
        Self::from_conserved(0.0, rho, m, 0, p)
    }

    pub fn from_conserved(
        t: f64,
        rho: ScalarField,
        m: VectorField2,
        step_count: u64,
        p: &ConstitutiveParams,
    ) -> Result<Self> {
        let u = velocity(&rho, &m, p)?;
        Ok(Self {
            t,
            rho,
            m,
            u,
            step_count,
        })
    }

    pub fn initial(scenario: &Scenario) -> Result<Self> {
        Self::from_primitive(scenario.rho0.clone(), scenario.u0.clone(), &scenario.params)
    }

    pub fn mass(&self) -> f64 {
        self.rho.integrate()
    }

    pub fn momentum(&self) -> (f64, f64) {
        (self.m.x.integrate(), self.m.y.integrate())
    }

    pub fn max_rho_ratio(&self, p: &ConstitutiveParams) -> f64 {
        self.rho.max() / p.phi_star
    }
}

fn check_vacuum(rho: &ScalarField, p: &ConstitutiveParams) -> Result<()> {
    let floor = p.rho_floor();
    let min = rho.min();
    if !(min >= floor) {
        return Err(Error::Vacuum { rho: min, floor });
    }
    Ok(())
}

fn velocity(rho: &ScalarField, m: &VectorField2, p: &ConstitutiveParams) -> Result<VectorField2> {
    check_vacuum(rho, p)?;
    Ok(VectorField2 {
        x: m.x.zip_map(rho, |a, r| a / r),
        y: m.y.zip_map(rho, |a, r| a / r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub cfl: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Halvings of a rejected step before giving up.
    pub max_retries: u32,
    pub cg: CgOptions,
    /// Headroom `1 - max rho/phi_star` below which a warning is logged.
    pub headroom_warning: f64,
    /// Fraction of the local gap `phi_star - rho` one step may consume
    /// (untruncated laws only).
    pub gap_fraction: f64,
}

impl SolverSettings {
    /// Defaults scaled to a reference time (usually `t_end`).
    pub fn for_reference_time(t_ref: f64) -> Self {
        let t_ref = if t_ref > 0.0 { t_ref } else { 1.0 };
        Self {
            cfl: 0.4,
            dt_max: 0.01 * t_ref,
            dt_min: 1e-10 * t_ref,
            max_retries: 12,
            cg: CgOptions::default(),
            headroom_warning: 1e-6,
            gap_fraction: 0.25,
        }
    }
}

/// Largest stable step: `cfl min(hx, hy) / max(|u| + c_eff)` with
/// `c_eff = sqrt(pi'(rho)/rho + theta)`, capped by `dt_max`.
///
/// Without truncation the step is also limited so that the compression rate
/// `div m` eats at most `gap_fraction` of any cell's gap to `phi_star`: the
/// barrier only stiffens when the gap reaches `eps^(1+a)`, which an explicit
/// step can otherwise jump over.
pub fn compute_dt(
    state: &SolverState,
    p: &ConstitutiveParams,
    settings: &SolverSettings,
) -> Result<f64> {
    let g = state.rho.grid();
    let h = g.hx().min(g.hy());
    let mut max_speed: f64 = 0.0;
    for k in 0..g.len() {
        let rho = state.rho.values()[k];
        let c = (dpi_eps(rho, p)? / rho + p.theta).sqrt();
        let speed = state.u.x.values()[k].hypot(state.u.y.values()[k]) + c;
        max_speed = max_speed.max(speed);
    }
    let mut dt = if max_speed > 0.0 {
        (settings.cfl * h / max_speed).min(settings.dt_max)
    } else {
        settings.dt_max
    };
    if p.delta == 0.0 {
        let compression = divergence(&state.m);
        for (rho, c) in state.rho.values().iter().zip(compression.values()) {
            if *c > 0.0 {
                dt = dt.min(settings.gap_fraction * (p.phi_star - rho) / c);
            }
        }
    }
    if !(dt >= settings.dt_min) {
        return Err(Error::Stall {
            dt,
            dt_min: settings.dt_min,
        });
    }
    Ok(dt)
}

/// Pressure-coupling correction to the mass flux on a collocated grid.
///
/// Face flux `tau [(P_{i+1} - P_i)/h - (G_i + G_{i+1})/2]` with `G` the centred
/// gradient; `O(h²)` for smooth `P`, but it lets a one-cell pressure spike
/// drain, which the centred stencils alone cannot see.
fn pressure_coupling(pressure: &ScalarField, tau: f64) -> ScalarField {
    let g = *pressure.grid();
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx(), g.hy());
    let p = pressure.values();
    let at = |i: isize, j: isize| p[g.idx(i, j)];
    let face_x = |i: isize, j: isize| {
        let compact = (at(i + 1, j) - at(i, j)) / hx;
        let centred = (at(i + 1, j) - at(i - 1, j) + at(i + 2, j) - at(i, j)) / (4.0 * hx);
        compact - centred
    };
    let face_y = |i: isize, j: isize| {
        let compact = (at(i, j + 1) - at(i, j)) / hy;
        let centred = (at(i, j + 1) - at(i, j - 1) + at(i, j + 2) - at(i, j)) / (4.0 * hy);
        compact - centred
    };
    let mut out = Vec::with_capacity(g.len());
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let dx = (face_x(i, j) - face_x(i - 1, j)) / hx;
            let dy = (face_y(i, j) - face_y(i, j - 1)) / hy;
            out.push(tau * (dx + dy));
        }
    }
    ScalarField::from_vec(g, out).expect("same grid")
}

/// Convection and pressure tendencies `(d rho/dt, dm/dt)`; `dt` scales the
/// pressure coupling of the mass flux.
fn convective_rhs(
    rho: &ScalarField,
    m: &VectorField2,
    p: &ConstitutiveParams,
    dt: f64,
) -> Result<(ScalarField, VectorField2)> {
    let u = velocity(rho, m, p)?;
    let pressure = rho.try_map(|r| pi_eps(r, p).map(|pi| pi + 0.5 * p.theta * r * r))?;
    let drho = divergence(m).zip_map(&pressure_coupling(&pressure, dt), |d, c| c - d);
    let flux_x = VectorField2 {
        x: m.x.zip_map(&u.x, |a, b| a * b),
        y: m.x.zip_map(&u.y, |a, b| a * b),
    };
    let flux_y = VectorField2 {
        x: m.y.zip_map(&u.x, |a, b| a * b),
        y: m.y.zip_map(&u.y, |a, b| a * b),
    };
    let grad_p = crate::fields::gradient(&pressure);
    let dmx = divergence(&flux_x).zip_map(&grad_p.x, |a, b| -a - b);
    let dmy = divergence(&flux_y).zip_map(&grad_p.y, |a, b| -a - b);
    Ok((drho, VectorField2 { x: dmx, y: dmy }))
}

fn axpy(x: &ScalarField, a: f64, y: &ScalarField) -> ScalarField {
    x.zip_map(y, |u, v| u + a * v)
}

/// Heun (explicit trapezoid) stage for convection and pressure.
fn convect(
    rho: &ScalarField,
    m: &VectorField2,
    p: &ConstitutiveParams,
    dt: f64,
) -> Result<(ScalarField, VectorField2)> {
    let (k1r, k1m) = convective_rhs(rho, m, p, dt)?;
    let rho1 = axpy(rho, dt, &k1r);
    let m1 = VectorField2 {
        x: axpy(&m.x, dt, &k1m.x),
        y: axpy(&m.y, dt, &k1m.y),
    };
    let (k2r, k2m) = convective_rhs(&rho1, &m1, p, dt)?;
    let half = |a: &ScalarField, b: &ScalarField, k: &ScalarField| {
        let g = *a.grid();
        let data = (0..g.len())
            .map(|i| 0.5 * (a.values()[i] + b.values()[i] + dt * k.values()[i]))
            .collect();
        ScalarField::from_vec(g, data).expect("same grid")
    };
    let rho_new = half(rho, &rho1, &k2r);
    let m_new = VectorField2 {
        x: half(&m.x, &m1.x, &k2m.x),
        y: half(&m.y, &m1.y, &k2m.y),
    };
    Ok((rho_new, m_new))
}

/// Exact root of `s + dt r s² = |u*|` applied along `u*`.
pub fn drag_update(ux: f64, uy: f64, r: f64, dt: f64) -> (f64, f64) {
    let speed = ux.hypot(uy);
    if speed == 0.0 || r == 0.0 {
        return (ux, uy);
    }
    let s = 2.0 * speed / (1.0 + (1.0 + 4.0 * dt * r * speed).sqrt());
    let f = s / speed;
    (ux * f, uy * f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub cg_iterations: usize,
    /// `1 - max rho/phi_star` after the step.
    pub headroom: f64,
}

fn check_packing(rho: &ScalarField, p: &ConstitutiveParams) -> Result<f64> {
    let ratio = rho.max() / p.phi_star;
    if p.delta == 0.0 && !(ratio < 1.0) {
        return Err(Error::ConstraintBreach { ratio });
    }
    Ok(1.0 - ratio)
}

/// Advances `state` by `dt`.
pub fn step(
    state: &SolverState,
    p: &ConstitutiveParams,
    dt: f64,
    settings: &SolverSettings,
) -> Result<(SolverState, StepInfo)> {
    let (rho, m_star) = convect(&state.rho, &state.m, p, dt)?;
    check_vacuum(&rho, p)?;
    check_packing(&rho, p)?;

    let mu = rho.try_map(|r| mu_eps(r, p))?;
    let lambda = rho.try_map(|r| lambda_eps(r, p))?;
    let op = ViscousOperator::new(*rho.grid(), CornerCoefficients::from_cells(&mu, &lambda));
    let visc = viscous_substep(&rho, &m_star, &op, dt, settings.cg)?;

    let g = *rho.grid();
    let mut mx = vec![0.0; g.len()];
    let mut my = vec![0.0; g.len()];
    for k in 0..g.len() {
        let r = rho.values()[k];
        let (ux, uy) = (
            visc.momentum.x.values()[k] / r,
            visc.momentum.y.values()[k] / r,
        );
        let (dx, dy) = drag_update(ux, uy, p.r, dt);
        mx[k] = r * dx;
        my[k] = r * dy;
    }
    let m = VectorField2 {
        x: ScalarField::from_vec(g, mx)?,
        y: ScalarField::from_vec(g, my)?,
    };
    let headroom = check_packing(&rho, p)?;
    let next = SolverState::from_conserved(state.t + dt, rho, m, state.step_count + 1, p)?;
    if !(next.u.is_finite() && next.rho.is_finite()) {
        return Err(Error::Domain {
            rho: f64::NAN,
            reason: "non-finite state after step",
        });
    }
    Ok((
        next,
        StepInfo {
            dt,
            cg_iterations: visc.iterations,
            headroom,
        },
    ))
}

/// Takes one accepted step of at most `dt_target`, halving on recoverable failures.
pub fn step_adaptive(
    state: &SolverState,
    p: &ConstitutiveParams,
    dt_target: f64,
    settings: &SolverSettings,
) -> Result<(SolverState, StepInfo)> {
    let mut dt = dt_target;
    let mut retries = 0;
    loop {
        match step(state, p, dt, settings) {
            Ok(ok) => return Ok(ok),
            Err(e) if e.is_step_recoverable() && retries < settings.max_retries => {
                log::debug!("t = {}: rejecting dt = {dt:e}: {e}", state.t);
                retries += 1;
                dt *= 0.5;
                if dt < settings.dt_min {
                    return Err(Error::Stall {
                        dt,
                        dt_min: settings.dt_min,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Integrates `scenario` to `t_end`, calling `observer` on the initial state
/// and after every accepted step with that step's `dt` (0 for the initial call).
/// Steps are clipped to land exactly on the snapshot times.
pub fn run_with<F>(
    scenario: &Scenario,
    settings: &SolverSettings,
    mut observer: F,
) -> Result<SolverState>
where
    F: FnMut(&SolverState, f64, bool) -> Result<()>,
{
    let p = &scenario.params;
    let mut state = SolverState::initial(scenario)?;
    observer(&state, 0.0, true)?;
    let targets: Vec<f64> = if scenario.snapshots == 0 {
        vec![scenario.t_end]
    } else {
        (1..=scenario.snapshots)
            .map(|k| scenario.t_end * k as f64 / scenario.snapshots as f64)
            .collect()
    };
    let mut headroom_warned = false;
    for &target in &targets {
        while state.t < target {
            let attach = |e: Error, t: f64| Error::AtTime {
                t,
                source: Box::new(e),
            };
            let dt = compute_dt(&state, p, settings).map_err(|e| attach(e, state.t))?;
            let remaining = target - state.t;
            // avoid a sliver step just before the target
            let dt = if dt >= remaining || remaining - dt < 1e-3 * dt {
                remaining
            } else {
                dt
            };
            let (mut next, info) =
                step_adaptive(&state, p, dt, settings).map_err(|e| attach(e, state.t))?;
            if info.dt == remaining {
                next.t = target;
            }
            if info.headroom < settings.headroom_warning && p.delta == 0.0 {
                if headroom_warned {
                    log::debug!("t = {}: packing headroom {:e}", next.t, info.headroom);
                } else {
                    log::warn!(
                        "t = {}: packing headroom {:e} (further reports at debug level)",
                        next.t,
                        info.headroom
                    );
                    headroom_warned = true;
                }
            }
            let at_snapshot = next.t == target && scenario.snapshots > 0;
            observer(&next, info.dt, at_snapshot)?;
            state = next;
        }
    }
    Ok(state)
}

/// A finished run: snapshot states and per-step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<SolverState>,
    pub series: Vec<TimeSeriesRow>,
    pub final_state: SolverState,
}

/// Runs `scenario` collecting snapshots and the full diagnostic time series.
pub fn run(scenario: &Scenario, settings: &SolverSettings) -> Result<Trajectory> {
    let mut tracker = DiagnosticsTracker::new(scenario.params)?;
    let mut snapshots = Vec::new();
    let mut series = Vec::new();
    let final_state = run_with(scenario, settings, |state, dt, snap| {
        series.push(tracker.observe(state, dt)?);
        if snap {
            snapshots.push(state.clone());
        }
        Ok(())
    })?;
    Ok(Trajectory {
        snapshots,
        series,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PeriodicGrid2D;

    fn uniform(p: &ConstitutiveParams, rho: f64, u: (f64, f64)) -> SolverState {
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let u = VectorField2::from_fn(g, |_, _| u);
        SolverState::from_primitive(ScalarField::constant(g, rho), u, p).unwrap()
    }

    #[test]
    fn drag_root_closed_form() {
        let (ux, uy) = drag_update(1.0, 0.0, 1.0, 1.0);
        assert!((ux - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(uy, 0.0);
        let (a, b) = drag_update(0.3, -0.4, 2.0, 0.1);
        let s = a.hypot(b);
        assert!((s + 0.1 * 2.0 * s * s - 0.5).abs() < 1e-15);
        assert!(s < 0.5);
        assert_eq!(drag_update(0.0, 0.0, 1.0, 1.0), (0.0, 0.0));
    }

    #[test]
    fn uniform_state_is_stationary_up_to_drag() {
        let p = ConstitutiveParams::with_eps(0.1);
        let s = uniform(&p, 0.3, (0.2, -0.1));
        let settings = SolverSettings::for_reference_time(1.0);
        let (next, _) = step(&s, &p, 0.01, &settings).unwrap();
        assert_eq!(next.rho, s.rho);
        let (ux, uy) = drag_update(0.2, -0.1, p.r, 0.01);
        for k in 0..s.rho.grid().len() {
            assert!((next.u.x.values()[k] - ux).abs() < 1e-14);
            assert!((next.u.y.values()[k] - uy).abs() < 1e-14);
        }
    }

    #[test]
    fn compute_dt_matches_closed_form_at_rest() {
        let p = ConstitutiveParams::with_eps(0.1);
        let s = uniform(&p, 0.1, (0.0, 0.0));
        let settings = SolverSettings {
            dt_max: 1.0,
            ..SolverSettings::for_reference_time(1.0)
        };
        let c = (dpi_eps(0.1, &p).unwrap() / 0.1).sqrt();
        let dt = compute_dt(&s, &p, &settings).unwrap();
        assert!((dt - 0.4 / 16.0 / c).abs() < 1e-15 * dt.max(1.0));
    }

    #[test]
    fn compute_dt_halves_when_speed_doubles() {
        let p = ConstitutiveParams::with_eps(0.01);
        let settings = SolverSettings {
            dt_max: 1.0,
            ..SolverSettings::for_reference_time(1.0)
        };
        let a = compute_dt(&uniform(&p, 0.1, (1e3, 0.0)), &p, &settings).unwrap();
        let b = compute_dt(&uniform(&p, 0.1, (2e3, 0.0)), &p, &settings).unwrap();
        assert!((a / b - 2.0).abs() < 1e-4);
    }

    #[test]
    fn compute_dt_shrinks_towards_packing() {
        let p = ConstitutiveParams::with_eps(0.1);
        let settings = SolverSettings {
            dt_max: 1.0,
            dt_min: 0.0,
            ..SolverSettings::for_reference_time(1.0)
        };
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let rho = p.phi_star * (0.5 + 0.49 * k as f64 / 19.0);
            let dt = compute_dt(&uniform(&p, rho, (0.0, 0.0)), &p, &settings).unwrap();
            assert!(dt <= last);
            last = dt;
        }
        let tight = SolverSettings {
            dt_min: 10.0 * last,
            ..settings
        };
        let near = uniform(&p, p.phi_star * 0.99, (0.0, 0.0));
        assert!(matches!(
            compute_dt(&near, &p, &tight),
            Err(Error::Stall { .. })
        ));
    }

    #[test]
    fn bump_spreads_and_conserves_mass() {
        let p = ConstitutiveParams {
            theta: 1.0,
            ..ConstitutiveParams::with_eps(0.01)
        };
        let g = PeriodicGrid2D::square(32, 1.0).unwrap();
        let sc = build_scenario(
            ScenarioKind::GaussianBump,
            p,
            g,
            Default::default(),
            0.05,
            0,
        )
        .unwrap();
        let settings = SolverSettings::for_reference_time(sc.t_end);
        let traj = run(&sc, &settings).unwrap();
        let m0 = sc.rho0.integrate();
        let m1 = traj.final_state.mass();
        assert!(((m1 - m0) / m0).abs() < 1e-13);
        assert!(traj.final_state.rho.max() < sc.rho0.max());
        assert_eq!(traj.final_state.t, sc.t_end);
    }

    #[test]
    fn zero_end_time_returns_initial_state() {
        let p = ConstitutiveParams::with_eps(0.1);
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let sc =
            build_scenario(ScenarioKind::GaussianBump, p, g, Default::default(), 0.0, 0).unwrap();
        let traj = run(&sc, &SolverSettings::for_reference_time(0.0)).unwrap();
        assert_eq!(traj.series.len(), 1);
        assert_eq!(traj.final_state, SolverState::initial(&sc).unwrap());
    }

    #[test]
    fn breach_is_an_error() {
        let p = ConstitutiveParams::with_eps(0.1);
        let g = PeriodicGrid2D::square(16, 1.0).unwrap();
        let rho = ScalarField::constant(g, p.phi_star);
        assert!(matches!(
            check_packing(&rho, &p),
            Err(Error::ConstraintBreach { .. })
        ));
        let q = ConstitutiveParams { delta: 0.01, ..p };
        assert!(check_packing(&rho, &q).is_ok());
    }
}

//! Browser bindings: law curves, the closed-form limit ladders, and an
//! interactive colliding-blobs run. Results cross the boundary as JSON
//! strings or flat `Float64Array`s.

use congesto::config::parse_config;
use congesto::constitutive::{sample, ConstitutiveParams};
use congesto::limits::{incompressible_expansion_residual, regime_product, RateFit};
use congesto::solver::{compute_dt, step_adaptive, SolverSettings, SolverState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn params(eps: f64, a: f64, gamma: f64, delta: f64) -> Result<ConstitutiveParams, JsError> {
    let p = ConstitutiveParams {
        a,
        gamma,
        delta,
        ..ConstitutiveParams::with_eps(eps)
    };
    p.validate().map_err(js_err)?;
    Ok(p)
}

#[derive(Serialize)]
struct Curves {
    phi_star: f64,
    rho: Vec<f64>,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    pi: Vec<f64>,
}

/// `mu`, `lambda` and `pi` on `n` densities in `(0, rho_max_fraction phi_star]`, as JSON.
#[wasm_bindgen]
pub fn law_curves(
    eps: f64,
    a: f64,
    gamma: f64,
    delta: f64,
    n: usize,
    rho_max_fraction: f64,
) -> Result<String, JsError> {
    let p = params(eps, a, gamma, delta)?;
    let mut c = Curves {
        phi_star: p.phi_star,
        rho: Vec::with_capacity(n),
        mu: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        pi: Vec::with_capacity(n),
    };
    for k in 1..=n {
        let rho = rho_max_fraction * p.phi_star * k as f64 / n as f64;
        // stop at the first density the laws reject (overflow near packing)
        let Ok(s) = sample(rho, &p) else { break };
        c.rho.push(rho);
        c.mu.push(s.mu);
        c.lambda.push(s.lambda);
        c.pi.push(s.pi);
    }
    serde_json::to_string(&c).map_err(js_err)
}

#[derive(Serialize)]
struct Ladder {
    label: String,
    eps: Vec<f64>,
    value: Vec<f64>,
    slope: f64,
    expected: f64,
}

fn ladder(
    label: String,
    eps: &[f64],
    value: impl Fn(f64) -> congesto::Result<f64>,
    expected: f64,
) -> Result<Ladder, JsError> {
    let values = eps
        .iter()
        .map(|&e| value(e))
        .collect::<congesto::Result<Vec<_>>>()
        .map_err(js_err)?;
    let pts: Vec<(f64, f64)> = eps.iter().copied().zip(values.iter().copied()).collect();
    let fit = RateFit::fit(&label, &pts).map_err(js_err)?;
    Ok(Ladder {
        label,
        eps: eps.to_vec(),
        value: values,
        slope: fit.slope,
        expected,
    })
}

/// Log-log ladders of the congestion product (three regimes) and of the
/// incompressible-start expansion remainder, with fitted slopes, as JSON.
#[wasm_bindgen]
pub fn limit_ladders(a: f64, pi0: f64) -> Result<String, JsError> {
    let p = params(0.1, a, 1.0, 0.0)?;
    let regime_eps = [1e-2, 3e-3, 1e-3, 3e-4];
    let mut out = Vec::new();
    for s in [a / 2.0, 1.0, 1.0 + a] {
        out.push(ladder(
            format!("congestion product, s = {s}"),
            &regime_eps,
            |e| regime_product(e, s, &p),
            a,
        )?);
    }
    out.push(ladder(
        format!("expansion remainder, pi0 = {pi0}"),
        &[1e-1, 3e-2, 1e-2, 3e-3],
        |e| incompressible_expansion_residual(e, pi0, &p),
        a.min(2.0),
    )?);
    serde_json::to_string(&out).map_err(js_err)
}

/// Two blobs on a collision course, advanced one adaptive step at a time.
#[wasm_bindgen]
pub struct BlobRun {
    state: SolverState,
    params: ConstitutiveParams,
    settings: SolverSettings,
    t_end: f64,
    n: usize,
}

#[wasm_bindgen]
impl BlobRun {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, eps: f64, speed: f64) -> Result<BlobRun, JsError> {
        let cfg = parse_config(&format!(
            "scenario = colliding_blobs\neps = {eps:?}\nlx = 4\nspeed = {speed:?}\nnx = {n}\n"
        ))
        .map_err(js_err)?;
        let scenario = cfg.build_scenario().map_err(js_err)?;
        Ok(BlobRun {
            state: SolverState::initial(&scenario).map_err(js_err)?,
            params: scenario.params,
            settings: SolverSettings::for_reference_time(scenario.t_end),
            t_end: scenario.t_end,
            n,
        })
    }

    /// Advances up to `steps` solver steps; stops early at the crossing time.
    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        for _ in 0..steps {
            let remaining = self.t_end - self.state.t;
            if remaining <= 0.0 {
                break;
            }
            let dt = compute_dt(&self.state, &self.params, &self.settings)
                .map_err(js_err)?
                .min(remaining);
            let (next, _) =
                step_adaptive(&self.state, &self.params, dt, &self.settings).map_err(js_err)?;
            self.state = next;
        }
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_rho_ratio(&self) -> f64 {
        self.state.max_rho_ratio(&self.params)
    }

    pub fn mass(&self) -> f64 {
        self.state.mass()
    }

    /// `rho / phi_star`, row-major with x fastest.
    pub fn packing(&self) -> Vec<f64> {
        self.state
            .rho
            .values()
            .iter()
            .map(|r| r / self.params.phi_star)
            .collect()
    }
}

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::fields::{gradient, PeriodicGrid2D, ScalarField, VectorField2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    GaussianBump,
    CollidingBlobs,
    ShearLayer,
    IncompressibleStart,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::GaussianBump,
        ScenarioKind::CollidingBlobs,
        ScenarioKind::ShearLayer,
        ScenarioKind::IncompressibleStart,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::GaussianBump => "gaussian_bump",
            ScenarioKind::CollidingBlobs => "colliding_blobs",
            ScenarioKind::ShearLayer => "shear_layer",
            ScenarioKind::IncompressibleStart => "incompressible_start",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Scenario(format!("unknown scenario {s:?}")))
    }
}

/// Scenario knobs beyond the grid and the constitutive constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioKnobs {
    /// Velocity scale `U`.
    pub speed: f64,
    /// Base value of the initial adhesion potential (incompressible start).
    pub pi0: f64,
    /// Relative modulation of the initial adhesion potential, in `[0, 1)`.
    pub pi0_variation: f64,
    /// Amplitude of seeded random density perturbations, relative to the base density.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for ScenarioKnobs {
    fn default() -> Self {
        Self {
            speed: 1.0,
            pi0: 0.64,
            pi0_variation: 0.25,
            perturbation: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub grid: PeriodicGrid2D,
    pub params: ConstitutiveParams,
    pub knobs: ScenarioKnobs,
    pub rho0: ScalarField,
    pub u0: VectorField2,
    pub t_end: f64,
    /// Number of evenly spaced snapshots after the initial one.
    pub snapshots: usize,
}

impl Scenario {
    /// Closing time of the blob pair: separation `lx/2` over closing speed `2U`.
    pub fn crossing_time(&self) -> Option<f64> {
        (self.kind == ScenarioKind::CollidingBlobs && self.knobs.speed > 0.0)
            .then(|| self.grid.lx / (4.0 * self.knobs.speed))
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }
}

/// Periodic bump `exp(k (cos θx - 1) + k (cos θy - 1))`, equal to 1 at its centre.
fn periodic_bump(g: &PeriodicGrid2D, x0: f64, y0: f64, k: f64) -> ScalarField {
    ScalarField::from_fn(*g, |x, y| {
        let tx = 2.0 * PI * (x - x0) / g.lx;
        let ty = 2.0 * PI * (y - y0) / g.ly;
        (k * (tx.cos() - 1.0) + k * (ty.cos() - 1.0)).exp()
    })
}

/// `out(i, j) = f(nx - 1 - i, j)`.
fn mirror_x(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[j * g.nx + i] = f.values()[j * g.nx + (g.nx - 1 - i)];
        }
    }
    ScalarField::from_vec(g, out).expect("same grid")
}

fn seeded_perturbation(g: &PeriodicGrid2D, seed: u64, amplitude: f64) -> ScalarField {
    if amplitude == 0.0 {
        return ScalarField::zeros(*g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // low modes only, so the field stays band-limited
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(1..=3) as f64,
                rng.gen_range(-3..=3) as f64,
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let raw = ScalarField::from_fn(*g, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, phase, w)| {
                w * (2.0 * PI * (kx * x / g.lx + ky * y / g.ly) + phase).sin()
            })
            .sum()
    });
    let scale = raw.max_abs().max(f64::MIN_POSITIVE);
    raw.map(|v| amplitude * v / scale)
}

fn check_initial_density(rho: &ScalarField, p: &ConstitutiveParams) -> Result<()> {
    let top = if p.delta > 0.0 {
        p.phi_star * (1.0 - p.delta)
    } else {
        p.phi_star
    };
    let (lo, hi) = (rho.min(), rho.max());
    if !(lo > p.rho_floor()) || !(hi < top) {
        return Err(Error::Scenario(format!(
            "initial density range [{lo}, {hi}] leaves ({}, {top})",
            p.rho_floor()
        )));
    }
    Ok(())
}

pub fn build_scenario(
    kind: ScenarioKind,
    params: ConstitutiveParams,
    grid: PeriodicGrid2D,
    knobs: ScenarioKnobs,
    t_end: f64,
    snapshots: usize,
) -> Result<Scenario> {
    params.validate()?;
    if !(t_end >= 0.0) {
        return Err(Error::Scenario(format!("t_end must be >= 0, got {t_end}")));
    }
    let ps = params.phi_star;
    let g = grid;
    let (rho0, u0) = match kind {
        ScenarioKind::GaussianBump => {
            let b = periodic_bump(&g, 0.5 * g.lx, 0.5 * g.ly, 6.0);
            let (lo, hi) = (b.min(), b.max());
            let rho = b.map(|v| 0.2 * ps + 0.6 * ps * (v - lo) / (hi - lo));
            (rho, VectorField2::zeros(g))
        }
        ScenarioKind::CollidingBlobs => {
            let left = periodic_bump(&g, 0.25 * g.lx, 0.5 * g.ly, 8.0);
            let right = mirror_x(&left);
            let rho = left.zip_map(&right, |a, b| ps * (0.3 + 0.45 * (a + b)));
            let speed = knobs.speed;
            let ux = left.zip_map(&right, |a, b| speed * (a - b));
            (
                rho,
                VectorField2 {
                    x: ux,
                    y: ScalarField::zeros(g),
                },
            )
        }
        ScenarioKind::ShearLayer => {
            let noise = seeded_perturbation(&g, knobs.seed, knobs.perturbation);
            let rho = noise.map(|n| 0.5 * ps * (1.0 + n));
            let speed = knobs.speed;
            let u = VectorField2::from_fn(g, |x, y| {
                (
                    speed * (2.0 * PI * y / g.ly).cos(),
                    0.05 * speed * (2.0 * PI * x / g.lx).sin(),
                )
            });
            (rho, u)
        }
        ScenarioKind::IncompressibleStart => {
            if !(knobs.pi0 > 0.0) || !(0.0..1.0).contains(&knobs.pi0_variation) {
                return Err(Error::Scenario(
                    "need pi0 > 0 and 0 <= pi0_variation < 1".into(),
                ));
            }
            let pi0 = ScalarField::from_fn(g, |x, y| {
                knobs.pi0
                    * (1.0
                        + knobs.pi0_variation
                            * (2.0 * PI * x / g.lx).cos()
                            * (2.0 * PI * y / g.ly).cos())
            });
            let scale = params.eps.powf(params.a) * ps;
            if 1.0 - scale / pi0.min() <= 0.0 {
                return Err(Error::Scenario(format!(
                    "eps = {} too large: 1 - eps^a phi_star / inf pi0 = {} <= 0",
                    params.eps,
                    1.0 - scale / pi0.min()
                )));
            }
            let rho = pi0.map(|p0| ps * (1.0 - scale / p0));
            // u = U ∇⊥ψ with discrete derivatives, so the discrete divergence vanishes
            let psi = ScalarField::from_fn(g, |x, y| {
                g.ly / (2.0 * PI) * (2.0 * PI * x / g.lx).sin() * (2.0 * PI * y / g.ly).sin()
            });
            let grad = gradient(&psi);
            let speed = knobs.speed;
            let u = VectorField2 {
                x: grad.y.map(|v| speed * v),
                y: grad.x.map(|v| -speed * v),
            };
            (rho, u)
        }
    };
    check_initial_density(&rho0, &params)?;
    Ok(Scenario {
        name: kind.name().to_string(),
        kind,
        grid,
        params,
        knobs,
        rho0,
        u0,
        t_end,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::divergence;

    fn grid() -> PeriodicGrid2D {
        PeriodicGrid2D::square(32, 1.0).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("vortex".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn gaussian_bump_contract() {
        let p = ConstitutiveParams::with_eps(0.1);
        let s = build_scenario(
            ScenarioKind::GaussianBump,
            p,
            grid(),
            Default::default(),
            1.0,
            0,
        )
        .unwrap();
        assert!((s.rho0.max() - 0.8 * p.phi_star).abs() < 1e-15);
        assert!((s.rho0.min() - 0.2 * p.phi_star).abs() < 1e-15);
        assert_eq!(s.u0.x.max_abs() + s.u0.y.max_abs(), 0.0);
    }

    #[test]
    fn colliding_blobs_have_zero_momentum() {
        let p = ConstitutiveParams::with_eps(0.1);
        let knobs = ScenarioKnobs {
            speed: 2.0,
            ..Default::default()
        };
        let s = build_scenario(ScenarioKind::CollidingBlobs, p, grid(), knobs, 1.0, 0).unwrap();
        let mx = s.rho0.zip_map(&s.u0.x, |r, u| r * u).integrate();
        assert!(mx.abs() < 1e-15, "{mx}");
        assert!(s.u0.x.max() > 1.7 && s.u0.x.min() < -1.7);
        assert_eq!(s.crossing_time(), Some(0.125));
    }

    #[test]
    fn incompressible_start_formula() {
        let p = ConstitutiveParams::with_eps(0.05);
        let knobs = ScenarioKnobs {
            pi0: 0.64,
            pi0_variation: 0.0,
            ..Default::default()
        };
        let s =
            build_scenario(ScenarioKind::IncompressibleStart, p, grid(), knobs, 1.0, 0).unwrap();
        let expected = p.phi_star * (1.0 - p.eps.powf(p.a) * p.phi_star / 0.64);
        assert!(s.rho0.values().iter().all(|&r| r == expected));
        assert!(divergence(&s.u0).max_abs() < 1e-12);
        assert!(s.u0.x.max_abs() > 0.5);
    }

    #[test]
    fn incompressible_start_rejects_large_eps() {
        let p = ConstitutiveParams {
            phi_star: 1.0,
            ..ConstitutiveParams::with_eps(0.9)
        };
        let knobs = ScenarioKnobs {
            pi0: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            build_scenario(ScenarioKind::IncompressibleStart, p, grid(), knobs, 1.0, 0),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn seeded_perturbation_is_deterministic() {
        let p = ConstitutiveParams::with_eps(0.1);
        let knobs = ScenarioKnobs {
            perturbation: 0.1,
            seed: 7,
            ..Default::default()
        };
        let a = build_scenario(ScenarioKind::ShearLayer, p, grid(), knobs, 1.0, 0).unwrap();
        let b = build_scenario(ScenarioKind::ShearLayer, p, grid(), knobs, 1.0, 0).unwrap();
        assert_eq!(a.rho0, b.rho0);
        let c = build_scenario(
            ScenarioKind::ShearLayer,
            p,
            grid(),
            ScenarioKnobs { seed: 8, ..knobs },
            1.0,
            0,
        )
        .unwrap();
        assert_ne!(a.rho0, c.rho0);
    }
}

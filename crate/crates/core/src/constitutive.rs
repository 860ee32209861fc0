//! Singular constitutive laws of the suspension model.
//!
//! With `gap = 1 - rho/phi_star` and exponent `E = eps^(1+a) / gap`:
//!
//! - singular viscosity   `mu1(rho) = (rho/eps) (exp(E) - 1)`
//! - shear viscosity      `mu(rho)  = mu1(rho) + rho`
//! - bulk viscosity       `lambda(rho) = 2 (rho mu'(rho) - mu(rho))`
//! - pressure             `pi(rho)  = (rho/phi_star)^gamma mu1(rho)`
//!
//! When `delta > 0` the exponent is frozen at `eps^(1+a)/delta` once
//! `rho/phi_star >= 1 - delta`; there `lambda = 0` and derivatives are the
//! right-derivatives of the truncated laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadratureOptions};

/// Vacuum floor as a fraction of `phi_star`.
pub const VACUUM_FLOOR_FACTOR: f64 = 1e-12;

/// Largest exponent accepted before `exp` overflows.
pub const MAX_EXPONENT: f64 = 700.0;

/// Every model constant in one validated record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstitutiveParams {
    pub eps: f64,
    pub a: f64,
    pub gamma: f64,
    pub phi_star: f64,
    pub delta: f64,
    /// Turbulent drag coefficient.
    pub r: f64,
    /// Artificial pressure coefficient.
    pub theta: f64,
    /// Entropy mixing parameter.
    pub kappa: f64,
}

impl ConstitutiveParams {
    /// Defaults: `a = 2, gamma = 1, phi_star = 0.64, delta = 0, r = 1, theta = 0, kappa = 0.5`.
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            a: 2.0,
            gamma: 1.0,
            phi_star: 0.64,
            delta: 0.0,
            r: 1.0,
            theta: 0.0,
            kappa: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, constraint: &'static str, value: f64) -> Result<()> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    constraint,
                    value,
                })
            }
        }
        check(self.eps > 0.0, "eps", "eps > 0", self.eps)?;
        check(self.a > 1.0, "a", "a > 1", self.a)?;
        check(self.gamma >= 0.0, "gamma", "gamma >= 0", self.gamma)?;
        check(
            self.phi_star > 0.0,
            "phi_star",
            "phi_star > 0",
            self.phi_star,
        )?;
        check(
            (0.0..1.0).contains(&self.delta),
            "delta",
            "0 <= delta < 1",
            self.delta,
        )?;
        check(self.r >= 0.0, "r", "r >= 0", self.r)?;
        check(self.theta >= 0.0, "theta", "theta >= 0", self.theta)?;
        check(
            self.kappa > 0.0 && self.kappa < 1.0,
            "kappa",
            "0 < kappa < 1",
            self.kappa,
        )?;
        Ok(())
    }

    pub fn rho_floor(&self) -> f64 {
        VACUUM_FLOOR_FACTOR * self.phi_star
    }

    /// `eps^(1+a)`, the numerator of the exponent.
    pub fn exponent_scale(&self) -> f64 {
        self.eps.powf(1.0 + self.a)
    }

    pub fn is_truncated(&self) -> bool {
        self.delta > 0.0
    }

    /// Accepted but noteworthy settings, for run reports.
    pub fn advisories(&self) -> Vec<&'static str> {
        let mut notes = Vec::new();
        if self.gamma < 1.0 {
            notes.push(
                "gamma < 1: accepted, but outside the gamma >= 1 range of the existence theory",
            );
        }
        notes
    }
}

/// All law values at one volume fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LawSample {
    pub rho: f64,
    pub mu: f64,
    pub mu1: f64,
    pub dmu: f64,
    pub lambda: f64,
    pub pi: f64,
    pub dpi: f64,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    exponent: f64,
    gap: f64,
    truncated: bool,
}

fn branch(rho: f64, p: &ConstitutiveParams) -> Result<Branch> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidParameter {
            name: "rho",
            constraint: "rho >= 0",
            value: rho,
        });
    }
    // Sterbenz: exact for rho in [phi_star/2, phi_star], where the gap matters
    let gap = (p.phi_star - rho) / p.phi_star;
    let truncated = p.delta > 0.0 && rho / p.phi_star >= 1.0 - p.delta;
    if !truncated && gap <= 0.0 {
        return Err(Error::Domain {
            rho,
            reason: "rho >= phi_star with untruncated laws",
        });
    }
    let exponent = p.exponent_scale() / if truncated { p.delta } else { gap };
    if exponent > MAX_EXPONENT {
        return Err(Error::Overflow { rho, exponent });
    }
    Ok(Branch {
        exponent,
        gap,
        truncated,
    })
}

/// Singular part `mu1` of the shear viscosity.
pub fn mu1_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let b = branch(rho, p)?;
    Ok(rho / p.eps * b.exponent.exp_m1())
}

pub fn mu_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    Ok(mu1_eps(rho, p)? + rho)
}

fn dmu1_with(rho: f64, b: &Branch, p: &ConstitutiveParams) -> f64 {
    let frozen = b.exponent.exp_m1() / p.eps;
    if b.truncated {
        frozen
    } else {
        // d/drho of exp(E) brings E' = eps^(1+a) / (phi_star gap^2)
        frozen + b.exponent / b.gap * rho * b.exponent.exp() / (p.eps * p.phi_star)
    }
}

/// Analytic derivative of `mu_eps` (right-derivative on the truncated branch).
pub fn dmu_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let b = branch(rho, p)?;
    Ok(dmu1_with(rho, &b, p) + 1.0)
}

pub fn lambda_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let b = branch(rho, p)?;
    if b.truncated {
        return Ok(0.0);
    }
    let ea = p.eps.powf(p.a);
    Ok(2.0 * ea * rho * rho * b.exponent.exp() / (p.phi_star * b.gap * b.gap))
}

fn packing_power(rho: f64, p: &ConstitutiveParams) -> f64 {
    (rho / p.phi_star).powf(p.gamma)
}

/// Pressure, evaluated as `(rho/phi_star)^gamma * (mu_eps(rho) - rho)`.
pub fn pi_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let mu = mu_eps(rho, p)?;
    Ok(packing_power(rho, p) * (mu - rho))
}

pub fn dpi_eps(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let b = branch(rho, p)?;
    let power = packing_power(rho, p);
    let dmu1 = dmu1_with(rho, &b, p);
    // mu1 / rho without the 0/0 at rho = 0
    let mu1_over_rho = b.exponent.exp_m1() / p.eps;
    Ok(p.gamma * power * mu1_over_rho + power * dmu1)
}

pub fn sample(rho: f64, p: &ConstitutiveParams) -> Result<LawSample> {
    let mu1 = mu1_eps(rho, p)?;
    Ok(LawSample {
        rho,
        mu: mu1 + rho,
        mu1,
        dmu: dmu_eps(rho, p)?,
        lambda: lambda_eps(rho, p)?,
        pi: pi_eps(rho, p)?,
        dpi: dpi_eps(rho, p)?,
    })
}

/// `pi(s) / s^2` in a form that stays finite as `s -> 0` when `gamma >= 1`.
fn energy_integrand(s: f64, p: &ConstitutiveParams) -> f64 {
    match branch(s, p) {
        Ok(b) => packing_power(s, p) * b.exponent.exp_m1() / (p.eps * s),
        Err(_) => f64::NAN,
    }
}

fn check_energy_base(rho_ref: f64, p: &ConstitutiveParams) -> Result<()> {
    if rho_ref < 0.0 || rho_ref.is_nan() {
        return Err(Error::InvalidParameter {
            name: "rho_ref",
            constraint: "rho_ref >= 0",
            value: rho_ref,
        });
    }
    if rho_ref == 0.0 && p.gamma == 0.0 {
        return Err(Error::Domain {
            rho: rho_ref,
            reason: "gamma = 0 needs a positive energy base point",
        });
    }
    Ok(())
}

/// Specific potential energy `e(rho) = ∫_{rho_ref}^{rho} pi(s)/s^2 ds`.
pub fn e_eps(rho: f64, p: &ConstitutiveParams, rho_ref: f64) -> Result<f64> {
    check_energy_base(rho_ref, p)?;
    branch(rho, p)?;
    let (value, _) = quadrature::integrate(
        |s| energy_integrand(s, p),
        rho_ref,
        rho,
        QuadratureOptions::default(),
    )?;
    Ok(value)
}

/// Potential-energy densities `rho e(rho)` for many values at once.
///
/// Values are sorted and integrated segment by segment, so each quadrature
/// covers only the gap between neighbouring densities.
pub fn potential_energy_densities(
    rhos: &[f64],
    p: &ConstitutiveParams,
    rho_ref: f64,
) -> Result<Vec<f64>> {
    check_energy_base(rho_ref, p)?;
    let mut order: Vec<usize> = (0..rhos.len()).collect();
    order.sort_by(|&i, &j| rhos[i].total_cmp(&rhos[j]));
    let mut out = vec![0.0; rhos.len()];
    // walk upward from the base point, then downward for values below it
    let split = order.partition_point(|&i| rhos[i] < rho_ref);
    let opts = QuadratureOptions::default();
    let mut acc = 0.0;
    let mut last = rho_ref;
    for &i in &order[split..] {
        let rho = rhos[i];
        branch(rho, p)?;
        if rho > last {
            acc += quadrature::integrate(|s| energy_integrand(s, p), last, rho, opts)?.0;
            last = rho;
        }
        out[i] = rho * acc;
    }
    acc = 0.0;
    last = rho_ref;
    for &i in order[..split].iter().rev() {
        let rho = rhos[i];
        branch(rho, p)?;
        if rho < last {
            acc += quadrature::integrate(|s| energy_integrand(s, p), last, rho, opts)?.0;
            last = rho;
        }
        out[i] = rho * acc;
    }
    Ok(out)
}

/// `mu'(rho)/sqrt(rho)`: multiplying `∇rho` by it gives `sqrt(rho) ∇phi`.
pub fn grad_phi_weight(rho: f64, p: &ConstitutiveParams) -> Result<f64> {
    let floor = p.rho_floor();
    if rho < floor || rho.is_nan() {
        return Err(Error::Vacuum { rho, floor });
    }
    Ok(dmu_eps(rho, p)? / rho.sqrt())
}

/// The constitutive laws as an object, so checks can run against
/// alternative (e.g. deliberately faulty) implementations.
pub trait ConstitutiveLaw: Sync {
    fn params(&self) -> &ConstitutiveParams;
    fn mu(&self, rho: f64) -> Result<f64>;
    fn dmu(&self, rho: f64) -> Result<f64>;
    fn lambda(&self, rho: f64) -> Result<f64>;
    fn pi(&self, rho: f64) -> Result<f64>;
    fn dpi(&self, rho: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct SingularLaws {
    pub params: ConstitutiveParams,
}

impl SingularLaws {
    pub fn new(params: ConstitutiveParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl ConstitutiveLaw for SingularLaws {
    fn params(&self) -> &ConstitutiveParams {
        &self.params
    }
    fn mu(&self, rho: f64) -> Result<f64> {
        mu_eps(rho, &self.params)
    }
    fn dmu(&self, rho: f64) -> Result<f64> {
        dmu_eps(rho, &self.params)
    }
    fn lambda(&self, rho: f64) -> Result<f64> {
        lambda_eps(rho, &self.params)
    }
    fn pi(&self, rho: f64) -> Result<f64> {
        pi_eps(rho, &self.params)
    }
    fn dpi(&self, rho: f64) -> Result<f64> {
        dpi_eps(rho, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn half() -> ConstitutiveParams {
        ConstitutiveParams {
            phi_star: 1.0,
            ..ConstitutiveParams::with_eps(0.5)
        }
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    // 10^6-panel composite Simpson, independent of the adaptive routine
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
        let h = (hi - lo) / panels as f64;
        let mut sum = 0.0;
        for k in 0..panels {
            let x0 = lo + k as f64 * h;
            sum += f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h);
        }
        sum * h / 6.0
    }

    #[test]
    fn zero_density_values() {
        let p = half();
        assert_eq!(mu_eps(0.0, &p).unwrap(), 0.0);
        assert_eq!(lambda_eps(0.0, &p).unwrap(), 0.0);
        assert_eq!(pi_eps(0.0, &p).unwrap(), 0.0);
        assert_eq!(dpi_eps(0.0, &p).unwrap(), 0.0);
        let expected = (0.5f64.powi(3)).exp_m1() / 0.5 + 1.0;
        assert_relative_eq!(dmu_eps(0.0, &p).unwrap(), expected, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_values_at_half_packing() {
        let p = half();
        // (0.5/0.5)(e^{0.25}-1) + 0.5
        assert_relative_eq!(
            mu_eps(0.5, &p).unwrap(),
            0.784_025_416_687_741_5,
            max_relative = 1e-14
        );
        // 2 * 0.25 * 0.25 / 0.25 * e^{0.25}
        assert_relative_eq!(
            lambda_eps(0.5, &p).unwrap(),
            0.642_012_708_343_870_8,
            max_relative = 1e-14
        );
        // 0.5 (e^{0.25}-1)
        assert_relative_eq!(
            pi_eps(0.5, &p).unwrap(),
            0.142_012_708_343_870_8,
            max_relative = 1e-14
        );
    }

    #[test]
    fn derivatives_match_central_differences() {
        let p = half();
        let fd = central_difference(|r| mu_eps(r, &p).unwrap(), 0.3, 1e-6);
        assert_relative_eq!(dmu_eps(0.3, &p).unwrap(), fd, max_relative = 1e-6);
        let fd = central_difference(|r| pi_eps(r, &p).unwrap(), 0.4, 1e-6);
        assert_relative_eq!(dpi_eps(0.4, &p).unwrap(), fd, max_relative = 1e-6);
        for gamma in [0.0, 0.5, 2.0] {
            let q = ConstitutiveParams { gamma, ..p };
            let fd = central_difference(|r| pi_eps(r, &q).unwrap(), 0.7, 1e-6);
            assert_relative_eq!(dpi_eps(0.7, &q).unwrap(), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn bd_relation_on_dense_grid() {
        let p = ConstitutiveParams::with_eps(0.2);
        for k in 0..1000 {
            let rho = 0.95 * p.phi_star * k as f64 / 999.0;
            let lambda = lambda_eps(rho, &p).unwrap();
            let bd = 2.0 * (rho * dmu_eps(rho, &p).unwrap() - mu_eps(rho, &p).unwrap());
            assert!((lambda - bd).abs() <= 1e-10 * (1.0 + lambda), "rho={rho}");
        }
    }

    #[test]
    fn branch_continuity_at_truncation_level() {
        let untruncated = ConstitutiveParams::with_eps(0.3);
        let p = ConstitutiveParams {
            delta: 0.05,
            ..untruncated
        };
        let rho = p.phi_star * (1.0 - p.delta);
        let above = p.phi_star * (1.0 - p.delta) * (1.0 + 1e-15);
        assert_relative_eq!(
            mu_eps(rho, &p).unwrap(),
            mu_eps(rho, &untruncated).unwrap(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            pi_eps(rho, &p).unwrap(),
            pi_eps(rho, &untruncated).unwrap(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            mu_eps(above, &p).unwrap(),
            mu_eps(rho, &p).unwrap(),
            max_relative = 1e-13
        );
        // right-derivative uses the frozen exponent; lambda vanishes on the closed set
        assert_eq!(lambda_eps(rho, &p).unwrap(), 0.0);
        let frozen = (p.exponent_scale() / p.delta).exp_m1() / p.eps + 1.0;
        assert_relative_eq!(dmu_eps(rho, &p).unwrap(), frozen, max_relative = 1e-15);
        // the truncated laws remain defined beyond phi_star
        assert!(mu_eps(1.1 * p.phi_star, &p).unwrap().is_finite());
    }

    #[test]
    fn domain_and_overflow_errors() {
        let p = ConstitutiveParams::with_eps(0.1);
        assert!(matches!(mu_eps(p.phi_star, &p), Err(Error::Domain { .. })));
        assert!(matches!(
            pi_eps(2.0 * p.phi_star, &p),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            mu_eps(-1e-3, &p),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            mu_eps(f64::NAN, &p),
            Err(Error::InvalidParameter { .. })
        ));
        // gap of 1e-7 gives E = 1e4
        let rho = p.phi_star * (1.0 - 1e-7);
        assert!(matches!(mu_eps(rho, &p), Err(Error::Overflow { .. })));
    }

    #[test]
    fn parameter_validation_names_constraint() {
        let mut p = ConstitutiveParams::with_eps(0.1);
        p.a = 0.5;
        match p.validate() {
            Err(Error::InvalidParameter {
                name, constraint, ..
            }) => {
                assert_eq!(name, "a");
                assert_eq!(constraint, "a > 1");
            }
            other => panic!("{other:?}"),
        }
        p.a = 2.0;
        p.kappa = 1.0;
        assert!(p.validate().is_err());
        p.kappa = 0.5;
        p.delta = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn energy_matches_simpson_oracle() {
        let p = ConstitutiveParams {
            phi_star: 1.0,
            ..ConstitutiveParams::with_eps(0.5)
        };
        let value = e_eps(0.5, &p, 0.0).unwrap();
        // gamma = 1: integrand (expm1(E(s)))/eps with E = eps^3/(1-s), finite at 0
        let oracle = simpson(|s| (0.125 / (1.0 - s)).exp_m1() / 0.5, 0.0, 0.5, 1_000_000);
        assert_relative_eq!(value, oracle, max_relative = 1e-8);
        assert_eq!(e_eps(0.3, &p, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn energy_base_point_rules() {
        let p = ConstitutiveParams {
            gamma: 0.0,
            ..ConstitutiveParams::with_eps(0.2)
        };
        assert!(matches!(e_eps(0.3, &p, 0.0), Err(Error::Domain { .. })));
        assert!(e_eps(0.3, &p, 0.1).unwrap() > 0.0);
        assert!(e_eps(0.05, &p, 0.1).unwrap() < 0.0);
    }

    #[test]
    fn batched_energy_agrees_with_pointwise() {
        let p = ConstitutiveParams::with_eps(0.1);
        let rhos = [0.5, 0.1, 0.3, 0.6, 0.3, 0.25];
        let batch = potential_energy_densities(&rhos, &p, 0.0).unwrap();
        for (rho, got) in rhos.iter().zip(batch) {
            let direct = rho * e_eps(*rho, &p, 0.0).unwrap();
            assert_relative_eq!(got, direct, max_relative = 1e-9);
        }
        let q = ConstitutiveParams { gamma: 0.0, ..p };
        let batch = potential_energy_densities(&rhos, &q, 0.25).unwrap();
        for (rho, got) in rhos.iter().zip(batch) {
            let direct = rho * e_eps(*rho, &q, 0.25).unwrap();
            assert_relative_eq!(got, direct, max_relative = 1e-9, epsilon = 1e-14);
        }
    }

    #[test]
    fn truncated_energy_grows_like_log_delta() {
        let base = ConstitutiveParams::with_eps(0.1);
        let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
        let values: Vec<f64> = deltas
            .iter()
            .map(|&delta| {
                let p = ConstitutiveParams { delta, ..base };
                let rho = p.phi_star * (1.0 - delta);
                rho * e_eps(rho, &p, 0.0).unwrap()
            })
            .collect();
        let xs: Vec<f64> = deltas.iter().map(|d| -d.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = values.iter().sum::<f64>() / n;
        let slope = xs
            .iter()
            .zip(&values)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!(slope > 0.0, "C1 = {slope}");
        assert!(values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grad_phi_weight_identities() {
        let p = ConstitutiveParams {
            phi_star: 1.0,
            ..ConstitutiveParams::with_eps(0.5)
        };
        let rho = 0.5;
        assert_relative_eq!(
            grad_phi_weight(rho, &p).unwrap() * rho.sqrt(),
            dmu_eps(rho, &p).unwrap(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            grad_phi_weight(0.25, &p).unwrap(),
            dmu_eps(0.25, &p).unwrap() / 0.5,
            max_relative = 1e-15
        );
        assert!(matches!(
            grad_phi_weight(0.0, &p),
            Err(Error::Vacuum { .. })
        ));
    }

    #[test]
    fn pi_link_is_bit_identical() {
        let p = ConstitutiveParams {
            gamma: 1.7,
            ..ConstitutiveParams::with_eps(0.07)
        };
        for k in 0..1000 {
            let rho = 0.95 * p.phi_star * k as f64 / 999.0;
            let link = (rho / p.phi_star).powf(p.gamma) * (mu_eps(rho, &p).unwrap() - rho);
            assert_eq!(pi_eps(rho, &p).unwrap().to_bits(), link.to_bits());
        }
    }

    proptest! {
        #[test]
        fn laws_are_monotone_and_signed(
            eps in 0.01f64..0.5,
            a in 1.05f64..4.0,
            gamma in 0.0f64..3.0,
            delta in prop_oneof![Just(0.0), 1e-3f64..0.3],
            x in 0.0f64..0.999,
            dx in 1e-6f64..1e-2,
        ) {
            let p = ConstitutiveParams { eps, a, gamma, delta, ..ConstitutiveParams::with_eps(eps) };
            let top = if delta > 0.0 { 1.0 - delta } else { 0.999 };
            let lo = p.phi_star * top * x;
            let hi = (lo + dx * p.phi_star).min(p.phi_star * top);
            if let (Ok(s0), Ok(s1)) = (sample(lo, &p), sample(hi, &p)) {
                prop_assert!(s1.mu >= s0.mu);
                prop_assert!(s1.pi >= s0.pi);
                prop_assert!(s0.dmu >= 1.0);
                prop_assert!(s0.lambda >= 0.0 && s0.dpi >= 0.0 && s0.pi >= 0.0);
                prop_assert!(grad_phi_weight(hi.max(p.rho_floor()), &p).unwrap() * hi.max(p.rho_floor()).sqrt() >= 1.0 - 1e-12);
            }
        }
    }
}

//! Flat `key = value` run configuration.
//!
//! ```text
//! # two blobs at the congestion threshold
//! scenario = colliding_blobs
//! eps = 0.05
//! lx = 4
//! speed = 25
//! ```
//!
//! Everything after `#` is a comment. Unknown and repeated keys are errors;
//! `scenario` and `eps` are mandatory, everything else has a default.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::constitutive::ConstitutiveParams;
use crate::error::{Error, Result};
use crate::fields::PeriodicGrid2D;
use crate::solver::{build_scenario, Scenario, ScenarioKind, ScenarioKnobs};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub grid: PeriodicGrid2D,
    pub params: ConstitutiveParams,
    pub knobs: ScenarioKnobs,
    /// `None`: the crossing time for colliding blobs, 1 otherwise.
    pub t_end: Option<f64>,
    pub snapshots: usize,
    pub out: PathBuf,
    pub cfl: f64,
}

const KEYS: [&str; 22] = [
    "scenario",
    "nx",
    "ny",
    "lx",
    "ly",
    "eps",
    "a",
    "gamma",
    "phi_star",
    "delta",
    "r",
    "theta",
    "kappa",
    "t_end",
    "snapshots",
    "out",
    "seed",
    "speed",
    "pi0",
    "pi0_variation",
    "perturbation",
    "cfl",
];

const MANDATORY: [&str; 2] = ["scenario", "eps"];

struct Entry {
    line: usize,
    value: String,
}

fn number<T: std::str::FromStr>(
    entries: &BTreeMap<&str, Entry>,
    key: &str,
    default: T,
) -> Result<T> {
    match entries.get(key) {
        None => Ok(default),
        Some(e) => e.value.parse().map_err(|_| Error::ConfigSyntax {
            line: e.line,
            message: format!("`{key}` expects a number, got {:?}", e.value),
        }),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: BTreeMap<&str, Entry> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let key = KEYS
            .iter()
            .find(|&&k| k == key)
            .ok_or_else(|| Error::ConfigSyntax {
                line,
                message: format!("unknown key `{key}`"),
            })?;
        if value.is_empty() {
            return Err(Error::ConfigSyntax {
                line,
                message: format!("`{key}` has no value"),
            });
        }
        if let Some(first) = entries.get(key) {
            return Err(Error::Config(format!(
                "duplicate key `{key}` on lines {} and {line}",
                first.line
            )));
        }
        entries.insert(
            key,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    for key in MANDATORY {
        if !entries.contains_key(key) {
            return Err(Error::Config(format!("missing mandatory key `{key}`")));
        }
    }
    let scenario_entry = &entries["scenario"];
    let scenario: ScenarioKind =
        scenario_entry
            .value
            .parse()
            .map_err(|e: Error| Error::ConfigSyntax {
                line: scenario_entry.line,
                message: e.to_string(),
            })?;

    let defaults = ConstitutiveParams::with_eps(f64::NAN);
    let params = ConstitutiveParams {
        eps: number(&entries, "eps", f64::NAN)?,
        a: number(&entries, "a", defaults.a)?,
        gamma: number(&entries, "gamma", defaults.gamma)?,
        phi_star: number(&entries, "phi_star", defaults.phi_star)?,
        delta: number(&entries, "delta", defaults.delta)?,
        r: number(&entries, "r", defaults.r)?,
        theta: number(&entries, "theta", defaults.theta)?,
        kappa: number(&entries, "kappa", defaults.kappa)?,
    };
    params.validate()?;

    let nx = number(&entries, "nx", 64usize)?;
    let ny = number(&entries, "ny", nx)?;
    let lx = number(&entries, "lx", 1.0)?;
    let ly = number(&entries, "ly", lx)?;
    let grid = PeriodicGrid2D::new(nx, ny, lx, ly)?;

    let kd = ScenarioKnobs::default();
    let knobs = ScenarioKnobs {
        speed: number(&entries, "speed", kd.speed)?,
        pi0: number(&entries, "pi0", kd.pi0)?,
        pi0_variation: number(&entries, "pi0_variation", kd.pi0_variation)?,
        perturbation: number(&entries, "perturbation", kd.perturbation)?,
        seed: number(&entries, "seed", kd.seed)?,
    };
    let t_end = match entries.get("t_end") {
        Some(e) if e.value == "auto" => None,
        Some(_) => Some(number(&entries, "t_end", 0.0f64)?),
        None => None,
    };
    if let Some(t) = t_end {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                constraint: "t_end >= 0",
                value: t,
            });
        }
    }
    let cfl = number(&entries, "cfl", 0.4)?;
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "cfl",
            constraint: "0 < cfl <= 1",
            value: cfl,
        });
    }
    Ok(RunConfig {
        scenario,
        grid,
        params,
        knobs,
        t_end,
        snapshots: number(&entries, "snapshots", 10usize)?,
        out: entries
            .get("out")
            .map(|e| PathBuf::from(&e.value))
            .unwrap_or_else(|| "out".into()),
        cfl,
    })
}

impl RunConfig {
    /// Canonical text form; floats use shortest round-trip formatting so that
    /// `parse_config(to_text())` reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let k = &self.knobs;
        let g = &self.grid;
        let mut s = String::new();
        let mut kv = |key: &str, value: String| s.push_str(&format!("{key} = {value}\n"));
        kv("scenario", self.scenario.name().to_string());
        kv("nx", g.nx.to_string());
        kv("ny", g.ny.to_string());
        kv("lx", format!("{:?}", g.lx));
        kv("ly", format!("{:?}", g.ly));
        kv("eps", format!("{:?}", p.eps));
        kv("a", format!("{:?}", p.a));
        kv("gamma", format!("{:?}", p.gamma));
        kv("phi_star", format!("{:?}", p.phi_star));
        kv("delta", format!("{:?}", p.delta));
        kv("r", format!("{:?}", p.r));
        kv("theta", format!("{:?}", p.theta));
        kv("kappa", format!("{:?}", p.kappa));
        kv(
            "t_end",
            self.t_end.map_or("auto".into(), |t| format!("{t:?}")),
        );
        kv("snapshots", self.snapshots.to_string());
        kv("out", self.out.display().to_string());
        kv("seed", k.seed.to_string());
        kv("speed", format!("{:?}", k.speed));
        kv("pi0", format!("{:?}", k.pi0));
        kv("pi0_variation", format!("{:?}", k.pi0_variation));
        kv("perturbation", format!("{:?}", k.perturbation));
        kv("cfl", format!("{:?}", self.cfl));
        s
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        let s = build_scenario(
            self.scenario,
            self.params,
            self.grid,
            self.knobs,
            0.0,
            self.snapshots,
        )?;
        let t_end = self
            .t_end
            .unwrap_or_else(|| s.crossing_time().unwrap_or(1.0));
        Ok(s.with_t_end(t_end))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("scenario = gaussian_bump\neps = 0.1\n").unwrap();
        assert_eq!(c.params, ConstitutiveParams::with_eps(0.1));
        assert_eq!(
            (c.grid.nx, c.grid.ny, c.grid.lx, c.grid.ly),
            (64, 64, 1.0, 1.0)
        );
        assert_eq!(c.t_end, None);
        assert_eq!(c.snapshots, 10);
    }

    #[test]
    fn violated_constraint_is_named() {
        let e = parse_config("scenario = gaussian_bump\neps = 0.1\na = 0.5\n").unwrap_err();
        assert!(e.to_string().contains("a > 1"), "{e}");
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let e = parse_config("scenario = gaussian_bump\neps = 0.1\n# c\neps = 0.2\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("lines 2 and 4"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let e = parse_config("scenario = gaussian_bump\n\neps 0.1\n").unwrap_err();
        assert!(matches!(e, Error::ConfigSyntax { line: 3, .. }), "{e}");
        let e = parse_config("scenario = gaussian_bump\neps = 0.1\ncolour = red\n").unwrap_err();
        assert!(matches!(e, Error::ConfigSyntax { line: 3, .. }), "{e}");
        let e = parse_config("scenario = gaussian_bump\neps = fast\n").unwrap_err();
        assert!(matches!(e, Error::ConfigSyntax { line: 2, .. }), "{e}");
        let e = parse_config("scenario = nope\neps = 0.1\n").unwrap_err();
        assert!(matches!(e, Error::ConfigSyntax { line: 1, .. }), "{e}");
    }

    #[test]
    fn missing_mandatory_key() {
        let e = parse_config("eps = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("`scenario`"));
        let e = parse_config("scenario = shear_layer # no eps\n").unwrap_err();
        assert!(e.to_string().contains("`eps`"));
    }

    #[test]
    fn text_round_trip() {
        let text = "scenario = colliding_blobs\neps = 0.05\nlx = 4\nspeed = 25\nt_end = 0.1\ndelta = 0.01\nseed = 7\nnx = 32\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_text(), c.to_text());
        let auto = parse_config("scenario = colliding_blobs\neps = 0.05\n").unwrap();
        assert_eq!(parse_config(&auto.to_text()).unwrap(), auto);
    }

    #[test]
    fn auto_end_time_is_crossing_time() {
        let c =
            parse_config("scenario = colliding_blobs\neps = 0.05\nlx = 4\nspeed = 25\nnx = 16\n")
                .unwrap();
        assert_eq!(c.build_scenario().unwrap().t_end, 0.04);
        let c = parse_config("scenario = gaussian_bump\neps = 0.05\nnx = 16\n").unwrap();
        assert_eq!(c.build_scenario().unwrap().t_end, 1.0);
    }
}

//! Run orchestration and persistence: state snapshots, `timeseries.csv`
//! and `manifest.json`.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{parse_config, RunConfig};
use crate::constitutive::{potential_energy_densities, sample, ConstitutiveParams};
use crate::diagnostics::{DiagnosticsTracker, TimeSeriesRow};
use crate::error::{Error, Result};
use crate::fields::{read_fields, write_fields, FieldSet, ScalarField, VectorField2};
use crate::solver::{run_with, SolverSettings, SolverState};

/// Writes `rho`, `m_x`, `m_y` and a constant field `t` holding the time.
pub fn write_snapshot(state: &SolverState, path: &Path) -> Result<()> {
    let g = *state.rho.grid();
    let mut set = FieldSet::new(g);
    set.push("rho", state.rho.clone())?;
    set.push("m_x", state.m.x.clone())?;
    set.push("m_y", state.m.y.clone())?;
    set.push("t", ScalarField::constant(g, state.t))?;
    let file = fs::File::create(path)?;
    write_fields(&set, BufWriter::new(file))
}

/// Reads a snapshot written by [`write_snapshot`]; velocity is rederived.
pub fn read_snapshot(path: &Path, p: &ConstitutiveParams) -> Result<SolverState> {
    let set = read_fields(BufReader::new(fs::File::open(path)?))?;
    let field = |name: &str| {
        set.get(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("snapshot lacks field {name:?}")))
    };
    let t = field("t")?.values()[0];
    let m = VectorField2::new(field("m_x")?, field("m_y")?)?;
    SolverState::from_conserved(t, field("rho")?, m, 0, p)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    /// Canonical config text; rerunning from it reproduces the run.
    pub config_text: String,
    pub config: &'a RunConfig,
    pub notes: Vec<&'static str>,
}

pub fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_text: config.to_text(),
        config,
        notes: config.params.advisories(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

/// Parses either a `key = value` config or a `manifest.json` written by a previous run.
pub fn load_config_text(text: &str) -> Result<RunConfig> {
    if text.trim_start().starts_with('{') {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("manifest is not valid JSON: {e}")))?;
        let inner = value
            .get("config_text")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("manifest has no `config_text`".into()))?;
        parse_config(inner)
    } else {
        parse_config(text)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_text(&fs::read_to_string(path)?)
}

pub const LAW_COLUMNS: [&str; 8] = ["rho", "mu", "mu1", "dmu", "lambda", "pi", "dpi", "rho_e"];

/// Tabulates every law on `n` equispaced densities in `(0, rho_max]`, with a header row.
/// `rho_e` is the potential energy density based at `rho_ref`.
pub fn laws_csv(p: &ConstitutiveParams, n: usize, rho_max: f64, rho_ref: f64) -> Result<String> {
    if n == 0 || !(rho_max > 0.0) {
        return Err(Error::Config(
            "laws table needs n > 0 and rho_max > 0".into(),
        ));
    }
    let rhos: Vec<f64> = (1..=n).map(|k| rho_max * k as f64 / n as f64).collect();
    let energies = potential_energy_densities(&rhos, p, rho_ref)?;
    let mut out = LAW_COLUMNS.join(",") + "\n";
    for (&rho, e) in rhos.iter().zip(energies) {
        let s = sample(rho, p)?;
        out += &format!(
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            s.rho, s.mu, s.mu1, s.dmu, s.lambda, s.pi, s.dpi, e
        );
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SimulationSummary {
    pub out_dir: PathBuf,
    pub steps: usize,
    pub snapshots: Vec<PathBuf>,
    pub final_row: TimeSeriesRow,
    pub warnings: usize,
}

/// Runs `config`, streaming `timeseries.csv` and snapshots into `out_dir`.
/// The manifest is written first, so a failed run still documents itself.
pub fn simulate(config: &RunConfig, out_dir: &Path) -> Result<SimulationSummary> {
    fs::create_dir_all(out_dir)?;
    let mut resolved = config.clone();
    resolved.out = out_dir.to_path_buf();
    write_manifest(out_dir, "simulate", &resolved)?;
    for note in config.params.advisories() {
        log::warn!("{note}");
    }
    let scenario = config.build_scenario()?;
    let mut settings = SolverSettings::for_reference_time(scenario.t_end);
    settings.cfl = config.cfl;

    let mut csv = BufWriter::new(fs::File::create(out_dir.join("timeseries.csv"))?);
    writeln!(csv, "{}", TimeSeriesRow::csv_header())?;
    let mut tracker = DiagnosticsTracker::new(scenario.params)?;
    let mut snapshots = Vec::new();
    let mut last_row = None;
    let mut steps = 0usize;
    let result = run_with(&scenario, &settings, |state, dt, is_snapshot| {
        let row = tracker.observe(state, dt)?;
        writeln!(csv, "{}", row.csv_line())?;
        if is_snapshot {
            let path = out_dir.join(format!("snap_{:04}.cgsf", snapshots.len()));
            write_snapshot(state, &path)?;
            snapshots.push(path);
        }
        if dt > 0.0 {
            steps += 1;
        }
        last_row = Some(row);
        Ok(())
    });
    csv.flush()?;
    result?;
    Ok(SimulationSummary {
        out_dir: out_dir.to_path_buf(),
        steps,
        snapshots,
        final_row: last_row.expect("observer sees the initial state"),
        warnings: tracker.warnings().len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PeriodicGrid2D;

    #[test]
    fn snapshot_round_trip() {
        let p = ConstitutiveParams::with_eps(0.1);
        let g = PeriodicGrid2D::new(8, 10, 1.0, 2.0).unwrap();
        let rho = ScalarField::from_fn(g, |x, y| 0.2 + 0.01 * (x + y).sin());
        let u = VectorField2::from_fn(g, |x, y| (x.cos(), y * 0.1));
        let mut s = SolverState::from_primitive(rho, u, &p).unwrap();
        s.t = 0.125;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.cgsf");
        write_snapshot(&s, &path).unwrap();
        let back = read_snapshot(&path, &p).unwrap();
        assert_eq!(back.t, s.t);
        assert_eq!(back.rho, s.rho);
        assert_eq!(back.m, s.m);
    }

    #[test]
    fn laws_table_has_header_and_rows() {
        let p = ConstitutiveParams::with_eps(0.1);
        let csv = laws_csv(&p, 5, 0.6, 0.0).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "rho,mu,mu1,dmu,lambda,pi,dpi,rho_e");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("0.6,"));
        assert!(laws_csv(&p, 5, 0.64, 0.0).is_err());
    }

    #[test]
    fn config_loads_from_manifest() {
        let c = parse_config(
            "scenario = shear_layer\neps = 0.2\nnx = 16\nperturbation = 0.1\nseed = 3\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_manifest(dir.path(), "simulate", &c).unwrap();
        let back = load_config(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, c);
        assert!(load_config_text("{\"x\": 1}").is_err());
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(text.contains("\"notes\": []"), "{text}");
        let low = parse_config("scenario = shear_layer\neps = 0.2\ngamma = 0.5\n").unwrap();
        write_manifest(dir.path(), "simulate", &low).unwrap();
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(text.contains("gamma < 1"), "{text}");
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use congesto::checks::{run_checks, ScaledBulkViscosity};
use congesto::config::{parse_config, RunConfig};
use congesto::constitutive::{ConstitutiveParams, SingularLaws};
use congesto::io::{laws_csv, load_config, simulate};
use congesto::limits::{run_sweep, SweepFamily, SweepParam};
use congesto::solver::ScenarioKind;

#[derive(Parser)]
#[command(
    name = "congesto",
    version,
    about = "Congested compressible flow with singular laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate mu, mu1, mu', lambda, pi, pi', rho e over a density grid as CSV
    Laws(LawsArgs),
    /// Run one scenario from a config file (or a previous manifest.json)
    Simulate(SimulateArgs),
    /// Run a parameter ladder and fit convergence rates
    Sweep(SweepArgs),
    /// Run the invariant suite; exits nonzero on any failure
    Check(CheckArgs),
}

#[derive(Args)]
struct LawsArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.64)]
    phi_star: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Number of grid points
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Largest density, default 0.95 phi_star
    #[arg(long)]
    rho_max: Option<f64>,
    /// Base point of the potential energy (must be positive when gamma = 0)
    #[arg(long, default_value_t = 0.0)]
    rho_ref: f64,
    /// Output file, stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Scale lambda by this factor before checking (mutation sanity test)
    #[arg(long, hide = true)]
    scale_lambda: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out` from the config
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Swept parameter: eps, delta or theta
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated, strictly decreasing ladder
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Base config; the swept parameter's own value in it is ignored
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the base config's scenario
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

/// Two blobs heading into each other hard enough to touch the packing limit.
const DEFAULT_SWEEP_BASE: &str = "scenario = colliding_blobs\neps = 0.05\nlx = 4\nspeed = 25\n";

fn laws(args: LawsArgs) -> Result<()> {
    let p = ConstitutiveParams {
        a: args.a,
        gamma: args.gamma,
        phi_star: args.phi_star,
        delta: args.delta,
        ..ConstitutiveParams::with_eps(args.eps)
    };
    p.validate()?;
    let csv = laws_csv(
        &p,
        args.n,
        args.rho_max.unwrap_or(0.95 * p.phi_star),
        args.rho_ref,
    )?;
    match args.out {
        Some(path) => {
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let mut config =
        load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(n) = args.snapshots {
        config.snapshots = n;
    }
    if let Some(seed) = args.seed {
        config.knobs.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| config.out.clone());
    let summary = simulate(&config, &out)?;
    let r = &summary.final_row;
    println!(
        "{} steps to t = {:.6}; mass {:.15e}; max rho/phi* {:.6}; {} snapshots, {} diagnostic warnings -> {}",
        summary.steps,
        r.t,
        r.mass,
        r.congestion.max_rho_ratio,
        summary.snapshots.len(),
        summary.warnings,
        summary.out_dir.display()
    );
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let mut base: RunConfig = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => parse_config(DEFAULT_SWEEP_BASE)?,
    };
    if let Some(kind) = args.scenario {
        base.scenario = kind;
    }
    let family = SweepFamily {
        kind: base.scenario,
        params: base.params,
        grid: base.grid,
        knobs: base.knobs,
        t_end: base.t_end,
    };
    let outcome = run_sweep(&family, args.param, &args.values, Some(&args.out))?;
    for r in &outcome.records {
        println!(
            "{} = {:<10} peak excl {:.4e}  peak rho/phi* {:.6}  avg div on band {:.4e}",
            r.param_name,
            r.param_value,
            r.peak_exclusion_residual,
            r.peak_max_rho_ratio,
            r.time_avg_div_on_congested
        );
    }
    for f in &outcome.rates {
        let trust = if f.is_trusted() {
            ""
        } else {
            "  (untrusted fit)"
        };
        println!(
            "rate {:<28} slope {:.4}  residual {:.2e}{trust}",
            f.metric, f.slope, f.residual
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn check_cmd(args: CheckArgs) -> Result<bool> {
    let law = SingularLaws::new(ConstitutiveParams::with_eps(0.05))?;
    let results = match args.scale_lambda {
        Some(factor) => run_checks(&ScaledBulkViscosity { inner: law, factor }),
        None => run_checks(&law),
    };
    println!(
        "{:<26} {:<13} {:<6} {:>9}  detail",
        "check", "module", "status", "time"
    );
    for r in &results {
        println!(
            "{:<26} {:<13} {:<6} {:>7.1}ms  {}",
            r.name,
            r.module,
            if r.outcome.pass { "PASS" } else { "FAIL" },
            r.elapsed.as_secs_f64() * 1e3,
            r.outcome.detail
        );
    }
    let failed = results.iter().filter(|r| !r.outcome.pass).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(failed == 0)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CONGESTO_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("CONGESTO_THREADS={v:?} is not a count"))?;
        if n == 0 {
            bail!("CONGESTO_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
        log::debug!("worker pool capped at {n} threads");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Laws(a) => laws(a).map(|()| true),
        Command::Simulate(a) => simulate_cmd(a).map(|()| true),
        Command::Sweep(a) => sweep_cmd(a).map(|()| true),
        Command::Check(a) => check_cmd(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line surface for the noisesync library.
//!
//! Every subcommand reads an optional TOML config (defaults otherwise),
//! applies flag overrides, validates, and writes its artifacts into the
//! output directory. Each output file starts with a `#` audit header
//! embedding the resolved configuration and seed; a run relaunched from the
//! dumped `config.resolved.toml` reproduces the same bytes. Failures print
//! a single machine-readable `error: ...` line on stderr and exit nonzero.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use noisesync::config::RunConfig;
use noisesync::continuation::{detect_saddle_node, trace_bifurcation_set, SeedStrategy};
use noisesync::gains::{alpha0, alpha_pair, quadrature_expectation, GainInput};
use noisesync::mde::{MomentState, SweepDirection};
use noisesync::model::{dead_zone_force, Forcing, OscState};
use noisesync::orbit::{classify_attractor, find_fixed_point, AttractorKind};
use noisesync::report::{
    audit_header, curve_csv, error_series_csv, fixed_point_report, gains_csv, mct_csv,
    overlay_plot_script, poincare_csv, sweep_csv, sweep_plot_script, trajectory_csv, GainsRow,
    MctRow,
};
use noisesync::stochastic::{simulate_ensemble_common_noise, simulate_path};
use noisesync::syncstat::{mean_convergence_time, sync_error_series};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "noisesync",
    version,
    about = "Common-noise oscillator synchronization: simulation, moment equations, \
             stroboscopic maps, and saddle-node continuation"
)]
struct Cli {
    /// TOML run configuration; missing sections use the reference defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the [sim] seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a sample path, or a common-noise pair with its error series.
    Simulate {
        /// Run two copies under the same noise and write `error.csv`.
        #[arg(long)]
        paired: bool,
        /// Initial condition as `x1,x2`.
        #[arg(long, value_name = "X1,X2", default_value = "0,0")]
        init: String,
        /// Second initial condition for --paired.
        #[arg(long, value_name = "X1,X2", default_value = "1,1")]
        init_b: String,
    },
    /// Mean convergence time of a common-noise ensemble over (omega, c) points.
    Mct {
        /// Carrier frequencies to visit (comma-separated); default: the configured one.
        #[arg(long, value_name = "W1,W2,...")]
        omega: Option<String>,
        /// Damping values to visit (comma-separated); default: the configured one.
        #[arg(long, value_name = "C1,C2,...")]
        c: Option<String>,
    },
    /// Forward and backward frequency-response sweeps of the moment equations.
    Sweep,
    /// Stroboscopic-map iterates, attractor classification, and a fixed-point report.
    Poincare {
        /// Section seed as `m1,m2,s11,s12,s22` (default: the rest state).
        #[arg(long, value_name = "M1,M2,S11,S12,S22")]
        q0: Option<String>,
        /// Map iterates recorded after the transient; the output also keeps
        /// the section state the transient ends on, as iterate 0.
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Discarded transient iterates.
        #[arg(long, default_value_t = 300)]
        transient: usize,
    },
    /// Trace the saddle-node set across the configured damping range.
    Bif,
    /// Compare the closed-form gains against quadrature and finite differences.
    GainsCheck,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("setting worker threads")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    write_file(&cli.out, "config.resolved.toml", &cfg.resolved()?.to_toml()?)?;

    match &cli.command {
        Command::Simulate { paired, init, init_b } => cmd_simulate(&cfg, &cli.out, *paired, init, init_b),
        Command::Mct { omega, c } => cmd_mct(&cfg, &cli.out, omega.as_deref(), c.as_deref()),
        Command::Sweep => cmd_sweep(&cfg, &cli.out),
        Command::Poincare { q0, iters, transient } => {
            cmd_poincare(&cfg, &cli.out, q0.as_deref(), *iters, *transient)
        }
        Command::Bif => cmd_bif(&cfg, &cli.out),
        Command::GainsCheck => cmd_gains_check(&cfg, &cli.out),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn parse_floats(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("parsing {what}: bad number {v:?}"))
        })
        .collect()
}

fn parse_pair(text: &str, what: &str) -> Result<OscState> {
    let v = parse_floats(text, what)?;
    if v.len() != 2 {
        bail!("{what} must be x1,x2");
    }
    Ok(OscState::new(v[0], v[1]))
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, paired: bool, init: &str, init_b: &str) -> Result<()> {
    let header = audit_header("simulate", cfg)?;
    let forcing = cfg.forcing()?;
    let osc = cfg.oscillator();
    let sim = cfg.sim();
    let a = parse_pair(init, "--init")?;
    if paired {
        let b = parse_pair(init_b, "--init-b")?;
        let ens = simulate_ensemble_common_noise(&[a, b], &forcing, &osc, &sim)?;
        let errs = sync_error_series(&ens[0], &ens[1])?;
        write_file(out, "trajectory_a.csv", &trajectory_csv(&header, &ens[0]))?;
        write_file(out, "trajectory_b.csv", &trajectory_csv(&header, &ens[1]))?;
        write_file(out, "error.csv", &error_series_csv(&header, &ens[0].t, &errs)?)?;
    } else {
        let tr = simulate_path(a, &forcing, &osc, &sim)?;
        write_file(out, "trajectory.csv", &trajectory_csv(&header, &tr))?;
    }
    Ok(())
}

fn forcing_at_omega(f: &Forcing, omega: f64) -> Result<Forcing> {
    match *f {
        Forcing::RandomPhase { p, rho, .. } => Ok(Forcing::RandomPhase { p, omega, rho }),
        Forcing::HarmonicWhite { p, s, .. } => Ok(Forcing::HarmonicWhite { p, omega, s }),
        Forcing::Filtered { .. } => bail!("--omega does not apply to filtered forcing"),
    }
}

fn carrier_omega(f: &Forcing) -> f64 {
    match *f {
        Forcing::RandomPhase { omega, .. } | Forcing::HarmonicWhite { omega, .. } => omega,
        Forcing::Filtered { .. } => f64::NAN,
    }
}

fn cmd_mct(cfg: &RunConfig, out: &Path, omega: Option<&str>, c: Option<&str>) -> Result<()> {
    let header = audit_header("mct", cfg)?;
    let base_forcing = cfg.forcing()?;
    let mct = cfg.mct();
    let omegas = match omega {
        Some(list) => parse_floats(list, "--omega")?,
        None => vec![carrier_omega(&base_forcing)],
    };
    let cs = match c {
        Some(list) => parse_floats(list, "--c")?,
        None => vec![cfg.model.c],
    };
    if omegas.is_empty() || cs.is_empty() {
        bail!("--omega and --c need at least one value each");
    }
    let mut rows = Vec::new();
    for &ci in &cs {
        let mut osc = cfg.oscillator();
        osc.c = ci;
        osc.validate()?;
        for &wi in &omegas {
            let forcing = if omega.is_some() {
                forcing_at_omega(&base_forcing, wi)?
            } else {
                base_forcing
            };
            forcing.validate()?;
            let result = mean_convergence_time(&forcing, &osc, &mct, cfg.sim.seed)?;
            if !result.excluded.is_empty() {
                eprintln!(
                    "note: omega {wi}, c {ci}: excluded {} divergent replications",
                    result.excluded.len()
                );
            }
            rows.push(MctRow {
                omega: wi,
                c: ci,
                mean_t: result.mean_t,
                saturated: result.saturated,
                k_reps: mct.k_reps,
                grid_m: mct.grid_m,
                epsilon: mct.epsilon,
            });
        }
    }
    write_file(out, "mct.csv", &mct_csv(&header, &rows))
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let header = audit_header("sweep", cfg)?;
    let template = cfg.mde()?;
    let sw = &cfg.sweep;
    let forward = noisesync::mde::sweep_frequency(
        &template,
        sw.omega_lo,
        sw.omega_hi,
        sw.n_steps,
        SweepDirection::Forward,
        sw.settle_periods,
        sw.measure_periods,
    )?;
    let backward = noisesync::mde::sweep_frequency(
        &template,
        sw.omega_lo,
        sw.omega_hi,
        sw.n_steps,
        SweepDirection::Backward,
        sw.settle_periods,
        sw.measure_periods,
    )?;
    write_file(out, "sweep.csv", &sweep_csv(&header, &[&forward, &backward]))?;
    write_file(out, "sweep.plt", &sweep_plot_script(&header, "sweep.csv"))
}

fn parse_state(text: &str) -> Result<MomentState> {
    let v = parse_floats(text, "--q0")?;
    if v.len() != 5 {
        bail!("--q0 must be m1,m2,s11,s12,s22");
    }
    Ok(MomentState::new(v[0], v[1], v[2], v[3], v[4]))
}

fn cmd_poincare(
    cfg: &RunConfig,
    out: &Path,
    q0: Option<&str>,
    iters: usize,
    transient: usize,
) -> Result<()> {
    let header = audit_header("poincare", cfg)?;
    let params = cfg.mde()?;
    let seed_state = match q0 {
        Some(text) => parse_state(text)?,
        None => MomentState::zero(),
    };
    let class = classify_attractor(&seed_state, &params, transient, iters, 1e-6);
    write_file(out, "poincare.csv", &poincare_csv(&header, &class.points))?;

    let mut report = header.clone();
    match class.kind {
        AttractorKind::Periodic(m) => {
            report.push_str("kind = periodic\n");
            report.push_str(&format!("period = {m}\n"));
            match find_fixed_point(class.points.last().unwrap(), m, &params) {
                Ok(fp) => report.push_str(&fixed_point_report("", &fp)),
                Err(e) => report.push_str(&format!("fixed_point = not converged ({e})\n")),
            }
        }
        AttractorKind::QuasiPeriodic => report.push_str("kind = quasi_periodic\n"),
        AttractorKind::Divergent => report.push_str("kind = divergent\n"),
    }
    write_file(out, "classification.txt", &report)
}

fn cmd_bif(cfg: &RunConfig, out: &Path) -> Result<()> {
    let header = audit_header("bif", cfg)?;
    let template = cfg.mde()?;
    let sw = &cfg.sweep;
    let ct = &cfg.continuation;
    let seed = detect_saddle_node(&template, sw.omega_lo, sw.omega_hi, 1, SeedStrategy::default())?;
    let curve = trace_bifurcation_set(&template, &seed, ct.c_lo, ct.c_hi, ct.delta_c)?;
    if let Some(tr) = curve.truncation_low {
        eprintln!("note: curve truncated descending at c = {} (target {})", tr.last_c, tr.target_c);
    }
    if let Some(tr) = curve.truncation_high {
        eprintln!("note: curve truncated ascending at c = {} (target {})", tr.last_c, tr.target_c);
    }
    write_file(out, "curve.csv", &curve_csv(&header, &curve))?;
    write_file(out, "overlay.plt", &overlay_plot_script(&header, "curve.csv", "mct.csv"))
}

fn cmd_gains_check(cfg: &RunConfig, out: &Path) -> Result<()> {
    let header = audit_header("gains-check", cfg)?;
    let mu = cfg.model.mu;
    let h = 1e-6;
    let mut rows = Vec::new();
    for (m1, s11) in noisesync::gains::comparison_grid() {
        let (a0, a1) = alpha_pair(m1, s11, mu);
        let oracle = quadrature_expectation(|x| dead_zone_force(x, mu, 1.0), m1, s11, 64);
        let fd = (alpha0(&GainInput { m1: m1 + h, s11, mu })?
            - alpha0(&GainInput { m1: m1 - h, s11, mu })?)
            / (2.0 * h);
        rows.push(GainsRow { m1, s11, alpha0: a0, alpha0_oracle: oracle, alpha1: a1, alpha1_fd: fd });
    }
    write_file(out, "gains.csv", &gains_csv(&header, &rows))
}

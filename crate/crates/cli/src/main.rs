use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dakit::harness::{
    rmse_states, run_experiment, sweep_cutoff, twin_experiment, write_observations_csv, Config, ExperimentConfig,
    Method,
};
use dakit::linearized::verify::{dot_product_test, taylor_test};
use dakit::linearized::{AdjointState, TangentState};
use dakit::stochastics::{SeededRng, Stream};
use dakit::swe::{integrate, read_snapshot, write_snapshot, StateField};

/// Shallow-water twin experiments with 4DVar and En4DVar.
#[derive(Parser)]
#[command(name = "dakit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration entry, `key=value`; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the truth (or a snapshot) over the observation schedule.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Initial state instead of the case truth.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Write the truth run, background and noisy observations.
    TwinGen {
        #[command(flatten)]
        common: Common,
    },
    /// Incremental 4DVar twin experiment.
    #[command(name = "assim-4dvar")]
    Assim4dvar {
        #[command(flatten)]
        common: Common,
    },
    /// Ensemble 4DVar twin experiment.
    AssimEn4dvar {
        #[command(flatten)]
        common: Common,
    },
    /// Dot-product and Taylor tests of the tangent and adjoint models.
    VerifyAdjoint {
        #[command(flatten)]
        common: Common,
    },
    /// RMSE between two `simulate` output directories.
    Metrics {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// En4DVar runs over a list of localization cutoffs (metres).
    SweepCutoff {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<f64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => Config::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::new(),
    };
    for kv in &common.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("override `{kv}` is not key=value");
        };
        c.set(k.trim(), v.trim());
    }
    if let Some(o) = &common.out {
        c.set("output.dir", o.display());
    }
    Ok(ExperimentConfig::from_config(&c)?)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.output.as_deref().context("no output directory: pass --out or set output.dir")
}

fn snapshot_to(path: &Path, s: &StateField) -> Result<()> {
    write_snapshot(BufWriter::new(File::create(path)?), s)?;
    Ok(())
}

fn simulate(common: &Common, init: Option<&Path>) -> Result<()> {
    let cfg = load(common)?;
    let dir = out_dir(&cfg)?;
    let schedule = cfg.schedule()?;
    let x0 = match init {
        Some(p) => read_snapshot(BufReader::new(File::open(p)?))?,
        None => twin_experiment(&cfg)?.truth0,
    };
    let end = *schedule.times.last().unwrap();
    let traj = integrate(&x0, cfg.t0, end, &schedule.times, cfg.cfl)?;
    fs::create_dir_all(dir)?;
    let mut times = BufWriter::new(File::create(dir.join("times.csv"))?);
    writeln!(times, "index,time")?;
    for (k, &t) in schedule.times.iter().enumerate() {
        snapshot_to(&dir.join(format!("state_{k:04}.swf")), traj.state_at(t)?)?;
        writeln!(times, "{k},{t}")?;
    }
    eprintln!("{} states written to {}", schedule.times.len(), dir.display());
    Ok(())
}

fn twin_gen(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let dir = out_dir(&cfg)?;
    let twin = twin_experiment(&cfg)?;
    fs::create_dir_all(dir)?;
    snapshot_to(&dir.join("truth_t0.swf"), &twin.truth0)?;
    snapshot_to(&dir.join("background_t0.swf"), &twin.background0)?;
    for (k, &t) in twin.schedule.times.iter().enumerate() {
        snapshot_to(&dir.join(format!("truth_{k:04}.swf")), twin.truth.state_at(t)?)?;
    }
    write_observations_csv(BufWriter::new(File::create(dir.join("observations.csv"))?), &twin.observations)?;
    fs::write(dir.join("manifest.txt"), cfg.to_config().to_string())?;
    eprintln!("{} observations at {} times", twin.observations.len(), twin.schedule.times.len());
    Ok(())
}

fn assimilate(common: &Common, method: Method) -> Result<()> {
    let mut cfg = load(common)?;
    cfg.method = method;
    let report = run_experiment(&cfg)?;
    let out = io::stdout();
    let mut out = out.lock();
    writeln!(out, "method = {method}")?;
    writeln!(out, "mean rmse_h = {:e}  (free run {:e})", report.rmse.mean_h(), report.free_run_rmse.mean_h())?;
    writeln!(
        out,
        "mean rmse_velocity = {:e}  (free run {:e})",
        report.rmse.mean_velocity(),
        report.free_run_rmse.mean_velocity()
    )?;
    if let Some(l) = &report.localization {
        writeln!(out, "localization rank = {}, retained energy = {}", l.rank(), l.retained_energy)?;
    }
    if let Some(dir) = &cfg.output {
        writeln!(out, "outputs in {}", dir.display())?;
    }
    Ok(())
}

fn verify_adjoint(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let twin = twin_experiment(&cfg)?;
    let x0 = twin.background0;
    let grid = *x0.grid();
    let traj = integrate(&x0, cfg.t0, cfg.tf, &[], cfg.cfl)?;
    let rng = SeededRng::new(cfg.seed);
    let mut r = rng.stream(Stream::Truth, 1);
    let scale_h = 1e-3;
    let n = grid.cells();
    let dx: Vec<f64> = (0..3 * n)
        .map(|k| r.standard_normal() * if k < n { scale_h } else { scale_h * 0.04 })
        .collect();
    let lambda: Vec<f64> = (0..3 * n).map(|_| r.standard_normal()).collect();
    let dx = TangentState::from_vec(grid, dx)?;
    let check = dot_product_test(&traj, &dx, &AdjointState::from_vec(grid, lambda)?)?;
    let eps: Vec<f64> = (0..8).map(|k| 10f64.powi(-k)).collect();
    let rows = taylor_test(&x0, cfg.t0, cfg.tf, cfg.cfl, &dx, &eps)?;
    let out = io::stdout();
    let mut out = out.lock();
    writeln!(out, "# dot-product relative residual over [{}, {}]: {:e}", cfg.t0, cfg.tf, check.relative_error())?;
    writeln!(out, "epsilon,residual")?;
    for row in rows {
        writeln!(out, "{},{:e}", row.epsilon, (row.ratio - 1.0).abs())?;
    }
    Ok(())
}

fn read_states(dir: &Path) -> Result<(Vec<f64>, Vec<StateField>)> {
    let text = fs::read_to_string(dir.join("times.csv")).with_context(|| format!("{}: no times.csv", dir.display()))?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for line in text.lines().skip(1) {
        let (k, t) = line.split_once(',').context("malformed times.csv")?;
        let k: usize = k.parse()?;
        times.push(t.parse::<f64>()?);
        states.push(read_snapshot(BufReader::new(File::open(dir.join(format!("state_{k:04}.swf")))?))?);
    }
    Ok((times, states))
}

fn metrics(estimate: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let (te, se) = read_states(estimate)?;
    let (tt, st) = read_states(truth)?;
    if te != tt {
        bail!("record times differ between {} and {}", estimate.display(), truth.display());
    }
    let series = rmse_states(&te, &se, &st)?;
    match out {
        Some(p) => series.write_csv(BufWriter::new(File::create(p)?))?,
        None => series.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn sweep(common: &Common, cutoffs: &[f64]) -> Result<()> {
    let cfg = load(common)?;
    let result = sweep_cutoff(&cfg, cutoffs)?;
    match &cfg.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            result.write_csv(BufWriter::new(File::create(dir.join("sweep.csv"))?))?;
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    if let Some(best) = result.best() {
        eprintln!(
            "best cutoff {} m: rmse_h {:e}, rmse_velocity {:e} (unlocalized {:e}, {:e})",
            best.cutoff.unwrap_or(f64::NAN),
            best.mean_h,
            best.mean_velocity,
            result.unlocalized.mean_h,
            result.unlocalized.mean_velocity
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { common, init } => simulate(&common, init.as_deref()),
        Command::TwinGen { common } => twin_gen(&common),
        Command::Assim4dvar { common } => assimilate(&common, Method::Var4d),
        Command::AssimEn4dvar { common } => assimilate(&common, Method::En4dvar),
        Command::VerifyAdjoint { common } => verify_adjoint(&common),
        Command::Metrics { estimate, truth, out } => metrics(&estimate, &truth, out.as_deref()),
        Command::SweepCutoff { common, cutoffs } => sweep(&common, &cutoffs),
    }
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};

use clap::Args;
use serde::Serialize;
use vortex_core::config_lab::recentre;
use vortex_core::point_vortex::{integrate_with, invariants, IntegrateOptions, Sampling, StepStats};

use crate::args::SourceArgs;
use crate::config::{ExperimentConfig, ReferenceSource};
use crate::error::{at, io_at, CliError, CliResult};
use crate::find::json_pretty;

#[derive(Args, Debug)]
pub struct PvRunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    /// Local error tolerance of the integrator.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Number of output intervals.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Abort when the closest pair comes within this fraction of its
    /// initial distance.
    #[arg(long)]
    pub collision_floor: Option<f64>,
    /// Scale the reference positions by √t0.
    #[arg(long)]
    pub scale_by_sqrt_t0: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Serialize)]
struct DriftSummary {
    t0: f64,
    t1: f64,
    rows: usize,
    step_stats: StepStats,
    /// `max |X(t) − X(t0)| / Σ|Ω||x|`.
    linear_impulse_drift: f64,
    /// `max |I(t) − I(t0)| / Σ|Ω||x|²`.
    angular_impulse_drift: f64,
    /// `max |E(t) − E(t0)| / max(|E(t0)|, ΣΩ²)`.
    energy_drift: f64,
}

pub fn run(a: PvRunArgs) -> CliResult<()> {
    let mut cfg = a.source.load()?;
    let pv = &mut cfg.pv;
    if let Some(v) = a.t0 {
        pv.t0 = v;
    }
    if let Some(v) = a.t1 {
        pv.t1 = v;
    }
    if let Some(v) = a.tol {
        pv.tol = v;
    }
    if let Some(v) = a.samples {
        pv.samples = v;
    }
    if let Some(v) = a.collision_floor {
        pv.collision_floor = v;
    }
    if let Some(v) = a.scale_by_sqrt_t0 {
        pv.scale_by_sqrt_t0 = v;
    }
    if let Some(o) = a.out {
        cfg.output.dir = o;
    }
    cfg.inline_reference()?;
    if cfg.pv.samples == 0 {
        return Err(CliError::validation("invalid_argument", "samples must be >= 1"));
    }
    execute(&cfg)
}

fn execute(cfg: &ExperimentConfig) -> CliResult<()> {
    let pv = &cfg.pv;
    let ReferenceSource::Inline(reference) = &cfg.reference else {
        unreachable!("reference is inlined before execution")
    };
    let mut system = reference.clone();
    if cfg.run.recentre_initial && system.total_circulation() != 0.0 {
        system = recentre(&system)?;
    }
    if pv.scale_by_sqrt_t0 {
        system = system.scaled(pv.t0.sqrt())?;
    }
    let opts = IntegrateOptions::new(pv.tol)
        .sampling(Sampling::Uniform(pv.samples))
        .collision_floor(pv.collision_floor);

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let echo = dir.join("run.json");
    fs::write(&echo, json_pretty(cfg)?).map_err(io_at(&echo))?;

    let traj = integrate_with(&system, pv.t0, pv.t1, &opts)?;

    let csv = dir.join("trajectory.csv");
    let mut w = BufWriter::new(File::create(&csv).map_err(io_at(&csv))?);
    traj.write_csv(&mut w).map_err(at(&csv))?;
    w.flush().map_err(io_at(&csv))?;

    let first = invariants(&traj.states[0])?;
    let (mut dx, mut di, mut de) = (0.0f64, 0.0f64, 0.0f64);
    for s in &traj.states {
        let inv = invariants(s)?;
        dx = dx.max((inv.linear_impulse - first.linear_impulse).norm());
        di = di.max((inv.angular_impulse - first.angular_impulse).abs());
        de = de.max((inv.energy - first.energy).abs());
    }
    let s0 = &traj.states[0];
    let weights = s0.positions().iter().zip(s0.circulations());
    let len_scale: f64 = weights.clone().map(|(p, c)| c.abs() * p.norm()).sum();
    let sq_scale: f64 = weights.map(|(p, c)| c.abs() * p.norm_sq()).sum();
    let e_scale = first
        .energy
        .abs()
        .max(s0.circulations().iter().map(|c| c * c).sum());
    let summary = DriftSummary {
        t0: pv.t0,
        t1: pv.t1,
        rows: traj.states.len(),
        step_stats: traj.step_stats,
        linear_impulse_drift: dx / len_scale.max(f64::MIN_POSITIVE),
        angular_impulse_drift: di / sq_scale.max(f64::MIN_POSITIVE),
        energy_drift: de / e_scale,
    };
    let text = json_pretty(&summary)?;
    let path = dir.join("drift.json");
    fs::write(&path, &text).map_err(io_at(&path))?;
    print!("{text}");
    Ok(())
}

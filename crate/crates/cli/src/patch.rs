use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use vortex_core::diagnostics::{bootstrap_row, BootstrapOptions};
use vortex_core::io::{read_checkpoint, write_checkpoint, write_snapshot};
use vortex_core::sim::RunStatus;
use vortex_core::{PointVortexSystem, Simulation, SimulationState};

use crate::args::{DiagFlags, RunFlags, SourceArgs};
use crate::config::{read_json, ExperimentConfig};
use crate::diag;
use crate::error::{at, io_at, CliError, CliResult};
use crate::find::json_pretty;

pub const ECHO_FILE: &str = "run.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Args, Debug)]
pub struct PatchRunArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub diag: DiagFlags,
    /// Pause after this many steps, leaving a checkpoint.
    #[arg(long)]
    pub stop_after: Option<u64>,
    /// Continue the run stored in this directory from its checkpoint.
    #[arg(long, conflicts_with_all = ["SourceArgs", "RunFlags", "DiagFlags"])]
    pub resume: Option<PathBuf>,
}

pub fn snapshot_path(dir: &Path, step: u64, ext: &str) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("snapshot_{step:08}.{ext}"))
}

pub fn run(a: PatchRunArgs) -> CliResult<()> {
    let (cfg, mut sim, fresh) = match &a.resume {
        Some(dir) => {
            let mut cfg: ExperimentConfig = read_json(&dir.join(ECHO_FILE))?;
            cfg.output.dir = dir.clone();
            let (ck, state) = read_checkpoint(dir).map_err(at(dir))?;
            if ck.config != cfg.run_config()? {
                return Err(CliError::validation(
                    "checkpoint_mismatch",
                    format!("checkpoint in {} does not match {ECHO_FILE}", dir.display()),
                ));
            }
            let sim = Simulation::resume(ck.config, state, ck.step)?;
            (cfg, sim, false)
        }
        None => {
            let mut cfg = a.source.load()?;
            a.run.apply(&mut cfg);
            a.diag.apply(&mut cfg)?;
            cfg.inline_reference()?;
            cfg.validate()?;
            let sim = Simulation::new(cfg.run_config()?)?;
            let dir = &cfg.output.dir;
            let snaps = dir.join(SNAPSHOT_DIR);
            fs::create_dir_all(&snaps).map_err(io_at(&snaps))?;
            let echo = dir.join(ECHO_FILE);
            fs::write(&echo, json_pretty(&cfg)?).map_err(io_at(&echo))?;
            (cfg, sim, true)
        }
    };
    let dir = cfg.output.dir.clone();
    let format = cfg.output.format;
    let reference = sim.reference().clone();
    let ks = cfg.diagnostics.ks.clone();
    let energy_stride = cfg.run.snapshot_every * cfg.diagnostics.energy_every;

    let mut observe = |step: u64, state: &SimulationState| -> vortex_core::Result<()> {
        let path = snapshot_path(&dir, step, format.extension());
        write_snapshot(&path, state, step, format)?;
        let opts = BootstrapOptions {
            ks: ks.clone(),
            energy: step % energy_stride == 0,
        };
        log_snapshot(step, state, &reference, &opts)
    };

    if fresh {
        observe(sim.step_index(), sim.state()).map_err(at(&dir))?;
        write_checkpoint(&dir, sim.config(), sim.state(), sim.step_index(), format).map_err(at(&dir))?;
    }
    let start = sim.step_index();
    let status = loop {
        let taken = sim.step_index() - start;
        let mut chunk = cfg.output.checkpoint_every;
        if let Some(limit) = a.stop_after {
            chunk = chunk.min(limit - taken.min(limit));
        }
        if chunk == 0 || sim.is_finished() {
            break if sim.is_finished() { RunStatus::Finished } else { RunStatus::Paused };
        }
        sim.advance(Some(chunk), false, &mut observe).map_err(|e| match e.class() {
            vortex_core::error::ErrorClass::Io => at(&dir)(e),
            _ => CliError::Core(e),
        })?;
        write_checkpoint(&dir, sim.config(), sim.state(), sim.step_index(), format).map_err(at(&dir))?;
    };

    if status == RunStatus::Paused {
        event(json!({"event": "paused", "step": sim.step_index(), "time": sim.state().time}));
        return Ok(());
    }
    let summary = diag::analyse(&dir, &dir, &cfg)?;
    event(json!({
        "event": "finished",
        "step": sim.step_index(),
        "time": sim.state().time,
        "snapshots": summary.snapshots,
    }));
    Ok(())
}

fn event(v: serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
}

fn log_snapshot(
    step: u64,
    state: &SimulationState,
    reference: &PointVortexSystem,
    opts: &BootstrapOptions,
) -> vortex_core::Result<()> {
    let row = bootstrap_row(state, reference, opts)?;
    let max_support = row.support.iter().copied().fold(0.0, f64::max);
    event(json!({
        "event": "snapshot",
        "step": step,
        "time": state.time,
        "I_x": row.i_x,
        "L": row.energy,
        "max_support": max_support,
    }));
    Ok(())
}

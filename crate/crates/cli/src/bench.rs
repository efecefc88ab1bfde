use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use vortex_core::config_lab::expanding_triple;
use vortex_core::sim::initial_state;
use vortex_core::{particle_velocities, RunConfig, TreeParams, VelocityBackend};

use crate::error::{io_at, CliError, CliResult};
use crate::find::json_pretty;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Total particle counts, split evenly over the three patches.
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub particles: Vec<usize>,
    #[arg(long, default_value_t = TreeParams::default().opening_angle)]
    pub opening_angle: f64,
    #[arg(long, default_value_t = TreeParams::default().expansion_order)]
    pub expansion_order: usize,
    #[arg(long, default_value_t = TreeParams::default().leaf_capacity)]
    pub leaf_capacity: usize,
    /// Timed evaluations per backend; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchRow {
    particles: usize,
    direct_seconds: f64,
    tree_seconds: f64,
    speedup: f64,
    /// `max |u_tree − u_direct| / max |u_direct|`.
    max_relative_error: f64,
}

pub fn run(a: BenchArgs) -> CliResult<()> {
    let params = TreeParams {
        opening_angle: a.opening_angle,
        leaf_capacity: a.leaf_capacity,
        expansion_order: a.expansion_order,
    };
    params.validate()?;
    if a.repeats == 0 || a.particles.iter().any(|&n| n < 3) {
        return Err(CliError::validation(
            "invalid_argument",
            "repeats must be >= 1 and particle counts >= 3",
        ));
    }
    let tree = VelocityBackend::Tree(params);
    let mut rows = Vec::new();
    println!("{:>10} {:>12} {:>12} {:>9} {:>12}", "particles", "direct_s", "tree_s", "speedup", "max_rel_err");
    for &total in &a.particles {
        let cfg = RunConfig::new(expanding_triple(), 100.0, 100.0, 1.0, total / 3);
        let state = initial_state(&cfg)?;
        let time = |backend: &VelocityBackend| -> CliResult<(f64, Vec<vortex_core::Vec2>)> {
            let mut best = f64::INFINITY;
            let mut out = Vec::new();
            for _ in 0..a.repeats {
                let t = Instant::now();
                out = particle_velocities(&state.clouds, backend)?;
                best = best.min(t.elapsed().as_secs_f64());
            }
            Ok((best, out))
        };
        let (td, ud) = time(&VelocityBackend::Direct)?;
        let (tt, ut) = time(&tree)?;
        let scale = ud.iter().map(|u| u.norm()).fold(0.0, f64::max);
        let err = ud.iter().zip(&ut).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        let row = BenchRow {
            particles: state.particle_count(),
            direct_seconds: td,
            tree_seconds: tt,
            speedup: td / tt,
            max_relative_error: err / scale,
        };
        println!(
            "{:>10} {:>12.4} {:>12.4} {:>9.2} {:>12.3e}",
            row.particles, row.direct_seconds, row.tree_seconds, row.speedup, row.max_relative_error
        );
        rows.push(row);
    }
    if let Some(p) = &a.json {
        fs::write(p, json_pretty(&rows)?).map_err(io_at(p))?;
    }
    Ok(())
}

//! Browser bindings: a point-vortex spiral, a stepping vortex-patch demo and
//! the configuration report. Everything takes and returns flat numeric arrays
//! or JSON strings so it also runs (and is tested) natively.

use wasm_bindgen::prelude::*;

use vortex_core::config_lab::{
    find_expanding_config_with, lemma_hypotheses, normalize_expansion, expanding_triple, recentre,
    self_similarity_fit, SolverOptions,
};
use vortex_core::diagnostics::center_of_mass;
use vortex_core::point_vortex::{integrate_with, IntegrateOptions, Sampling};
use vortex_core::{PointVortexSystem, RunConfig, Simulation, Vec2, VelocityBackend};

type JsResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn pairs(flat: &[f64]) -> JsResult<Vec<Vec2>> {
    if flat.len() % 2 != 0 {
        return Err(format!("expected x,y pairs, got {} numbers", flat.len()));
    }
    Ok(flat.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect())
}

fn flatten(points: impl IntoIterator<Item = Vec2>) -> Vec<f64> {
    points.into_iter().flat_map(|p| [p.x, p.y]).collect()
}

/// Integrates the point-vortex system with `circulations` and flat
/// `positions` (placed at time `t0`) and returns rows
/// `t, x1, y1, x2, y2, ...` for `samples + 1` equally spaced times.
/// Empty inputs select the three-vortex example, normalised to expand like
/// `√t` and scaled by `√t0`.
#[wasm_bindgen]
pub fn spiral_trajectory(
    circulations: Vec<f64>,
    positions: Vec<f64>,
    t0: f64,
    t1: f64,
    samples: usize,
) -> JsResult<Vec<f64>> {
    let system = if circulations.is_empty() {
        let y = recentre(&expanding_triple()).map_err(err)?;
        normalize_expansion(&y, 0.5).and_then(|y| y.scaled(t0.sqrt())).map_err(err)?
    } else {
        PointVortexSystem::new(pairs(&positions)?, circulations).map_err(err)?
    };
    let opts = IntegrateOptions::new(1e-10).sampling(Sampling::Uniform(samples.max(1)));
    let traj = integrate_with(&system, t0, t1, &opts).map_err(err)?;
    let mut out = Vec::with_capacity(traj.times.len() * (1 + 2 * system.len()));
    for (t, s) in traj.times.iter().zip(&traj.states) {
        out.push(*t);
        out.extend(flatten(s.positions().iter().copied()));
    }
    Ok(out)
}

/// Runs the configuration search and returns the report as JSON, with a
/// `passed` flag and the list of failed hypotheses.
#[wasm_bindgen]
pub fn configuration_report(circulations: Vec<f64>, seed: Vec<f64>) -> JsResult<String> {
    let circ: [f64; 3] = circulations
        .as_slice()
        .try_into()
        .map_err(|_| "need three circulations".to_string())?;
    let seed: [Vec2; 3] = pairs(&seed)?
        .try_into()
        .map_err(|_| "need three seed positions".to_string())?;
    let opts = SolverOptions::default();
    let found = find_expanding_config_with(circ, seed, &opts).map_err(err)?;
    let report = lemma_hypotheses(&found.system).map_err(err)?;
    let failures = report.failures(&opts.thresholds, &found.system);
    let v = serde_json::json!({
        "system": found.system,
        "iterations": found.iterations,
        "alpha": found.fit.alpha,
        "beta_rate": found.fit.beta_rate,
        "report": report,
        "passed": failures.is_empty(),
        "failures": failures,
    });
    Ok(v.to_string())
}

/// Three vortex patches around the example configuration, stepped on demand.
#[wasm_bindgen]
pub struct PatchDemo {
    sim: Simulation,
}

#[wasm_bindgen]
impl PatchDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(particles_per_patch: usize, radius: f64, t0: f64, t_end: f64) -> JsResult<PatchDemo> {
        let mut cfg = RunConfig::new(expanding_triple(), t0, t_end, radius, particles_per_patch);
        cfg.backend = VelocityBackend::Direct;
        Ok(PatchDemo {
            sim: Simulation::new(cfg).map_err(err)?,
        })
    }

    /// Takes up to `steps` steps and returns the new time.
    pub fn advance(&mut self, steps: u32) -> JsResult<f64> {
        for _ in 0..steps {
            if self.sim.is_finished() {
                break;
            }
            self.sim.step_once().map_err(err)?;
        }
        Ok(self.sim.state().time)
    }

    pub fn time(&self) -> f64 {
        self.sim.state().time
    }

    pub fn finished(&self) -> bool {
        self.sim.is_finished()
    }

    /// All particle positions, patch by patch.
    pub fn positions(&self) -> Vec<f64> {
        flatten(self.sim.state().clouds.iter().flat_map(|c| c.positions.iter().copied()))
    }

    pub fn patch_sizes(&self) -> Vec<u32> {
        self.sim.state().clouds.iter().map(|c| c.len() as u32).collect()
    }

    pub fn circulations(&self) -> Vec<f64> {
        self.sim.state().clouds.iter().map(|c| c.circulation()).collect()
    }

    pub fn centers(&self) -> JsResult<Vec<f64>> {
        let c = self
            .sim
            .state()
            .clouds
            .iter()
            .map(center_of_mass)
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        Ok(flatten(c))
    }

    /// Centres predicted by the point-vortex solution, `√t R(β log(t/t0)) y_i`.
    pub fn predicted_centers(&self) -> JsResult<Vec<f64>> {
        let y = self.sim.reference();
        let beta = self_similarity_fit(y).map_err(err)?.beta_rate;
        let t = self.sim.state().time;
        let angle = beta * (t / self.sim.config().t0).ln();
        Ok(flatten(y.positions().iter().map(|&p| p.rotate(angle) * t.sqrt())))
    }
}

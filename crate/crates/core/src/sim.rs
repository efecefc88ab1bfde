//! Three-patch runs: initial data from a reference configuration, stepping
//! with a fixed or automatic time step, snapshots and checkpoint resume.

use serde::{Deserialize, Serialize};

use crate::config_lab::{lemma_hypotheses, normalize_expansion, recentre, LemmaThresholds};
use crate::error::{Result, VortexError};
use crate::geometry::{min_separation, PointVortexSystem, SimulationState, Vec2};
use crate::kernels::VelocityBackend;
use crate::patch::{
    discretize_patch_with_blob, flatten_positions, rk4_positions, with_positions, PatchSpec,
    Profile,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed {
        dt: f64,
    },
    /// `min(0.02 d²/max|Ω|, 0.2 ρ²/max|Ω|)` with `d` the smallest distance
    /// between patch centres at `t0`. The first term can be rescaled by
    /// `t/t0` as the configuration expands; the second, which resolves the
    /// rotation of each patch about its own centre, is held fixed.
    Auto {
        #[serde(default)]
        rescale_with_time: bool,
    },
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Auto {
            rescale_with_time: false,
        }
    }
}

fn yes() -> bool {
    true
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Reference configuration `y_i, Ω_i`.
    pub reference: PointVortexSystem,
    pub t0: f64,
    pub t_end: f64,
    pub patch_radius: f64,
    #[serde(default)]
    pub profile: Profile,
    pub particles_per_patch: usize,
    /// Defaults to `0.2 ρ / √n`.
    #[serde(default)]
    pub blob_radius: Option<f64>,
    #[serde(default)]
    pub dt: DtPolicy,
    /// Snapshot every this many steps; the final state is always emitted.
    #[serde(default = "one")]
    pub snapshot_every: u64,
    /// Recentre the reference and then the discrete particle set so that
    /// `Σ γ x = 0` at `t0`.
    #[serde(default = "yes")]
    pub recentre_initial: bool,
    /// Rescale the reference so that its self-similar expansion rate is 1/2,
    /// which makes the centres follow `√t` exactly.
    #[serde(default = "yes")]
    pub normalize_expansion: bool,
    /// Require the three-vortex hypotheses on the reference.
    #[serde(default = "yes")]
    pub check_hypotheses: bool,
    #[serde(default)]
    pub backend: VelocityBackend,
    /// Abort when any particle moves faster than this.
    #[serde(default)]
    pub max_speed: Option<f64>,
}

impl RunConfig {
    /// Run with defaults for everything but the essentials.
    pub fn new(reference: PointVortexSystem, t0: f64, t_end: f64, patch_radius: f64, n: usize) -> Self {
        RunConfig {
            reference,
            t0,
            t_end,
            patch_radius,
            profile: Profile::Uniform,
            particles_per_patch: n,
            blob_radius: None,
            dt: DtPolicy::default(),
            snapshot_every: 1,
            recentre_initial: true,
            normalize_expansion: true,
            check_hypotheses: true,
            backend: VelocityBackend::Direct,
            max_speed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VortexError::InvalidArgument(m));
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return bad(format!("t0 = {} must be positive", self.t0));
        }
        if !(self.t_end >= self.t0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must not precede t0 = {}", self.t_end, self.t0));
        }
        if !(self.patch_radius > 0.0 && self.patch_radius.is_finite()) {
            return bad(format!("patch radius {} must be positive", self.patch_radius));
        }
        if self.particles_per_patch == 0 {
            return bad("particles_per_patch must be >= 1".into());
        }
        if let Some(d) = self.blob_radius {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("blob radius {d} must be non-negative"));
            }
        }
        if let DtPolicy::Fixed { dt } = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt = {dt} must be positive"));
            }
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be >= 1".into());
        }
        if let Some(v) = self.max_speed {
            if !(v > 0.0) {
                return bad(format!("max_speed = {v} must be positive"));
            }
        }
        if let VelocityBackend::Tree(p) = &self.backend {
            p.validate()?;
        }
        Ok(())
    }

    pub fn blob_radius(&self) -> f64 {
        self.blob_radius
            .unwrap_or(0.2 * self.patch_radius / (self.particles_per_patch as f64).sqrt())
    }

    /// The reference after the optional recentre and normalisation.
    pub fn prepared_reference(&self) -> Result<PointVortexSystem> {
        let mut y = self.reference.clone();
        if self.recentre_initial {
            y = recentre(&y)?;
        }
        if self.normalize_expansion {
            y = normalize_expansion(&y, 0.5)?;
        }
        if self.check_hypotheses {
            let report = lemma_hypotheses(&y)?;
            let failures = report.failures(&LemmaThresholds::default(), &y);
            if !failures.is_empty() {
                return Err(VortexError::InvalidSystem(failures.join("; ")));
            }
        }
        Ok(y)
    }

    fn outer_dt(&self, y: &PointVortexSystem) -> f64 {
        let max_circ = y.circulations().iter().fold(0.0f64, |m, c| m.max(c.abs()));
        match min_separation(y.positions()) {
            Some((d, _, _)) => 0.02 * self.t0 * d * d / max_circ,
            None => f64::INFINITY,
        }
    }

    fn inner_dt(&self, y: &PointVortexSystem) -> f64 {
        let max_circ = y.circulations().iter().fold(0.0f64, |m, c| m.max(c.abs()));
        0.2 * self.patch_radius * self.patch_radius / max_circ
    }
}

/// Initial particle state at `t0` with patch centres `√t0 y_i`.
pub fn initial_state(config: &RunConfig) -> Result<SimulationState> {
    config.validate()?;
    let y = config.prepared_reference()?;
    let scale = config.t0.sqrt();
    let blob = config.blob_radius();
    let mut clouds = Vec::with_capacity(y.len());
    for (&p, &circ) in y.positions().iter().zip(y.circulations()) {
        let spec = PatchSpec {
            center: p * scale,
            radius: config.patch_radius,
            circulation: circ,
            profile: config.profile,
            particles_per_patch: config.particles_per_patch,
        };
        clouds.push(discretize_patch_with_blob(&spec, blob)?);
    }
    let mut state = SimulationState {
        clouds,
        time: config.t0,
    };
    if config.recentre_initial {
        let total: f64 = state.clouds.iter().map(|c| c.circulation()).sum();
        if total == 0.0 {
            return Err(VortexError::ZeroCirculation);
        }
        let shift = state.linear_impulse() / total;
        if shift != Vec2::ZERO {
            for c in state.clouds.iter_mut() {
                for p in c.positions.iter_mut() {
                    *p -= shift;
                }
            }
        }
    }
    Ok(state)
}

/// Where a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Finished,
    /// Stopped after the requested number of steps.
    Paused,
}

pub struct Simulation {
    config: RunConfig,
    reference: PointVortexSystem,
    state: SimulationState,
    step: u64,
    outer_dt: f64,
    inner_dt: f64,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        let state = initial_state(&config)?;
        Self::assemble(config, state, 0)
    }

    /// Continues a run from a saved state taken after `step` steps.
    pub fn resume(config: RunConfig, state: SimulationState, step: u64) -> Result<Self> {
        config.validate()?;
        if state.clouds.len() != config.reference.len() {
            return Err(VortexError::InvalidArgument(format!(
                "checkpoint has {} clouds, configuration has {} vortices",
                state.clouds.len(),
                config.reference.len()
            )));
        }
        Self::assemble(config, state, step)
    }

    fn assemble(config: RunConfig, state: SimulationState, step: u64) -> Result<Self> {
        let reference = config.prepared_reference()?;
        let outer_dt = config.outer_dt(&reference);
        let inner_dt = config.inner_dt(&reference);
        Ok(Simulation {
            config,
            reference,
            state,
            step,
            outer_dt,
            inner_dt,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// The reference `y_i` actually used for the initial centres.
    pub fn reference(&self) -> &PointVortexSystem {
        &self.reference
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.state.time >= self.config.t_end
    }

    /// Nominal step at time `t`.
    pub fn dt_at(&self, t: f64) -> f64 {
        match self.config.dt {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Auto { rescale_with_time } => {
                let outer = if rescale_with_time {
                    self.outer_dt * (t / self.config.t0).max(1.0)
                } else {
                    self.outer_dt
                };
                outer.min(self.inner_dt)
            }
        }
    }

    fn next_time(&self) -> f64 {
        let t = self.state.time;
        let next = match self.config.dt {
            DtPolicy::Auto {
                rescale_with_time: true,
            } => t + self.dt_at(t),
            // Constant step: index-based so that times carry no accumulated drift.
            _ => self.config.t0 + (self.step + 1) as f64 * self.dt_at(t),
        };
        // Avoid a sliver of a final step.
        if next >= self.config.t_end || (self.config.t_end - next) < 1e-9 * (next - t) {
            self.config.t_end
        } else {
            next
        }
    }

    /// Advances one step and returns the particle speed bound seen.
    pub fn step_once(&mut self) -> Result<f64> {
        if self.is_finished() {
            return Ok(0.0);
        }
        let t_next = self.next_time();
        let dt = t_next - self.state.time;
        let x0 = flatten_positions(&self.state);
        let out = rk4_positions(&self.state.clouds, &x0, dt, &self.config.backend)?;
        let bound = self.config.max_speed.unwrap_or(f64::INFINITY);
        let finite = out.positions.iter().all(|p| p.is_finite());
        if !finite || !(out.max_speed <= bound) {
            return Err(VortexError::BlowUp {
                time: self.state.time,
                speed: if finite { out.max_speed } else { f64::INFINITY },
                bound,
            });
        }
        self.state = with_positions(&self.state, &out.positions, t_next);
        self.step += 1;
        Ok(out.max_speed)
    }

    /// Steps until `t_end` or until `max_steps` more steps have been taken.
    /// `observer` sees the current state first (when `emit_current` is set),
    /// then every snapshot, and always the final state.
    pub fn advance<F>(&mut self, max_steps: Option<u64>, emit_current: bool, mut observer: F) -> Result<RunStatus>
    where
        F: FnMut(u64, &SimulationState) -> Result<()>,
    {
        if emit_current {
            observer(self.step, &self.state)?;
        }
        let mut taken = 0u64;
        while !self.is_finished() {
            if max_steps.is_some_and(|m| taken >= m) {
                return Ok(RunStatus::Paused);
            }
            self.step_once()?;
            taken += 1;
            if self.step % self.config.snapshot_every == 0 || self.is_finished() {
                observer(self.step, &self.state)?;
            }
        }
        Ok(RunStatus::Finished)
    }
}

/// Runs to `t_end`, keeping every snapshot in memory.
pub fn run(config: RunConfig) -> Result<Vec<(f64, SimulationState)>> {
    let mut sim = Simulation::new(config)?;
    let mut out = Vec::new();
    sim.advance(None, true, |_, s| {
        out.push((s.time, s.clone()));
        Ok(())
    })?;
    Ok(out)
}

//! Flags shared between subcommands. Each one overrides the config-file field
//! of the same name.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use vortex_core::io::SnapshotFormat;
use vortex_core::{DtPolicy, Profile, TreeParams, VelocityBackend};

use crate::config::{ExperimentConfig, ReferenceSource};

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    serde_enum(s)
}

fn parse_format(s: &str) -> Result<SnapshotFormat, String> {
    serde_enum(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Direct,
    Tree,
}

#[derive(Args, Debug, Default)]
pub struct SourceArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference system JSON with `positions` and `circulations`.
    #[arg(long, conflicts_with = "example")]
    pub reference: Option<PathBuf>,
    /// Built-in reference: `triple` or `pair`.
    #[arg(long)]
    pub example: Option<String>,
}

impl SourceArgs {
    pub fn load(&self) -> crate::error::CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load_or_default(self.config.as_deref())?;
        if let Some(p) = &self.reference {
            cfg.reference = ReferenceSource::File { file: p.clone() };
        }
        if let Some(e) = &self.example {
            cfg.reference = ReferenceSource::Example { example: e.clone() };
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug, Default)]
pub struct RunFlags {
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Patch radius ρ.
    #[arg(long)]
    pub rho: Option<f64>,
    /// `uniform` or `radial-bump`.
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<Profile>,
    /// Particles per patch.
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub blob_radius: Option<f64>,
    /// Fixed time step; without it the step is chosen automatically.
    #[arg(long, conflicts_with = "dt_rescale")]
    pub dt: Option<f64>,
    /// Automatic step that grows with t/t0 as the configuration expands.
    #[arg(long)]
    pub dt_rescale: Option<bool>,
    #[arg(long)]
    pub snapshot_every: Option<u64>,
    #[arg(long)]
    pub recentre_initial: Option<bool>,
    #[arg(long)]
    pub normalize_expansion: Option<bool>,
    #[arg(long)]
    pub check_hypotheses: Option<bool>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Tree flags imply `--backend tree`.
    #[arg(long)]
    pub opening_angle: Option<f64>,
    #[arg(long)]
    pub expansion_order: Option<usize>,
    #[arg(long)]
    pub leaf_capacity: Option<usize>,
    #[arg(long)]
    pub max_speed: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Snapshot format: `csv` or `binary`.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<SnapshotFormat>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

impl RunFlags {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let r = &mut cfg.run;
        let p = &mut cfg.patches;
        set(&mut r.t0, self.t0);
        set(&mut r.t_end, self.t_end);
        set(&mut p.radius, self.rho);
        set(&mut p.profile, self.profile);
        set(&mut p.particles_per_patch, self.particles);
        if self.blob_radius.is_some() {
            p.blob_radius = self.blob_radius;
        }
        if let Some(dt) = self.dt {
            r.dt = DtPolicy::Fixed { dt };
        }
        if let Some(rescale_with_time) = self.dt_rescale {
            r.dt = DtPolicy::Auto { rescale_with_time };
        }
        set(&mut r.snapshot_every, self.snapshot_every);
        set(&mut r.recentre_initial, self.recentre_initial);
        set(&mut r.normalize_expansion, self.normalize_expansion);
        set(&mut r.check_hypotheses, self.check_hypotheses);
        let tree_flags =
            self.opening_angle.is_some() || self.expansion_order.is_some() || self.leaf_capacity.is_some();
        match (self.backend, tree_flags) {
            (Some(BackendKind::Direct), _) => r.backend = VelocityBackend::Direct,
            (Some(BackendKind::Tree), _) | (None, true) => {
                let mut tp = match r.backend {
                    VelocityBackend::Tree(tp) => tp,
                    VelocityBackend::Direct => TreeParams::default(),
                };
                set(&mut tp.opening_angle, self.opening_angle);
                set(&mut tp.expansion_order, self.expansion_order);
                set(&mut tp.leaf_capacity, self.leaf_capacity);
                r.backend = VelocityBackend::Tree(tp);
            }
            (None, false) => {}
        }
        if self.max_speed.is_some() {
            r.max_speed = self.max_speed;
        }
        set(&mut cfg.output.dir, self.out.clone());
        set(&mut cfg.output.format, self.format);
        set(&mut cfg.output.checkpoint_every, self.checkpoint_every);
    }
}

#[derive(Args, Debug, Default)]
pub struct DiagFlags {
    /// Even moment orders besides 2, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<u32>>,
    /// Concentration parameter δ in (0, 1).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Restrict extra exponent fits to `a,b`.
    #[arg(long, value_delimiter = ',')]
    pub fit_window: Option<Vec<f64>>,
    /// Evaluate the particle energy on every n-th snapshot.
    #[arg(long)]
    pub energy_every: Option<u64>,
}

impl DiagFlags {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> crate::error::CliResult<()> {
        let d = &mut cfg.diagnostics;
        set(&mut d.ks, self.ks.clone());
        set(&mut d.delta, self.delta);
        if let Some(w) = &self.fit_window {
            let &[a, b] = w.as_slice() else {
                return Err(crate::error::CliError::validation(
                    "invalid_window",
                    format!("--fit-window needs 2 values, got {}", w.len()),
                ));
            };
            d.fit_window = Some((a, b));
        }
        set(&mut d.energy_every, self.energy_every);
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

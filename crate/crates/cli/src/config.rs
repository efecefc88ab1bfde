//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vortex_core::config_lab::expanding_triple;
use vortex_core::io::SnapshotFormat;
use vortex_core::{DtPolicy, PointVortexSystem, Profile, RunConfig, Vec2, VelocityBackend};

use crate::error::{at, io_at, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the reference configuration comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSource {
    Inline(PointVortexSystem),
    /// JSON file holding `{"positions": .., "circulations": ..}`, relative to
    /// the config file.
    File { file: PathBuf },
    /// `triple` or `pair`.
    Example { example: String },
}

impl Default for ReferenceSource {
    fn default() -> Self {
        ReferenceSource::Example {
            example: "triple".into(),
        }
    }
}

impl ReferenceSource {
    pub fn resolve(&self, base: &Path) -> CliResult<PointVortexSystem> {
        match self {
            ReferenceSource::Inline(s) => Ok(s.clone()),
            ReferenceSource::File { file } => {
                let path = base.join(file);
                read_json(&path)
            }
            ReferenceSource::Example { example } => named_example(example),
        }
    }
}

pub fn named_example(name: &str) -> CliResult<PointVortexSystem> {
    match name {
        "triple" => Ok(expanding_triple()),
        "pair" => Ok(PointVortexSystem::new(
            vec![Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)],
            vec![1.0, 1.0],
        )?),
        other => Err(CliError::validation(
            "unknown_example",
            format!("unknown example {other:?} (expected triple or pair)"),
        )),
    }
}

fn d_t0() -> f64 {
    100.0
}
fn d_t_end() -> f64 {
    400.0
}
fn d_one() -> f64 {
    1.0
}
fn d_particles() -> usize {
    1000
}
fn d_snapshot_every() -> u64 {
    10
}
fn d_true() -> bool {
    true
}
fn d_ks() -> Vec<u32> {
    vec![4]
}
fn d_delta() -> f64 {
    0.5
}
fn d_u64_one() -> u64 {
    1
}
fn d_dir() -> PathBuf {
    PathBuf::from("out")
}
fn d_checkpoint_every() -> u64 {
    100
}
fn d_pv_t0() -> f64 {
    1.0
}
fn d_pv_t1() -> f64 {
    100.0
}
fn d_tol() -> f64 {
    1e-10
}
fn d_samples() -> usize {
    400
}
fn d_floor() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSettings {
    #[serde(default = "d_one")]
    pub radius: f64,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "d_particles")]
    pub particles_per_patch: usize,
    #[serde(default)]
    pub blob_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "d_t0")]
    pub t0: f64,
    #[serde(default = "d_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub dt: DtPolicy,
    #[serde(default = "d_snapshot_every")]
    pub snapshot_every: u64,
    #[serde(default = "d_true")]
    pub recentre_initial: bool,
    #[serde(default = "d_true")]
    pub normalize_expansion: bool,
    #[serde(default = "d_true")]
    pub check_hypotheses: bool,
    #[serde(default)]
    pub backend: VelocityBackend,
    #[serde(default)]
    pub max_speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSettings {
    /// Moment orders besides 2; each must be even.
    #[serde(default = "d_ks")]
    pub ks: Vec<u32>,
    /// Concentration parameter in `(0, 1)`.
    #[serde(default = "d_delta")]
    pub delta: f64,
    /// Extra exponent fits restricted to `[a, b]`.
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    /// Evaluate the particle energy on every n-th snapshot (and the last).
    #[serde(default = "d_u64_one")]
    pub energy_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default = "d_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: SnapshotFormat,
    /// Steps between checkpoints.
    #[serde(default = "d_checkpoint_every")]
    pub checkpoint_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvSettings {
    #[serde(default = "d_pv_t0")]
    pub t0: f64,
    #[serde(default = "d_pv_t1")]
    pub t1: f64,
    #[serde(default = "d_tol")]
    pub tol: f64,
    /// Output rows are `samples + 1` equally spaced times.
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_floor")]
    pub collision_floor: f64,
    /// Scale the reference by `√t0` before integrating.
    #[serde(default = "d_true")]
    pub scale_by_sqrt_t0: bool,
}

macro_rules! default_from_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                serde_json::from_str("{}").expect("all fields have defaults")
            }
        }
    )*};
}
default_from_serde!(PatchSettings, RunSettings, DiagSettings, OutputSettings, PvSettings);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub reference: ReferenceSource,
    #[serde(default)]
    pub patches: PatchSettings,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub diagnostics: DiagSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub pv: PvSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            reference: ReferenceSource::default(),
            patches: PatchSettings::default(),
            run: RunSettings::default(),
            diagnostics: DiagSettings::default(),
            output: OutputSettings::default(),
            pv: PvSettings::default(),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| at(path)(e.into()))
}

impl ExperimentConfig {
    /// Loads a config file and resolves a file reference against its
    /// directory, so the result no longer depends on the working directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::validation(
                "schema_version",
                format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version),
            ));
        }
        if let ReferenceSource::File { file } = &cfg.reference {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.reference = ReferenceSource::File { file: base.join(file) };
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Replaces the reference source by the system it names.
    pub fn inline_reference(&mut self) -> CliResult<()> {
        let sys = self.reference.resolve(Path::new("."))?;
        self.reference = ReferenceSource::Inline(sys);
        Ok(())
    }

    pub fn reference_system(&self) -> CliResult<PointVortexSystem> {
        self.reference.resolve(Path::new("."))
    }

    pub fn validate(&self) -> CliResult<()> {
        for &k in &self.diagnostics.ks {
            if k < 2 || k % 2 != 0 {
                return Err(CliError::validation(
                    "odd_moment_order",
                    format!("moment order k = {k} must be an even integer >= 2"),
                ));
            }
        }
        let d = self.diagnostics.delta;
        if !(d > 0.0 && d < 1.0) {
            return Err(CliError::validation("invalid_delta", format!("delta = {d} must lie in (0, 1)")));
        }
        if let Some((a, b)) = self.diagnostics.fit_window {
            if !(a > 0.0 && b > a) {
                return Err(CliError::validation(
                    "invalid_window",
                    format!("fit window [{a}, {b}] must satisfy 0 < a < b"),
                ));
            }
        }
        if self.diagnostics.energy_every == 0 {
            return Err(CliError::validation("invalid_argument", "energy_every must be >= 1"));
        }
        if self.output.checkpoint_every == 0 {
            return Err(CliError::validation("invalid_argument", "checkpoint_every must be >= 1"));
        }
        Ok(())
    }

    pub fn run_config(&self) -> CliResult<RunConfig> {
        let r = &self.run;
        let p = &self.patches;
        let cfg = RunConfig {
            reference: self.reference_system()?,
            t0: r.t0,
            t_end: r.t_end,
            patch_radius: p.radius,
            profile: p.profile,
            particles_per_patch: p.particles_per_patch,
            blob_radius: p.blob_radius,
            dt: r.dt,
            snapshot_every: r.snapshot_every,
            recentre_initial: r.recentre_initial,
            normalize_expansion: r.normalize_expansion,
            check_hypotheses: r.check_hypotheses,
            backend: r.backend,
            max_speed: r.max_speed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

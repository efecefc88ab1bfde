use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use vortex_core::diagnostics::{
    bootstrap_row, concentration_radius, growth_exponent, renormalization_check_samples,
    renormalization_sample, summarize, write_bootstrap_csv, BootstrapOptions, ConcentrationReport,
    DiagSummary, ExponentFit, RenormCheck, RenormSample,
};
use vortex_core::io::read_snapshot;
use vortex_core::SimulationState;

use crate::args::DiagFlags;
use crate::config::{read_json, ExperimentConfig, SCHEMA_VERSION};
use crate::error::{at, io_at, CliResult};
use crate::find::json_pretty;
use crate::patch::{ECHO_FILE, SNAPSHOT_DIR};

pub const TABLE_FILE: &str = "bootstrap.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Args, Debug)]
pub struct DiagArgs {
    /// Run directory written by `patch-run`.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub diag: DiagFlags,
    /// Where to write the table and summary; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct WindowFits {
    pub window: (f64, f64),
    pub support: Vec<Option<ExponentFit>>,
    pub i2: Vec<Option<ExponentFit>>,
}

#[derive(Debug, Serialize)]
pub struct RenormEntry {
    pub k: u32,
    pub check: Option<RenormCheck>,
    pub relative: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct DiagReport {
    pub schema_version: u32,
    pub snapshots: usize,
    pub ks: Vec<u32>,
    pub summary: DiagSummary,
    pub window_fits: Option<WindowFits>,
    /// Final snapshot, one entry per patch.
    pub concentration: Vec<ConcentrationReport>,
    /// Patch 0 against patch 1 over the whole run.
    pub renormalization: Vec<RenormEntry>,
}

pub fn run(a: DiagArgs) -> CliResult<()> {
    let mut cfg: ExperimentConfig = read_json(&a.run.join(ECHO_FILE))?;
    a.diag.apply(&mut cfg)?;
    cfg.validate()?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    let report = analyse(&a.run, &out, &cfg)?;
    print!("{}", json_pretty(&report)?);
    Ok(())
}

/// Stored snapshot files in step order.
pub fn snapshot_files(run_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let dir = run_dir.join(SNAPSHOT_DIR);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(io_at(&dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snapshot_") && (n.ends_with(".csv") || n.ends_with(".bin")))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(at(&dir)(vortex_core::VortexError::Format("no snapshot files".into())));
    }
    Ok(files)
}

pub fn analyse(run_dir: &Path, out_dir: &Path, cfg: &ExperimentConfig) -> CliResult<DiagReport> {
    let reference = cfg.run_config()?.prepared_reference()?;
    let d = &cfg.diagnostics;
    let files = snapshot_files(run_dir)?;
    let renorm_ks: Vec<u32> = std::iter::once(2).chain(d.ks.iter().copied()).collect();

    let mut rows = Vec::with_capacity(files.len());
    let mut first: Option<SimulationState> = None;
    let mut last: Option<SimulationState> = None;
    let mut samples: Vec<Vec<RenormSample>> = vec![Vec::new(); renorm_ks.len()];
    let mut renorm_err: Option<String> = None;
    for (i, path) in files.iter().enumerate() {
        let (state, _) = read_snapshot(path).map_err(at(path))?;
        let opts = BootstrapOptions {
            ks: d.ks.clone(),
            energy: i as u64 % d.energy_every == 0 || i + 1 == files.len(),
        };
        rows.push(bootstrap_row(&state, &reference, &opts)?);
        if state.clouds.len() >= 2 && renorm_err.is_none() {
            for (k, s) in renorm_ks.iter().zip(samples.iter_mut()) {
                match renormalization_sample(&state, 0, 1, *k) {
                    Ok(v) => s.push(v),
                    Err(e) => renorm_err = Some(e.to_string()),
                }
            }
        }
        if first.is_none() {
            first = Some(state);
        } else {
            last = Some(state);
        }
    }
    let first = first.expect("at least one snapshot");
    let last = last.as_ref().unwrap_or(&first);

    let summary = summarize(&rows, &reference, &first)?;
    let window_fits = d.fit_window.map(|w| {
        let fit = |get: &dyn Fn(&vortex_core::diagnostics::BootstrapRow) -> f64| {
            let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.time, get(r))).collect();
            growth_exponent(&series, Some(w)).ok()
        };
        let n = reference.len();
        WindowFits {
            window: w,
            support: (0..n).map(|i| fit(&|r| r.support[i])).collect(),
            i2: (0..n).map(|i| fit(&|r| r.i2[i])).collect(),
        }
    });
    let concentration = last
        .clouds
        .iter()
        .map(|c| concentration_radius(c, d.delta))
        .collect::<vortex_core::Result<Vec<_>>>()?;
    let renormalization = renorm_ks
        .iter()
        .zip(&samples)
        .map(|(&k, s)| {
            let res = match &renorm_err {
                Some(e) => Err(e.clone()),
                None => renormalization_check_samples(s).map_err(|e| e.to_string()),
            };
            match res {
                Ok(c) => RenormEntry {
                    k,
                    relative: Some(c.relative()),
                    check: Some(c),
                    error: None,
                },
                Err(e) => RenormEntry {
                    k,
                    check: None,
                    relative: None,
                    error: Some(e),
                },
            }
        })
        .collect();

    let report = DiagReport {
        schema_version: SCHEMA_VERSION,
        snapshots: files.len(),
        ks: d.ks.clone(),
        summary,
        window_fits,
        concentration,
        renormalization,
    };

    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let table = out_dir.join(TABLE_FILE);
    let mut w = BufWriter::new(File::create(&table).map_err(io_at(&table))?);
    write_bootstrap_csv(&mut w, &rows, &d.ks).map_err(at(&table))?;
    w.flush().map_err(io_at(&table))?;
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, json_pretty(&report)?).map_err(io_at(&path))?;
    Ok(report)
}

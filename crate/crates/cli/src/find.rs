use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use vortex_core::config_lab::{
    check_harmonic, find_expanding_config_with, lemma_hypotheses, expanding_triple, LemmaReport,
    SelfSimilarFit, SolverOptions,
};
use vortex_core::point_vortex::invariants;
use vortex_core::{PointVortexSystem, Vec2};

use crate::config::SCHEMA_VERSION;
use crate::error::{io_at, CliError, CliResult};

#[derive(Args, Debug)]
pub struct ConfigFindArgs {
    /// Three circulations, e.g. `-2,-2,1`.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub circulations: Option<Vec<f64>>,
    /// Seed positions `x1,y1,x2,y2,x3,y3`.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    pub seed: Option<Vec<f64>>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Convergence tolerance for the residual and the impulses.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Directory for `config.json`, `report.json` and `report.txt`.
    #[arg(long, default_value = "config_find")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct FindReport {
    schema_version: u32,
    circulations: [f64; 3],
    seed: [Vec2; 3],
    iterations: usize,
    system: PointVortexSystem,
    fit: SelfSimilarFit,
    lemma: LemmaReport,
    linear_impulse: Vec2,
    angular_impulse: f64,
    failures: Vec<String>,
    passed: bool,
}

fn triple(v: &[f64], what: &str) -> CliResult<[f64; 3]> {
    <[f64; 3]>::try_from(v).map_err(|_| {
        CliError::validation("invalid_argument", format!("{what} needs 3 values, got {}", v.len()))
    })
}

pub fn run(a: ConfigFindArgs) -> CliResult<()> {
    let example = expanding_triple();
    let circ = match &a.circulations {
        Some(v) => triple(v, "--circulations")?,
        None => triple(example.circulations(), "circulations")?,
    };
    let seed: [Vec2; 3] = match &a.seed {
        Some(v) if v.len() == 6 => [
            Vec2::new(v[0], v[1]),
            Vec2::new(v[2], v[3]),
            Vec2::new(v[4], v[5]),
        ],
        Some(v) => {
            return Err(CliError::validation(
                "invalid_argument",
                format!("--seed needs 6 values, got {}", v.len()),
            ))
        }
        None => [example.positions()[0], example.positions()[1], example.positions()[2]],
    };
    let mut opts = SolverOptions::default();
    if let Some(m) = a.max_iterations {
        opts.max_iterations = m;
    }
    if let Some(t) = a.tol {
        if !(t > 0.0) {
            return Err(CliError::validation("invalid_argument", format!("tol = {t} must be positive")));
        }
        opts.tol = t;
    }

    let found = find_expanding_config_with(circ, seed, &opts)?;
    let lemma = lemma_hypotheses(&found.system)?;
    let inv = invariants(&found.system)?;
    let failures = lemma.failures(&opts.thresholds, &found.system);
    let report = FindReport {
        schema_version: SCHEMA_VERSION,
        circulations: circ,
        seed,
        iterations: found.iterations,
        system: found.system.clone(),
        fit: found.fit,
        lemma,
        linear_impulse: inv.linear_impulse,
        angular_impulse: inv.angular_impulse,
        passed: failures.is_empty(),
        failures,
    };

    fs::create_dir_all(&a.out).map_err(io_at(&a.out))?;
    let write = |name: &str, text: String| -> CliResult<()> {
        let p = a.out.join(name);
        fs::write(&p, text).map_err(io_at(&p))
    };
    write("config.json", json_pretty(&report.system)?)?;
    write("report.json", json_pretty(&report)?)?;
    let text = human_report(&report);
    write("report.txt", text.clone())?;
    print!("{text}");

    if report.passed {
        Ok(())
    } else {
        Err(CliError::validation(
            "hypotheses_failed",
            format!("configuration fails: {}", report.failures.join("; ")),
        ))
    }
}

pub fn json_pretty<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))?;
    s.push('\n');
    Ok(s)
}

fn human_report(r: &FindReport) -> String {
    let mut s = String::new();
    let c = r.circulations;
    let _ = writeln!(s, "circulations      {} {} {}", c[0], c[1], c[2]);
    let _ = writeln!(s, "harmonic residual {:.3e} (check {:.3e})", r.lemma.harmonic_residual, check_harmonic(c));
    let _ = writeln!(s, "iterations        {}", r.iterations);
    for (i, p) in r.system.positions().iter().enumerate() {
        let _ = writeln!(s, "x{}                ({:+.15}, {:+.15})", i + 1, p.x, p.y);
    }
    let _ = writeln!(s, "X                 ({:.3e}, {:.3e})", r.linear_impulse.x, r.linear_impulse.y);
    let _ = writeln!(s, "I                 {:.3e}", r.angular_impulse);
    let _ = writeln!(s, "alpha             {:.12}", r.fit.alpha);
    let _ = writeln!(s, "beta rate         {:.12}", r.fit.beta_rate);
    let _ = writeln!(s, "fit residual      {:.3e}", r.fit.relative_residual());
    let _ = writeln!(s, "collinearity      {:.6e}", r.lemma.collinearity);
    let _ = writeln!(s, "equilaterality    {:.6e}", r.lemma.equilaterality);
    let _ = writeln!(s, "grad parallelism  {:.6e}", r.lemma.grad_parallelism);
    if r.passed {
        let _ = writeln!(s, "status            PASS");
    } else {
        let _ = writeln!(s, "status            FAIL");
        for f in &r.failures {
            let _ = writeln!(s, "  - {f}");
        }
    }
    s
}

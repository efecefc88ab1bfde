//! Quantities tracked along a patch run: centres, moments, the rotating
//! moment `f_{k,2}`, energy, concentration and power-law fits.
//!
//! Moments use `|γ|` weights so they are non-negative for either sign; the
//! signed version is `sign(Ω_i)` times ours.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config_lab::similarity_decompose;
use crate::error::{Result, VortexError};
use crate::geometry::{ParticleCloud, PointVortexSystem, SimulationState, Vec2};
use crate::point_vortex::{fmt_f64, invariants_of};

pub fn center_of_mass(cloud: &ParticleCloud) -> Result<Vec2> {
    let total = cloud.circulation();
    if total == 0.0 {
        return Err(VortexError::ZeroCirculation);
    }
    let mut m = Vec2::ZERO;
    for (p, g) in cloud.positions.iter().zip(&cloud.strengths) {
        m += *p * *g;
    }
    Ok(m / total)
}

fn check_even(k: u32) -> Result<()> {
    if k < 2 || k % 2 != 0 {
        return Err(VortexError::InvalidArgument(format!("moment order {k} must be even and >= 2")));
    }
    Ok(())
}

/// `Σ |γ_p| |x_p − x_c|^k` about the centre of mass.
pub fn moment(cloud: &ParticleCloud, k: u32) -> Result<f64> {
    check_even(k)?;
    let c = center_of_mass(cloud)?;
    let half = (k / 2) as i32;
    Ok(cloud
        .positions
        .iter()
        .zip(&cloud.strengths)
        .map(|(p, g)| g.abs() * (*p - c).norm_sq().powi(half))
        .sum())
}

/// Largest particle distance from the centre of mass.
pub fn support_radius(cloud: &ParticleCloud) -> Result<f64> {
    let c = center_of_mass(cloud)?;
    Ok(cloud.positions.iter().map(|p| (*p - c).norm()).fold(0.0, f64::max))
}

/// `cos 2θ` and `sin 2θ` for the counterclockwise angle from `a` to `v`,
/// premultiplied by `|v|^2` so that `v = 0` needs no special case.
fn double_angle(a: Vec2, a2: f64, v: Vec2) -> (f64, f64) {
    let (d, c) = (a.dot(v), a.cross(v));
    ((d * d - c * c) / a2, 2.0 * d * c / a2)
}

fn axis(from: Vec2, to: Vec2) -> Result<(Vec2, f64)> {
    let a = from - to;
    let a2 = a.norm_sq();
    if a2 == 0.0 || !a2.is_finite() {
        return Err(VortexError::DegenerateAxis);
    }
    Ok((a, a2))
}

/// `Σ |γ_p| (−cos 2θ_p) |x_p − c|^{k+2}` with `θ_p` the counterclockwise
/// angle from `axis_from − axis_to` to `x_p − c`.
pub fn f_moment(cloud: &ParticleCloud, axis_from: Vec2, axis_to: Vec2, k: u32) -> Result<f64> {
    check_even(k)?;
    let (a, a2) = axis(axis_from, axis_to)?;
    let c = center_of_mass(cloud)?;
    let half = (k / 2) as i32;
    Ok(cloud
        .positions
        .iter()
        .zip(&cloud.strengths)
        .map(|(p, g)| {
            let v = *p - c;
            let (cos2, _) = double_angle(a, a2, v);
            -g.abs() * cos2 * v.norm_sq().powi(half)
        })
        .sum())
}

/// One time sample of both sides of the moment renormalisation identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormSample {
    pub time: f64,
    /// `∫ f_{k,2} ω_1`.
    pub f: f64,
    /// `Ω_1 ∫ 2 sin(2θ) |x − x_1|^k ω_1`.
    pub g: f64,
    /// `I_{k,1}`.
    pub moment: f64,
}

pub fn renormalization_sample(
    state: &SimulationState,
    patch: usize,
    other: usize,
    k: u32,
) -> Result<RenormSample> {
    check_even(k)?;
    let get = |i: usize| {
        state.clouds.get(i).ok_or_else(|| {
            VortexError::InvalidArgument(format!("no patch {i} in a state of {}", state.clouds.len()))
        })
    };
    let cloud = get(patch)?;
    let c = center_of_mass(cloud)?;
    let (a, a2) = axis(c, center_of_mass(get(other)?)?)?;
    let omega = cloud.circulation();
    let half = (k / 2) as i32;
    let (mut f, mut g, mut m) = (0.0, 0.0, 0.0);
    for (p, w) in cloud.positions.iter().zip(&cloud.strengths) {
        let v = *p - c;
        let rk = v.norm_sq().powi(half - 1);
        let (cos2, sin2) = double_angle(a, a2, v);
        let w = w.abs();
        f -= w * cos2 * rk * v.norm_sq();
        g += w * 2.0 * sin2 * rk;
        m += w * rk * v.norm_sq();
    }
    Ok(RenormSample {
        time: state.time,
        f,
        g: omega * g,
        moment: m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormCheck {
    /// Centred difference of `∫ f_{k,2} ω_1` across the window.
    pub lhs: f64,
    /// Trapezoidal window average of the right-hand side.
    pub rhs: f64,
    pub residual: f64,
    /// Window average of `I_{k,1}/t`, the natural size of the error terms.
    pub moment_over_t: f64,
    pub window: (f64, f64),
}

impl RenormCheck {
    /// `residual / max(|lhs|, |rhs|, I_k/t)`.
    pub fn relative(&self) -> f64 {
        let s = self.lhs.abs().max(self.rhs.abs()).max(self.moment_over_t);
        if s == 0.0 {
            0.0
        } else {
            self.residual / s
        }
    }
}

pub fn renormalization_check_samples(samples: &[RenormSample]) -> Result<RenormCheck> {
    let n = samples.len();
    if n < 3 {
        return Err(VortexError::InsufficientSamples { need: 3, got: n });
    }
    let (t0, t1) = (samples[0].time, samples[n - 1].time);
    let h = (t1 - t0) / (n - 1) as f64;
    if !(h > 0.0) {
        return Err(VortexError::InvalidArgument("samples must advance in time".into()));
    }
    for (j, s) in samples.iter().enumerate() {
        if (s.time - (t0 + j as f64 * h)).abs() > 1e-6 * h {
            return Err(VortexError::InvalidArgument(
                "renormalization check needs a uniform cadence".into(),
            ));
        }
    }
    let trap = |val: &dyn Fn(&RenormSample) -> f64| -> f64 {
        let inner: f64 = samples[1..n - 1].iter().map(val).sum();
        (0.5 * (val(&samples[0]) + val(&samples[n - 1])) + inner) / (n - 1) as f64
    };
    let lhs = (samples[n - 1].f - samples[0].f) / (t1 - t0);
    let rhs = trap(&|s| s.g);
    Ok(RenormCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        moment_over_t: trap(&|s| s.moment / s.time),
        window: (t0, t1),
    })
}

/// The identity checked over a window of states taken at a uniform cadence.
pub fn renormalization_check(
    snapshots: &[SimulationState],
    patch: usize,
    other: usize,
    k: u32,
) -> Result<RenormCheck> {
    let samples = snapshots
        .iter()
        .map(|s| renormalization_sample(s, patch, other, k))
        .collect::<Result<Vec<_>>>()?;
    renormalization_check_samples(&samples)
}

/// Ordered-pair sum `Σ_{p≠q} γ_p γ_q log max(|x_p − x_q|, δ)` over all
/// particles, with `δ² = (δ_p² + δ_q²)/2`.
pub fn interaction_energy(state: &SimulationState) -> f64 {
    let mut x = Vec::new();
    let mut g = Vec::new();
    let mut d2 = Vec::new();
    for c in &state.clouds {
        for (p, w) in c.positions.iter().zip(&c.strengths) {
            x.push(*p);
            g.push(*w);
            d2.push(c.blob_radius * c.blob_radius);
        }
    }
    let row = |p: usize| -> f64 {
        let mut acc = 0.0;
        for q in p + 1..x.len() {
            let r2 = (x[p] - x[q]).norm_sq().max(0.5 * (d2[p] + d2[q]));
            acc += g[q] * 0.5 * r2.ln();
        }
        g[p] * acc
    };
    let idx: Vec<usize> = (0..x.len()).collect();
    #[cfg(feature = "parallel")]
    let rows: Vec<f64> = {
        use rayon::prelude::*;
        idx.par_iter().map(|&p| row(p)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<f64> = idx.iter().map(|&p| row(p)).collect();
    2.0 * rows.iter().sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub x_tilde: Vec2,
    /// Smallest radius about `x_tilde` leaving out at most `δ⁴ |Ω|`.
    pub radius: f64,
    pub delta: f64,
    /// `|x_tilde − x_c|`.
    pub offcenter: f64,
}

/// Searches over particle positions as candidate centres for the one that
/// needs the smallest radius.
pub fn concentration_radius(cloud: &ParticleCloud, delta: f64) -> Result<ConcentrationReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(VortexError::InvalidArgument(format!("delta {delta} must lie in (0, 1)")));
    }
    let allowance = delta.powi(4) * cloud.abs_circulation();
    let mut best: Option<(f64, Vec2)> = None;
    let mut buf: Vec<(f64, f64)> = Vec::with_capacity(cloud.len());
    for &cand in &cloud.positions {
        buf.clear();
        buf.extend(
            cloud
                .positions
                .iter()
                .zip(&cloud.strengths)
                .map(|(p, g)| ((*p - cand).norm_sq(), g.abs())),
        );
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Walk inwards while the mass outside stays within the allowance.
        let mut outside = 0.0;
        let mut j = buf.len() - 1;
        while j > 0 {
            let tie_start = {
                let mut s = j;
                while s > 0 && buf[s - 1].0 == buf[j].0 {
                    s -= 1;
                }
                s
            };
            let shell: f64 = buf[tie_start..=j].iter().map(|e| e.1).sum();
            if outside + shell > allowance || tie_start == 0 {
                break;
            }
            outside += shell;
            j = tie_start - 1;
        }
        let r = buf[j].0.sqrt();
        if best.is_none_or(|(b, _)| r < b) {
            best = Some((r, cand));
        }
    }
    let (radius, x_tilde) = best.expect("cloud is non-empty");
    Ok(ConcentrationReport {
        x_tilde,
        radius,
        delta,
        offcenter: (x_tilde - center_of_mass(cloud)?).norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares fit of `log value` against `log t` over the samples with
/// `t` inside `window` (all samples when `None`).
pub fn growth_exponent(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| window.is_none_or(|(lo, hi)| t >= lo && t <= hi))
        .collect();
    if pts.len() < 10 {
        return Err(VortexError::InsufficientSamples {
            need: 10,
            got: pts.len(),
        });
    }
    if pts.iter().any(|&(t, v)| !(t > 0.0 && v > 0.0)) {
        return Err(VortexError::InvalidArgument(
            "growth_exponent needs positive times and values".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(t, v)| (t.ln(), v.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(VortexError::InvalidArgument("all sample times are equal".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = logs.iter().map(|p| (p.1 - intercept - exponent * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let t_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        exponent,
        intercept,
        r_squared,
        window: (t_lo, t_hi),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub patch_id: usize,
    pub center: Vec2,
    /// `(k, I_k)` pairs.
    pub moments: Vec<(u32, f64)>,
    pub support_radius: f64,
}

pub fn moment_report(cloud: &ParticleCloud, patch_id: usize, ks: &[u32]) -> Result<MomentReport> {
    Ok(MomentReport {
        patch_id,
        center: center_of_mass(cloud)?,
        moments: ks.iter().map(|&k| Ok((k, moment(cloud, k)?))).collect::<Result<_>>()?,
        support_radius: support_radius(cloud)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    /// Extra moment orders besides 2.
    pub ks: Vec<u32>,
    /// Evaluate the O(N²) interaction energy.
    pub energy: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            ks: vec![4],
            energy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub time: f64,
    pub centers: Vec<Vec2>,
    pub beta: f64,
    pub gamma: f64,
    pub z: Vec<Vec2>,
    /// `max_i |z_i − y_i|`.
    pub deviation: f64,
    pub i2: Vec<f64>,
    /// `ik[j][i]` is `I_{ks[j], i}`.
    pub ik: Vec<Vec<f64>>,
    pub support: Vec<f64>,
    /// `Σ Ω_i |x_i|²` of the centres.
    pub i_x: f64,
    /// Point-vortex energy of the centres.
    pub e_centers: f64,
    /// Total `Σ γ x` over all particles.
    pub impulse: Vec2,
    pub energy: Option<f64>,
}

pub fn bootstrap_row(
    state: &SimulationState,
    reference: &PointVortexSystem,
    options: &BootstrapOptions,
) -> Result<BootstrapRow> {
    for &k in &options.ks {
        check_even(k)?;
    }
    let centers = state.clouds.iter().map(center_of_mass).collect::<Result<Vec<_>>>()?;
    let circ: Vec<f64> = state.clouds.iter().map(|c| c.circulation()).collect();
    let dec = similarity_decompose(&centers, reference)?;
    let i2 = state.clouds.iter().map(|c| moment(c, 2)).collect::<Result<Vec<_>>>()?;
    let ik = options
        .ks
        .iter()
        .map(|&k| state.clouds.iter().map(|c| moment(c, k)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let support = state.clouds.iter().map(support_radius).collect::<Result<Vec<_>>>()?;
    let inv = invariants_of(&centers, &circ)?;
    Ok(BootstrapRow {
        time: state.time,
        beta: dec.beta,
        gamma: dec.gamma,
        deviation: dec.deviation,
        z: dec.z,
        centers,
        i2,
        ik,
        support,
        i_x: inv.angular_impulse,
        e_centers: inv.energy,
        impulse: state.linear_impulse(),
        energy: options.energy.then(|| interaction_energy(state)),
    })
}

pub fn bootstrap_report(
    snapshots: &[SimulationState],
    reference: &PointVortexSystem,
    options: &BootstrapOptions,
) -> Result<Vec<BootstrapRow>> {
    snapshots.iter().map(|s| bootstrap_row(s, reference, options)).collect()
}

/// One row per snapshot; `energy` is empty where it was not evaluated.
pub fn write_bootstrap_csv<W: Write>(mut w: W, rows: &[BootstrapRow], ks: &[u32]) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.centers.len());
    let mut head = vec!["time".to_string()];
    for i in 0..n {
        head.push(format!("x{i}_x"));
        head.push(format!("x{i}_y"));
    }
    head.extend(["beta".into(), "gamma".into()]);
    for i in 0..n {
        head.push(format!("z{i}_x"));
        head.push(format!("z{i}_y"));
    }
    head.push("deviation".into());
    for i in 0..n {
        head.push(format!("I2_{i}"));
    }
    for k in ks {
        for i in 0..n {
            head.push(format!("I{k}_{i}"));
        }
    }
    for i in 0..n {
        head.push(format!("support_{i}"));
    }
    head.extend(["I_x".into(), "E_centers".into(), "X_x".into(), "X_y".into(), "L".into()]);
    writeln!(w, "{}", head.join(","))?;
    for r in rows {
        let mut f = vec![fmt_f64(r.time)];
        for c in &r.centers {
            f.push(fmt_f64(c.x));
            f.push(fmt_f64(c.y));
        }
        f.push(fmt_f64(r.beta));
        f.push(fmt_f64(r.gamma));
        for z in &r.z {
            f.push(fmt_f64(z.x));
            f.push(fmt_f64(z.y));
        }
        f.push(fmt_f64(r.deviation));
        f.extend(r.i2.iter().map(|v| fmt_f64(*v)));
        for col in &r.ik {
            f.extend(col.iter().map(|v| fmt_f64(*v)));
        }
        f.extend(r.support.iter().map(|v| fmt_f64(*v)));
        f.push(fmt_f64(r.i_x));
        f.push(fmt_f64(r.e_centers));
        f.push(fmt_f64(r.impulse.x));
        f.push(fmt_f64(r.impulse.y));
        f.push(r.energy.map(fmt_f64).unwrap_or_default());
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}

/// Headline numbers distilled from a bootstrap table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagSummary {
    pub t_first: f64,
    pub t_last: f64,
    /// `max_t |γ(t)/γ(t_first) / √(t/t_first) − 1|`.
    pub gamma_sqrt_t_error: f64,
    pub support_fits: Vec<Option<ExponentFit>>,
    pub i2_fits: Vec<Option<ExponentFit>>,
    pub max_deviation: f64,
    /// `max_deviation / min_{i≠j} |y_i − y_j|`.
    pub deviation_ratio: f64,
    /// `max_t |X(t) − X(t_first)| / Σ|γ||x|` at `t_first`.
    pub impulse_drift: f64,
    /// `max_t |L(t) − L(t_first)| / (|L(t_first)| (t_last − t_first))`.
    pub energy_drift_rate: Option<f64>,
}

pub fn summarize(
    rows: &[BootstrapRow],
    reference: &PointVortexSystem,
    first: &SimulationState,
) -> Result<DiagSummary> {
    let r0 = rows.first().ok_or(VortexError::InsufficientSamples { need: 1, got: 0 })?;
    let r1 = rows.last().expect("non-empty");
    let gamma_sqrt_t_error = rows
        .iter()
        .map(|r| (r.gamma / r0.gamma / (r.time / r0.time).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    let n = r0.centers.len();
    let fit = |get: &dyn Fn(&BootstrapRow) -> f64| -> Option<ExponentFit> {
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.time, get(r))).collect();
        growth_exponent(&series, None).ok()
    };
    let support_fits = (0..n).map(|i| fit(&|r| r.support[i])).collect();
    let i2_fits = (0..n).map(|i| fit(&|r| r.i2[i])).collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let y = reference.positions();
    let mut dmin = f64::INFINITY;
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            dmin = dmin.min((y[i] - y[j]).norm());
        }
    }
    let scale: f64 = first
        .clouds
        .iter()
        .flat_map(|c| c.positions.iter().zip(&c.strengths))
        .map(|(p, g)| g.abs() * p.norm())
        .sum();
    let impulse_drift = rows
        .iter()
        .map(|r| (r.impulse - r0.impulse).norm())
        .fold(0.0, f64::max)
        / scale.max(f64::MIN_POSITIVE);
    let energies: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.energy.map(|e| (r.time, e))).collect();
    let energy_drift_rate = match energies.as_slice() {
        [(ta, ea), .., (tb, _)] if tb > ta => Some(
            energies.iter().map(|(_, e)| (e - ea).abs()).fold(0.0, f64::max) / (ea.abs() * (tb - ta)),
        ),
        _ => None,
    };
    Ok(DiagSummary {
        t_first: r0.time,
        t_last: r1.time,
        gamma_sqrt_t_error,
        support_fits,
        i2_fits,
        max_deviation,
        deviation_ratio: max_deviation / dmin,
        impulse_drift,
        energy_drift_rate,
    })
}

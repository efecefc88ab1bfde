//! Exact N-point-vortex dynamics: right-hand side, conserved quantities and an
//! adaptive Dormand-Prince 5(4) integrator.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{kernel_term, min_separation, PointVortexSystem, Vec2};

/// Conserved quantities of a point-vortex system.
///
/// `energy` is the ordered double sum `Σ_{i≠j} Ω_i Ω_j log|x_i - x_j|`, so
/// every unordered pair is counted twice. `tilde_i` is the ordered pair sum
/// `Σ_i Σ_j Ω_i Ω_j |x_i - x_j|^2`, which equals `2 (ΣΩ) I - 2 |X|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub linear_impulse: Vec2,
    pub angular_impulse: f64,
    pub energy: f64,
    pub tilde_i: f64,
}

fn check_distinct(positions: &[Vec2]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if positions[i] == positions[j] {
                return Err(VortexError::CoincidentPositions { i, j });
            }
        }
    }
    Ok(())
}

/// Velocities `dx_i/dt = Σ_{j≠i} Ω_j perp(x_i - x_j) / |x_i - x_j|^2`.
pub fn rhs(system: &PointVortexSystem) -> Result<Vec<Vec2>> {
    check_distinct(system.positions())?;
    let mut out = vec![Vec2::ZERO; system.len()];
    velocities_into(system.positions(), system.circulations(), &mut out);
    Ok(out)
}

pub(crate) fn velocities_into(positions: &[Vec2], circulations: &[f64], out: &mut [Vec2]) {
    for (i, (&xi, vi)) in positions.iter().zip(out.iter_mut()).enumerate() {
        let mut acc = Vec2::ZERO;
        for (j, (&xj, &gj)) in positions.iter().zip(circulations).enumerate() {
            if i == j {
                continue;
            }
            let d = xi - xj;
            acc += kernel_term(d, d.norm_sq()) * gj;
        }
        *vi = acc;
    }
}

pub fn invariants(system: &PointVortexSystem) -> Result<InvariantReport> {
    invariants_of(system.positions(), system.circulations())
}

pub(crate) fn invariants_of(positions: &[Vec2], circulations: &[f64]) -> Result<InvariantReport> {
    check_distinct(positions)?;
    let mut linear = Vec2::ZERO;
    let mut angular = 0.0;
    for (&x, &g) in positions.iter().zip(circulations) {
        linear += x * g;
        angular += g * x.norm_sq();
    }
    let mut energy = 0.0;
    let mut tilde = 0.0;
    for (i, (&xi, &gi)) in positions.iter().zip(circulations).enumerate() {
        for (j, (&xj, &gj)) in positions.iter().zip(circulations).enumerate() {
            if i == j {
                continue;
            }
            let d = xi - xj;
            energy += gi * gj * d.norm().ln();
            tilde += gi * gj * d.norm_sq();
        }
    }
    Ok(InvariantReport {
        linear_impulse: linear,
        angular_impulse: angular,
        energy,
        tilde_i: tilde,
    })
}

/// Which states the integrator records.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every accepted step (plus the initial state).
    EveryStep,
    /// `n + 1` equally spaced times from `t0` to `t1` inclusive.
    Uniform(usize),
    /// Explicit increasing times inside `[t0, t1]`; `t0` is always recorded.
    Times(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    /// Local error tolerance, applied both absolutely and relative to `|y|`.
    pub tol: f64,
    pub sampling: Sampling,
    /// Abort when the minimum separation drops below this fraction of the
    /// initial minimum separation.
    pub collision_floor: f64,
    pub max_steps: usize,
    /// Upper bound on the step size.
    pub max_step: f64,
}

impl IntegrateOptions {
    pub fn new(tol: f64) -> Self {
        IntegrateOptions {
            tol,
            sampling: Sampling::EveryStep,
            collision_floor: 1e-6,
            max_steps: 10_000_000,
            max_step: f64::INFINITY,
        }
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn collision_floor(mut self, fraction: f64) -> Self {
        self.collision_floor = fraction;
        self
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_separation: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PointVortexSystem>,
    pub step_stats: StepStats,
}

impl Trajectory {
    pub fn last(&self) -> &PointVortexSystem {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Writes `t, x1x, x1y, ..., X_x, X_y, I, E` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}x,x{i}y"));
        }
        header.push_str(",X_x,X_y,I,E");
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let inv = invariants(s)?;
            let mut line = fmt_f64(*t);
            for p in s.positions() {
                line.push(',');
                line.push_str(&fmt_f64(p.x));
                line.push(',');
                line.push_str(&fmt_f64(p.y));
            }
            for v in [
                inv.linear_impulse.x,
                inv.linear_impulse.y,
                inv.angular_impulse,
                inv.energy,
            ] {
                line.push(',');
                line.push_str(&fmt_f64(v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// One parsed trajectory CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub linear_impulse: Vec2,
    pub angular_impulse: f64,
    pub energy: f64,
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| VortexError::Format("empty trajectory file".into()))??;
    let cols = header.split(',').count();
    if cols < 7 || (cols - 5) % 2 != 0 || !header.starts_with("t,") {
        return Err(VortexError::Format(format!("bad trajectory header: {header}")));
    }
    let n = (cols - 5) / 2;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| VortexError::Format(format!("bad number in trajectory: {e}")))?;
        if vals.len() != cols {
            return Err(VortexError::Format(format!(
                "expected {cols} columns, got {}",
                vals.len()
            )));
        }
        let positions = (0..n).map(|i| Vec2::new(vals[1 + 2 * i], vals[2 + 2 * i])).collect();
        rows.push(TrajectoryRow {
            t: vals[0],
            positions,
            linear_impulse: Vec2::new(vals[cols - 4], vals[cols - 3]),
            angular_impulse: vals[cols - 2],
            energy: vals[cols - 1],
        });
    }
    Ok(rows)
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th and embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

struct Stepper<'a> {
    circ: &'a [f64],
    k: [Vec<Vec2>; 7],
    stage: Vec<Vec2>,
    next: Vec<Vec2>,
}

impl<'a> Stepper<'a> {
    fn new(circ: &'a [f64]) -> Self {
        let n = circ.len();
        Stepper {
            circ,
            k: std::array::from_fn(|_| vec![Vec2::ZERO; n]),
            stage: vec![Vec2::ZERO; n],
            next: vec![Vec2::ZERO; n],
        }
    }

    /// Attempts one step from `y` (with `k[0] = f(y)` already filled) and
    /// returns the scaled error norm. The candidate is left in `self.next`
    /// and its derivative in `k[6]` (FSAL).
    fn attempt(&mut self, y: &[Vec2], h: f64, tol: f64) -> f64 {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, &a) in A[s][..s].iter().enumerate() {
                    if a != 0.0 {
                        acc += self.k[j][i] * (h * a);
                    }
                }
                self.stage[i] = acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            velocities_into(&self.stage, self.circ, &mut rest[0]);
        }
        // Stage 7 is evaluated at the 5th-order solution itself.
        self.next.copy_from_slice(&self.stage);
        let mut sum = 0.0;
        for i in 0..n {
            let mut err = Vec2::ZERO;
            for (s, &e) in E.iter().enumerate() {
                if e != 0.0 {
                    err += self.k[s][i] * (h * e);
                }
            }
            let sx = tol + tol * y[i].x.abs().max(self.next[i].x.abs());
            let sy = tol + tol * y[i].y.abs().max(self.next[i].y.abs());
            sum += (err.x / sx).powi(2) + (err.y / sy).powi(2);
        }
        (sum / (2 * n) as f64).sqrt()
    }
}

fn initial_step(y: &[Vec2], f0: &[Vec2], circ: &[f64], tol: f64, span: f64) -> f64 {
    let scale = |v: &Vec2| tol + tol * v.norm();
    let n = y.len() as f64;
    let d0 = (y.iter().map(|p| (p.norm() / scale(p)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0
        .iter()
        .zip(y)
        .map(|(f, p)| (f.norm() / scale(p)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<Vec2> = y.iter().zip(f0).map(|(&p, &f)| p + f * h0).collect();
    let mut f1 = vec![Vec2::ZERO; y.len()];
    velocities_into(&y1, circ, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .zip(y)
        .map(|((a, b), p)| ((*a - *b).norm() / scale(p)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates with default options, recording every accepted step.
pub fn integrate(system: &PointVortexSystem, t0: f64, t1: f64, tol: f64) -> Result<Trajectory> {
    integrate_with(system, t0, t1, &IntegrateOptions::new(tol))
}

pub fn integrate_with(
    system: &PointVortexSystem,
    t0: f64,
    t1: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(t0 >= 0.0 && t1 > t0 && t1.is_finite()) {
        return Err(VortexError::InvalidArgument(format!(
            "need 0 <= t0 < t1, got t0={t0}, t1={t1}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(VortexError::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let targets: Vec<f64> = match &opts.sampling {
        Sampling::EveryStep => vec![],
        Sampling::Uniform(n) => {
            let n = (*n).max(1);
            (1..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
        }
        Sampling::Times(ts) => {
            let mut prev = t0;
            for &t in ts {
                if !(t >= prev && t <= t1) {
                    return Err(VortexError::InvalidArgument(format!(
                        "sample time {t} out of order or outside [{t0}, {t1}]"
                    )));
                }
                prev = t;
            }
            ts.iter().copied().filter(|&t| t > t0).collect()
        }
    };

    let circ = system.circulations();
    let mut y = system.positions().to_vec();
    let n = y.len();
    let initial_sep = min_separation(&y).map_or(f64::INFINITY, |(d, _, _)| d);
    let floor = opts.collision_floor * initial_sep;

    let mut stats = StepStats {
        accepted: 0,
        rejected: 0,
        min_separation: initial_sep,
    };
    let mut times = vec![t0];
    let mut states = vec![system.clone()];

    if n == 1 {
        // A lone vortex does not move.
        let ts = if targets.is_empty() { vec![t1] } else { targets };
        for t in ts {
            times.push(t);
            states.push(system.clone());
        }
        return Ok(Trajectory {
            times,
            states,
            step_stats: stats,
        });
    }

    let mut stepper = Stepper::new(circ);
    velocities_into(&y, circ, &mut stepper.k[0]);
    let mut h = initial_step(&y, &stepper.k[0], circ, opts.tol, t1 - t0).min(opts.max_step);
    let mut t = t0;
    let mut err_prev: f64 = 1e-4;
    let mut next_target = 0usize;
    let mut last_rejected = false;

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(VortexError::StepSizeUnderflow { time: t, step: h });
        }
        let stop = targets.get(next_target).copied().unwrap_or(t1);
        let mut h_try = h.min(opts.max_step);
        let mut hits_stop = false;
        if t + h_try >= stop {
            h_try = stop - t;
            hits_stop = true;
        }
        if h_try <= 16.0 * f64::EPSILON * t.abs().max(1.0) && !hits_stop {
            return Err(VortexError::StepSizeUnderflow { time: t, step: h_try });
        }
        let err = stepper.attempt(&y, h_try, opts.tol);
        if !err.is_finite() || err > 1.0 {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-PI_ALPHA)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h = h_try * fac.min(1.0);
            last_rejected = true;
            if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(VortexError::StepSizeUnderflow { time: t, step: h });
            }
            continue;
        }
        stats.accepted += 1;
        t = if hits_stop { stop } else { t + h_try };
        y.copy_from_slice(&stepper.next);
        let (first, rest) = stepper.k.split_at_mut(1);
        first[0].copy_from_slice(&rest[5]);

        if let Some((d, i, j)) = min_separation(&y) {
            stats.min_separation = stats.min_separation.min(d);
            if d < floor || d == 0.0 {
                return Err(VortexError::NearCollision {
                    time: t,
                    i,
                    j,
                    separation: d,
                });
            }
        }

        let err = err.max(1e-10);
        let mut fac = SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
        fac = fac.clamp(FAC_MIN, FAC_MAX);
        if last_rejected {
            fac = fac.min(1.0);
        }
        last_rejected = false;
        err_prev = err;
        // A step shortened to land on a sample time should not shrink the next one.
        let proposal = h_try * fac;
        h = if hits_stop { h.max(proposal) } else { proposal }.min(opts.max_step);

        let record = match opts.sampling {
            Sampling::EveryStep => true,
            _ => hits_stop,
        };
        if record {
            times.push(t);
            states.push(system.with_positions(y.clone())?);
            if hits_stop {
                next_target += 1;
                // Coincident sample times are recorded once per request.
                while targets.get(next_target).is_some_and(|&s| s <= t) {
                    times.push(t);
                    states.push(system.with_positions(y.clone())?);
                    next_target += 1;
                }
            }
        } else if hits_stop {
            next_target += 1;
        }
    }

    Ok(Trajectory {
        times,
        states,
        step_stats: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys(p: &[(f64, f64)], c: &[f64]) -> PointVortexSystem {
        PointVortexSystem::new(p.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), c.to_vec())
            .unwrap()
    }

    #[test]
    fn rhs_single_vortex_is_still() {
        let v = rhs(&sys(&[(3.0, -1.0)], &[2.5])).unwrap();
        assert_eq!(v, vec![Vec2::ZERO]);
    }

    #[test]
    fn rhs_pair() {
        let v = rhs(&sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0])).unwrap();
        assert_eq!(v[0], Vec2::new(0.0, -0.5));
        assert_eq!(v[1], Vec2::new(0.0, 0.5));
    }

    #[test]
    fn invariants_pair() {
        let r = invariants(&sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0])).unwrap();
        assert_eq!(r.linear_impulse, Vec2::ZERO);
        assert_eq!(r.angular_impulse, 2.0);
        assert_relative_eq!(r.energy, 2.0 * 2f64.ln(), max_relative = 1e-15);
        assert_eq!(r.tilde_i, 8.0);
    }

    #[test]
    fn invariants_single() {
        let r = invariants(&sys(&[(3.0, 4.0)], &[2.0])).unwrap();
        assert_eq!(r.linear_impulse, Vec2::new(6.0, 8.0));
        assert_eq!(r.angular_impulse, 50.0);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn tilde_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p: Vec<Vec2> = (0..3)
                .map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let c: Vec<f64> = (0..3)
                .map(|_| loop {
                    let v: f64 = rng.gen_range(-3.0..3.0);
                    if v != 0.0 {
                        break v;
                    }
                })
                .collect();
            let s = PointVortexSystem::new(p, c).unwrap();
            let r = invariants(&s).unwrap();
            let other = 2.0 * s.total_circulation() * r.angular_impulse
                - 2.0 * r.linear_impulse.norm_sq();
            let scale = r.tilde_i.abs().max(other.abs()).max(1.0);
            assert!((r.tilde_i - other).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn rhs_scaling_covariance() {
        let s = sys(&[(-1.0, 0.3), (0.7, 0.1), (0.2, 1.9)], &[1.5, -0.7, 2.0]);
        let v1 = rhs(&s).unwrap();
        let v2 = rhs(&s.scaled(2.0).unwrap()).unwrap();
        for (a, b) in v1.iter().zip(&v2) {
            assert!((*a * 0.5 - *b).norm() <= 1e-13 * a.norm());
        }
    }

    #[test]
    fn co_rotating_pair_returns_after_one_period() {
        // Separation 2, total circulation 2: angular speed 2/4, period 4π.
        let s = sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0]);
        let tol = 1e-10;
        let tr = integrate(&s, 0.0, 4.0 * std::f64::consts::PI, tol).unwrap();
        for (a, b) in tr.last().positions().iter().zip(s.positions()) {
            assert!((*a - *b).norm() <= 10.0 * tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn time_reversal() {
        let s = sys(&[(-1.0, 0.3), (0.7, 0.1), (0.2, 1.9)], &[1.5, -0.7, 2.0]);
        let tol = 1e-10;
        let fwd = integrate(&s, 0.0, 3.0, tol).unwrap();
        let back = integrate(&fwd.last().reversed(), 0.0, 3.0, tol).unwrap();
        for (a, b) in back.last().positions().iter().zip(s.positions()) {
            assert!((*a - *b).norm() <= 100.0 * tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn uniform_sampling_hits_requested_times() {
        let s = sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0]);
        let tr = integrate_with(
            &s,
            1.0,
            2.0,
            &IntegrateOptions::new(1e-8).sampling(Sampling::Uniform(4)),
        )
        .unwrap();
        assert_eq!(tr.times, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn collision_is_reported() {
        // Floor above the initial separation: the first accepted step aborts.
        let s = sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0]);
        let err = integrate_with(&s, 0.0, 1.0, &IntegrateOptions::new(1e-8).collision_floor(1.5))
            .unwrap_err();
        assert!(matches!(err, VortexError::NearCollision { i: 0, j: 1, .. }));
    }

    #[test]
    fn rejects_bad_interval() {
        let s = sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0]);
        assert!(integrate(&s, 2.0, 1.0, 1e-8).is_err());
        assert!(integrate(&s, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = sys(&[(-1.0, 0.0), (1.0, 0.0)], &[1.0, 1.0]);
        let tr = integrate_with(&s, 0.0, 1.0, &IntegrateOptions::new(1e-8).sampling(Sampling::Uniform(3)))
            .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1x,x1y,x2x,x2y,X_x,X_y,I,E\n"));
        let rows = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 4);
        for (row, st) in rows.iter().zip(&tr.states) {
            assert_eq!(row.positions, st.positions());
        }
    }
}

//! Construction, verification and decomposition of self-similarly expanding
//! three-vortex configurations.
//!
//! A configuration `(y_i, Ω_i)` expands self-similarly when every velocity is
//! a fixed combination of dilation and rotation of its position,
//! `V_i = (α + β J) y_i` with `J` the quarter turn. With `X = 0` this needs
//! `Ω₁Ω₂ + Ω₁Ω₃ + Ω₂Ω₃ = 0` and `I = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{perp, PointVortexSystem, Vec2};
use crate::point_vortex::{invariants, invariants_of, rhs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarFit {
    /// Radial expansion rate; positive means expanding.
    pub alpha: f64,
    /// Angular rate.
    pub beta_rate: f64,
    /// `|Ω|`-weighted RMS of `|V_i - (α + βJ) x_i|`.
    pub residual: f64,
    /// `max_i |V_i|`, the natural scale for `residual`.
    pub max_speed: f64,
}

impl SelfSimilarFit {
    pub fn relative_residual(&self) -> f64 {
        if self.max_speed > 0.0 {
            self.residual / self.max_speed
        } else {
            self.residual
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub harmonic_residual: f64,
    pub sum_omega: f64,
    pub x_norm: f64,
    pub i_value: f64,
    /// `|(x₂-x₁) ∧ (x₃-x₁)| / (max pairwise distance)^2`; zero when collinear.
    pub collinearity: f64,
    /// `(max d - min d) / mean d` over pairwise distances; zero when equilateral.
    pub equilaterality: f64,
    pub grad_parallelism: f64,
    /// `(ΣΩ)^2 - ΣΩ^2 - 2 Σ_{i<j} Ω_iΩ_j`; zero up to rounding.
    pub square_identity_residual: f64,
}

/// Pass/fail thresholds for [`LemmaReport`]. Position-dependent quantities
/// are compared relative to the configuration's own scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaThresholds {
    pub harmonic_tol: f64,
    pub impulse_tol: f64,
    pub min_collinearity: f64,
    pub min_equilaterality: f64,
    pub min_grad_parallelism: f64,
}

impl Default for LemmaThresholds {
    fn default() -> Self {
        LemmaThresholds {
            harmonic_tol: 1e-12,
            impulse_tol: 1e-10,
            min_collinearity: 1e-6,
            min_equilaterality: 1e-6,
            min_grad_parallelism: 1e-8,
        }
    }
}

impl LemmaReport {
    /// Names of every failed hypothesis; empty when all hold.
    pub fn failures(&self, th: &LemmaThresholds, system: &PointVortexSystem) -> Vec<String> {
        let mut out = Vec::new();
        let omega_scale: f64 = system.circulations().iter().map(|c| c * c).sum();
        let len_scale: f64 = system
            .positions()
            .iter()
            .zip(system.circulations())
            .map(|(p, c)| c.abs() * p.norm())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let sq_scale: f64 = system
            .positions()
            .iter()
            .zip(system.circulations())
            .map(|(p, c)| c.abs() * p.norm_sq())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        if self.harmonic_residual.abs() > th.harmonic_tol * omega_scale {
            out.push(format!("harmonic condition: residual {:e}", self.harmonic_residual));
        }
        if self.sum_omega == 0.0 {
            out.push("total circulation is zero".into());
        }
        if self.x_norm > th.impulse_tol * len_scale {
            out.push(format!("linear impulse X nonzero: |X| = {:e}", self.x_norm));
        }
        if self.i_value.abs() > th.impulse_tol * sq_scale {
            out.push(format!("angular impulse I nonzero: I = {:e}", self.i_value));
        }
        if self.collinearity < th.min_collinearity {
            out.push(format!("collinear: metric {:e}", self.collinearity));
        }
        if self.equilaterality < th.min_equilaterality {
            out.push(format!("equilateral: metric {:e}", self.equilaterality));
        }
        if self.grad_parallelism < th.min_grad_parallelism {
            out.push(format!("energy and impulse gradients parallel: {:e}", self.grad_parallelism));
        }
        out
    }
}

/// Rotation angle, dilation and normalised centres relating a configuration
/// to a reference: `x_i = γ R_β z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDecomposition {
    pub beta: f64,
    pub gamma: f64,
    pub z: Vec<Vec2>,
    pub i_z: f64,
    pub e_z: f64,
    /// `max_i |z_i - y_i|`.
    pub deviation: f64,
}

pub fn check_harmonic(circulations: [f64; 3]) -> f64 {
    let [a, b, c] = circulations;
    a * b + a * c + b * c
}

fn circulations3(system: &PointVortexSystem) -> Result<[f64; 3]> {
    system.circulations().try_into().map_err(|_| {
        VortexError::InvalidArgument(format!("expected 3 vortices, got {}", system.len()))
    })
}

/// Translates the system so that its linear impulse vanishes.
pub fn recentre(system: &PointVortexSystem) -> Result<PointVortexSystem> {
    let total = system.total_circulation();
    if total == 0.0 {
        return Err(VortexError::ZeroCirculation);
    }
    let x = invariants(system)?.linear_impulse;
    system.translated(-(x / total))
}

/// Weighted least-squares fit of `V_i ≈ (α + βJ) x_i`.
pub fn self_similarity_fit(system: &PointVortexSystem) -> Result<SelfSimilarFit> {
    let v = rhs(system)?;
    let x = invariants(system)?.linear_impulse;
    let scale: f64 = system
        .positions()
        .iter()
        .zip(system.circulations())
        .map(|(p, c)| c.abs() * p.norm())
        .sum();
    if x.norm() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(VortexError::InvalidArgument(format!(
            "self-similarity fit needs X = 0, got |X| = {:e}",
            x.norm()
        )));
    }
    fit_velocities(system.positions(), system.circulations(), &v)
}

fn fit_velocities(pos: &[Vec2], circ: &[f64], vel: &[Vec2]) -> Result<SelfSimilarFit> {
    let mut s = 0.0;
    let mut a = 0.0;
    let mut b = 0.0;
    let mut wsum = 0.0;
    for ((&p, &c), &v) in pos.iter().zip(circ).zip(vel) {
        let w = c.abs();
        s += w * p.norm_sq();
        a += w * v.dot(p);
        b += w * v.dot(perp(p));
        wsum += w;
    }
    if s <= 0.0 {
        return Err(VortexError::DegenerateConfiguration(
            "all vortices at the origin".into(),
        ));
    }
    let alpha = a / s;
    let beta = b / s;
    let mut r2 = 0.0;
    for ((&p, &c), &v) in pos.iter().zip(circ).zip(vel) {
        r2 += c.abs() * (v - p * alpha - perp(p) * beta).norm_sq();
    }
    Ok(SelfSimilarFit {
        alpha,
        beta_rate: beta,
        residual: (r2 / wsum).sqrt(),
        max_speed: vel.iter().map(|v| v.norm()).fold(0.0, f64::max),
    })
}

/// Rescales an expanding configuration about the origin so that its radial
/// rate equals `target_alpha`. With `target_alpha = 1/2` the evolution from
/// `√t₀ y` is `√t R_φ(t) y`, i.e. `|x_i(t)|^2 = t |y_i|^2`.
pub fn normalize_expansion(system: &PointVortexSystem, target_alpha: f64) -> Result<PointVortexSystem> {
    let fit = self_similarity_fit(system)?;
    if !(fit.alpha * target_alpha > 0.0) {
        return Err(VortexError::DegenerateConfiguration(format!(
            "cannot rescale expansion rate {} to {}",
            fit.alpha, target_alpha
        )));
    }
    system.scaled((fit.alpha / target_alpha).sqrt())
}

/// Norm of the wedge product of the normalised gradients of `E` and `Ĩ`
/// with respect to the three pairwise distances (order 12, 13, 23).
pub fn gradient_parallelism(system: &PointVortexSystem) -> Result<f64> {
    let c = circulations3(system)?;
    let p = system.positions();
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut ge = [0.0; 3];
    let mut gi = [0.0; 3];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let d = (p[i] - p[j]).norm();
        if d == 0.0 {
            return Err(VortexError::DegenerateConfiguration(format!(
                "vortices {i} and {j} coincide"
            )));
        }
        ge[k] = c[i] * c[j] / d;
        gi[k] = 2.0 * c[i] * c[j] * d;
    }
    let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (ne, ni) = (norm(&ge), norm(&gi));
    let a = ge.map(|x| x / ne);
    let b = gi.map(|x| x / ni);
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    Ok(norm(&cross))
}

fn pairwise_distances(p: &[Vec2]) -> [f64; 3] {
    [(p[0] - p[1]).norm(), (p[0] - p[2]).norm(), (p[1] - p[2]).norm()]
}

pub fn lemma_hypotheses(system: &PointVortexSystem) -> Result<LemmaReport> {
    let c = circulations3(system)?;
    let p = system.positions();
    let inv = invariants(system)?;
    let d = pairwise_distances(p);
    let dmax = d.iter().copied().fold(f64::MIN, f64::max);
    let dmin = d.iter().copied().fold(f64::MAX, f64::min);
    let mean = (d[0] + d[1] + d[2]) / 3.0;
    let sum: f64 = c.iter().sum();
    let sum_sq: f64 = c.iter().map(|x| x * x).sum();
    let harmonic = check_harmonic(c);
    Ok(LemmaReport {
        harmonic_residual: harmonic,
        sum_omega: sum,
        x_norm: inv.linear_impulse.norm(),
        i_value: inv.angular_impulse,
        collinearity: ((p[1] - p[0]).cross(p[2] - p[0])).abs() / (dmax * dmax),
        equilaterality: (dmax - dmin) / mean,
        grad_parallelism: gradient_parallelism(system)?,
        square_identity_residual: sum * sum - (sum_sq + 2.0 * harmonic),
    })
}

/// Weighted complex Procrustes fit `γ e^{iβ} = Σ w ȳ x / Σ w |y|^2` with
/// `w_i = |Ω_i|`, followed by `z_i = x_i / (γ e^{iβ})`.
pub fn similarity_decompose(
    centers: &[Vec2],
    reference: &PointVortexSystem,
) -> Result<SimilarityDecomposition> {
    let y = reference.positions();
    let circ = reference.circulations();
    if centers.len() != y.len() {
        return Err(VortexError::InvalidArgument(format!(
            "{} centers for a reference of {} vortices",
            centers.len(),
            y.len()
        )));
    }
    let to_c = |v: Vec2| Complex64::new(v.x, v.y);
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    for ((&x, &yy), &w) in centers.iter().zip(y).zip(circ) {
        let w = w.abs();
        num += to_c(yy).conj() * to_c(x) * w;
        den += w * yy.norm_sq();
    }
    if den == 0.0 {
        return Err(VortexError::DegenerateConfiguration(
            "reference configuration has zero norm".into(),
        ));
    }
    let ratio = num / den;
    if ratio.norm() == 0.0 {
        return Err(VortexError::DegenerateConfiguration(
            "centers have zero projection on the reference".into(),
        ));
    }
    let z: Vec<Vec2> = centers
        .iter()
        .map(|&x| {
            let q = to_c(x) / ratio;
            Vec2::new(q.re, q.im)
        })
        .collect();
    let i_z = z.iter().zip(circ).map(|(p, c)| c * p.norm_sq()).sum();
    let e_z = invariants_of(&z, circ)?.energy;
    let deviation = z.iter().zip(y).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
    Ok(SimilarityDecomposition {
        beta: ratio.arg(),
        gamma: ratio.norm(),
        z,
        i_z,
        e_z,
        deviation,
    })
}

/// Settings for [`find_expanding_config_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Target for the self-similarity residual relative to `max |V_i|`, and
    /// for `|X|`, `|I|` relative to the configuration scale.
    pub tol: f64,
    pub thresholds: LemmaThresholds,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 50,
            tol: 1e-10,
            thresholds: LemmaThresholds::default(),
        }
    }
}

/// Outcome of the configuration search.
#[derive(Debug, Clone)]
pub struct FoundConfig {
    pub system: PointVortexSystem,
    pub iterations: usize,
    pub fit: SelfSimilarFit,
}

pub fn find_expanding_config(circulations: [f64; 3], seed: [Vec2; 3]) -> Result<PointVortexSystem> {
    find_expanding_config_with(circulations, seed, &SolverOptions::default()).map(|f| f.system)
}

struct Problem {
    circ: [f64; 3],
    dir: Vec2,
    len: f64,
}

impl Problem {
    fn positions(u: &DVector<f64>) -> [Vec2; 3] {
        [
            Vec2::new(u[0], u[1]),
            Vec2::new(u[2], u[3]),
            Vec2::new(u[4], u[5]),
        ]
    }

    /// Residual: weighted self-similarity defects (6), X (2), I (1), and the
    /// rotation and scale gauge (2). All terms are made dimensionless.
    fn residual(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let p = Self::positions(u);
        if p[0] == p[1] || p[0] == p[2] || p[1] == p[2] {
            return None;
        }
        let mut vel = [Vec2::ZERO; 3];
        crate::point_vortex::velocities_into(&p, &self.circ, &mut vel);
        let fit = fit_velocities(&p, &self.circ, &vel).ok()?;
        let wsum: f64 = self.circ.iter().map(|c| c.abs()).sum();
        let cmax = self.circ.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        // velocities scale like Ω/L
        let vscale = cmax / self.len;
        let mut r = DVector::zeros(11);
        for i in 0..3 {
            let w = (self.circ[i].abs() / wsum).sqrt();
            let d = (vel[i] - p[i] * fit.alpha - perp(p[i]) * fit.beta_rate) * (w / vscale);
            r[2 * i] = d.x;
            r[2 * i + 1] = d.y;
        }
        let mut x = Vec2::ZERO;
        let mut imp = 0.0;
        for i in 0..3 {
            x += p[i] * self.circ[i];
            imp += self.circ[i] * p[i].norm_sq();
        }
        r[6] = x.x / (cmax * self.len);
        r[7] = x.y / (cmax * self.len);
        r[8] = imp / (cmax * self.len * self.len);
        let e = p[1] - p[0];
        r[9] = e.cross(self.dir) / self.len;
        r[10] = (e.norm() - self.len) / self.len;
        Some(r)
    }

    fn jacobian(&self, u: &DVector<f64>, r0: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(r0.len(), u.len());
        let h = 1e-7 * self.len;
        for k in 0..u.len() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[k] += h;
            um[k] -= h;
            let rp = self.residual(&up)?;
            let rm = self.residual(&um)?;
            jac.set_column(k, &((rp - rm) / (2.0 * h)));
        }
        Some(jac)
    }
}

/// Gauss-Newton search (pseudo-inverse steps with backtracking) for a
/// self-similarly expanding configuration near `seed`.
///
/// The seed is first recentred so that `X = 0`. Rotation is pinned by keeping
/// `x₂ - x₁` parallel to the seed's, and scale by keeping `|x₁ - x₂|`.
pub fn find_expanding_config_with(
    circulations: [f64; 3],
    seed: [Vec2; 3],
    opts: &SolverOptions,
) -> Result<FoundConfig> {
    let h = check_harmonic(circulations);
    let omega_scale: f64 = circulations.iter().map(|c| c * c).sum();
    if h.abs() > opts.thresholds.harmonic_tol * omega_scale.max(1.0) {
        return Err(VortexError::HarmonicViolation { residual: h });
    }
    let seed_sys = PointVortexSystem::new(seed.to_vec(), circulations.to_vec())?;
    let seed_sys = recentre(&seed_sys)?;
    let sp = seed_sys.positions();
    let e = sp[1] - sp[0];
    let problem = Problem {
        circ: circulations,
        dir: e / e.norm(),
        len: e.norm(),
    };
    let mut u = DVector::from_iterator(6, sp.iter().flat_map(|p| [p.x, p.y]));
    let mut r = problem.residual(&u).ok_or_else(|| {
        VortexError::DegenerateConfiguration("seed has coincident vortices".into())
    })?;

    let mut iterations = 0;
    let converged = |r: &DVector<f64>| r.amax() <= 0.1 * opts.tol;
    while !converged(&r) {
        if iterations >= opts.max_iterations {
            return Err(VortexError::NonConvergence {
                iterations,
                residual: r.norm(),
            });
        }
        iterations += 1;
        let jac = problem.jacobian(&u, &r).ok_or_else(|| VortexError::NonConvergence {
            iterations,
            residual: r.norm(),
        })?;
        let svd = jac.svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        let step = svd
            .solve(&(-&r), cutoff)
            .map_err(|e| VortexError::DegenerateConfiguration(e.to_string()))?;
        let mut lambda = 1.0;
        let r_norm = r.norm();
        loop {
            let trial = &u + &step * lambda;
            if let Some(rt) = problem.residual(&trial) {
                if rt.norm() < r_norm || lambda < 1e-3 {
                    u = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Err(VortexError::NonConvergence {
                    iterations,
                    residual: r_norm,
                });
            }
        }
    }

    let positions = Problem::positions(&u).to_vec();
    let system = PointVortexSystem::new(positions, circulations.to_vec())?;
    let system = recentre(&system)?;
    let fit = self_similarity_fit(&system)?;
    let inv = invariants(&system)?;
    if fit.relative_residual() > opts.tol
        || inv.linear_impulse.norm() > opts.tol
        || inv.angular_impulse.abs() > opts.tol
    {
        return Err(VortexError::NonConvergence {
            iterations,
            residual: fit
                .relative_residual()
                .max(inv.linear_impulse.norm())
                .max(inv.angular_impulse.abs()),
        });
    }
    let report = lemma_hypotheses(&system)?;
    if report.collinearity < opts.thresholds.min_collinearity {
        return Err(VortexError::DegenerateConfiguration(format!(
            "converged to a collinear configuration (metric {:e})",
            report.collinearity
        )));
    }
    if report.equilaterality < opts.thresholds.min_equilaterality {
        return Err(VortexError::DegenerateConfiguration(format!(
            "converged to an equilateral configuration (metric {:e})",
            report.equilaterality
        )));
    }
    Ok(FoundConfig {
        system,
        iterations,
        fit,
    })
}

/// The three-vortex example with `Ω = (-2, -2, 1)` at `(-1,0), (1,0), (1,√2)`,
/// before recentring.
pub fn expanding_triple() -> PointVortexSystem {
    PointVortexSystem::new(
        vec![
            Vec2::new(-1.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, std::f64::consts::SQRT_2),
        ],
        vec![-2.0, -2.0, 1.0],
    )
    .expect("example configuration is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    fn equilateral(c: [f64; 3]) -> PointVortexSystem {
        let p = (0..3)
            .map(|k| Vec2::new(1.0, 0.0).rotate(2.0 * PI * k as f64 / 3.0))
            .collect();
        PointVortexSystem::new(p, c.to_vec()).unwrap()
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(check_harmonic([-2.0, -2.0, 1.0]), 0.0);
        assert_eq!(check_harmonic([1.0, 1.0, 1.0]), 3.0);
        assert_eq!(check_harmonic([1.0, 1.0, -0.5]), 0.0);
    }

    #[test]
    fn recentre_expanding_triple() {
        let s = recentre(&expanding_triple()).unwrap();
        let shift = s.positions()[0] - expanding_triple().positions()[0];
        assert_relative_eq!(shift.x, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(shift.y, SQRT_2 / 3.0, max_relative = 1e-15);
        let inv = invariants(&s).unwrap();
        assert!(inv.linear_impulse.norm() <= 1e-13);
        assert!(inv.angular_impulse.abs() <= 1e-12);
    }

    #[test]
    fn recentre_fixed_points() {
        let s = PointVortexSystem::new(vec![Vec2::new(5.0, 5.0)], vec![1.0]).unwrap();
        assert_eq!(recentre(&s).unwrap().positions()[0], Vec2::ZERO);
        let c = recentre(&expanding_triple()).unwrap();
        let cc = recentre(&c).unwrap();
        for (a, b) in c.positions().iter().zip(cc.positions()) {
            assert!((*a - *b).norm() <= 1e-13);
        }
        let zero = PointVortexSystem::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)], vec![1.0, -1.0])
            .unwrap();
        assert!(matches!(recentre(&zero), Err(VortexError::ZeroCirculation)));
    }

    #[test]
    fn fit_equilateral_is_rigid() {
        let f = self_similarity_fit(&equilateral([1.0, 1.0, 1.0])).unwrap();
        assert!(f.alpha.abs() <= 1e-12);
        assert!(f.residual <= 1e-12);
        assert!(f.beta_rate > 0.0);
    }

    #[test]
    fn fit_expanding_triple_expands() {
        let f = self_similarity_fit(&recentre(&expanding_triple()).unwrap()).unwrap();
        assert!(f.residual <= 1e-10 * f.max_speed);
        // α = √2/6 for this configuration, evaluated in closed form by hand.
        assert_relative_eq!(f.alpha, SQRT_2 / 6.0, max_relative = 1e-12);
        assert_relative_eq!(f.beta_rate, -5.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn fit_generic_is_not_self_similar() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = (0..3)
                .map(|_| Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let s = recentre(&PointVortexSystem::new(p, vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
            let d = pairwise_distances(s.positions());
            // Skip near-equilateral draws, which are relative equilibria.
            let spread = (d.iter().copied().fold(0.0, f64::max)
                - d.iter().copied().fold(f64::MAX, f64::min))
                / d.iter().sum::<f64>();
            if spread < 0.05 {
                continue;
            }
            let f = self_similarity_fit(&s).unwrap();
            assert!(f.residual > 0.01 * f.max_speed, "{f:?}");
        }
    }

    #[test]
    fn fit_requires_centred_system() {
        assert!(self_similarity_fit(&expanding_triple()).is_err());
    }

    #[test]
    fn fit_invariances() {
        let s = recentre(
            &PointVortexSystem::new(
                vec![Vec2::new(0.3, 1.0), Vec2::new(-1.2, 0.1), Vec2::new(0.7, -0.9)],
                vec![1.0, 2.0, -0.5],
            )
            .unwrap(),
        )
        .unwrap();
        let f = self_similarity_fit(&s).unwrap();
        let fr = self_similarity_fit(&s.rotated(0.7).unwrap()).unwrap();
        assert_relative_eq!(f.residual, fr.residual, max_relative = 1e-12);
        // Velocities scale like 1/λ, so residual·λ is invariant.
        let fs = self_similarity_fit(&s.scaled(2.0).unwrap()).unwrap();
        assert_relative_eq!(f.residual, 2.0 * fs.residual, max_relative = 1e-10);
    }

    #[test]
    fn normalize_sets_rate() {
        let s = recentre(&expanding_triple()).unwrap();
        let n = normalize_expansion(&s, 0.5).unwrap();
        let f = self_similarity_fit(&n).unwrap();
        assert_relative_eq!(f.alpha, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn find_from_triple_seed() {
        let s = recentre(&expanding_triple()).unwrap();
        let seed: [Vec2; 3] = s.positions().try_into().unwrap();
        let found = find_expanding_config_with([-2.0, -2.0, 1.0], seed, &SolverOptions::default())
            .unwrap();
        assert!(found.iterations <= 3);
        for (a, b) in found.system.positions().iter().zip(s.positions()) {
            assert!((*a - *b).norm() <= 1e-10);
        }
    }

    #[test]
    fn find_from_perturbed_seed() {
        let base = expanding_triple();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let seed: [Vec2; 3] = std::array::from_fn(|i| {
                let p = base.positions()[i];
                Vec2::new(
                    p.x * (1.0 + rng.gen_range(-0.05..0.05)),
                    p.y * (1.0 + rng.gen_range(-0.05..0.05)) + rng.gen_range(-0.05..0.05),
                )
            });
            let found =
                find_expanding_config_with([-2.0, -2.0, 1.0], seed, &SolverOptions::default())
                    .unwrap();
            let inv = invariants(&found.system).unwrap();
            assert!(inv.angular_impulse.abs() <= 1e-10);
            assert!(inv.linear_impulse.norm() <= 1e-10);
            assert!(found.fit.relative_residual() <= 1e-10);
            assert!(found.fit.alpha > 0.0);
        }
    }

    #[test]
    fn find_rejects_non_harmonic() {
        let seed = [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        match find_expanding_config([1.0, 1.0, 1.0], seed) {
            Err(VortexError::HarmonicViolation { residual }) => assert_eq!(residual, 3.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn find_rejects_equilateral() {
        let s = equilateral([1.0, 1.0, -0.5]);
        let seed: [Vec2; 3] = s.positions().try_into().unwrap();
        let err = find_expanding_config([1.0, 1.0, -0.5], seed).unwrap_err();
        assert!(matches!(err, VortexError::DegenerateConfiguration(_)), "{err:?}");
    }

    #[test]
    fn lemma_report_expanding_triple() {
        let s = recentre(&expanding_triple()).unwrap();
        let r = lemma_hypotheses(&s).unwrap();
        assert_eq!(r.harmonic_residual, 0.0);
        assert_eq!(r.sum_omega, -3.0);
        assert!(r.i_value.abs() <= 1e-12);
        assert!(r.collinearity > 0.0);
        assert!(r.equilaterality > 0.0);
        assert!(r.square_identity_residual.abs() <= 1e-12);
        assert!(r.failures(&LemmaThresholds::default(), &s).is_empty());
    }

    #[test]
    fn lemma_report_degenerate_shapes() {
        let eq = equilateral([1.0, 1.0, 1.0]);
        assert!(lemma_hypotheses(&eq).unwrap().equilaterality <= 1e-15);
        let line = PointVortexSystem::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(3.0, 0.0)],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        let r = lemma_hypotheses(&line).unwrap();
        assert_eq!(r.collinearity, 0.0);
        assert!(r.failures(&LemmaThresholds::default(), &line).iter().any(|f| f.starts_with("collinear")));
    }

    #[test]
    fn gradient_parallelism_cases() {
        for c in [[1.0, 1.0, 1.0], [-2.0, -2.0, 1.0], [0.3, -1.7, 2.2]] {
            assert!(gradient_parallelism(&equilateral(c)).unwrap() <= 1e-14);
        }
        let s = recentre(&expanding_triple()).unwrap();
        assert!(gradient_parallelism(&s).unwrap() > 0.1);
        let iso = PointVortexSystem::new(
            vec![Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 3.0)],
            vec![1.0, 1.0, 1.0],
        )
        .unwrap();
        assert!(gradient_parallelism(&iso).unwrap() > 0.0);
    }

    #[test]
    fn decompose_identity_and_similarity() {
        let y = recentre(&expanding_triple()).unwrap();
        let d = similarity_decompose(y.positions(), &y).unwrap();
        assert!(d.beta.abs() <= 1e-15);
        assert_relative_eq!(d.gamma, 1.0, max_relative = 1e-15);
        assert!(d.deviation <= 1e-15);

        let x: Vec<Vec2> = y.positions().iter().map(|p| p.rotate(FRAC_PI_4) * 2.0).collect();
        let d = similarity_decompose(&x, &y).unwrap();
        assert_relative_eq!(d.beta, FRAC_PI_4, max_relative = 1e-14);
        assert_relative_eq!(d.gamma, 2.0, max_relative = 1e-14);
        assert!(d.deviation <= 1e-14);
        assert!(d.i_z.abs() <= 1e-12);
    }

    proptest! {
        #[test]
        fn decompose_inverts_similarity(beta in 0.0..2.0 * PI, gamma in 0.5..4.0f64) {
            let y = recentre(&expanding_triple()).unwrap();
            let x: Vec<Vec2> = y.positions().iter().map(|p| p.rotate(beta) * gamma).collect();
            let d = similarity_decompose(&x, &y).unwrap();
            let dbeta = (d.beta - beta).rem_euclid(2.0 * PI);
            let dbeta = dbeta.min(2.0 * PI - dbeta);
            prop_assert!(dbeta <= 1e-10);
            prop_assert!((d.gamma - gamma).abs() <= 1e-10);
            for (xi, zi) in x.iter().zip(&d.z) {
                prop_assert!((zi.rotate(d.beta) * d.gamma - *xi).norm() <= 1e-12 * xi.norm().max(1.0));
            }
        }
    }
}

//! Vortex-blob discretization of patches and RK4 transport of the particles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{ParticleCloud, Sign, SimulationState, Vec2};
use crate::kernels::{self_velocities, Sources, VelocityBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Constant vorticity on the disk.
    #[default]
    Uniform,
    /// Vorticity proportional to `1 - r^2/ρ^2`.
    RadialBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub center: Vec2,
    pub radius: f64,
    pub circulation: f64,
    pub profile: Profile,
    pub particles_per_patch: usize,
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(VortexError::InvalidArgument(format!(
                "patch radius {} must be positive",
                self.radius
            )));
        }
        if self.particles_per_patch == 0 {
            return Err(VortexError::InvalidArgument("particles_per_patch must be >= 1".into()));
        }
        if self.circulation == 0.0 || !self.circulation.is_finite() {
            return Err(VortexError::InvalidArgument("patch circulation must be nonzero".into()));
        }
        if !self.center.is_finite() {
            return Err(VortexError::InvalidArgument("patch center must be finite".into()));
        }
        Ok(())
    }

    /// `0.2 ρ / √n`.
    pub fn default_blob_radius(&self) -> f64 {
        0.2 * self.radius / (self.particles_per_patch as f64).sqrt()
    }
}

/// Ring counts proportional to ring radius, each ring holding at least two
/// particles so that every ring is centred on the patch centre.
fn ring_counts(n: usize) -> Vec<usize> {
    let mut rings = ((n as f64 / PI).sqrt().round() as usize).max(1);
    loop {
        let total = (rings * rings) as f64;
        let mut counts: Vec<usize> = (1..=rings)
            .map(|k| ((n as f64) * (2 * k - 1) as f64 / total).floor() as usize)
            .collect();
        let mut rest = n - counts.iter().sum::<usize>();
        // Hand out the remainder from the outermost ring inwards.
        let mut k = rings;
        while rest > 0 {
            k = if k == 0 { rings } else { k };
            counts[k - 1] += 1;
            rest -= 1;
            k -= 1;
        }
        if rings == 1 || counts.iter().all(|&c| c >= 2) {
            return counts;
        }
        rings -= 1;
    }
}

/// Mass fraction of the annulus `[a, b]` for a disk of radius `rho`.
fn annulus_fraction(profile: Profile, a: f64, b: f64, rho: f64) -> f64 {
    match profile {
        Profile::Uniform => (b * b - a * a) / (rho * rho),
        Profile::RadialBump => {
            let m = |r: f64| r * r - r.powi(4) / (2.0 * rho * rho);
            (m(b) - m(a)) / m(rho)
        }
    }
}

/// Lays particles on concentric rings inside `B(center, ρ)` with ring
/// quadrature weights matching the profile. The last particle absorbs the
/// rounding so that the strengths sum to the circulation exactly.
pub fn discretize_patch(spec: &PatchSpec) -> Result<ParticleCloud> {
    discretize_patch_with_blob(spec, spec.default_blob_radius())
}

pub fn discretize_patch_with_blob(spec: &PatchSpec, blob_radius: f64) -> Result<ParticleCloud> {
    spec.validate()?;
    let n = spec.particles_per_patch;
    if n == 1 {
        return ParticleCloud::new(vec![spec.center], vec![spec.circulation], blob_radius);
    }
    let counts = ring_counts(n);
    let rings = counts.len();
    let dr = spec.radius / rings as f64;
    let mut positions = Vec::with_capacity(n);
    let mut strengths = Vec::with_capacity(n);
    for (k, &count) in counts.iter().enumerate() {
        let (a, b) = (k as f64 * dr, (k + 1) as f64 * dr);
        let r = 0.5 * (a + b);
        let weight = spec.circulation * annulus_fraction(spec.profile, a, b, spec.radius) / count as f64;
        let offset = if k % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..count {
            let angle = 2.0 * PI * (j as f64 + offset) / count as f64;
            let (s, c) = angle.sin_cos();
            positions.push(spec.center + Vec2::new(r * c, r * s));
            strengths.push(weight);
        }
    }
    let partial: f64 = strengths[..n - 1].iter().sum();
    strengths[n - 1] = spec.circulation - partial;
    let cloud = ParticleCloud::new(positions, strengths, blob_radius)?;
    debug_assert_eq!(cloud.sign, Sign::of(spec.circulation));
    Ok(cloud)
}

pub(crate) fn flatten_positions(state: &SimulationState) -> Vec<Vec2> {
    state.clouds.iter().flat_map(|c| c.positions.iter().copied()).collect()
}

/// Result of one RK4 step: new positions and the largest particle speed at
/// the start of the step.
pub(crate) struct StepOutcome {
    pub positions: Vec<Vec2>,
    pub max_speed: f64,
}

pub(crate) fn rk4_positions(
    clouds: &[ParticleCloud],
    x0: &[Vec2],
    dt: f64,
    backend: &VelocityBackend,
) -> Result<StepOutcome> {
    let eval = |x: &[Vec2]| self_velocities(&Sources::with_positions(clouds, x), backend);
    let shift = |k: &[Vec2], h: f64| -> Vec<Vec2> {
        x0.iter().zip(k).map(|(&p, &v)| p + v * h).collect()
    };
    let k1 = eval(x0)?;
    let k2 = eval(&shift(&k1, 0.5 * dt))?;
    let k3 = eval(&shift(&k2, 0.5 * dt))?;
    let k4 = eval(&shift(&k3, dt))?;
    let sixth = dt / 6.0;
    let positions = x0
        .iter()
        .enumerate()
        .map(|(i, &p)| p + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * sixth)
        .collect();
    let max_speed = k1.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(StepOutcome {
        positions,
        max_speed,
    })
}

pub(crate) fn with_positions(state: &SimulationState, flat: &[Vec2], time: f64) -> SimulationState {
    let mut clouds = state.clouds.clone();
    let mut off = 0;
    for c in clouds.iter_mut() {
        let n = c.positions.len();
        c.positions.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    SimulationState { clouds, time }
}

/// Classical RK4 on all particle positions; strengths are carried unchanged.
pub fn step(state: &SimulationState, dt: f64, backend: &VelocityBackend) -> Result<SimulationState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(VortexError::InvalidArgument(format!("time step {dt} must be positive")));
    }
    let x0 = flatten_positions(state);
    let out = rk4_positions(&state.clouds, &x0, dt, backend)?;
    Ok(with_positions(state, &out.positions, state.time + dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeParams;
    use approx::assert_relative_eq;

    fn spec(n: usize, profile: Profile, circ: f64) -> PatchSpec {
        PatchSpec {
            center: Vec2::new(2.0, -1.0),
            radius: 1.0,
            circulation: circ,
            profile,
            particles_per_patch: n,
        }
    }

    fn com(c: &ParticleCloud) -> Vec2 {
        let mut m = Vec2::ZERO;
        for (p, g) in c.positions.iter().zip(&c.strengths) {
            m += *p * *g;
        }
        m / c.circulation()
    }

    #[test]
    fn single_particle_patch() {
        let c = discretize_patch(&spec(1, Profile::Uniform, 1.5)).unwrap();
        assert_eq!(c.positions, vec![Vec2::new(2.0, -1.0)]);
        assert_eq!(c.strengths, vec![1.5]);
    }

    #[test]
    fn four_particle_patch() {
        let c = discretize_patch(&spec(4, Profile::Uniform, 1.0)).unwrap();
        assert_eq!(c.len(), 4);
        for &g in &c.strengths {
            assert_relative_eq!(g, 0.25, max_relative = 1e-15);
        }
        assert!((com(&c) - Vec2::new(2.0, -1.0)).norm() <= 1e-12);
    }

    #[test]
    fn large_patch_moments() {
        let s = spec(1000, Profile::Uniform, -2.0);
        let c = discretize_patch(&s).unwrap();
        assert_eq!(c.len(), 1000);
        assert_eq!(c.circulation(), -2.0);
        assert!(c.strengths.iter().all(|&g| g < 0.0));
        let center = com(&c);
        assert!((center - s.center).norm() <= 1e-12 * s.radius);
        assert!(c.positions.iter().all(|p| (*p - s.center).norm() <= s.radius));
        let i2: f64 = c
            .positions
            .iter()
            .zip(&c.strengths)
            .map(|(p, g)| g * (*p - center).norm_sq())
            .sum();
        // Uniform disk: Ω ρ^2 / 2.
        assert_relative_eq!(i2, -1.0, max_relative = 0.02);
    }

    #[test]
    fn circulation_exact_for_many_sizes() {
        for n in [2, 3, 5, 7, 10, 33, 100, 257, 999, 1000, 4096] {
            for profile in [Profile::Uniform, Profile::RadialBump] {
                for circ in [1.0, -2.0, 0.3, 1.0 / 3.0] {
                    let c = discretize_patch(&spec(n, profile, circ)).unwrap();
                    assert_eq!(c.len(), n);
                    assert_eq!(c.circulation(), circ, "n={n} {profile:?} {circ}");
                    assert!(c.strengths.iter().all(|&g| g * circ > 0.0));
                    assert!((com(&c) - Vec2::new(2.0, -1.0)).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn bump_profile_is_more_concentrated() {
        let u = discretize_patch(&spec(2000, Profile::Uniform, 1.0)).unwrap();
        let b = discretize_patch(&spec(2000, Profile::RadialBump, 1.0)).unwrap();
        let i2 = |c: &ParticleCloud| -> f64 {
            c.positions
                .iter()
                .zip(&c.strengths)
                .map(|(p, g)| g * (*p - Vec2::new(2.0, -1.0)).norm_sq())
                .sum()
        };
        // ∫(1-r²) r³ dr / ∫(1-r²) r dr = 1/3 for the bump profile.
        assert_relative_eq!(i2(&b), 1.0 / 3.0, max_relative = 0.01);
        assert!(i2(&b) < i2(&u));
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(10, Profile::Uniform, 1.0);
        s.radius = 0.0;
        assert!(discretize_patch(&s).is_err());
        let mut s = spec(10, Profile::Uniform, 1.0);
        s.particles_per_patch = 0;
        assert!(discretize_patch(&s).is_err());
        assert!(discretize_patch(&spec(10, Profile::Uniform, 0.0)).is_err());
    }

    fn state(clouds: Vec<ParticleCloud>) -> SimulationState {
        SimulationState { clouds, time: 0.0 }
    }

    #[test]
    fn lone_particle_stays_put() {
        let c = ParticleCloud::new(vec![Vec2::new(0.3, 0.4)], vec![2.0], 0.0).unwrap();
        let s = step(&state(vec![c.clone()]), 0.1, &VelocityBackend::Direct).unwrap();
        assert_eq!(s.clouds[0].positions, c.positions);
        assert_eq!(s.time, 0.1);
    }

    #[test]
    fn symmetric_pair_keeps_radius() {
        // Two unit vortices at distance 2 rotate rigidly about the origin.
        let c = ParticleCloud::new(vec![Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)], vec![1.0, 1.0], 0.0)
            .unwrap();
        for dt in [0.2, 0.1] {
            let mut s = state(vec![c.clone()]);
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                s = step(&s, dt, &VelocityBackend::Direct).unwrap();
                for p in &s.clouds[0].positions {
                    worst = worst.max((p.norm() - 1.0).abs());
                }
            }
            // Per-step radial error is O(dt^5) with angular speed 1/2.
            assert!(worst <= 10.0 * (0.5 * dt).powi(5), "dt={dt}: {worst:e}");
        }
    }

    #[test]
    fn step_preserves_strengths_and_counts() {
        let clouds = vec![
            discretize_patch(&spec(50, Profile::Uniform, 1.0)).unwrap(),
            discretize_patch(&PatchSpec {
                center: Vec2::new(-3.0, 0.5),
                ..spec(40, Profile::RadialBump, -0.5)
            })
            .unwrap(),
        ];
        let s0 = state(clouds);
        for backend in [VelocityBackend::Direct, VelocityBackend::Tree(TreeParams::default())] {
            let s1 = step(&s0, 0.05, &backend).unwrap();
            for (a, b) in s0.clouds.iter().zip(&s1.clouds) {
                assert_eq!(a.strengths, b.strengths);
                assert_eq!(a.len(), b.len());
                assert_eq!(a.circulation().to_bits(), b.circulation().to_bits());
            }
        }
        let s1 = step(&s0, 0.05, &VelocityBackend::Direct).unwrap();
        let drift = (s1.linear_impulse() - s0.linear_impulse()).norm();
        assert!(drift <= 1e-13, "{drift:e}");
    }

    #[test]
    fn rejects_bad_dt() {
        let c = ParticleCloud::new(vec![Vec2::ZERO], vec![1.0], 0.0).unwrap();
        assert!(step(&state(vec![c]), 0.0, &VelocityBackend::Direct).is_err());
    }
}

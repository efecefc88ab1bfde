//! Planar vectors, the Biot-Savart kernel and the state types shared by the
//! point-vortex engine and the blob simulation.
//!
//! Orientation convention: `perp(x, y) = (-y, x)`, a counterclockwise quarter
//! turn. A positive circulation therefore induces counterclockwise motion.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Scalar cross product `self.x * other.y - self.y * other.x`.
    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn perp(self) -> Vec2 {
        perp(self)
    }

    /// Counterclockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Counterclockwise quarter turn.
#[inline]
pub fn perp(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Velocity induced at `x` by a unit vortex at `y`, regularised by an
/// algebraic blob of radius `delta`: `perp(x - y) / (|x - y|^2 + delta^2)`.
pub fn kernel(x: Vec2, y: Vec2, delta: f64) -> Result<Vec2> {
    let d = x - y;
    let r2 = d.x * d.x + d.y * d.y + delta * delta;
    if r2 == 0.0 {
        return Err(VortexError::SingularKernel);
    }
    Ok(kernel_term(d, r2))
}

/// `perp(d) / r2` written so that negating `d` negates the result bitwise.
#[inline(always)]
pub(crate) fn kernel_term(d: Vec2, r2: f64) -> Vec2 {
    let inv = 1.0 / r2;
    Vec2::new(-d.y * inv, d.x * inv)
}

/// Minimum pairwise distance and the pair attaining it.
pub fn min_separation(positions: &[Vec2]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let d = (positions[i] - positions[j]).norm();
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, i, j));
            }
        }
    }
    best
}

/// N ideal point vortices. Circulations are in rescaled-time units, so the
/// `2π` of the physical Biot-Savart law is absorbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct PointVortexSystem {
    positions: Vec<Vec2>,
    circulations: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SystemRepr {
    circulations: Vec<f64>,
    positions: Vec<Vec2>,
}

impl TryFrom<SystemRepr> for PointVortexSystem {
    type Error = VortexError;
    fn try_from(r: SystemRepr) -> Result<Self> {
        PointVortexSystem::new(r.positions, r.circulations)
    }
}

impl From<PointVortexSystem> for SystemRepr {
    fn from(s: PointVortexSystem) -> Self {
        SystemRepr {
            circulations: s.circulations,
            positions: s.positions,
        }
    }
}

impl PointVortexSystem {
    pub fn new(positions: Vec<Vec2>, circulations: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(VortexError::InvalidSystem("no vortices".into()));
        }
        if positions.len() != circulations.len() {
            return Err(VortexError::InvalidSystem(format!(
                "{} positions but {} circulations",
                positions.len(),
                circulations.len()
            )));
        }
        if let Some(i) = circulations.iter().position(|&c| c == 0.0 || !c.is_finite()) {
            return Err(VortexError::InvalidSystem(format!(
                "circulation {i} must be finite and nonzero"
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(VortexError::InvalidSystem(format!("position {i} is not finite")));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if positions[i] == positions[j] {
                    return Err(VortexError::CoincidentPositions { i, j });
                }
            }
        }
        Ok(PointVortexSystem {
            positions,
            circulations,
        })
    }

    /// Rebuild with new positions, keeping the circulations.
    pub fn with_positions(&self, positions: Vec<Vec2>) -> Result<Self> {
        PointVortexSystem::new(positions, self.circulations.clone())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn circulations(&self) -> &[f64] {
        &self.circulations
    }

    pub fn total_circulation(&self) -> f64 {
        self.circulations.iter().sum()
    }

    /// Uniform scaling of all positions about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.with_positions(self.positions.iter().map(|&p| p * factor).collect())
    }

    pub fn rotated(&self, angle: f64) -> Result<Self> {
        self.with_positions(self.positions.iter().map(|p| p.rotate(angle)).collect())
    }

    pub fn translated(&self, shift: Vec2) -> Result<Self> {
        self.with_positions(self.positions.iter().map(|&p| p + shift).collect())
    }

    /// Same positions, circulations negated; evolving this forward retraces
    /// the original system backward in time.
    pub fn reversed(&self) -> Self {
        PointVortexSystem {
            positions: self.positions.clone(),
            circulations: self.circulations.iter().map(|c| -c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn of(value: f64) -> Sign {
        if value < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Blob discretization of one signed patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub positions: Vec<Vec2>,
    pub strengths: Vec<f64>,
    pub blob_radius: f64,
    pub sign: Sign,
}

impl ParticleCloud {
    pub fn new(positions: Vec<Vec2>, strengths: Vec<f64>, blob_radius: f64) -> Result<Self> {
        if positions.len() != strengths.len() {
            return Err(VortexError::InvalidArgument(format!(
                "{} positions but {} strengths",
                positions.len(),
                strengths.len()
            )));
        }
        if positions.is_empty() {
            return Err(VortexError::InvalidArgument("empty particle cloud".into()));
        }
        if !(blob_radius >= 0.0 && blob_radius.is_finite()) {
            return Err(VortexError::InvalidArgument(format!(
                "blob radius {blob_radius} must be finite and non-negative"
            )));
        }
        let sign = Sign::of(strengths.iter().sum());
        if strengths.iter().any(|&g| !g.is_finite() || g * sign.as_f64() < 0.0) {
            return Err(VortexError::InvalidArgument(
                "cloud strengths must be finite and share one sign".into(),
            ));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(VortexError::InvalidArgument("non-finite particle position".into()));
        }
        Ok(ParticleCloud {
            positions,
            strengths,
            blob_radius,
            sign,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Signed total circulation, summed in particle order.
    pub fn circulation(&self) -> f64 {
        self.strengths.iter().sum()
    }

    pub fn abs_circulation(&self) -> f64 {
        self.strengths.iter().map(|g| g.abs()).sum()
    }
}

/// The Euler patch state: one cloud per patch plus time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub clouds: Vec<ParticleCloud>,
    pub time: f64,
}

impl SimulationState {
    pub fn particle_count(&self) -> usize {
        self.clouds.iter().map(|c| c.len()).sum()
    }

    /// Strength-weighted sum `Σ γ_q x_q` over all particles.
    pub fn linear_impulse(&self) -> Vec2 {
        let mut acc = Vec2::ZERO;
        for cloud in &self.clouds {
            for (&p, &g) in cloud.positions.iter().zip(&cloud.strengths) {
                acc += p * g;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perp_examples() {
        assert_eq!(perp(Vec2::new(1.0, 0.0)), Vec2::new(0.0, 1.0));
        assert_eq!(perp(Vec2::ZERO), Vec2::ZERO);
        assert_eq!(perp(Vec2::new(3.0, -2.0)), Vec2::new(2.0, 3.0));
    }

    #[test]
    fn kernel_examples() {
        let o = Vec2::ZERO;
        assert_eq!(kernel(Vec2::new(1.0, 0.0), o, 0.0).unwrap(), Vec2::new(0.0, 1.0));
        assert_eq!(kernel(o, o, 1.0).unwrap(), Vec2::ZERO);
        assert_eq!(kernel(Vec2::new(2.0, 0.0), o, 0.0).unwrap(), Vec2::new(0.0, 0.5));
    }

    #[test]
    fn kernel_singular() {
        let p = Vec2::new(0.3, -1.0);
        assert!(matches!(kernel(p, p, 0.0), Err(VortexError::SingularKernel)));
    }

    #[test]
    fn system_validation() {
        let p = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert!(PointVortexSystem::new(p.clone(), vec![1.0]).is_err());
        assert!(PointVortexSystem::new(p.clone(), vec![1.0, 0.0]).is_err());
        assert!(PointVortexSystem::new(vec![], vec![]).is_err());
        let dup = vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)];
        assert!(matches!(
            PointVortexSystem::new(dup, vec![1.0, 2.0]),
            Err(VortexError::CoincidentPositions { i: 0, j: 1 })
        ));
        assert!(PointVortexSystem::new(vec![Vec2::new(f64::NAN, 0.0)], vec![1.0]).is_err());
    }

    #[test]
    fn system_json_shape() {
        let s = PointVortexSystem::new(
            vec![Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.5)],
            vec![-2.0, 1.0],
        )
        .unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"circulations":[-2.0,1.0],"positions":[[-1.0,0.0],[1.0,0.5]]}"#);
        let back: PointVortexSystem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<PointVortexSystem>(
            r#"{"circulations":[1.0],"positions":[[0,0],[1,1]]}"#
        )
        .is_err());
    }

    #[test]
    fn cloud_sign_checks() {
        let p = vec![Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(ParticleCloud::new(p.clone(), vec![-1.0, 0.5], 0.0).is_err());
        let c = ParticleCloud::new(p, vec![-1.0, -0.5], 0.1).unwrap();
        assert_eq!(c.sign, Sign::Negative);
        assert_eq!(c.circulation(), -1.5);
    }

    fn vec2() -> impl Strategy<Value = Vec2> {
        (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y)| Vec2::new(x, y))
    }

    proptest! {
        #[test]
        fn kernel_antisymmetric(x in vec2(), y in vec2(), delta in 0.0..2.0f64) {
            prop_assume!(x != y || delta > 0.0);
            let a = kernel(x, y, delta).unwrap();
            let b = kernel(y, x, delta).unwrap();
            prop_assert_eq!(a.x.to_bits(), (-b.x).to_bits());
            prop_assert_eq!(a.y.to_bits(), (-b.y).to_bits());
        }

        #[test]
        fn kernel_orthogonal(x in vec2(), y in vec2(), delta in 0.0..2.0f64) {
            prop_assume!(x != y);
            let d = x - y;
            let k = kernel(x, y, delta).unwrap();
            prop_assert!(k.dot(d).abs() <= 1e-14 * k.norm() * d.norm());
        }

        #[test]
        fn perp_twice_negates(v in vec2()) {
            prop_assert_eq!(perp(perp(v)), -v);
        }
    }
}

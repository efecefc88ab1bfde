//! Velocity evaluation over particle clouds: the direct sum and the
//! quadtree backend behind one interface.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::{kernel, ParticleCloud, Vec2};
use crate::tree::{QuadTree, TreeParams};

/// Flattened (cloud-major) structure-of-arrays view of all particles.
#[derive(Debug, Clone, Default)]
pub(crate) struct Sources {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    /// Squared blob radius of each particle.
    pub d2: Vec<f64>,
}

impl Sources {
    pub fn from_clouds(clouds: &[ParticleCloud]) -> Self {
        let n: usize = clouds.iter().map(|c| c.len()).sum();
        let mut s = Sources {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            d2: Vec::with_capacity(n),
        };
        for c in clouds {
            s.push_cloud(&c.positions, c);
        }
        s
    }

    /// Same strengths and blob radii as `clouds`, positions taken from `positions`.
    pub fn with_positions(clouds: &[ParticleCloud], positions: &[Vec2]) -> Self {
        let mut s = Sources::from_clouds(clouds);
        for (i, p) in positions.iter().enumerate() {
            s.x[i] = p.x;
            s.y[i] = p.y;
        }
        s
    }

    fn push_cloud(&mut self, positions: &[Vec2], c: &ParticleCloud) {
        let d2 = c.blob_radius * c.blob_radius;
        for (p, &g) in positions.iter().zip(&c.strengths) {
            self.x.push(p.x);
            self.y.push(p.y);
            self.g.push(g);
            self.d2.push(d2);
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    fn has_point_particles(&self) -> bool {
        self.d2.contains(&0.0)
    }
}

/// How particle velocities are summed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityBackend {
    #[default]
    Direct,
    Tree(TreeParams),
}

/// Velocity induced at each evaluation point by every particle of every
/// cloud, all with blob radius `delta`. Sequential sum in cloud-major,
/// particle-index order.
pub fn induced_velocity(clouds: &[ParticleCloud], eval_points: &[Vec2], delta: f64) -> Result<Vec<Vec2>> {
    check_delta(delta)?;
    map_points(eval_points, |&p| {
        let mut u = Vec2::ZERO;
        for c in clouds {
            for (&x, &g) in c.positions.iter().zip(&c.strengths) {
                u += kernel(p, x, delta)? * g;
            }
        }
        Ok(u)
    })
}

/// Same field as [`induced_velocity`], summed with the quadtree.
pub fn induced_velocity_tree(
    clouds: &[ParticleCloud],
    eval_points: &[Vec2],
    delta: f64,
    params: TreeParams,
) -> Result<Vec<Vec2>> {
    check_delta(delta)?;
    let mut sources = Sources::from_clouds(clouds);
    sources.d2.iter_mut().for_each(|d| *d = delta * delta);
    let tree = QuadTree::build(&sources, params)?;
    map_points(eval_points, |&p| tree.velocity_at(p, None, delta * delta))
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(VortexError::InvalidArgument(format!(
            "blob radius {delta} must be finite and non-negative"
        )));
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_points<T, F>(points: &[T], f: F) -> Result<Vec<Vec2>>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec2> + Sync + Send,
{
    use rayon::prelude::*;
    points.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<T, F>(points: &[T], f: F) -> Result<Vec<Vec2>>
where
    F: Fn(&T) -> Result<Vec2>,
{
    points.iter().map(f).collect()
}

/// Velocity of every particle due to all the others, in cloud-major order,
/// using the vectorised direct sum or the tree.
pub fn particle_velocities(clouds: &[ParticleCloud], backend: &VelocityBackend) -> Result<Vec<Vec2>> {
    self_velocities(&Sources::from_clouds(clouds), backend)
}

/// Velocity of every particle due to all the others (self-pair excluded),
/// in flattened cloud-major order. A pair with blob radii `δ_p, δ_q` uses
/// `(δ_p^2 + δ_q^2) / 2`, which keeps the interaction antisymmetric.
pub(crate) fn self_velocities(sources: &Sources, backend: &VelocityBackend) -> Result<Vec<Vec2>> {
    let n = sources.len();
    let idx: Vec<usize> = (0..n).collect();
    match backend {
        VelocityBackend::Direct => {
            let point = sources.has_point_particles();
            map_points(&idx, |&i| {
                let u = direct_one(sources, i);
                if point && !(u.x.is_finite() && u.y.is_finite()) {
                    return Err(VortexError::SingularKernel);
                }
                Ok(u)
            })
        }
        VelocityBackend::Tree(params) => {
            let tree = QuadTree::build(sources, *params)?;
            map_points(&idx, |&i| {
                tree.velocity_at(Vec2::new(sources.x[i], sources.y[i]), Some(i), sources.d2[i])
            })
        }
    }
}

fn direct_one(s: &Sources, i: usize) -> Vec2 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { direct_one_avx2(s, i) };
    }
    direct_one_generic(s, i)
}

/// Same operations in the same order, compiled with wider vectors; the
/// result is bit-identical to the generic path.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn direct_one_avx2(s: &Sources, i: usize) -> Vec2 {
    direct_one_generic(s, i)
}

#[inline(always)]
fn direct_one_generic(s: &Sources, i: usize) -> Vec2 {
    let (xi, yi, di) = (s.x[i], s.y[i], s.d2[i]);
    let mut ux = [0.0f64; LANES];
    let mut uy = [0.0f64; LANES];
    accumulate(s, 0, i, xi, yi, di, &mut ux, &mut uy);
    accumulate(s, i + 1, s.len(), xi, yi, di, &mut ux, &mut uy);
    Vec2::new(pairwise(&ux), pairwise(&uy))
}

const LANES: usize = 16;

fn pairwise(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        let h = v.len() / 2;
        pairwise(&v[..h]) + pairwise(&v[h..])
    }
}

/// Fixed-shape accumulation over sources `lo..hi` into `LANES` partial sums
/// that are combined pairwise; the lane layout
/// depends only on the index range, so results do not depend on threading.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn accumulate(
    s: &Sources,
    lo: usize,
    hi: usize,
    xi: f64,
    yi: f64,
    di: f64,
    ux: &mut [f64; LANES],
    uy: &mut [f64; LANES],
) {
    let xs = &s.x[lo..hi];
    let ys = &s.y[lo..hi];
    let gs = &s.g[lo..hi];
    let ds = &s.d2[lo..hi];
    let half_di = 0.5 * di;
    let mut cx = xs.chunks_exact(LANES);
    let mut cy = ys.chunks_exact(LANES);
    let mut cg = gs.chunks_exact(LANES);
    let mut cd = ds.chunks_exact(LANES);
    for (((x4, y4), g4), d4) in (&mut cx).zip(&mut cy).zip(&mut cg).zip(&mut cd) {
        for l in 0..LANES {
            let dx = xi - x4[l];
            let dy = yi - y4[l];
            let r2 = dx * dx + dy * dy + (half_di + 0.5 * d4[l]);
            let w = g4[l] / r2;
            ux[l] -= dy * w;
            uy[l] += dx * w;
        }
    }
    let tail = cx.remainder().iter().zip(cy.remainder()).zip(cg.remainder()).zip(cd.remainder());
    for (l, (((x, y), g), d)) in tail.enumerate() {
        let dx = xi - x;
        let dy = yi - y;
        let r2 = dx * dx + dy * dy + (half_di + 0.5 * d);
        let w = g / r2;
        ux[l] -= dy * w;
        uy[l] += dx * w;
    }
}

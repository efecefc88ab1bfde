//! Barnes-Hut quadtree with complex multipole expansions of the blob kernel.
//!
//! For a source of strength `γ` at `ζ`, the induced velocity at `z` satisfies
//! `u - i v = -i γ / (z - ζ)`. A cell with expansion centre `c` therefore
//! contributes `-i Σ_k a_k / (z - c)^{k+1}` with `a_k = Σ γ_q (ζ_q - c)^k`.
//! The blob regularisation is applied to the far field through the factor
//! `|z - c|^2 / (|z - c|^2 + δ^2)`, and only for cells far enough away (in
//! units of δ) for that factor to be nearly constant across the cell.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VortexError};
use crate::geometry::Vec2;
use crate::kernels::Sources;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Multipole acceptance: a cell of radius `r` whose centre is at distance
    /// `d` is used as a whole when `r < opening_angle * (d - r)`, i.e. the
    /// ratio is taken against the nearest point the cell could reach.
    pub opening_angle: f64,
    pub leaf_capacity: usize,
    /// Highest multipole power kept (`a_0 ..= a_order`).
    pub expansion_order: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            opening_angle: 0.5,
            leaf_capacity: 16,
            expansion_order: 4,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.opening_angle >= 0.0 && self.opening_angle < 1.0) {
            return Err(VortexError::InvalidArgument(format!(
                "opening angle {} must lie in [0, 1)",
                self.opening_angle
            )));
        }
        if self.leaf_capacity == 0 {
            return Err(VortexError::InvalidArgument("leaf capacity must be positive".into()));
        }
        Ok(())
    }
}

const NO_CHILD: u32 = u32::MAX;
const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Node {
    center: Vec2,
    radius: f64,
    /// Largest squared blob radius in the cell.
    delta_sq: f64,
    start: usize,
    end: usize,
    children: [u32; 4],
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.children[0] == NO_CHILD
    }
}

pub struct QuadTree<'a> {
    sources: &'a Sources,
    params: TreeParams,
    nodes: Vec<Node>,
    /// Source indices in tree order.
    order: Vec<usize>,
    coeffs: Vec<Complex64>,
}

impl<'a> QuadTree<'a> {
    pub(crate) fn build(sources: &'a Sources, params: TreeParams) -> Result<Self> {
        params.validate()?;
        let n = sources.len();
        let mut tree = QuadTree {
            sources,
            params,
            nodes: Vec::new(),
            order: (0..n).collect(),
            coeffs: Vec::new(),
        };
        if n == 0 {
            return Ok(tree);
        }
        let (mut lo, mut hi) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for i in 0..n {
            lo.x = lo.x.min(sources.x[i]);
            lo.y = lo.y.min(sources.y[i]);
            hi.x = hi.x.max(sources.x[i]);
            hi.y = hi.y.max(sources.y[i]);
        }
        let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y);
        let mid = (lo + hi) * 0.5;
        tree.subdivide(0, n, mid, half, 0);
        Ok(tree)
    }

    fn subdivide(&mut self, start: usize, end: usize, mid: Vec2, half: f64, depth: usize) -> u32 {
        let idx = self.nodes.len();
        let p = self.params.expansion_order;
        let s = self.sources;

        let mut wsum = 0.0;
        let mut c = Vec2::ZERO;
        let mut delta_sq: f64 = 0.0;
        for &q in &self.order[start..end] {
            let w = s.g[q].abs();
            wsum += w;
            c += Vec2::new(s.x[q], s.y[q]) * w;
            delta_sq = delta_sq.max(s.d2[q]);
        }
        let center = if wsum > 0.0 {
            c / wsum
        } else {
            let k = (end - start) as f64;
            self.order[start..end]
                .iter()
                .fold(Vec2::ZERO, |acc, &q| acc + Vec2::new(s.x[q], s.y[q]))
                / k
        };
        let mut radius: f64 = 0.0;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); p + 1];
        for &q in &self.order[start..end] {
            let off = Complex64::new(s.x[q] - center.x, s.y[q] - center.y);
            radius = radius.max(off.norm());
            let mut pow = Complex64::new(s.g[q], 0.0);
            for a in coeffs.iter_mut() {
                *a += pow;
                pow *= off;
            }
        }
        self.nodes.push(Node {
            center,
            radius,
            delta_sq,
            start,
            end,
            children: [NO_CHILD; 4],
        });
        self.coeffs.extend_from_slice(&coeffs);

        if end - start <= self.params.leaf_capacity || depth >= MAX_DEPTH || radius == 0.0 {
            return idx as u32;
        }

        // Partition into quadrants: (x < mid.x, y < mid.y) bits.
        let quadrant = |q: usize| -> usize {
            (usize::from(s.x[q] >= mid.x)) | (usize::from(s.y[q] >= mid.y) << 1)
        };
        let slice = &mut self.order[start..end];
        slice.sort_by_key(|&q| quadrant(q));
        let mut bounds = [start; 5];
        let mut k = start;
        for b in 0..4 {
            bounds[b] = k;
            while k < end && quadrant(self.order[k]) == b {
                k += 1;
            }
        }
        bounds[4] = end;
        let h = 0.5 * half;
        let mut children = [NO_CHILD; 4];
        for b in 0..4 {
            if bounds[b + 1] > bounds[b] {
                let cm = Vec2::new(
                    mid.x + if b & 1 == 1 { h } else { -h },
                    mid.y + if b & 2 == 2 { h } else { -h },
                );
                children[b] = self.subdivide(bounds[b], bounds[b + 1], cm, h, depth + 1);
            }
        }
        // Children were pushed after this node, so the index is stable.
        let mut packed = [NO_CHILD; 4];
        let mut m = 0;
        for ch in children.into_iter().filter(|&c| c != NO_CHILD) {
            packed[m] = ch;
            m += 1;
        }
        self.nodes[idx].children = packed;
        idx as u32
    }

    /// Velocity at `z`. `exclude` names a source to skip (the target itself
    /// when evaluating particle self-velocities). `target_d2` is the squared
    /// blob radius of the target, combined symmetrically with each source.
    pub(crate) fn velocity_at(&self, z: Vec2, exclude: Option<usize>, target_d2: f64) -> Result<Vec2> {
        let mut u = Vec2::ZERO;
        if self.nodes.is_empty() {
            return Ok(u);
        }
        let p1 = self.params.expansion_order + 1;
        let theta = self.params.opening_angle;
        // The blob factor is evaluated at the cell centre; its variation over
        // the cell is about 2θ·δ²/d², so cells are only accepted where that
        // stays well below the truncation error.
        let blob_tol = 0.5 * theta.powi(self.params.expansion_order as i32 + 1);
        let s = self.sources;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let w = z - node.center;
            let dist = w.norm();
            let r2 = dist * dist;
            let d2 = 0.5 * (target_d2 + node.delta_sq);
            if node.radius * (1.0 + theta) < theta * dist && d2 <= blob_tol * r2 {
                let wc = Complex64::new(w.x, w.y);
                let inv = wc.inv();
                let a = &self.coeffs[ni as usize * p1..(ni as usize + 1) * p1];
                // Horner in 1/w: Σ a_k w^{-(k+1)}.
                let mut acc = Complex64::new(0.0, 0.0);
                for coeff in a.iter().rev() {
                    acc = (acc + coeff) * inv;
                }
                let blob = r2 / (r2 + d2);
                // u - i v = -i acc
                u.x += acc.im * blob;
                u.y += acc.re * blob;
                continue;
            }
            if node.is_leaf() {
                for &q in &self.order[node.start..node.end] {
                    if Some(q) == exclude {
                        continue;
                    }
                    let dx = z.x - s.x[q];
                    let dy = z.y - s.y[q];
                    let r2 = dx * dx + dy * dy + 0.5 * (target_d2 + s.d2[q]);
                    if r2 == 0.0 {
                        return Err(VortexError::SingularKernel);
                    }
                    let inv = s.g[q] / r2;
                    u.x -= dy * inv;
                    u.y += dx * inv;
                }
            } else {
                for &c in node.children.iter().rev() {
                    if c != NO_CHILD {
                        stack.push(c);
                    }
                }
            }
        }
        Ok(u)
    }
}

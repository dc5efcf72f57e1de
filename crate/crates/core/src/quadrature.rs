//! Quadrature rules and singularity-aware element subdivision.

use serde::{Deserialize, Serialize};

use crate::domain::Point;
use crate::mesh::Mesh;

/// Points in barycentric coordinates on the reference simplex, weights summing to 1.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// 4-point Gauss–Legendre rule on a segment (exact to degree 7).
    pub fn gauss_segment() -> Self {
        let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
        let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
        let wa = (18.0 + 30f64.sqrt()) / 36.0;
        let wb = (18.0 - 30f64.sqrt()) / 36.0;
        let xs = [-b, -a, a, b];
        let ws = [wb, wa, wa, wb];
        QuadratureRule {
            bary: xs.iter().map(|x| [(1.0 - x) / 2.0, (1.0 + x) / 2.0, 0.0]).collect(),
            weights: ws.iter().map(|w| w / 2.0).collect(),
            degree: 7,
        }
    }

    /// Symmetric 6-point rule on triangles (exact to degree 4).
    pub fn triangle_degree4() -> Self {
        let (a1, w1) = (0.445948490915965, 0.223381589678011);
        let (a2, w2) = (0.091576213509771, 0.109951743655322);
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            bary.extend([[a, a, b], [a, b, a], [b, a, a]]);
            weights.extend([w, w, w]);
        }
        QuadratureRule {
            bary,
            weights,
            degree: 4,
        }
    }

    /// Single interior point; used only to test exactness monotonicity.
    pub fn centroid(dim: usize) -> Self {
        let bary = if dim == 1 {
            [0.5, 0.5, 0.0]
        } else {
            [1.0 / 3.0; 3]
        };
        QuadratureRule {
            bary: vec![bary],
            weights: vec![1.0],
            degree: 1,
        }
    }

    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Self::gauss_segment()
        } else {
            Self::triangle_degree4()
        }
    }
}

/// Recursive subdivision near a singular set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subdivision {
    /// Split while max/min vertex distance to the singular set exceeds this.
    pub ratio: f64,
    pub max_depth: usize,
    /// Extra levels for elements touching the singular set.
    pub touch_depth: usize,
}

impl Default for Subdivision {
    fn default() -> Self {
        Subdivision {
            ratio: 1.5,
            max_depth: 10,
            touch_depth: 1,
        }
    }
}

/// Quadrature point on a mesh: cell, barycentric coordinates in that cell, position, weight × measure.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub cell: usize,
    pub bary: [f64; 3],
    pub x: Point,
    pub w: f64,
}

/// All quadrature points of `mesh`. With `singular`, elements are subdivided by distance ratio.
pub fn quadrature_points(
    mesh: &Mesh,
    rule: &QuadratureRule,
    singular: Option<(&dyn Fn(Point) -> f64, Subdivision)>,
) -> Vec<QuadPoint> {
    let mut out = Vec::with_capacity(mesh.n_cells() * rule.weights.len());
    let dim = mesh.dim;
    let corners: [[f64; 3]; 3] = if dim == 1 {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]]
    } else {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    };
    let mut stack: Vec<([[f64; 3]; 3], usize)> = Vec::new();
    for e in 0..mesh.n_cells() {
        let measure = mesh.measure[e];
        stack.push((corners, 0));
        while let Some((sb, depth)) = stack.pop() {
            if let Some((dist, sub)) = &singular {
                let nv = dim + 1;
                let mut dmin = f64::INFINITY;
                let mut dmax: f64 = 0.0;
                for v in sb.iter().take(nv) {
                    let d = dist(mesh.point(e, v));
                    dmin = dmin.min(d);
                    dmax = dmax.max(d);
                }
                let split = if dmin <= 0.0 {
                    depth < sub.touch_depth
                } else {
                    depth < sub.max_depth && dmax / dmin > sub.ratio
                };
                if split {
                    let mid = |a: &[f64; 3], b: &[f64; 3]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
                    if dim == 1 {
                        let m = mid(&sb[0], &sb[1]);
                        stack.push(([sb[0], m, sb[2]], depth + 1));
                        stack.push(([m, sb[1], sb[2]], depth + 1));
                    } else {
                        let m01 = mid(&sb[0], &sb[1]);
                        let m12 = mid(&sb[1], &sb[2]);
                        let m02 = mid(&sb[0], &sb[2]);
                        stack.push(([sb[0], m01, m02], depth + 1));
                        stack.push(([m01, sb[1], m12], depth + 1));
                        stack.push(([m02, m12, sb[2]], depth + 1));
                        stack.push(([m01, m12, m02], depth + 1));
                    }
                    continue;
                }
            }
            let frac = if dim == 1 {
                0.5f64.powi(depth as i32)
            } else {
                0.25f64.powi(depth as i32)
            };
            for (qb, &qw) in rule.bary.iter().zip(&rule.weights) {
                let mut bary = [0.0; 3];
                for (k, &c) in qb.iter().enumerate().take(dim + 1) {
                    for l in 0..3 {
                        bary[l] += c * sb[k][l];
                    }
                }
                out.push(QuadPoint {
                    cell: e,
                    bary,
                    x: mesh.point(e, &bary),
                    w: qw * frac * measure,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_monomials() {
        let g = QuadratureRule::gauss_segment();
        for k in 0..=7 {
            let s: f64 = g.bary.iter().zip(&g.weights).map(|(b, w)| w * b[1].powi(k)).sum();
            assert!((s - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
        let t = QuadratureRule::triangle_degree4();
        // ∫ x^a y^b over the reference triangle = a! b! / (a+b+2)!, weights normalized by area 1/2.
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let s: f64 = t
                    .bary
                    .iter()
                    .zip(&t.weights)
                    .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                let exact = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
                assert!((s - exact).abs() < 1e-12, "a={a} b={b}");
            }
        }
    }
}

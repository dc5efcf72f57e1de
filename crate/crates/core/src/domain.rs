//! Symbolic domains and their exact geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const CLOSURE_TOL: f64 = 1e-9;

fn default_axis() -> Point {
    [0.0, 1.0]
}

fn default_obstacle() -> Point {
    [0.0, -1.0]
}

/// Computational domain. Serialized with a `"variant"` discriminator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// (0, L) with the singular endpoint at 0.
    Interval { length: f64 },
    /// N=1: the interval (0, R). N=2: {|x| < R, x·ν > 0}.
    HalfBall {
        n: usize,
        radius: f64,
        #[serde(default = "default_axis")]
        axis: Point,
    },
    /// {x·ν > −δ|x|, r < |x| < R}.
    Sector {
        delta: f64,
        inner: f64,
        outer: f64,
        #[serde(default = "default_axis")]
        axis: Point,
    },
    /// Angular interval of a cone: (0, Θ) for N ≥ 3, the arc (0, 2Θ) for N = 2.
    ConeCap { n: usize, theta: f64 },
    /// B_r(0) minus the open disc centred at `obstacle` with radius |obstacle|.
    ExteriorLens {
        #[serde(default = "default_obstacle")]
        obstacle: Point,
        truncation: f64,
    },
    /// Simple polygon, counter-clockwise.
    Polygon { vertices: Vec<Point> },
    /// {x ∈ base : d(x) < width}.
    Collar { base: Box<DomainSpec>, width: f64 },
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn unit(a: Point) -> Point {
    let n = norm(a);
    [a[0] / n, a[1] / n]
}

pub(crate) fn segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(x, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(x, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Distance from `x` to the circular arc of radius `r` about `c` spanning angles
/// [`start`, `start + span`] (counter-clockwise).
pub(crate) fn arc_distance(x: Point, c: Point, r: f64, start: f64, span: f64) -> f64 {
    let d = sub(x, c);
    let rho = norm(d);
    if span >= 2.0 * PI - 1e-15 {
        return (rho - r).abs();
    }
    if rho > 0.0 {
        let ang = d[1].atan2(d[0]);
        let rel = (ang - start).rem_euclid(2.0 * PI);
        if rel <= span {
            return (rho - r).abs();
        }
    }
    let e0 = [c[0] + r * start.cos(), c[1] + r * start.sin()];
    let e1 = [c[0] + r * (start + span).cos(), c[1] + r * (start + span).sin()];
    norm(sub(x, e0)).min(norm(sub(x, e1)))
}

fn polygon_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn point_in_polygon(x: Point, v: &[Point]) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let xc = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < xc {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        DomainSpec::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    /// Regular polygon with `sides` vertices on the circle of radius `radius` about `center`.
    pub fn regular_polygon(sides: usize, radius: f64, center: Point) -> Self {
        let vertices = (0..sides)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / sides as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        DomainSpec::Polygon { vertices }
    }

    /// Planar cap of the sector with aperture δ: the arc of length π + 2·asin δ.
    pub fn sector_cap(delta: f64) -> Self {
        DomainSpec::ConeCap {
            n: 2,
            theta: PI / 2.0 + delta.asin(),
        }
    }

    /// Planar cap given by its arc length.
    pub fn arc_cap(length: f64) -> Self {
        DomainSpec::ConeCap { n: 2, theta: length / 2.0 }
    }

    pub fn hemisphere(n: usize) -> Self {
        DomainSpec::ConeCap { n, theta: PI / 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Spec(m.to_string()));
        match self {
            DomainSpec::Interval { length } => {
                if !(length.is_finite() && *length > 0.0) {
                    return bad("interval length must be positive");
                }
            }
            DomainSpec::HalfBall { n, radius, axis } => {
                if !(*n == 1 || *n == 2) {
                    return bad("half-ball dimension must be 1 or 2");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad("half-ball radius must be positive");
                }
                if !(norm(*axis) > 0.0) {
                    return bad("axis must be nonzero");
                }
            }
            DomainSpec::Sector {
                delta,
                inner,
                outer,
                axis,
            } => {
                if !(delta.abs() < 1.0) {
                    return bad("sector aperture must satisfy |delta| < 1");
                }
                if !(*inner >= 0.0 && inner < outer && outer.is_finite()) {
                    return bad("sector radii must satisfy 0 <= r < R");
                }
                if !(norm(*axis) > 0.0) {
                    return bad("axis must be nonzero");
                }
            }
            DomainSpec::ConeCap { n, theta } => {
                if *n < 2 {
                    return bad("cone cap needs N >= 2");
                }
                if !(*theta > 0.0 && *theta < PI) {
                    return bad("cap polar angle must lie in (0, pi)");
                }
            }
            DomainSpec::ExteriorLens { obstacle, truncation } => {
                if !(norm(*obstacle) > 0.0) {
                    return bad("obstacle centre must differ from the origin");
                }
                if !(truncation.is_finite() && *truncation > 0.0) {
                    return bad("truncation radius must be positive");
                }
            }
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return bad("polygon needs at least three vertices");
                }
                if !(polygon_area(vertices) > 0.0) {
                    return bad("polygon must be counter-clockwise with positive area");
                }
                for i in 0..n {
                    for j in i + 1..n {
                        if j == i + 1 || (i == 0 && j == n - 1) {
                            continue;
                        }
                        if segments_cross(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                            return bad("polygon is not simple");
                        }
                    }
                }
            }
            DomainSpec::Collar { base, width } => {
                base.validate()?;
                if base.dim() != 2 {
                    return bad("collar base must be planar");
                }
                if !(*width > 0.0) {
                    return bad("collar width must be positive");
                }
            }
        }
        Ok(())
    }

    /// Dimension of the meshed parameter space.
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } | DomainSpec::ConeCap { .. } => 1,
            DomainSpec::HalfBall { n, .. } => *n,
            _ => 2,
        }
    }

    /// Length of the angular interval of a cap.
    pub fn cap_length(&self) -> Option<f64> {
        match self {
            DomainSpec::ConeCap { n: 2, theta } => Some(2.0 * theta),
            DomainSpec::ConeCap { theta, .. } => Some(*theta),
            _ => None,
        }
    }

    /// Whether the origin is a boundary point.
    pub fn origin_on_boundary(&self) -> bool {
        match self {
            DomainSpec::Interval { .. } | DomainSpec::HalfBall { .. } | DomainSpec::ExteriorLens { .. } => true,
            DomainSpec::Sector { inner, .. } => *inner == 0.0,
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).any(|i| segment_distance([0.0, 0.0], vertices[i], vertices[(i + 1) % n]) < CLOSURE_TOL)
            }
            DomainSpec::Collar { base, .. } => base.origin_on_boundary(),
            DomainSpec::ConeCap { .. } => false,
        }
    }

    /// Whether the origin lies in the open domain.
    pub fn origin_in_interior(&self) -> bool {
        match self {
            DomainSpec::Polygon { vertices } => {
                !self.origin_on_boundary() && point_in_polygon([0.0, 0.0], vertices)
            }
            DomainSpec::Collar { base, width } => {
                base.origin_in_interior() && base.distance_to_boundary([0.0, 0.0]).map(|d| d < *width).unwrap_or(false)
            }
            _ => false,
        }
    }

    /// Closure membership with a small absolute tolerance.
    pub fn contains(&self, x: Point) -> bool {
        let t = CLOSURE_TOL;
        match self {
            DomainSpec::Interval { length } => x[0] >= -t && x[0] <= length + t,
            DomainSpec::HalfBall { n: 1, radius, .. } => x[0] >= -t && x[0] <= radius + t,
            DomainSpec::HalfBall { radius, axis, .. } => {
                dot(x, unit(*axis)) >= -t && norm(x) <= radius + t
            }
            DomainSpec::Sector {
                delta,
                inner,
                outer,
                axis,
            } => {
                let r = norm(x);
                r >= inner - t && r <= outer + t && dot(x, unit(*axis)) >= -delta * r - t
            }
            DomainSpec::ConeCap { .. } => {
                let len = self.cap_length().unwrap();
                x[0] >= -t && x[0] <= len + t
            }
            DomainSpec::ExteriorLens { obstacle, truncation } => {
                norm(x) <= truncation + t && norm(sub(x, *obstacle)) >= norm(*obstacle) - t
            }
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                point_in_polygon(x, vertices)
                    || (0..n).any(|i| segment_distance(x, vertices[i], vertices[(i + 1) % n]) <= t)
            }
            DomainSpec::Collar { base, width } => {
                base.contains(x) && base.distance_to_boundary(x).map(|d| d <= width + t).unwrap_or(false)
            }
        }
    }

    /// Exact Euclidean distance to the boundary; minimum over edges for polygons.
    pub fn distance_to_boundary(&self, x: Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::Domain(format!("({}, {})", x[0], x[1])));
        }
        let d = match self {
            DomainSpec::Interval { length } => x[0].min(length - x[0]),
            DomainSpec::HalfBall { n: 1, radius, .. } => x[0].min(radius - x[0]),
            DomainSpec::HalfBall { radius, axis, .. } => {
                let nu = unit(*axis);
                let t = [nu[1], -nu[0]];
                let a = [-radius * t[0], -radius * t[1]];
                let b = [radius * t[0], radius * t[1]];
                let start = t[1].atan2(t[0]);
                segment_distance(x, a, b).min(arc_distance(x, [0.0, 0.0], *radius, start, PI))
            }
            DomainSpec::Sector {
                delta,
                inner,
                outer,
                axis,
            } => {
                let nu = unit(*axis);
                let alpha = (-delta).acos();
                let phi0 = nu[1].atan2(nu[0]);
                let ray = |s: f64| [(phi0 + s * alpha).cos(), (phi0 + s * alpha).sin()];
                let mut d = arc_distance(x, [0.0, 0.0], *outer, phi0 - alpha, 2.0 * alpha);
                for s in [-1.0, 1.0] {
                    let e = ray(s);
                    d = d.min(segment_distance(x, [inner * e[0], inner * e[1]], [outer * e[0], outer * e[1]]));
                }
                if *inner > 0.0 {
                    d = d.min(arc_distance(x, [0.0, 0.0], *inner, phi0 - alpha, 2.0 * alpha));
                }
                d
            }
            DomainSpec::ConeCap { n, .. } => {
                let len = self.cap_length().unwrap();
                if *n == 2 {
                    x[0].min(len - x[0])
                } else {
                    len - x[0]
                }
            }
            DomainSpec::ExteriorLens { obstacle, truncation } => {
                let c = *obstacle;
                let rho = norm(c);
                let r = *truncation;
                let ang_c = c[1].atan2(c[0]);
                if r >= 2.0 * rho {
                    (r - norm(x)).min(norm(sub(x, c)) - rho)
                } else {
                    // Outer arc lies where the angle from ĉ exceeds acos(r/2ρ).
                    let psi = (r / (2.0 * rho)).acos();
                    let outer = arc_distance(x, [0.0, 0.0], r, ang_c + psi, 2.0 * PI - 2.0 * psi);
                    // Obstacle arc inside B_r, seen from the obstacle centre.
                    let chi = (r / (2.0 * rho)).asin();
                    let back = ang_c + PI;
                    let inner = arc_distance(x, c, rho, back - 2.0 * chi, 4.0 * chi);
                    outer.min(inner)
                }
            }
            DomainSpec::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance(x, vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
            DomainSpec::Collar { base, width } => {
                let d = base.distance_to_boundary(x)?;
                d.min(width - d).max(0.0)
            }
        };
        Ok(d.max(0.0))
    }

    /// Distance to the set carrying the boundary-distance weight: ∂Ω, or ∂(base) for a collar.
    pub fn weight_distance(&self, x: Point) -> Result<f64> {
        match self {
            DomainSpec::Collar { base, .. } => base.distance_to_boundary(x),
            _ => self.distance_to_boundary(x),
        }
    }

    pub fn diameter(&self) -> Result<f64> {
        Ok(match self {
            DomainSpec::Interval { length } => *length,
            DomainSpec::HalfBall { n: 1, radius, .. } => *radius,
            DomainSpec::HalfBall { radius, .. } => 2.0 * radius,
            DomainSpec::Sector {
                delta, inner, outer, ..
            } => {
                let alpha = (-delta).acos();
                let outer_pair = 2.0 * outer * alpha.min(PI / 2.0).sin();
                let sep = (2.0 * alpha).min(PI);
                let mixed = (outer * outer + inner * inner - 2.0 * outer * inner * sep.cos()).sqrt();
                outer_pair.max(mixed)
            }
            DomainSpec::ExteriorLens { truncation, .. } if !truncation.is_finite() => {
                return Err(Error::Unsupported("diameter of an unbounded domain".into()))
            }
            DomainSpec::ExteriorLens { truncation, .. } => 2.0 * truncation,
            DomainSpec::Polygon { vertices } => {
                let mut d: f64 = 0.0;
                for a in vertices {
                    for b in vertices {
                        d = d.max(norm(sub(*a, *b)));
                    }
                }
                d
            }
            DomainSpec::Collar { base, .. } => base.diameter()?,
            DomainSpec::ConeCap { .. } => {
                return Err(Error::Unsupported("diameter of a spherical cap".into()))
            }
        })
    }

    /// Lebesgue measure (length in 1D, area in 2D).
    pub fn measure(&self) -> Result<f64> {
        Ok(match self {
            DomainSpec::Interval { length } => *length,
            DomainSpec::HalfBall { n: 1, radius, .. } => *radius,
            DomainSpec::HalfBall { radius, .. } => PI * radius * radius / 2.0,
            DomainSpec::Sector {
                delta, inner, outer, ..
            } => (-delta).acos() * (outer * outer - inner * inner),
            DomainSpec::ExteriorLens { obstacle, truncation } => {
                let rho = norm(*obstacle);
                let r = *truncation;
                let lens = if r >= 2.0 * rho {
                    PI * rho * rho
                } else {
                    let d = rho;
                    let a1 = ((d * d + r * r - rho * rho) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
                    let a2 = ((d * d + rho * rho - r * r) / (2.0 * d * rho)).clamp(-1.0, 1.0).acos();
                    let k = ((-d + r + rho) * (d + r - rho) * (d - r + rho) * (d + r + rho)).max(0.0).sqrt();
                    r * r * a1 + rho * rho * a2 - 0.5 * k
                };
                PI * r * r - lens
            }
            DomainSpec::Polygon { vertices } => polygon_area(vertices),
            DomainSpec::ConeCap { .. } | DomainSpec::Collar { .. } => {
                return Err(Error::Unsupported("closed-form measure for this variant".into()))
            }
        })
    }

    /// Whether Ω ⊂ {|x| < R, x·ν > 0} for some R and ν.
    pub fn in_half_ball(&self) -> bool {
        match self {
            DomainSpec::Interval { .. } | DomainSpec::HalfBall { .. } => true,
            DomainSpec::Sector { delta, .. } => *delta <= 0.0,
            DomainSpec::Polygon { vertices } => {
                // Angular span of the vertices seen from the origin must not exceed π.
                let mut angles: Vec<f64> = vertices
                    .iter()
                    .filter(|v| norm(**v) > CLOSURE_TOL)
                    .map(|v| v[1].atan2(v[0]))
                    .collect();
                if angles.is_empty() || self.origin_in_interior() {
                    return false;
                }
                angles.sort_by(|a, b| a.total_cmp(b));
                let n = angles.len();
                let mut gap = angles[0] + 2.0 * PI - angles[n - 1];
                for i in 1..n {
                    gap = gap.max(angles[i] - angles[i - 1]);
                }
                gap >= PI - 1e-12
            }
            DomainSpec::Collar { base, .. } => base.in_half_ball(),
            DomainSpec::ConeCap { .. } | DomainSpec::ExteriorLens { .. } => false,
        }
    }
}

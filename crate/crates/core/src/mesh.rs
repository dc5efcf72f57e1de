//! Graded simplicial meshes and nodal fields.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{dot, norm, segment_distance, sub, DomainSpec, Point};
use crate::error::{Error, Result};

/// Where mesh grading concentrates resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Origin,
    Boundary,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grading {
    pub beta: f64,
    pub level: usize,
    pub focus: Focus,
}

/// Mesh request: refinement level, grading exponent and grading target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub level: usize,
    pub grading: f64,
    pub focus: Focus,
}

/// Segments (dim 1) or triangles (dim 2). For dim 1 the third cell entry is unused.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub dim: usize,
    pub nodes: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    pub dirichlet: Vec<bool>,
    pub measure: Vec<f64>,
    pub grading: Grading,
    /// Largest gap between the polygonal boundary and the exact boundary.
    pub boundary_gap: f64,
}

impl Mesh {
    pub fn new(
        dim: usize,
        nodes: Vec<Point>,
        mut cells: Vec<[usize; 3]>,
        dirichlet: Vec<bool>,
        grading: Grading,
    ) -> Result<Mesh> {
        if dirichlet.len() != nodes.len() {
            return Err(Error::Spec("dirichlet flags must match node count".into()));
        }
        let mut measure = Vec::with_capacity(cells.len());
        for c in cells.iter_mut() {
            let m = if dim == 1 {
                let m = nodes[c[1]][0] - nodes[c[0]][0];
                if m < 0.0 {
                    c.swap(0, 1);
                }
                m.abs()
            } else {
                let (a, b, d) = (nodes[c[0]], nodes[c[1]], nodes[c[2]]);
                let s = ((b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])) / 2.0;
                if s < 0.0 {
                    c.swap(1, 2);
                }
                s.abs()
            };
            if !(m > 0.0) {
                return Err(Error::Spec("degenerate element".into()));
            }
            measure.push(m);
        }
        Ok(Mesh {
            dim,
            nodes,
            cells,
            dirichlet,
            measure,
            grading,
            boundary_gap: 0.0,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, e: usize) -> &[usize] {
        &self.cells[e][..self.dim + 1]
    }

    /// Gradients of the barycentric shape functions on cell `e`.
    pub fn shape_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let c = self.cells[e];
        if self.dim == 1 {
            let h = self.nodes[c[1]][0] - self.nodes[c[0]][0];
            return [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]];
        }
        let (a, b, d) = (self.nodes[c[0]], self.nodes[c[1]], self.nodes[c[2]]);
        let j = [[b[0] - a[0], d[0] - a[0]], [b[1] - a[1], d[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // Rows of J^{-T}.
        let g1 = [j[1][1] / det, -j[0][1] / det];
        let g2 = [-j[1][0] / det, j[0][0] / det];
        [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
    }

    /// Physical point from barycentric coordinates in cell `e`.
    pub fn point(&self, e: usize, bary: &[f64; 3]) -> Point {
        let c = self.cell(e);
        let mut x = [0.0, 0.0];
        for (k, &i) in c.iter().enumerate() {
            x[0] += bary[k] * self.nodes[i][0];
            x[1] += bary[k] * self.nodes[i][1];
        }
        x
    }

    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| !self.dirichlet[i]).collect()
    }

    pub fn max_cell_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for e in 0..self.n_cells() {
            let c = self.cell(e);
            for a in 0..c.len() {
                for b in a + 1..c.len() {
                    h = h.max(norm(sub(self.nodes[c[a]], self.nodes[c[b]])));
                }
            }
        }
        h
    }

    /// Submesh of cells lying in the closed ball of radius `radius`; its rim becomes Dirichlet.
    pub fn restrict_to_ball(&self, radius: f64) -> Result<Mesh> {
        let keep = |i: usize| norm(self.nodes[i]) <= radius * (1.0 + 1e-9);
        self.restrict(|e| self.cell(e).iter().all(|&i| keep(i)), |i| self.dirichlet[i])
    }

    /// Submesh of cells touching {d < width}; nodes with d ≥ width become Dirichlet.
    pub fn restrict_to_collar(&self, domain: &DomainSpec, width: f64) -> Result<Mesh> {
        let d: Vec<f64> = self
            .nodes
            .iter()
            .map(|x| domain.distance_to_boundary(*x))
            .collect::<Result<_>>()?;
        self.restrict(
            |e| self.cell(e).iter().any(|&i| d[i] < width),
            |i| self.dirichlet[i] || d[i] >= width * (1.0 - 1e-12),
        )
    }

    /// Nodes shared with a dropped cell are Dirichlet, so zero extension stays conforming.
    fn restrict(&self, keep_cell: impl Fn(usize) -> bool, dir: impl Fn(usize) -> bool) -> Result<Mesh> {
        let kept: Vec<bool> = (0..self.n_cells()).map(&keep_cell).collect();
        let mut cut = vec![false; self.n_nodes()];
        for e in (0..self.n_cells()).filter(|&e| !kept[e]) {
            for &i in self.cell(e) {
                cut[i] = true;
            }
        }
        let mut map = vec![usize::MAX; self.n_nodes()];
        let mut nodes = Vec::new();
        let mut dirichlet = Vec::new();
        let mut cells = Vec::new();
        for e in 0..self.n_cells() {
            if !kept[e] {
                continue;
            }
            let mut c = self.cells[e];
            for k in 0..=self.dim {
                let i = c[k];
                if map[i] == usize::MAX {
                    map[i] = nodes.len();
                    nodes.push(self.nodes[i]);
                    dirichlet.push(dir(i) || cut[i]);
                }
                c[k] = map[i];
            }
            cells.push(c);
        }
        if cells.is_empty() {
            return Err(Error::Spec("restriction leaves no elements".into()));
        }
        let mut m = Mesh::new(self.dim, nodes, cells, dirichlet, self.grading)?;
        m.boundary_gap = self.boundary_gap;
        Ok(m)
    }

    /// Mesh scaled by `s` about the origin.
    pub fn dilate(&self, s: f64) -> Result<Mesh> {
        let nodes = self.nodes.iter().map(|x| [s * x[0], s * x[1]]).collect();
        let mut m = Mesh::new(self.dim, nodes, self.cells.clone(), self.dirichlet.clone(), self.grading)?;
        m.boundary_gap = self.boundary_gap * s;
        Ok(m)
    }

    /// Mesh rotated by `angle` about the origin.
    pub fn rotate(&self, angle: f64) -> Result<Mesh> {
        let (s, c) = angle.sin_cos();
        let nodes = self.nodes.iter().map(|x| [c * x[0] - s * x[1], s * x[0] + c * x[1]]).collect();
        let mut m = Mesh::new(self.dim, nodes, self.cells.clone(), self.dirichlet.clone(), self.grading)?;
        m.boundary_gap = self.boundary_gap;
        Ok(m)
    }

    /// Barycentric coordinates of `x` in cell `e`.
    pub fn barycentric(&self, e: usize, x: Point) -> [f64; 3] {
        let c = self.cells[e];
        if self.dim == 1 {
            let (a, b) = (self.nodes[c[0]][0], self.nodes[c[1]][0]);
            let t = (x[0] - a) / (b - a);
            return [1.0 - t, t, 0.0];
        }
        let g = self.shape_gradients(e);
        let a = self.nodes[c[0]];
        let d = sub(x, a);
        let l1 = dot(g[1], d);
        let l2 = dot(g[2], d);
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Nodal scalar function on a mesh, zero on Dirichlet nodes.
#[derive(Clone, Debug)]
pub struct Field {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Field> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Spec("field length must match node count".into()));
        }
        if values.iter().zip(&mesh.dirichlet).any(|(v, &d)| d && *v != 0.0) {
            return Err(Error::Spec("field must vanish on Dirichlet nodes".into()));
        }
        Ok(Field { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Field {
        let n = mesh.n_nodes();
        Field {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f`, forced to zero on Dirichlet nodes.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Field {
        let values = mesh
            .nodes
            .iter()
            .zip(&mesh.dirichlet)
            .map(|(x, &d)| if d { 0.0 } else { f(*x) })
            .collect();
        Field { mesh, values }
    }

    /// Positive bump: distance from each node to the nearest Dirichlet node.
    pub fn bump(mesh: Arc<Mesh>) -> Field {
        let dir: Vec<Point> = mesh
            .nodes
            .iter()
            .zip(&mesh.dirichlet)
            .filter(|(_, &d)| d)
            .map(|(x, _)| *x)
            .collect();
        let values = if dir.is_empty() {
            vec![1.0; mesh.n_nodes()]
        } else {
            mesh.nodes
                .iter()
                .zip(&mesh.dirichlet)
                .map(|(x, &d)| {
                    if d {
                        0.0
                    } else {
                        dir.iter().map(|y| norm(sub(*x, *y))).fold(f64::INFINITY, f64::min)
                    }
                })
                .collect()
        };
        Field { mesh, values }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Value at a point inside cell `e`.
    pub fn eval_in(&self, e: usize, x: Point) -> f64 {
        let b = self.mesh.barycentric(e, x);
        self.mesh.cell(e).iter().enumerate().map(|(k, &i)| b[k] * self.values[i]).sum()
    }

    /// Interpolate onto another mesh covering (part of) the same region; points not found get 0.
    pub fn transfer(&self, target: Arc<Mesh>) -> Field {
        let locator = Locator::new(&self.mesh);
        let values = target
            .nodes
            .iter()
            .zip(&target.dirichlet)
            .map(|(x, &d)| {
                if d {
                    0.0
                } else {
                    locator.find(&self.mesh, *x).map(|e| self.eval_in(e, *x)).unwrap_or(0.0)
                }
            })
            .collect();
        Field { mesh: target, values }
    }
}

/// Bucket grid for point location.
struct Locator {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Locator {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for x in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        let ext = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let side = ((mesh.n_cells() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let cell = ext / side as f64;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).min(side + 1);
        let ny = if mesh.dim == 1 {
            1
        } else {
            (((hi[1] - lo[1]) / cell).floor() as usize + 1).min(side + 1)
        };
        let mut buckets = vec![Vec::new(); nx * ny];
        for e in 0..mesh.n_cells() {
            let mut blo = [f64::INFINITY; 2];
            let mut bhi = [f64::NEG_INFINITY; 2];
            for &i in mesh.cell(e) {
                for k in 0..2 {
                    blo[k] = blo[k].min(mesh.nodes[i][k]);
                    bhi[k] = bhi[k].max(mesh.nodes[i][k]);
                }
            }
            let ix0 = (((blo[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let ix1 = (((bhi[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let (iy0, iy1) = if ny == 1 {
                (0, 0)
            } else {
                (
                    (((blo[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1),
                    (((bhi[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1),
                )
            };
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    buckets[iy * nx + ix].push(e);
                }
            }
        }
        Locator {
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    fn find(&self, mesh: &Mesh, x: Point) -> Option<usize> {
        let ix = ((x[0] - self.lo[0]) / self.cell).floor();
        let iy = if self.ny == 1 {
            0.0
        } else {
            ((x[1] - self.lo[1]) / self.cell).floor()
        };
        if ix < 0.0 || iy < 0.0 {
            return None;
        }
        let (ix, iy) = (ix as usize, iy as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        let mut best = None;
        let mut best_min = f64::NEG_INFINITY;
        for &e in &self.buckets[iy * self.nx + ix] {
            let b = mesh.barycentric(e, x);
            let m = b[..=mesh.dim].iter().cloned().fold(f64::INFINITY, f64::min);
            if m >= -1e-10 {
                return Some(e);
            }
            if m > best_min {
                best_min = m;
                best = Some(e);
            }
        }
        if best_min > -1e-6 {
            best
        } else {
            None
        }
    }
}

/// Base counts per refinement level.
pub const INTERVAL_CELLS: usize = 8;
pub const CAP_CELLS: usize = 16;
pub const POLAR_RINGS: usize = 4;
pub const POLAR_SPOKES: usize = 8;

fn pow2(level: usize) -> usize {
    1usize << level
}

/// Power grading on [0, 1] toward 0 (Origin), both ends (Boundary) or none.
fn graded(t: f64, beta: f64, focus: Focus) -> f64 {
    match focus {
        Focus::Origin => t.powf(beta),
        Focus::Uniform => t,
        Focus::Boundary => {
            if t <= 0.5 {
                0.5 * (2.0 * t).powf(beta)
            } else {
                1.0 - 0.5 * (2.0 * (1.0 - t)).powf(beta)
            }
        }
    }
}

/// Default grading target for a domain.
pub fn default_focus(domain: &DomainSpec) -> Focus {
    match domain {
        DomainSpec::Polygon { .. } | DomainSpec::Collar { .. } => Focus::Boundary,
        DomainSpec::ConeCap { .. } => Focus::Uniform,
        _ => Focus::Origin,
    }
}

/// Mesh at `level` with grading exponent `grading`, concentrated where `default_focus` says.
pub fn build_mesh(domain: &DomainSpec, level: usize, grading: f64) -> Result<Mesh> {
    build_mesh_with(
        domain,
        &MeshSpec {
            level,
            grading,
            focus: default_focus(domain),
        },
    )
}

pub fn build_mesh_with(domain: &DomainSpec, spec: &MeshSpec) -> Result<Mesh> {
    domain.validate()?;
    if !(spec.grading >= 1.0) {
        return Err(Error::Spec("grading exponent must be at least 1".into()));
    }
    let beta = if spec.focus == Focus::Uniform { 1.0 } else { spec.grading };
    let grading = Grading {
        beta,
        level: spec.level,
        focus: spec.focus,
    };
    match domain {
        DomainSpec::Interval { length } | DomainSpec::HalfBall { n: 1, radius: length, .. } => {
            interval_mesh(*length, INTERVAL_CELLS * pow2(spec.level), grading, true, true)
        }
        DomainSpec::ConeCap { n, .. } => {
            let len = domain.cap_length().unwrap();
            let g = Grading {
                beta: 1.0,
                focus: Focus::Uniform,
                ..grading
            };
            interval_mesh(len, CAP_CELLS * pow2(spec.level), g, *n == 2, true)
        }
        DomainSpec::HalfBall { radius, axis, .. } => {
            let k = POLAR_SPOKES * pow2(spec.level);
            let m = POLAR_RINGS * pow2(spec.level);
            let radii: Vec<f64> = (0..=m).map(|j| radius * graded(j as f64 / m as f64, beta, Focus::Origin)).collect();
            let start = axis[1].atan2(axis[0]) - PI / 2.0;
            polar_mesh(&radii, start, PI, k, grading)
        }
        DomainSpec::Sector {
            delta,
            inner,
            outer,
            axis,
        } => {
            let alpha = (-delta).acos();
            let span = 2.0 * alpha;
            let k0 = ((POLAR_SPOKES as f64 * span / PI).round() as usize).max(POLAR_SPOKES);
            let k = k0 * pow2(spec.level);
            let start = axis[1].atan2(axis[0]) - alpha;
            let radii: Vec<f64> = if *inner == 0.0 {
                let m = POLAR_RINGS * pow2(spec.level);
                (0..=m).map(|j| outer * graded(j as f64 / m as f64, beta, Focus::Origin)).collect()
            } else {
                // Geometric rings: square cells in logarithmic coordinates.
                let dtheta = span / k as f64;
                let log_len = (outer / inner).ln();
                let m = ((log_len / dtheta).ceil() as usize).max(POLAR_RINGS * pow2(spec.level));
                let mut r: Vec<f64> = (0..=m).map(|j| inner * (log_len * j as f64 / m as f64).exp()).collect();
                // Inner chords tangent to the inner circle keep the mesh inside the sector.
                r[0] = inner / (dtheta / 2.0).cos();
                if r[0] >= r[1] {
                    return Err(Error::Spec("sector too thin for this refinement level".into()));
                }
                r[m] = *outer;
                r
            };
            polar_mesh(&radii, start, span, k, grading)
        }
        DomainSpec::ExteriorLens { obstacle, truncation } => {
            let rho = norm(*obstacle);
            if spec.focus == Focus::Boundary && *truncation > 2.0 * rho * (1.0 + 1e-9) {
                annulus_lens_mesh(*obstacle, *truncation, spec.level, beta, grading)
            } else {
                let g = Grading {
                    focus: Focus::Origin,
                    ..grading
                };
                polar_lens_mesh(*obstacle, *truncation, spec.level, beta, g)
            }
        }
        DomainSpec::Polygon { vertices } => polygon_mesh(vertices, spec.level, beta, grading),
        DomainSpec::Collar { base, width } => {
            let inradius = inradius_estimate(base)?;
            if *width >= inradius {
                return Err(Error::Spec("collar width must stay below the inradius".into()));
            }
            let b = build_mesh_with(
                base,
                &MeshSpec {
                    focus: Focus::Boundary,
                    ..*spec
                },
            )?;
            b.restrict_to_collar(base, *width)
        }
    }
}

pub(crate) fn inradius_estimate(domain: &DomainSpec) -> Result<f64> {
    match domain {
        DomainSpec::Polygon { vertices } => {
            let n = vertices.len();
            let mut c = [0.0, 0.0];
            for v in vertices {
                c[0] += v[0] / n as f64;
                c[1] += v[1] / n as f64;
            }
            // Max of d over a sample grid around the vertex centroid.
            let diam = domain.diameter()?;
            let mut best: f64 = 0.0;
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = [c[0] + diam * (i as f64 / 40.0 - 0.5), c[1] + diam * (j as f64 / 40.0 - 0.5)];
                    if domain.contains(x) {
                        best = best.max(domain.distance_to_boundary(x)?);
                    }
                }
            }
            Ok(best)
        }
        DomainSpec::HalfBall { radius, .. } => Ok(radius / 2.0),
        _ => Err(Error::Unsupported("collar base must be a polygon or half-ball".into())),
    }
}

/// `n` cells on [0, len], nodes at len·g(i/n) for the grading map g.
pub fn interval_mesh(len: f64, n: usize, grading: Grading, dir_left: bool, dir_right: bool) -> Result<Mesh> {
    let nodes: Vec<Point> = (0..=n)
        .map(|i| [len * graded(i as f64 / n as f64, grading.beta, grading.focus), 0.0])
        .collect();
    let cells = (0..n).map(|i| [i, i + 1, usize::MAX]).collect();
    let mut dirichlet = vec![false; n + 1];
    dirichlet[0] = dir_left;
    dirichlet[n] = dir_right;
    Mesh::new(1, nodes, cells, dirichlet, grading)
}

/// 1D mesh with explicit nodes (increasing) and Dirichlet flags at the ends.
pub fn interval_mesh_from_nodes(xs: &[f64], dir_left: bool, dir_right: bool, grading: Grading) -> Result<Mesh> {
    let n = xs.len() - 1;
    let nodes = xs.iter().map(|&x| [x, 0.0]).collect();
    let cells = (0..n).map(|i| [i, i + 1, usize::MAX]).collect();
    let mut dirichlet = vec![false; n + 1];
    dirichlet[0] = dir_left;
    dirichlet[n] = dir_right;
    Mesh::new(1, nodes, cells, dirichlet, grading)
}

/// Polar mesh on {radii[0] ≤ |x| ≤ radii[m], start ≤ θ ≤ start + span}; all boundary nodes are Dirichlet.
/// If radii[0] = 0 the first node is the (Dirichlet) centre.
pub fn polar_mesh(radii: &[f64], start: f64, span: f64, k: usize, grading: Grading) -> Result<Mesh> {
    let m = radii.len() - 1;
    let center = radii[0] == 0.0;
    let mut nodes = Vec::new();
    let mut dirichlet = Vec::new();
    if center {
        nodes.push([0.0, 0.0]);
        dirichlet.push(true);
    }
    let first = if center { 1 } else { 0 };
    let base = |j: usize| if center { 1 + (j - 1) * (k + 1) } else { j * (k + 1) };
    for j in first..=m {
        for i in 0..=k {
            let t = start + span * i as f64 / k as f64;
            nodes.push([radii[j] * t.cos(), radii[j] * t.sin()]);
            dirichlet.push(i == 0 || i == k || j == m || (!center && j == 0));
        }
    }
    let mut cells = Vec::new();
    if center {
        for i in 0..k {
            cells.push([0, base(1) + i, base(1) + i + 1]);
        }
    }
    for j in first.max(if center { 1 } else { 0 })..m {
        for i in 0..k {
            let a = base(j) + i;
            let b = base(j + 1) + i;
            cells.push([a, b, b + 1]);
            cells.push([a, b + 1, a + 1]);
        }
    }
    let mut mesh = Mesh::new(2, nodes, cells, dirichlet, grading)?;
    mesh.boundary_gap = radii[m] * (1.0 - (span / k as f64 / 2.0).cos());
    Ok(mesh)
}

/// Exterior lens meshed in polar coordinates about the origin.
fn polar_lens_mesh(c: Point, r: f64, level: usize, beta: f64, grading: Grading) -> Result<Mesh> {
    let rho = norm(c);
    let ang_c = c[1].atan2(c[0]);
    let k = 2 * POLAR_SPOKES * pow2(level);
    let m = POLAR_RINGS * pow2(level);
    let far = 2.0 * rho;
    let dpsi = 2.0 * PI / k as f64;
    let mut radii: Vec<f64> = (1..=m).map(|j| r * (j as f64 / m as f64).powf(beta)).collect();
    // Rings where the allowed angular window widens by one spoke.
    let mut i = 1;
    loop {
        let s = far * (i as f64 * dpsi).cos();
        if i as f64 * dpsi >= PI / 2.0 || s <= 0.0 {
            break;
        }
        if s < r {
            radii.push(s);
        }
        i += 1;
    }
    radii.sort_by(|a, b| a.total_cmp(b));
    let mut rings: Vec<f64> = Vec::new();
    for s in radii {
        if let Some(&prev) = rings.last() {
            if s - prev < 1e-3 * s.max(prev) {
                // Keep the structurally important ring.
                let important = |t: f64| (t - r).abs() < 1e-12;
                if important(s) {
                    rings.pop();
                } else {
                    continue;
                }
            }
        }
        rings.push(s);
    }
    if (rings.last().unwrap() - r).abs() > 1e-12 * r {
        return Err(Error::Spec("lens ring construction lost the outer circle".into()));
    }

    // Ring layout: open rings (angular window) have k+1 nodes; closed rings k nodes.
    struct Ring {
        base: usize,
        closed: bool,
    }
    let mut nodes: Vec<Point> = vec![[0.0, 0.0]];
    let mut dirichlet = vec![true];
    let mut ring_info = Vec::new();
    let nr = rings.len();
    for (jr, &s) in rings.iter().enumerate() {
        let last = jr + 1 == nr;
        let base = nodes.len();
        if s < far * (1.0 - 1e-12) {
            let psi0 = (s / far).acos();
            for i in 0..=k {
                let t = ang_c + psi0 + (2.0 * PI - 2.0 * psi0) * i as f64 / k as f64;
                nodes.push([s * t.cos(), s * t.sin()]);
                dirichlet.push(i == 0 || i == k || last);
            }
            ring_info.push(Ring { base, closed: false });
        } else {
            // The first closed ring's node on the ray through c closes off the far cap of the obstacle.
            let first_closed = ring_info.last().map(|r: &Ring| !r.closed).unwrap_or(true);
            for i in 0..k {
                let t = ang_c + 2.0 * PI * i as f64 / k as f64;
                nodes.push([s * t.cos(), s * t.sin()]);
                dirichlet.push(last || (first_closed && i == 0));
            }
            ring_info.push(Ring { base, closed: true });
        }
    }
    let idx = |ring: &Ring, i: usize| if ring.closed { ring.base + i % k } else { ring.base + i };
    let mut cells = Vec::new();
    for i in 0..k {
        cells.push([0, idx(&ring_info[0], i), idx(&ring_info[0], i + 1)]);
    }
    for j in 0..nr - 1 {
        let (ra, rb) = (&ring_info[j], &ring_info[j + 1]);
        for i in 0..k {
            let a = idx(ra, i);
            let a1 = idx(ra, i + 1);
            let b = idx(rb, i);
            let b1 = idx(rb, i + 1);
            cells.push([a, b, b1]);
            cells.push([a, b1, a1]);
        }
    }

    // Push obstacle-boundary chains outward so that every boundary chord avoids the obstacle.
    let mut fixed = vec![false; nodes.len()];
    fixed[0] = true;
    let mut chains: Vec<Vec<usize>> = vec![vec![0], vec![0]];
    for (j, ring) in ring_info.iter().enumerate() {
        if ring.closed {
            chains[0].push(ring.base);
            chains[1].push(ring.base);
            fixed[ring.base] = true;
            break;
        }
        chains[0].push(ring.base);
        chains[1].push(ring.base + k);
        if j + 1 == nr {
            fixed[ring.base] = true;
            fixed[ring.base + k] = true;
        }
    }
    for chain in &chains {
        push_chain_outward(&mut nodes, chain, &fixed, c, rho)?;
    }
    let mut mesh = Mesh::new(2, nodes, cells, dirichlet, grading)?;
    mesh.boundary_gap = r * (1.0 - (PI / k as f64).cos());
    Ok(mesh)
}

/// Moves free chain nodes radially away from `c` until every chain segment stays outside the disc B_rho(c).
fn push_chain_outward(nodes: &mut [Point], chain: &[usize], fixed: &[bool], c: Point, rho: f64) -> Result<()> {
    let target = rho * (1.0 - 1e-12);
    let push = |x: Point, f: f64| [c[0] + f * (x[0] - c[0]), c[1] + f * (x[1] - c[1])];
    for _ in 0..200 {
        let mut clean = true;
        for w in chain.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = segment_distance(c, nodes[a], nodes[b]);
            if d >= target {
                continue;
            }
            clean = false;
            match (fixed[a], fixed[b]) {
                (true, true) => {
                    return Err(Error::Spec("boundary chord between fixed nodes crosses the obstacle".into()))
                }
                (false, false) => {
                    let f = rho / d * (1.0 + 1e-9);
                    nodes[a] = push(nodes[a], f);
                    nodes[b] = push(nodes[b], f);
                }
                (fa, _) => {
                    // Move the free end until the fixed end is the point nearest to c.
                    let (fx, fr) = if fa { (a, b) } else { (b, a) };
                    let ca = sub(nodes[fx], c);
                    let den = dot(sub(nodes[fr], c), ca);
                    let f = if den > 0.0 {
                        (dot(ca, ca) / den).max(rho / d) * (1.0 + 1e-9)
                    } else {
                        rho / d * (1.0 + 1e-9)
                    };
                    nodes[fr] = push(nodes[fr], f);
                }
            }
        }
        if clean {
            return Ok(());
        }
    }
    Err(Error::Spec("could not make the obstacle boundary conforming".into()))
}

/// Exterior lens (r > 2ρ) meshed in polar coordinates about the obstacle centre, graded toward both boundaries.
fn annulus_lens_mesh(c: Point, r: f64, level: usize, beta: f64, grading: Grading) -> Result<Mesh> {
    let rho = norm(c);
    let ang_c = c[1].atan2(c[0]);
    let k = 2 * POLAR_SPOKES * pow2(level);
    let m = 2 * POLAR_RINGS * pow2(level);
    let s_in = rho / (PI / k as f64).cos();
    let mut nodes = Vec::new();
    let mut dirichlet = Vec::new();
    for j in 0..=m {
        let eta = graded(j as f64 / m as f64, beta, Focus::Boundary);
        for i in 0..k {
            let phi = ang_c + PI + 2.0 * PI * i as f64 / k as f64;
            let e = [phi.cos(), phi.sin()];
            let ce = dot(c, e);
            let s_out = -ce + (ce * ce + r * r - rho * rho).sqrt();
            let s = s_in + (s_out - s_in) * eta;
            nodes.push([c[0] + s * e[0], c[1] + s * e[1]]);
            dirichlet.push(j == 0 || j == m);
        }
    }
    let mut cells = Vec::new();
    for j in 0..m {
        for i in 0..k {
            let a = j * k + i;
            let a1 = j * k + (i + 1) % k;
            let b = (j + 1) * k + i;
            let b1 = (j + 1) * k + (i + 1) % k;
            cells.push([a, b, b1]);
            cells.push([a, b1, a1]);
        }
    }
    let mut mesh = Mesh::new(2, nodes, cells, dirichlet, grading)?;
    mesh.boundary_gap = (s_in - rho).max(r * (1.0 - (PI / k as f64).cos()));
    Ok(mesh)
}

/// Layered mesh of a polygon star-shaped about its vertex centroid: homothetic copies of the boundary.
fn polygon_mesh(v: &[Point], level: usize, beta: f64, grading: Grading) -> Result<Mesh> {
    let nv = v.len();
    let mut c = [0.0, 0.0];
    for p in v {
        c[0] += p[0] / nv as f64;
        c[1] += p[1] / nv as f64;
    }
    for i in 0..nv {
        let (a, b) = (v[i], v[(i + 1) % nv]);
        let cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if !(cr > 0.0) {
            return Err(Error::Unsupported(
                "polygon meshing needs a polygon star-shaped about its vertex centroid".into(),
            ));
        }
    }
    let m = POLAR_RINGS * pow2(level);
    let sub_edges = ((POLAR_SPOKES * pow2(level)) as f64 / nv as f64).ceil().max(1.0) as usize;
    let mut bnd = Vec::new();
    for i in 0..nv {
        let (a, b) = (v[i], v[(i + 1) % nv]);
        for s in 0..sub_edges {
            let t = s as f64 / sub_edges as f64;
            bnd.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let nb = bnd.len();
    let mut nodes = vec![c];
    let mut dirichlet = vec![false];
    for layer in 1..=m {
        let t = layer as f64 / m as f64;
        let s = match grading.focus {
            Focus::Uniform => t,
            _ => 1.0 - (1.0 - t).powf(beta),
        };
        for p in &bnd {
            nodes.push([c[0] + s * (p[0] - c[0]), c[1] + s * (p[1] - c[1])]);
            dirichlet.push(layer == m);
        }
    }
    let idx = |layer: usize, b: usize| 1 + (layer - 1) * nb + b % nb;
    let mut cells = Vec::new();
    for b in 0..nb {
        cells.push([0, idx(1, b), idx(1, b + 1)]);
    }
    for layer in 1..m {
        for b in 0..nb {
            cells.push([idx(layer, b), idx(layer + 1, b), idx(layer + 1, b + 1)]);
            cells.push([idx(layer, b), idx(layer + 1, b + 1), idx(layer, b + 1)]);
        }
    }
    Mesh::new(2, nodes, cells, dirichlet, grading)
}

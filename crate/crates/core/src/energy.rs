//! Discrete p-energies, singular weighted masses, quotients and their gradients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{norm, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::mesh::{Field, Mesh};
use crate::quadrature::{quadrature_points, QuadratureRule, Subdivision};
use crate::sparse::{DofMap, Pattern, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    OriginPower,
    BoundaryDistance,
    None,
}

fn default_n() -> usize {
    2
}

fn default_weight() -> WeightKind {
    WeightKind::OriginPower
}

/// The quotient being minimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    pub p: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_weight")]
    pub weight: WeightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_constant: Option<f64>,
}

impl ProblemSpec {
    pub fn new(n: usize, p: f64, lambda: f64, weight: WeightKind) -> ProblemSpec {
        ProblemSpec {
            n,
            p,
            lambda,
            weight,
            reference_constant: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::Spec("p must exceed 1".into()));
        }
        if self.n < 1 {
            return Err(Error::Spec("N must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Spec("lambda must be finite".into()));
        }
        if let Some(c) = self.reference_constant {
            if !(c > 0.0) {
                return Err(Error::Spec("reference constant must be positive".into()));
            }
        }
        Ok(())
    }
}

/// c_p = ((p−1)/p)^p.
pub fn c_p(p: f64) -> f64 {
    ((p - 1.0) / p).powf(p)
}

/// Half-space Hardy constant where it is known in closed form.
pub fn half_space_constant(n: usize, p: f64) -> Option<f64> {
    if n == 1 {
        Some(c_p(p))
    } else if p == 2.0 {
        Some((n * n) as f64 / 4.0)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet_energy: f64,
    pub weighted_mass: f64,
    pub plain_mass: f64,
    pub quotient: f64,
}

/// Weight value at an interior point.
pub fn weight_eval(problem: &ProblemSpec, domain: &DomainSpec, x: Point) -> Result<f64> {
    if !(problem.p > 1.0) {
        return Err(Error::Spec("p must exceed 1".into()));
    }
    match problem.weight {
        WeightKind::OriginPower => {
            let r = if domain.dim() == 1 { x[0].abs() } else { norm(x) };
            if r == 0.0 {
                return Err(Error::Singularity);
            }
            Ok(r.powf(-problem.p))
        }
        WeightKind::BoundaryDistance => {
            let d = domain.weight_distance(x)?;
            if d <= 0.0 {
                return Err(Error::Singularity);
            }
            Ok(d.powf(-problem.p))
        }
        WeightKind::None => Ok(1.0),
    }
}

/// How numerator and denominator are built from the three integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormKind {
    /// (E − λ·P)/W, or (E − λ·P)/P without a weight.
    Standard { lambda: f64 },
    /// (E − κ·W)/P.
    Shifted { kappa: f64 },
    /// Cap energy over sin-weighted mass.
    Cap { c2: f64 },
}

#[derive(Clone, Copy, Debug)]
struct MassPoint {
    cell: u32,
    bary: [f64; 3],
    /// Quadrature weight times the singular weight.
    ws: f64,
    /// Quadrature weight times the plain weight.
    wp: f64,
    sdist: f64,
}

/// Integral values for one field.
#[derive(Clone, Copy, Debug, Default)]
pub struct Parts {
    pub energy: f64,
    pub weighted: f64,
    pub plain: f64,
}

/// A fully assembled discrete quotient on one mesh.
#[derive(Clone, Debug)]
pub struct Discrete {
    pub mesh: Arc<Mesh>,
    pub p: f64,
    pub kind: FormKind,
    pub dofs: DofMap,
    pattern: Arc<Pattern>,
    grads: Vec<[[f64; 2]; 3]>,
    coef: Vec<f64>,
    pts: Vec<MassPoint>,
    has_weight: bool,
    node_dist: Vec<f64>,
}

type PointFn<'a> = &'a dyn Fn(Point) -> Result<f64>;

impl Discrete {
    fn assemble(
        mesh: Arc<Mesh>,
        p: f64,
        kind: FormKind,
        singular: Option<(PointFn, &dyn Fn(Point) -> f64)>,
        plain_weight: Option<&dyn Fn(Point) -> f64>,
        weighted_energy: bool,
    ) -> Result<Discrete> {
        let rule = QuadratureRule::default_for(mesh.dim);
        let qp = match &singular {
            Some((_, dist)) => quadrature_points(&mesh, &rule, Some((*dist, Subdivision::default()))),
            None => quadrature_points(&mesh, &rule, None),
        };
        let mut pts = Vec::with_capacity(qp.len());
        for q in &qp {
            let (ws, sdist) = match &singular {
                Some((wf, dist)) => (q.w * wf(q.x)?, dist(q.x)),
                None => (0.0, f64::INFINITY),
            };
            let wp = q.w * plain_weight.map(|f| f(q.x)).unwrap_or(1.0);
            pts.push(MassPoint {
                cell: q.cell as u32,
                bary: q.bary,
                ws,
                wp,
                sdist,
            });
        }
        let coef = if weighted_energy {
            let mut c = vec![0.0; mesh.n_cells()];
            for q in &pts {
                c[q.cell as usize] += q.wp;
            }
            c
        } else {
            mesh.measure.clone()
        };
        let grads = (0..mesh.n_cells()).map(|e| mesh.shape_gradients(e)).collect();
        let dofs = DofMap::new(&mesh);
        if dofs.is_empty() {
            return Err(Error::Spec("mesh has no free nodes".into()));
        }
        let pattern = Arc::new(Pattern::from_mesh(&mesh, &dofs));
        let node_dist = match &singular {
            Some((_, dist)) => mesh.nodes.iter().map(|x| dist(*x)).collect(),
            None => Vec::new(),
        };
        Ok(Discrete {
            mesh,
            p,
            kind,
            dofs,
            pattern,
            grads,
            coef,
            pts,
            has_weight: singular.is_some(),
            node_dist,
        })
    }

    /// Standard quotient (E − λP)/W for `problem` on a mesh of `domain`.
    pub fn standard(problem: &ProblemSpec, domain: &DomainSpec, mesh: Arc<Mesh>) -> Result<Discrete> {
        problem.validate()?;
        check_weight_domain(problem.weight, domain)?;
        let kind = FormKind::Standard { lambda: problem.lambda };
        Self::with_weight(problem, domain, mesh, kind)
    }

    /// Shifted quotient (E − κW)/P with κ the problem's reference constant.
    pub fn shifted(problem: &ProblemSpec, domain: &DomainSpec, mesh: Arc<Mesh>) -> Result<Discrete> {
        problem.validate()?;
        check_weight_domain(problem.weight, domain)?;
        let kappa = problem
            .reference_constant
            .ok_or_else(|| Error::Config("shifted quotient needs a reference constant".into()))?;
        if problem.weight == WeightKind::None {
            return Err(Error::Spec("shifted quotient needs a singular weight".into()));
        }
        Self::with_weight(problem, domain, mesh, FormKind::Shifted { kappa })
    }

    fn with_weight(problem: &ProblemSpec, domain: &DomainSpec, mesh: Arc<Mesh>, kind: FormKind) -> Result<Discrete> {
        let wfn = |x: Point| weight_eval(problem, domain, x);
        let one_d = domain.dim() == 1;
        match problem.weight {
            WeightKind::None => Self::assemble(mesh, problem.p, kind, None, None, false),
            WeightKind::OriginPower => {
                let dist = move |x: Point| if one_d { x[0].abs() } else { norm(x) };
                Self::assemble(mesh, problem.p, kind, Some((&wfn, &dist)), None, false)
            }
            WeightKind::BoundaryDistance => {
                let dist = |x: Point| domain.weight_distance(x).unwrap_or(0.0);
                Self::assemble(mesh, problem.p, kind, Some((&wfn, &dist)), None, false)
            }
        }
    }

    /// Reduced cap quotient on a ConeCap mesh.
    pub fn cap(n: usize, p: f64, mesh: Arc<Mesh>) -> Result<Discrete> {
        if !(p > 1.0) {
            return Err(Error::Spec("p must exceed 1".into()));
        }
        if n < 2 || mesh.dim != 1 {
            return Err(Error::Spec("cap quotient needs N >= 2 on a 1D cap mesh".into()));
        }
        let c = (n as f64 - p) / p;
        let sw = move |x: Point| if n == 2 { 1.0 } else { x[0].sin().powi(n as i32 - 2) };
        Self::assemble(mesh, p, FormKind::Cap { c2: c * c }, None, Some(&sw), false)
    }

    /// ∫ r^{p−1}|f'|^p / ∫ r^{p−1}|f|^p on an interval mesh.
    pub fn radial(p: f64, mesh: Arc<Mesh>) -> Result<Discrete> {
        if !(p > 1.0) {
            return Err(Error::Spec("p must exceed 1".into()));
        }
        let rw = move |x: Point| x[0].abs().powf(p - 1.0);
        Self::assemble(mesh, p, FormKind::Standard { lambda: 0.0 }, None, Some(&rw), true)
    }

    pub fn n_free(&self) -> usize {
        self.dofs.len()
    }

    fn cell_gradient(&self, e: usize, u: &[f64]) -> [f64; 2] {
        let c = self.mesh.cells[e];
        let g = &self.grads[e];
        let mut d = [0.0, 0.0];
        for k in 0..=self.mesh.dim {
            d[0] += g[k][0] * u[c[k]];
            d[1] += g[k][1] * u[c[k]];
        }
        d
    }

    fn value_at(&self, q: &MassPoint, u: &[f64]) -> f64 {
        let c = self.mesh.cells[q.cell as usize];
        (0..=self.mesh.dim).map(|k| q.bary[k] * u[c[k]]).sum()
    }

    pub fn parts(&self, u: &[f64]) -> Parts {
        let p = self.p;
        let mut out = Parts::default();
        for q in &self.pts {
            let a = self.value_at(q, u).abs().powf(p);
            out.weighted += q.ws * a;
            out.plain += q.wp * a;
        }
        match self.kind {
            FormKind::Cap { c2 } => {
                for q in &self.pts {
                    let v = self.value_at(q, u);
                    let d = self.cell_gradient(q.cell as usize, u)[0];
                    out.energy += q.wp * (c2 * v * v + d * d).powf(p / 2.0);
                }
            }
            _ => {
                for e in 0..self.mesh.n_cells() {
                    let d = self.cell_gradient(e, u);
                    out.energy += self.coef[e] * (d[0] * d[0] + d[1] * d[1]).powf(p / 2.0);
                }
            }
        }
        if !self.has_weight {
            out.weighted = out.plain;
        }
        out
    }

    /// (numerator, denominator) from the three integrals.
    pub fn num_den(&self, parts: &Parts) -> (f64, f64) {
        match self.kind {
            FormKind::Standard { lambda } => (parts.energy - lambda * parts.plain, parts.weighted),
            FormKind::Shifted { kappa } => (parts.energy - kappa * parts.weighted, parts.plain),
            FormKind::Cap { .. } => (parts.energy, parts.plain),
        }
    }

    pub fn breakdown(&self, u: &[f64]) -> Result<EnergyBreakdown> {
        let parts = self.parts(u);
        let (num, den) = self.num_den(&parts);
        if !(den > 0.0) {
            return Err(Error::DegenerateField);
        }
        Ok(EnergyBreakdown {
            dirichlet_energy: parts.energy,
            weighted_mass: parts.weighted,
            plain_mass: parts.plain,
            quotient: num / den,
        })
    }

    pub fn quotient(&self, u: &[f64]) -> Result<f64> {
        Ok(self.breakdown(u)?.quotient)
    }

    /// Coefficients (c_s, c_p) of the singular and plain mass in a linear combination.
    fn mass_coefs(&self, num_scale: f64, den_scale: f64) -> (f64, f64) {
        let (s, pl) = match self.kind {
            FormKind::Standard { lambda } => {
                if self.has_weight {
                    (den_scale, -lambda * num_scale)
                } else {
                    (0.0, den_scale - lambda * num_scale)
                }
            }
            FormKind::Shifted { kappa } => (-kappa * num_scale, den_scale),
            FormKind::Cap { .. } => (0.0, den_scale),
        };
        (s, pl)
    }

    /// Full-length gradient of a·num + b·den.
    pub fn combined_gradient(&self, u: &[f64], a: f64, b: f64) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; u.len()];
        let (cs, cp) = self.mass_coefs(a, b);
        let dim = self.mesh.dim;
        for q in &self.pts {
            let v = self.value_at(q, u);
            if v == 0.0 {
                continue;
            }
            let f = p * v.abs().powf(p - 2.0) * v * (cs * q.ws + cp * q.wp);
            let c = self.mesh.cells[q.cell as usize];
            for k in 0..=dim {
                g[c[k]] += f * q.bary[k];
            }
        }
        if a != 0.0 {
            match self.kind {
                FormKind::Cap { c2 } => {
                    for q in &self.pts {
                        let e = q.cell as usize;
                        let v = self.value_at(q, u);
                        let d = self.cell_gradient(e, u)[0];
                        let base = c2 * v * v + d * d;
                        if base == 0.0 {
                            continue;
                        }
                        let f = a * p * q.wp * base.powf(p / 2.0 - 1.0);
                        let c = self.mesh.cells[e];
                        for k in 0..2 {
                            g[c[k]] += f * (c2 * v * q.bary[k] + d * self.grads[e][k][0]);
                        }
                    }
                }
                _ => {
                    for e in 0..self.mesh.n_cells() {
                        let d = self.cell_gradient(e, u);
                        let n2 = d[0] * d[0] + d[1] * d[1];
                        if n2 == 0.0 {
                            continue;
                        }
                        let f = a * p * self.coef[e] * n2.powf(p / 2.0 - 1.0);
                        let c = self.mesh.cells[e];
                        let gr = &self.grads[e];
                        for k in 0..=dim {
                            g[c[k]] += f * (d[0] * gr[k][0] + d[1] * gr[k][1]);
                        }
                    }
                }
            }
        }
        for (gi, &d) in g.iter_mut().zip(&self.mesh.dirichlet) {
            if d {
                *gi = 0.0;
            }
        }
        g
    }

    /// Gradient of num − q·den, zero on Dirichlet nodes.
    pub fn residual(&self, u: &[f64], q: f64) -> Vec<f64> {
        self.combined_gradient(u, 1.0, -q)
    }

    /// Matrix (on free nodes) of the quadratic form a·E + mass terms, with E and masses
    /// linearized at `u` (secant form) when given, or the exact p=2 forms otherwise.
    pub fn matrix(&self, u: Option<&[f64]>, a: f64, b: f64, mass_in_num: bool) -> SymMatrix {
        self.form_matrix(u, a, b, mass_in_num, false)
    }

    /// Hessian of a·num + b·den at `u` on free nodes, regularized where |u| or |∇u| vanish.
    pub fn hessian(&self, u: &[f64], a: f64, b: f64) -> SymMatrix {
        self.form_matrix(Some(u), a, b, true, true)
    }

    fn form_matrix(&self, u: Option<&[f64]>, a: f64, b: f64, mass_in_num: bool, full: bool) -> SymMatrix {
        let p = if u.is_some() { self.p } else { 2.0 };
        // Second-derivative factor of |t|^p relative to the secant form.
        let curv = if full { p - 1.0 } else { 1.0 };
        let pre = if u.is_some() { self.p } else { 1.0 };
        let mut m = SymMatrix::zeros(self.pattern.clone());
        let dim = self.mesh.dim;
        let idx = &self.dofs.index;
        let (cs, cp) = if mass_in_num { self.mass_coefs(a, b) } else { self.den_coefs(b) };
        // Regularization scale for |u|^{p−2} and |∇u|^{p−2} when p < 2.
        let (ueps, geps) = match u {
            Some(u) if self.p < 2.0 || full => {
                let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let gmax = (0..self.mesh.n_cells())
                    .map(|e| {
                        let d = self.cell_gradient(e, u);
                        (d[0] * d[0] + d[1] * d[1]).sqrt()
                    })
                    .fold(0.0f64, f64::max);
                (1e-6 * umax, 1e-6 * gmax)
            }
            _ => (0.0, 0.0),
        };
        if cs != 0.0 || cp != 0.0 {
            for q in &self.pts {
                let wgt = cs * q.ws + cp * q.wp;
                let s = match u {
                    Some(u) => curv * pre * self.value_at(q, u).abs().max(ueps).powf(p - 2.0),
                    None => 1.0,
                };
                let c = self.mesh.cells[q.cell as usize];
                for k in 0..=dim {
                    let i = idx[c[k]];
                    if i == usize::MAX {
                        continue;
                    }
                    for l in 0..=dim {
                        let j = idx[c[l]];
                        if j != usize::MAX {
                            m.add(i, j, wgt * s * q.bary[k] * q.bary[l]);
                        }
                    }
                }
            }
        }
        if a != 0.0 {
            match self.kind {
                FormKind::Cap { c2 } => {
                    for q in &self.pts {
                        let e = q.cell as usize;
                        let c = self.mesh.cells[e];
                        let g = &self.grads[e];
                        let (s, t, v, d) = match u {
                            Some(u) => {
                                let v = self.value_at(q, u);
                                let d = self.cell_gradient(e, u)[0];
                                let base = (c2 * v * v + d * d).max(ueps * ueps + geps * geps);
                                let t = if full { pre * (p - 2.0) * base.powf(p / 2.0 - 2.0) } else { 0.0 };
                                (pre * base.powf(p / 2.0 - 1.0), t, v, d)
                            }
                            None => (1.0, 0.0, 0.0, 0.0),
                        };
                        for k in 0..2 {
                            let i = idx[c[k]];
                            if i == usize::MAX {
                                continue;
                            }
                            let zk = c2 * v * q.bary[k] + d * g[k][0];
                            for l in 0..2 {
                                let j = idx[c[l]];
                                if j != usize::MAX {
                                    let zl = c2 * v * q.bary[l] + d * g[l][0];
                                    let w = c2 * q.bary[k] * q.bary[l] + g[k][0] * g[l][0];
                                    m.add(i, j, a * q.wp * (s * w + t * zk * zl));
                                }
                            }
                        }
                    }
                }
                _ => {
                    for e in 0..self.mesh.n_cells() {
                        let (s, t, d) = match u {
                            Some(u) => {
                                let d = self.cell_gradient(e, u);
                                let n = (d[0] * d[0] + d[1] * d[1]).sqrt().max(geps);
                                let t = if full && n > 0.0 { pre * (p - 2.0) * n.powf(p - 4.0) } else { 0.0 };
                                (pre * n.powf(p - 2.0), t, d)
                            }
                            None => (1.0, 0.0, [0.0, 0.0]),
                        };
                        let c = self.mesh.cells[e];
                        let g = &self.grads[e];
                        for k in 0..=dim {
                            let i = idx[c[k]];
                            if i == usize::MAX {
                                continue;
                            }
                            let zk = d[0] * g[k][0] + d[1] * g[k][1];
                            for l in 0..=dim {
                                let j = idx[c[l]];
                                if j != usize::MAX {
                                    let zl = d[0] * g[l][0] + d[1] * g[l][1];
                                    let w = s * (g[k][0] * g[l][0] + g[k][1] * g[l][1]) + t * zk * zl;
                                    m.add(i, j, a * self.coef[e] * w);
                                }
                            }
                        }
                    }
                }
            }
        }
        m
    }

    fn den_coefs(&self, b: f64) -> (f64, f64) {
        match self.kind {
            FormKind::Standard { .. } if self.has_weight => (b, 0.0),
            FormKind::Standard { .. } => (0.0, b),
            FormKind::Shifted { .. } | FormKind::Cap { .. } => (0.0, b),
        }
    }

    /// Smallest ratio (denominator weight)/(plain weight) over quadrature points.
    pub fn min_den_ratio(&self) -> f64 {
        match self.kind {
            FormKind::Standard { .. } if self.has_weight => self
                .pts
                .iter()
                .filter(|q| q.wp > 0.0)
                .map(|q| q.ws / q.wp)
                .fold(f64::INFINITY, f64::min),
            _ => 1.0,
        }
    }

    /// Fraction of the singular-weighted mass carried within distance ρ of the singular set, per ρ.
    pub fn mass_fractions(&self, u: &[f64], radii: &[f64]) -> Vec<f64> {
        if !self.has_weight {
            return vec![0.0; radii.len()];
        }
        let mut total = 0.0;
        let mut near = vec![0.0; radii.len()];
        for q in &self.pts {
            let m = q.ws * self.value_at(q, u).abs().powf(self.p);
            total += m;
            for (k, &r) in radii.iter().enumerate() {
                if q.sdist < r {
                    near[k] += m;
                }
            }
        }
        near.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect()
    }

    /// Smallest distance from a free node to the singular set (mesh resolution there).
    pub fn singular_gap(&self) -> Option<f64> {
        if self.node_dist.is_empty() {
            return None;
        }
        let g = self.dofs.free.iter().map(|&i| self.node_dist[i]).fold(f64::INFINITY, f64::min);
        (g > 0.0 && g.is_finite()).then_some(g)
    }

    /// Scale `u` so the denominator equals 1.
    pub fn normalize(&self, u: &mut [f64]) -> Result<()> {
        let (_, den) = self.num_den(&self.parts(u));
        if !(den > 0.0) {
            return Err(Error::DegenerateField);
        }
        let s = den.powf(-1.0 / self.p);
        u.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }
}

/// Rejects weight/domain combinations the quotient is not defined for.
pub fn check_weight_domain(weight: WeightKind, domain: &DomainSpec) -> Result<()> {
    match weight {
        WeightKind::OriginPower => {
            if domain.origin_in_interior() {
                return Err(Error::Spec("origin weight needs the origin outside the open domain".into()));
            }
            if matches!(domain, DomainSpec::ConeCap { .. }) {
                return Err(Error::Spec("cap domains use the cap quotient".into()));
            }
        }
        WeightKind::BoundaryDistance => {
            domain.diameter()?;
        }
        WeightKind::None => {}
    }
    Ok(())
}

fn assert_same_mesh(field: &Field) -> Result<()> {
    if field.values.len() != field.mesh.n_nodes() {
        return Err(Error::Spec("field does not conform to its mesh".into()));
    }
    Ok(())
}

/// ∫|∇u|^p, exact for affine elements.
pub fn dirichlet_p_energy(field: &Field, p: f64) -> f64 {
    let mesh = &field.mesh;
    (0..mesh.n_cells())
        .map(|e| {
            let g = mesh.shape_gradients(e);
            let c = mesh.cell(e);
            let mut d = [0.0, 0.0];
            for (k, &i) in c.iter().enumerate() {
                d[0] += g[k][0] * field.values[i];
                d[1] += g[k][1] * field.values[i];
            }
            mesh.measure[e] * (d[0] * d[0] + d[1] * d[1]).powf(p / 2.0)
        })
        .sum()
}

/// ∫ w|u|^p with the given rule and singular subdivision.
pub fn weighted_p_mass(field: &Field, problem: &ProblemSpec, domain: &DomainSpec, rule: &QuadratureRule) -> Result<f64> {
    assert_same_mesh(field)?;
    if problem.weight == WeightKind::None {
        return Err(Error::Spec("weighted mass needs a weight".into()));
    }
    let mesh = &field.mesh;
    let one_d = mesh.dim == 1;
    let dist = |x: Point| match problem.weight {
        WeightKind::OriginPower => {
            if one_d {
                x[0].abs()
            } else {
                norm(x)
            }
        }
        _ => domain.weight_distance(x).unwrap_or(0.0),
    };
    let pts = quadrature_points(mesh, rule, Some((&dist, Subdivision::default())));
    let mut s = 0.0;
    for q in pts {
        let c = mesh.cell(q.cell);
        let v: f64 = c.iter().enumerate().map(|(k, &i)| q.bary[k] * field.values[i]).sum();
        if v != 0.0 {
            s += q.w * weight_eval(problem, domain, q.x)? * v.abs().powf(problem.p);
        }
    }
    Ok(s)
}

/// ∫|u|^p.
pub fn plain_p_mass(field: &Field, p: f64, rule: &QuadratureRule) -> f64 {
    let mesh = &field.mesh;
    quadrature_points(mesh, rule, None)
        .iter()
        .map(|q| {
            let v: f64 = mesh.cell(q.cell).iter().enumerate().map(|(k, &i)| q.bary[k] * field.values[i]).sum();
            q.w * v.abs().powf(p)
        })
        .sum()
}

/// All three integrals and (E − λP)/W for a field.
pub fn quotient_value(field: &Field, problem: &ProblemSpec, domain: &DomainSpec) -> Result<EnergyBreakdown> {
    assert_same_mesh(field)?;
    let d = Discrete::standard(problem, domain, field.mesh.clone())?;
    d.breakdown(&field.values)
}

/// Nodal gradient of F − μG at μ equal to the current quotient.
pub fn quotient_gradient(field: &Field, problem: &ProblemSpec, domain: &DomainSpec) -> Result<Field> {
    assert_same_mesh(field)?;
    let d = Discrete::standard(problem, domain, field.mesh.clone())?;
    let q = d.quotient(&field.values)?;
    Ok(Field {
        mesh: field.mesh.clone(),
        values: d.residual(&field.values, q),
    })
}

/// Reduced cap quotient of a field on a ConeCap mesh.
pub fn cap_quotient(field: &Field, p: f64, n: usize) -> Result<EnergyBreakdown> {
    assert_same_mesh(field)?;
    let d = Discrete::cap(n, p, field.mesh.clone())?;
    d.breakdown(&field.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{interval_mesh_from_nodes, Focus, Grading};

    fn line(n: usize) -> Arc<Mesh> {
        let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let g = Grading {
            beta: 1.0,
            level: 0,
            focus: Focus::Uniform,
        };
        Arc::new(interval_mesh_from_nodes(&xs, true, false, g).unwrap())
    }

    #[test]
    fn linear_field_has_unit_weighted_mass() {
        let mesh = line(8);
        let f = Field::new(mesh.clone(), mesh.nodes.iter().map(|x| x[0]).collect()).unwrap();
        let dom = DomainSpec::Interval { length: 1.0 };
        for p in [2.0, 3.0] {
            let pr = ProblemSpec::new(1, p, 0.0, WeightKind::OriginPower);
            let w = weighted_p_mass(&f, &pr, &dom, &QuadratureRule::gauss_segment()).unwrap();
            assert!((w - 1.0).abs() < 1e-12);
        }
        let pr = ProblemSpec::new(1, 2.0, 1.0, WeightKind::OriginPower);
        let b = quotient_value(&f, &pr, &dom).unwrap();
        assert!((b.quotient - 2.0 / 3.0).abs() < 1e-12);
    }
}

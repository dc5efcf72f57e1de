//! Pointwise and integral inequality checks with margin reports.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{norm, DomainSpec, Point};
use crate::energy::{c_p, Discrete, ProblemSpec, WeightKind};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh_with, inradius_estimate, polar_mesh, Field, Focus, Grading, Mesh, MeshSpec};
use crate::quadrature::{quadrature_points, QuadratureRule};
use crate::solvers::{lambda_star_direct, solve_cap, solve_discrete, solve_levels, SolveOptions};

/// First Dirichlet eigenvalue of the unit disc, j_{0,1}².
pub const DISC_EIGENVALUE: f64 = 5.783185962946784;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginReport {
    pub check: String,
    pub parameters: serde_json::Value,
    pub samples: usize,
    /// Smallest margin divided by its sample's scale.
    pub min_margin: f64,
    pub argmin_sample: Vec<f64>,
    pub seed: Option<u64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl MarginReport {
    fn new(check: &str, parameters: serde_json::Value, seed: Option<u64>, tolerance: f64) -> Self {
        MarginReport {
            check: check.into(),
            parameters,
            samples: 0,
            min_margin: f64::INFINITY,
            argmin_sample: Vec::new(),
            seed,
            tolerance,
            passed: true,
        }
    }

    fn record(&mut self, margin: f64, sample: &[f64]) {
        self.samples += 1;
        if margin < self.min_margin || self.argmin_sample.is_empty() {
            self.min_margin = margin;
            self.argmin_sample = sample.to_vec();
        }
        self.passed = self.min_margin >= -self.tolerance;
    }
}

fn v2norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn vdot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// |a|^{p−2}a·b, zero at a = 0.
fn pdot(a: [f64; 2], b: [f64; 2], p: f64) -> f64 {
    let na = v2norm(a);
    if na == 0.0 {
        0.0
    } else {
        na.powf(p - 2.0) * vdot(a, b)
    }
}

/// Remainder term of the vector inequality: |b|^p/(2^{p−1}−1) for p ≥ 2,
/// c·|b|²/(|a|+|b|)^{2−p} for p < 2.
fn remainder(a: [f64; 2], b: [f64; 2], p: f64, c_small: Option<f64>) -> Result<f64> {
    let nb = v2norm(b);
    if p >= 2.0 {
        Ok(nb.powf(p) / (2f64.powf(p - 1.0) - 1.0))
    } else {
        let c = c_small.ok_or_else(|| Error::Config("p < 2 needs a calibrated c(p)".into()))?;
        let s = v2norm(a) + nb;
        Ok(if s == 0.0 { 0.0 } else { c * nb * nb / s.powf(2.0 - p) })
    }
}

/// (margin, scale) of |a+b|^p ≥ |a|^p + R(a,b) + p|a|^{p−2}a·b.
pub fn lindqvist_margin(a: [f64; 2], b: [f64; 2], p: f64, c_small: Option<f64>) -> Result<(f64, f64)> {
    if !(p > 1.0) {
        return Err(Error::Spec("p must exceed 1".into()));
    }
    if p < 2.0 && v2norm(a) == 0.0 && v2norm(b) == 0.0 {
        return Err(Error::Precondition("a and b must not both vanish".into()));
    }
    let lhs = v2norm([a[0] + b[0], a[1] + b[1]]).powf(p);
    let rhs = v2norm(a).powf(p) + remainder(a, b, p, c_small)? + p * pdot(a, b, p);
    let scale = (v2norm(a) + v2norm(b)).powf(p);
    Ok((lhs - rhs, scale))
}

/// Single-sample check; the report's margin is normalized by (|a|+|b|)^p.
pub fn lindqvist_check(a: [f64; 2], b: [f64; 2], p: f64, c_small: Option<f64>) -> Result<MarginReport> {
    let (m, s) = lindqvist_margin(a, b, p, c_small)?;
    let mut r = MarginReport::new("lindqvist", json!({"a": a, "b": b, "p": p, "c_small": c_small}), None, 1e-12);
    r.record(if s > 0.0 { m / s } else { m }, &[a[0], a[1], b[0], b[1], p]);
    Ok(r)
}

/// Random (a, b, p) with |a|, |b| ≤ radius and p uniform in `p_range`.
pub fn lindqvist_random(
    samples: usize,
    seed: u64,
    p_range: [f64; 2],
    radius: f64,
    c_small: Option<f64>,
) -> Result<MarginReport> {
    if !(p_range[0] > 1.0 && p_range[1] >= p_range[0]) {
        return Err(Error::Spec("p range must lie above 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = MarginReport::new(
        "lindqvist",
        json!({"p_range": p_range, "radius": radius, "c_small": c_small}),
        Some(seed),
        1e-12,
    );
    let draw = |rng: &mut ChaCha8Rng| {
        let rad = radius * rng.gen::<f64>();
        let t = 2.0 * PI * rng.gen::<f64>();
        [rad * t.cos(), rad * t.sin()]
    };
    for _ in 0..samples {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let p = if p_range[1] > p_range[0] {
            rng.gen_range(p_range[0]..=p_range[1])
        } else {
            p_range[0]
        };
        if p < 2.0 && v2norm(a) == 0.0 && v2norm(b) == 0.0 {
            continue;
        }
        let (m, s) = lindqvist_margin(a, b, p, c_small)?;
        r.record(if s > 0.0 { m / s } else { m }, &[a[0], a[1], b[0], b[1], p]);
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub t_points: usize,
    pub phi_points: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub refinements: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            t_points: 400,
            phi_points: 200,
            t_min: 1e-4,
            t_max: 1e4,
            refinements: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub p: f64,
    pub estimate: f64,
    /// (t, φ) of the minimizing sample.
    pub argmin: [f64; 2],
    /// Estimate from the same search on a grid of half the density.
    pub coarse_estimate: f64,
    pub spec: CalibrationSpec,
}

/// (|a+b|^p − 1 − p a·b)(1+t)^{2−p}/t² for a = (1,0), b = t(cos φ, sin φ).
pub fn small_p_ratio(p: f64, t: f64, phi: f64) -> f64 {
    let c = phi.cos();
    let s = 2.0 * t * c + t * t;
    let head = (0.5 * p * s.ln_1p()).exp_m1() - p * t * c;
    head * (1.0 + t).powf(2.0 - p) / (t * t)
}

fn grid_min(p: f64, spec: &CalibrationSpec) -> (f64, [f64; 2]) {
    let (lt0, lt1) = (spec.t_min.ln(), spec.t_max.ln());
    let nt = spec.t_points.max(2);
    let nf = spec.phi_points.max(2);
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..nt {
        let t = (lt0 + (lt1 - lt0) * i as f64 / (nt - 1) as f64).exp();
        for j in 0..nf {
            let phi = PI * j as f64 / (nf - 1) as f64;
            let v = small_p_ratio(p, t, phi);
            if v.is_finite() && v < best.0 {
                best = (v, [t, phi]);
            }
        }
    }
    // Local refinement around the grid minimum.
    let (mut dlt, mut dphi) = ((lt1 - lt0) / (nt - 1) as f64, PI / (nf - 1) as f64);
    for _ in 0..spec.refinements {
        let (lt, ph) = (best.1[0].ln(), best.1[1]);
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                let t = (lt + dlt * i as f64 / 4.0).clamp(lt0, lt1).exp();
                let phi = (ph + dphi * j as f64 / 4.0).clamp(0.0, PI);
                let v = small_p_ratio(p, t, phi);
                if v.is_finite() && v < best.0 {
                    best = (v, [t, phi]);
                }
            }
        }
        dlt /= 4.0;
        dphi /= 4.0;
    }
    best
}

/// Usable constant c(p) for p ∈ (1,2): grid minimum of the reduced ratio.
pub fn calibrate_c_small_p(p: f64, spec: &CalibrationSpec) -> Result<Calibration> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::Spec("calibration needs p in (1, 2)".into()));
    }
    let (estimate, argmin) = grid_min(p, spec);
    let coarse = CalibrationSpec {
        t_points: spec.t_points / 2,
        phi_points: spec.phi_points / 2,
        ..*spec
    };
    let (coarse_estimate, _) = grid_min(p, &coarse);
    if !(estimate > 0.0) {
        return Err(Error::Calibration(format!("nonpositive estimate {estimate} at p = {p}")));
    }
    Ok(Calibration {
        p,
        estimate,
        argmin,
        coarse_estimate,
        spec: *spec,
    })
}

#[derive(Clone, Debug)]
enum Profile {
    /// √(2/π)·sin θ on (0, π).
    HalfPlane,
    /// Sorted nodes and values of a cap minimizer.
    Discrete { xs: Vec<f64>, vs: Vec<f64> },
}

/// v(x) = |x|^{(p−N)/p} V(x/|x|) on the cone over a cap.
#[derive(Clone, Debug)]
pub struct EigenField {
    pub n: usize,
    pub p: f64,
    /// Cap value μ̂ (exact for the analytic field).
    pub value: f64,
    /// Angular length of the cap: the arc (0, 2Θ) for N = 2, (0, Θ) for N ≥ 3.
    pub cap_length: f64,
    pub exponent: f64,
    profile: Profile,
}

impl EigenField {
    /// v = √(2/π)·x₂/|x| on the upper half-plane, N = p = 2, μ = 1.
    pub fn half_plane() -> EigenField {
        EigenField {
            n: 2,
            p: 2.0,
            value: 1.0,
            cap_length: PI,
            exponent: 0.0,
            profile: Profile::HalfPlane,
        }
    }

    /// Nodal cap profile, if discrete.
    pub fn cap_field(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.profile {
            Profile::Discrete { xs, vs } => Some((xs.clone(), vs.clone())),
            Profile::HalfPlane => None,
        }
    }

    /// (V(θ), V'(θ)).
    pub fn profile(&self, theta: f64) -> (f64, f64) {
        match &self.profile {
            Profile::HalfPlane => {
                let a = (2.0 / PI).sqrt();
                if (0.0..=PI).contains(&theta) {
                    (a * theta.sin(), a * theta.cos())
                } else {
                    (0.0, 0.0)
                }
            }
            Profile::Discrete { xs, vs } => {
                let n = xs.len();
                if theta < xs[0] || theta > xs[n - 1] {
                    return (0.0, 0.0);
                }
                let k = match xs.binary_search_by(|x| x.total_cmp(&theta)) {
                    Ok(k) => k.min(n - 2),
                    Err(k) => (k.max(1) - 1).min(n - 2),
                };
                let h = xs[k + 1] - xs[k];
                let s = (theta - xs[k]) / h;
                (vs[k] + s * (vs[k + 1] - vs[k]), (vs[k + 1] - vs[k]) / h)
            }
        }
    }

    fn check_planar(&self) -> Result<()> {
        if self.n != 2 {
            return Err(Error::Unsupported("planar evaluation needs N = 2".into()));
        }
        Ok(())
    }

    /// v at a point of the plane (N = 2); the cone is {0 < arg x < cap_length}.
    pub fn value_at(&self, x: Point) -> Result<f64> {
        self.check_planar()?;
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let th = x[1].atan2(x[0]);
        let th = if th < -1e-12 { th + 2.0 * PI } else { th.max(0.0) };
        Ok(r.powf(self.exponent) * self.profile(th).0)
    }

    /// ∇v = r^{k−1}(k V e_r + V' e_θ) with k the homogeneity degree.
    pub fn gradient_at(&self, x: Point) -> Result<[f64; 2]> {
        self.check_planar()?;
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let th = x[1].atan2(x[0]);
        let th = if th < -1e-12 { th + 2.0 * PI } else { th.max(0.0) };
        let (v, dv) = self.profile(th);
        let k = self.exponent;
        let f = r.powf(k - 1.0);
        let (er, et) = ([th.cos(), th.sin()], [-th.sin(), th.cos()]);
        Ok([
            f * (k * v * er[0] + dv * et[0]),
            f * (k * v * er[1] + dv * et[1]),
        ])
    }

    /// v at a point of ℝ^N; the cone axis is e_N for N ≥ 3.
    pub fn value_nd(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::Spec("point dimension does not match N".into()));
        }
        if self.n == 2 {
            return self.value_at([x[0], x[1]]);
        }
        let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let th = (x[self.n - 1] / r).clamp(-1.0, 1.0).acos();
        Ok(r.powf(self.exponent) * self.profile(th).0)
    }
}

/// Wraps the cap minimizer for (N, p) into the homogeneous field.
pub fn build_eigenfield(n: usize, p: f64, cap: &DomainSpec, opts: &SolveOptions) -> Result<EigenField> {
    let res = solve_cap(n, p, cap, opts)?;
    let len = cap.cap_length().ok_or_else(|| Error::Spec("eigenfields need a cap domain".into()))?;
    let mesh = &res.field.mesh;
    let mut pairs: Vec<(f64, f64)> = mesh.nodes.iter().map(|x| x[0]).zip(res.field.values.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vmax = pairs.iter().fold(0.0f64, |m, v| m.max(v.1.abs()));
    if pairs.iter().any(|v| v.1 < -1e-8 * vmax) {
        return Err(Error::Precondition("cap minimizer changes sign".into()));
    }
    Ok(EigenField {
        n,
        p,
        value: res.value,
        cap_length: len,
        exponent: (p - n as f64) / p,
        profile: Profile::Discrete {
            xs: pairs.iter().map(|v| v.0).collect(),
            vs: pairs.iter().map(|v| v.1.max(0.0)).collect(),
        },
    })
}

/// Polar mesh of {eps_r < |x| < 1, 0 < θ < cap_length} with log-uniform rings.
pub fn truncated_cone_mesh(ef: &EigenField, level: usize, eps_r: f64) -> Result<Mesh> {
    ef.check_planar()?;
    if !(eps_r > 0.0 && eps_r < 1.0) {
        return Err(Error::Spec("eps_r must lie in (0, 1)".into()));
    }
    let k = 16 << level;
    let dphi = ef.cap_length / k as f64;
    let lr = (1.0 / eps_r).ln();
    let m = (lr / dphi).ceil().max(1.0) as usize;
    let radii: Vec<f64> = (0..=m).map(|j| eps_r * (lr * j as f64 / m as f64).exp()).collect();
    polar_mesh(
        &radii,
        0.0,
        ef.cap_length,
        k,
        Grading {
            beta: 1.0,
            level,
            focus: Focus::Uniform,
        },
    )
}

/// C³ bump ((s−a)(b−s))⁴ on (a, b) with peak 1, and its derivative.
fn bump(s: f64, a: f64, b: f64) -> (f64, f64) {
    if s <= a || s >= b {
        return (0.0, 0.0);
    }
    let m = 0.5 * (b - a);
    let q = (s - a) * (b - s);
    let scale = m.powi(8);
    (q.powi(4) / scale, 4.0 * q.powi(3) * ((b - s) - (s - a)) / scale)
}

const WINDOWS: [(f64, f64); 3] = [(0.05, 0.55), (0.25, 0.75), (0.45, 0.95)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakResidual {
    pub level: usize,
    pub mu: f64,
    pub residual: f64,
    pub per_test: Vec<f64>,
}

/// max over a family of interior bump test fields h of
/// |∫|∇v|^{p−2}∇v·∇h − μ∫|x|^{−p}v^{p−1}h| / ‖∇h‖_p, on a truncated cone mesh.
pub fn weak_residual(ef: &EigenField, mu: f64, level: usize, eps_r: f64) -> Result<WeakResidual> {
    let mesh = truncated_cone_mesh(ef, level, eps_r)?;
    let p = ef.p;
    let lr = (1.0 / eps_r).ln();
    let span = ef.cap_length;
    let pts = quadrature_points(&mesh, &QuadratureRule::default_for(2), None);
    let mut acc = vec![[0.0f64; 3]; WINDOWS.len() * WINDOWS.len()];
    for q in &pts {
        let r = norm(q.x);
        let th = q.x[1].atan2(q.x[0]).max(0.0);
        let s = (r / eps_r).ln() / lr;
        let t = th / span;
        let v = ef.value_at(q.x)?;
        let gv = ef.gradient_at(q.x)?;
        let flux = v2norm(gv).powf(p - 2.0);
        let (er, et) = ([th.cos(), th.sin()], [-th.sin(), th.cos()]);
        for (i, &(a1, b1)) in WINDOWS.iter().enumerate() {
            let (e1, d1) = bump(s, a1, b1);
            if e1 == 0.0 && d1 == 0.0 {
                continue;
            }
            for (j, &(a2, b2)) in WINDOWS.iter().enumerate() {
                let (e2, d2) = bump(t, a2, b2);
                let h = e1 * e2;
                let cr = d1 * e2 / (r * lr);
                let ct = e1 * d2 / (r * span);
                let gh = [cr * er[0] + ct * et[0], cr * er[1] + ct * et[1]];
                let slot = &mut acc[i * WINDOWS.len() + j];
                slot[0] += q.w * flux * vdot(gv, gh);
                slot[1] += q.w * r.powf(-p) * v.abs().powf(p - 2.0) * v * h;
                slot[2] += q.w * v2norm(gh).powf(p);
            }
        }
    }
    let per_test: Vec<f64> = acc
        .iter()
        .map(|a| if a[2] > 0.0 { (a[0] - mu * a[1]).abs() / a[2].powf(1.0 / p) } else { 0.0 })
        .collect();
    Ok(WeakResidual {
        level,
        mu,
        residual: per_test.iter().cloned().fold(0.0, f64::max),
        per_test,
    })
}

/// Nodal field u = v·ψ with ψ(s, t) = bump(s)·(1 + amp·cos(kπt)), s = log-radial and t = angular coordinate.
pub fn bump_profile(ef: &EigenField, mesh: Arc<Mesh>, eps_r: f64, window: (f64, f64), amp: f64, k: usize) -> Result<Field> {
    let lr = (1.0 / eps_r).ln();
    let mut vals = Vec::with_capacity(mesh.n_nodes());
    for (x, &dir) in mesh.nodes.iter().zip(&mesh.dirichlet) {
        if dir {
            vals.push(0.0);
            continue;
        }
        let r = norm(*x);
        let th = x[1].atan2(x[0]).max(0.0);
        let s = (r / eps_r).ln() / lr;
        let t = th / ef.cap_length;
        let psi = bump(s, window.0, window.1).0 * (1.0 + amp * (k as f64 * PI * t).cos());
        vals.push(if psi == 0.0 { 0.0 } else { ef.value_at(*x)? * psi });
    }
    Field::new(mesh, vals)
}

/// The standard family of `count` nonnegative bump profiles.
pub fn bump_family(ef: &EigenField, mesh: Arc<Mesh>, eps_r: f64, count: usize) -> Result<Vec<Field>> {
    (0..count)
        .map(|j| {
            let c = 0.25 + 0.5 * ((j * 7) % count.max(1)) as f64 / count.max(1) as f64;
            let w = 0.12 + 0.08 * (j % 3) as f64;
            let amp = 0.6 * ((j % 5) as f64) / 4.0;
            bump_profile(ef, mesh.clone(), eps_r, (c - w, c + w), amp, 1 + j % 3)
        })
        .collect()
}

/// Checks ∫|∇u|^p − μ∫|x|^{−p}|u|^p ≥ remainder term in ψ = u/v.
/// u is represented as ψ_h·v with ψ_h the nodal interpolant of u/v.
pub fn reduction_remainder_check(
    u: &Field,
    ef: &EigenField,
    mu: f64,
    c_small: Option<f64>,
    tolerance: f64,
) -> Result<MarginReport> {
    ef.check_planar()?;
    let p = ef.p;
    if p < 2.0 && c_small.is_none() {
        return Err(Error::Config("p < 2 needs a calibrated c(p)".into()));
    }
    let mesh = &u.mesh;
    let vnode: Vec<f64> = mesh.nodes.iter().map(|x| ef.value_at(*x)).collect::<Result<_>>()?;
    let vmax = vnode.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut psi = vec![0.0; mesh.n_nodes()];
    for i in 0..mesh.n_nodes() {
        let ui = u.values[i];
        if ui < 0.0 {
            return Err(Error::Precondition("u must be nonnegative".into()));
        }
        if ui > 0.0 {
            if vnode[i] < 1e-10 * vmax {
                return Err(Error::Conditioning(format!("v below floor on the support of u at node {i}")));
            }
            psi[i] = ui / vnode[i];
        }
    }
    let pts = quadrature_points(mesh, &QuadratureRule::default_for(2), None);
    let (mut energy, mut weighted, mut rem) = (0.0, 0.0, 0.0);
    for q in &pts {
        let c = mesh.cell(q.cell);
        let g = mesh.shape_gradients(q.cell);
        let ps: f64 = (0..3).map(|k| q.bary[k] * psi[c[k]]).sum();
        let gp = [
            (0..3).map(|k| g[k][0] * psi[c[k]]).sum::<f64>(),
            (0..3).map(|k| g[k][1] * psi[c[k]]).sum::<f64>(),
        ];
        if ps == 0.0 && gp == [0.0, 0.0] {
            continue;
        }
        let v = ef.value_at(q.x)?;
        let gv = ef.gradient_at(q.x)?;
        let a = [ps * gv[0], ps * gv[1]];
        let b = [v * gp[0], v * gp[1]];
        let gu = [a[0] + b[0], a[1] + b[1]];
        energy += q.w * v2norm(gu).powf(p);
        weighted += q.w * norm(q.x).powf(-p) * (ps * v).abs().powf(p);
        rem += q.w * remainder(a, b, p, c_small)?;
    }
    let lhs = energy - mu * weighted;
    let mut r = MarginReport::new(
        "reduction_remainder",
        json!({"p": p, "n": ef.n, "mu": mu, "c_small": c_small}),
        None,
        tolerance,
    );
    let scale = energy.max(f64::MIN_POSITIVE);
    r.record((lhs - rem) / scale, &[lhs, rem, energy]);
    Ok(r)
}

/// One pointwise sample for the distance substitution u = d^{(p−1)/p} v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistanceSample {
    pub d: f64,
    pub grad_d: [f64; 2],
    pub v: f64,
    pub grad_v: [f64; 2],
}

/// (margin, scale) of |∇u|^p − c_p d^{−p}|u|^p ≥ R + ((p−1)/p)^{p−1}∇d·∇(|v|^p).
pub fn distance_substitution_margin(s: &DistanceSample, p: f64, c_small: Option<f64>) -> Result<(f64, f64)> {
    if !(s.d > 0.0) {
        return Err(Error::Precondition("distance must be positive".into()));
    }
    if (v2norm(s.grad_d) - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition("distance gradient must have unit length".into()));
    }
    let k = (p - 1.0) / p;
    let a = [k * s.d.powf(-1.0 / p) * s.v * s.grad_d[0], k * s.d.powf(-1.0 / p) * s.v * s.grad_d[1]];
    let b = [s.d.powf(k) * s.grad_v[0], s.d.powf(k) * s.grad_v[1]];
    let gu = [a[0] + b[0], a[1] + b[1]];
    let lhs = v2norm(gu).powf(p) - c_p(p) * s.v.abs().powf(p) / s.d;
    let grad_vp = p * s.v.abs().powf(p - 2.0) * s.v;
    let cross = if s.v == 0.0 { 0.0 } else { k.powf(p - 1.0) * grad_vp * vdot(s.grad_d, s.grad_v) };
    let rhs = remainder(a, b, p, c_small)? + cross;
    Ok((lhs - rhs, (v2norm(a) + v2norm(b)).powf(p)))
}

pub fn distance_substitution_check(samples: &[DistanceSample], p: f64, c_small: Option<f64>, seed: Option<u64>) -> Result<MarginReport> {
    let mut r = MarginReport::new("distance_substitution", json!({"p": p, "c_small": c_small}), seed, 1e-12);
    for s in samples {
        let (m, sc) = distance_substitution_margin(s, p, c_small)?;
        r.record(if sc > 0.0 { m / sc } else { m }, &[s.d, s.grad_d[0], s.grad_d[1], s.v, s.grad_v[0], s.grad_v[1]]);
    }
    Ok(r)
}

/// d ∈ (0, 2), unit ∇d, v ∈ (−2, 2), ∇v ∈ [−2, 2]².
pub fn random_distance_samples(count: usize, seed: u64) -> Vec<DistanceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = 2.0 * (1.0 - rng.gen::<f64>());
            let t = 2.0 * PI * rng.gen::<f64>();
            DistanceSample {
                d,
                grad_d: [t.cos(), t.sin()],
                v: rng.gen_range(-2.0..2.0),
                grad_v: [rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)],
            }
        })
        .collect()
}

/// Per-level non-violation report: margins are (value − bound)/bound.
fn level_report(check: &str, params: serde_json::Value, levels: &[usize], values: &[f64], bound: f64) -> MarginReport {
    let mut r = MarginReport::new(check, params, None, 0.0);
    for (l, v) in levels.iter().zip(values) {
        r.record((v - bound) / bound.abs().max(f64::MIN_POSITIVE), &[*l as f64, *v, bound]);
    }
    r
}

/// Discrete inf of (∫|u'|^p − c_p∫r^{−p}|u|^p)/∫|u|^p on (0,1) against (p−1)2^p.
pub fn tidblom_1d_check(p: f64, opts: &SolveOptions) -> Result<MarginReport> {
    let res = lambda_star_direct(p, &DomainSpec::Interval { length: 1.0 }, Some(c_p(p)), opts)?;
    let bound = (p - 1.0) * 2f64.powf(p);
    Ok(level_report(
        "tidblom_1d",
        json!({"p": p, "bound": bound}),
        &opts.levels,
        &res.result.level_values,
        bound,
    ))
}

/// Discrete inf of (∫|∇u|^p − |(N−p)/p|^p∫|x|^{−p}|u|^p)/∫|u|^p against C(ω_N/|Ω|)^{p/N} (N = 2).
pub fn bv_ggm_check(domain: &DomainSpec, p: f64, opts: &SolveOptions, c_const: Option<f64>, omega_n: Option<f64>) -> Result<MarginReport> {
    let n = 2usize;
    let c = match c_const {
        Some(c) => c,
        None if p == 2.0 => DISC_EIGENVALUE,
        None => return Err(Error::Config("C(N, p) must be supplied for p != 2".into())),
    };
    let omega = omega_n.unwrap_or(PI);
    let kappa = ((n as f64 - p) / p).abs().powf(p);
    let area = domain.measure()?;
    let bound = c * (omega / area).powf(p / n as f64);
    let build = |level: usize| -> Result<Discrete> {
        if kappa == 0.0 {
            let problem = ProblemSpec::new(n, p, 0.0, WeightKind::None);
            let mesh = Arc::new(build_mesh_with(
                domain,
                &MeshSpec {
                    level,
                    grading: opts.grading.unwrap_or(1.0),
                    focus: opts.focus.unwrap_or(Focus::Uniform),
                },
            )?);
            Discrete::standard(&problem, domain, mesh)
        } else {
            let mut problem = ProblemSpec::new(n, p, 0.0, WeightKind::OriginPower);
            problem.reference_constant = Some(kappa);
            let mesh = Arc::new(build_mesh_with(
                domain,
                &MeshSpec {
                    level,
                    grading: opts.grading.unwrap_or(3.0),
                    focus: opts.focus.unwrap_or(Focus::Origin),
                },
            )?);
            Discrete::shifted(&problem, domain, mesh)
        }
    };
    let res = solve_levels(&build, domain.diameter().unwrap_or(1.0), opts, None)?;
    Ok(level_report(
        "bv_ggm",
        json!({"p": p, "n": n, "c_const": c, "omega_n": omega, "measure": area, "bound": bound}),
        &opts.levels,
        &res.level_values,
        bound,
    ))
}

/// Nodal interpolant on `mesh` of φ(d(x)) inside the collar {d < β}, zero elsewhere; β is the end of φ's interval.
pub fn lift_1d_profile(domain: &DomainSpec, phi: &Field, mesh: Arc<Mesh>) -> Result<Field> {
    if phi.mesh.dim != 1 {
        return Err(Error::Spec("profile must live on an interval mesh".into()));
    }
    let mut pairs: Vec<(f64, f64)> = phi.mesh.nodes.iter().map(|x| x[0]).zip(phi.values.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let beta = pairs.last().unwrap().0;
    let vmax = pairs.iter().fold(0.0f64, |m, v| m.max(v.1.abs()));
    if pairs.last().unwrap().1.abs() > 1e-12 * vmax.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition("profile must vanish at the collar edge".into()));
    }
    if beta >= inradius_estimate(domain)? {
        return Err(Error::Spec("collar width must stay below the inradius".into()));
    }
    let eval = |s: f64| -> f64 {
        if s >= beta {
            return 0.0;
        }
        let k = pairs.partition_point(|v| v.0 <= s).clamp(1, pairs.len() - 1);
        let (x0, v0) = pairs[k - 1];
        let (x1, v1) = pairs[k];
        v0 + (s - x0) / (x1 - x0) * (v1 - v0)
    };
    let vals = mesh
        .nodes
        .iter()
        .zip(&mesh.dirichlet)
        .map(|(x, &dir)| if dir { Ok(0.0) } else { domain.distance_to_boundary(*x).map(eval) })
        .collect::<Result<Vec<f64>>>()?;
    Field::new(mesh, vals)
}

/// Upper bound for ν_{λ,p}(Ω) from the lifted 1D Hardy minimizer on (0, β).
pub fn collar_upper_bound(domain: &DomainSpec, p: f64, lambda: f64, beta: f64, level: usize, opts: &SolveOptions) -> Result<f64> {
    let interval = DomainSpec::Interval { length: beta };
    let one_d = ProblemSpec::new(1, p, 0.0, WeightKind::OriginPower);
    let m1 = Arc::new(build_mesh_with(
        &interval,
        &MeshSpec {
            level: level + 2,
            grading: 3.0,
            focus: Focus::Origin,
        },
    )?);
    let d1 = Discrete::standard(&one_d, &interval, m1.clone())?;
    let s = solve_discrete(&d1, &Field::bump(m1.clone()).values, opts)?;
    let phi = Field::new(m1, s.u)?;
    let mesh = Arc::new(build_mesh_with(
        domain,
        &MeshSpec {
            level,
            grading: 3.0,
            focus: Focus::Boundary,
        },
    )?);
    let u = lift_1d_profile(domain, &phi, mesh.clone())?;
    let problem = ProblemSpec::new(2, p, lambda, WeightKind::BoundaryDistance);
    Discrete::standard(&problem, domain, mesh)?.quotient(&u.values)
}

/// Collar bounds for decreasing β, refining the mesh one level per halving of β
/// so that the resolved range of scales below β does not shrink.
pub fn collar_sweep(domain: &DomainSpec, p: f64, lambda: f64, betas: &[f64], base_level: usize, opts: &SolveOptions) -> Result<Vec<[f64; 2]>> {
    let b0 = *betas.first().ok_or_else(|| Error::Spec("empty collar grid".into()))?;
    betas
        .iter()
        .map(|&b| {
            if !(b > 0.0 && b <= b0) {
                return Err(Error::Spec("collar widths must be positive and non-increasing".into()));
            }
            let level = base_level + (b0 / b).log2().round().max(0.0) as usize;
            Ok([b, collar_upper_bound(domain, p, lambda, b, level, opts)?])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lindqvist_equality_cases() {
        let r = lindqvist_check([0.3, -1.2], [2.0, 0.5], 2.0, None).unwrap();
        assert!(r.min_margin.abs() < 1e-14);
        let r = lindqvist_check([0.3, -1.2], [0.0, 0.0], 3.7, None).unwrap();
        assert!(r.min_margin.abs() < 1e-14);
    }

    #[test]
    fn small_ratio_is_one_at_p_two() {
        for (t, f) in [(0.01, 0.3), (1.0, 2.0), (50.0, 3.0)] {
            assert!((small_p_ratio(2.0, t, f) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bump_is_c1() {
        let (a, b) = (0.2, 0.7);
        let s = 0.41;
        let h = 1e-6;
        let fd = (bump(s + h, a, b).0 - bump(s - h, a, b).0) / (2.0 * h);
        assert!((fd - bump(s, a, b).1).abs() < 1e-6);
        assert!((bump(0.45, a, b).0 - 1.0).abs() < 1e-12);
    }
}

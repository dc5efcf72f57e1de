//! Quotient minimization: shift-invert iteration for p = 2, preconditioned normalized descent otherwise.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, Point};
use crate::energy::{half_space_constant, Discrete, FormKind, ProblemSpec, WeightKind};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh_with, default_focus, interval_mesh_from_nodes, Field, Focus, Grading, Mesh, MeshSpec};
use crate::sparse::Envelope;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Distance-to-Dirichlet-boundary bump on every level.
    Bump,
    /// Interpolant of the previous level's minimizer (bump on the first level).
    Previous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Auto,
    Eigen,
    Descent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Stop when the relative change of the quotient per iteration is below this.
    pub tolerance: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub init: InitPolicy,
    /// Either an explicit list or a finest level n, meaning [n−2, n−1, n].
    #[serde(deserialize_with = "levels_from_json")]
    pub levels: Vec<usize>,
    /// Grading exponent; defaults to 3 for singular weights and 1 otherwise.
    pub grading: Option<f64>,
    pub focus: Option<Focus>,
    pub method: Method,
}

/// Levels ending at `finest`: three of them when possible.
pub fn levels_ending_at(finest: usize) -> Vec<usize> {
    (finest.saturating_sub(2)..=finest).collect()
}

fn levels_from_json<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Levels {
        Finest(usize),
        List(Vec<usize>),
    }
    Ok(match Levels::deserialize(d)? {
        Levels::Finest(n) => levels_ending_at(n),
        Levels::List(v) => v,
    })
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 2000,
            tolerance: 1e-10,
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            init: InitPolicy::Previous,
            levels: vec![2, 3, 4],
            grading: None,
            focus: None,
            method: Method::Auto,
        }
    }
}

impl SolveOptions {
    pub fn with_levels(levels: &[usize]) -> Self {
        SolveOptions {
            levels: levels.to_vec(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Spec("tolerance must be positive".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Spec("max_iterations must be at least 1".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Spec("backtracking ratio must lie in (0, 1)".into()));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::Spec("sufficient-decrease constant must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Spec("initial step must be positive".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::Spec("at least one refinement level is required".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Spec("levels must be strictly increasing".into()));
        }
        if let Some(g) = self.grading {
            if !(g >= 1.0) {
                return Err(Error::Spec("grading exponent must be at least 1".into()));
            }
        }
        Ok(())
    }

    fn finest(&self) -> usize {
        *self.levels.last().unwrap()
    }
}

/// Refinement index k of the reported near-singularity mass fraction (radius diam·2^{-k}).
pub const CONCENTRATION_INDEX: usize = 6;
const CONCENTRATION_LEVELS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub nodes: usize,
    pub mass_near_singularity: f64,
    pub boundary_gap: f64,
    pub mesh_size: f64,
    /// Distance from the singular set to the nearest free node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub singular_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    /// (radius, fraction of the singular-weighted mass within that radius of the singular set).
    pub mass_fractions: Vec<[f64; 2]>,
    pub non_attainment_suspected: bool,
    pub boundary_gap: f64,
    /// min/max of the nodal values of the minimizer; negative means a sign change.
    pub positivity: f64,
    /// Shift certified below the discrete minimum (p = 2 eigen solver only).
    pub lower_bracket: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub value: f64,
    #[serde(skip)]
    pub field: Field,
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub level_values: Vec<f64>,
    pub levels: Vec<LevelSummary>,
    pub diagnostics: Diagnostics,
}

/// Outcome of one solve on one mesh.
#[derive(Clone, Debug)]
pub struct MeshSolve {
    pub u: Vec<f64>,
    pub value: f64,
    pub history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub lower_bracket: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the discrete quotient `d` starting from the full-length nodal vector `u0`.
pub fn solve_discrete(d: &Discrete, u0: &[f64], opts: &SolveOptions) -> Result<MeshSolve> {
    let eigen = match opts.method {
        Method::Auto => d.p == 2.0,
        Method::Eigen => {
            if d.p != 2.0 {
                return Err(Error::Unsupported("the eigen solver needs p = 2".into()));
            }
            true
        }
        Method::Descent => false,
    };
    let mut s = if eigen {
        eigen_solve(d, u0, opts)?
    } else {
        descent_solve(d, u0, opts)?
    };
    // Fix the sign so that the minimizer is mostly positive.
    if s.u.iter().sum::<f64>() < 0.0 {
        s.u.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(s)
}

fn initial_shift(d: &Discrete) -> f64 {
    match d.kind {
        FormKind::Standard { lambda } if lambda > 0.0 => {
            let w = d.min_den_ratio();
            if w.is_finite() && w > 0.0 {
                -lambda / w
            } else {
                -lambda
            }
        }
        _ => 0.0,
    }
}

fn eigen_solve(d: &Discrete, u0: &[f64], opts: &SolveOptions) -> Result<MeshSolve> {
    let k = d.matrix(None, 1.0, 0.0, true);
    let b = d.matrix(None, 0.0, 1.0, false);
    let mut x = d.dofs.restrict(u0);
    let rq = |x: &[f64]| (k.quad_form(x), b.quad_form(x));
    let (n0, d0) = rq(&x);
    if !(d0 > 0.0) {
        return Err(Error::DegenerateField);
    }
    let s0 = 1.0 / d0.sqrt();
    x.iter_mut().for_each(|v| *v *= s0);
    let mut q = n0 / d0;
    let mut sigma = initial_shift(d);
    let mut fac = None;
    for _ in 0..80 {
        match Envelope::factor(&k.axpy(-sigma, &b)) {
            Ok(f) => {
                fac = Some(f);
                break;
            }
            Err(_) => sigma -= 2.0 * (sigma.abs() + 1.0),
        }
    }
    let mut fac = fac.ok_or_else(|| Error::Linalg("no positive definite shift found".into()))?;
    let mut history = vec![q];
    let mut converged = false;
    let mut iterations = 0;
    let mut raise = true;
    for it in 1..=opts.max_iterations {
        iterations = it;
        let mut y = fac.solve(&b.matvec(&x));
        let (ny, dy) = rq(&y);
        if !(dy > 0.0) {
            return Err(Error::DegenerateField);
        }
        let qn = ny / dy;
        let sy = 1.0 / dy.sqrt();
        y.iter_mut().for_each(|v| *v *= sy);
        if qn > q {
            // Roundoff floor reached; keep the monotone history.
            converged = (qn - q) <= 1e3 * f64::EPSILON * q.abs().max(1.0);
            break;
        }
        let change = (q - qn) / qn.abs().max(f64::MIN_POSITIVE);
        x = y;
        q = qn;
        history.push(q);
        if change <= opts.tolerance {
            converged = true;
            break;
        }
        if raise {
            let s2 = sigma + 0.5 * (q - sigma);
            match Envelope::factor(&k.axpy(-s2, &b)) {
                Ok(f) => {
                    fac = f;
                    sigma = s2;
                }
                Err(_) => raise = false,
            }
        } else if it % 8 == 0 {
            raise = true;
        }
    }
    Ok(MeshSolve {
        u: d.dofs.extend(&x, d.mesh.n_nodes()),
        value: q,
        history,
        converged,
        iterations,
        lower_bracket: Some(sigma),
    })
}

/// Newton-type direction for the normalized problem: solves with the shifted Hessian
/// N'' − σD'' and removes the component that changes the denominator.
fn newton_direction(d: &Discrete, u: &[f64], g: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let fac = Envelope::factor(&d.hessian(u, 1.0, -sigma)).ok()?;
    let a = fac.solve(g);
    let dg = d.dofs.restrict(&d.combined_gradient(u, 0.0, 1.0));
    let b = fac.solve(&dg);
    let db = dot(&dg, &b);
    let t = if db.abs() > 0.0 { dot(&dg, &a) / db } else { 0.0 };
    let dir: Vec<f64> = a.iter().zip(&b).map(|(x, y)| -x + t * y).collect();
    if dir.iter().all(|v| v.is_finite()) && dot(g, &dir) < 0.0 {
        Some(dir)
    } else {
        None
    }
}

fn secant_direction(d: &Discrete, u: &[f64], g: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let fac = Envelope::factor(&d.matrix(Some(u), 1.0, -sigma, false)).ok()?;
    let dir: Vec<f64> = fac.solve(g).iter().map(|v| -v).collect();
    (dot(g, &dir) < 0.0).then_some(dir)
}

fn descent_solve(d: &Discrete, u0: &[f64], opts: &SolveOptions) -> Result<MeshSolve> {
    let mut u = u0.to_vec();
    d.normalize(&mut u)?;
    let mut q = d.quotient(&u)?;
    let floor = initial_shift(d).min(0.0);
    let mut history = vec![q];
    let mut theta: f64 = 0.5;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iterations {
        iterations = it;
        let g = d.dofs.restrict(&d.residual(&u, q));
        if g.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }
        let mut dir = None;
        while dir.is_none() && theta > 1e-4 {
            let sigma = floor + theta * (q - floor).max(0.0);
            dir = newton_direction(d, &u, &g, sigma);
            if dir.is_none() {
                theta *= 0.5;
            }
        }
        let dir = match dir {
            Some(v) => v,
            None => {
                theta = 0.5;
                let mut sd = None;
                let mut s = if q > 0.0 { 0.5 * q } else { 0.0 };
                for _ in 0..30 {
                    sd = secant_direction(d, &u, &g, s);
                    if sd.is_some() {
                        break;
                    }
                    s = if s > 1e-12 { 0.5 * s } else { floor - 2.0 * (s.abs() + 1.0) };
                }
                sd.ok_or_else(|| Error::Linalg("descent preconditioner is not positive definite".into()))?
            }
        };
        let slope = dot(&g, &dir);
        let mut t = opts.initial_step;
        let mut accepted = None;
        while t > 1e-14 {
            let mut v = u.clone();
            for (k, &i) in d.dofs.free.iter().enumerate() {
                v[i] += t * dir[k];
            }
            if let Ok(qv) = d.quotient(&v) {
                if qv <= q + opts.sufficient_decrease * t * slope {
                    accepted = Some(v);
                    break;
                }
            }
            t *= opts.backtrack;
        }
        let Some(mut v) = accepted else {
            // No decrease possible at working precision.
            converged = true;
            break;
        };
        theta = if t >= opts.initial_step { 1.0 - 0.25 * (1.0 - theta) } else { 0.5 * theta };
        theta = theta.min(1.0 - 1e-6);
        d.normalize(&mut v)?;
        let qv = d.quotient(&v)?.min(q);
        let change = (q - qv) / qv.abs().max(f64::MIN_POSITIVE);
        u = v;
        q = qv;
        history.push(q);
        if change <= opts.tolerance {
            converged = true;
            break;
        }
    }
    Ok(MeshSolve {
        u,
        value: q,
        history,
        converged,
        iterations,
        lower_bracket: None,
    })
}

/// Builds the discrete problem at a level.
type Builder<'a> = dyn Fn(usize) -> Result<Discrete> + Sync + 'a;

/// Runs `build(level)` for every level, warm-starting each level from the previous one.
pub fn solve_levels(build: &Builder, scale: f64, opts: &SolveOptions, given: Option<&Field>) -> Result<SolveResult> {
    opts.validate()?;
    let radii: Vec<f64> = (1..=CONCENTRATION_LEVELS).map(|k| scale * 0.5f64.powi(k as i32)).collect();
    let mut prev: Option<Field> = given.cloned();
    let mut summaries = Vec::new();
    let mut last: Option<(MeshSolve, Discrete)> = None;
    let mut fractions_by_level = Vec::new();
    for &level in &opts.levels {
        let d = build(level)?;
        let mesh = d.mesh.clone();
        let bump = Field::bump(mesh.clone()).values;
        let mut u0 = match (&prev, opts.init) {
            (Some(f), InitPolicy::Previous) => f.transfer(mesh.clone()).values,
            (Some(f), InitPolicy::Bump) if given.is_some() && last.is_none() => f.transfer(mesh.clone()).values,
            _ => bump.clone(),
        };
        let (_, den) = d.num_den(&d.parts(&u0));
        if !(den > 0.0) || !den.is_finite() {
            u0 = bump;
        }
        let s = solve_discrete(&d, &u0, opts)?;
        let fr = d.mass_fractions(&s.u, &radii);
        summaries.push(LevelSummary {
            level,
            value: s.value,
            converged: s.converged,
            iterations: s.iterations,
            nodes: mesh.n_nodes(),
            mass_near_singularity: fr[CONCENTRATION_INDEX - 1],
            boundary_gap: mesh.boundary_gap,
            mesh_size: mesh.max_cell_size(),
            singular_gap: d.singular_gap(),
        });
        fractions_by_level.push(fr[CONCENTRATION_INDEX - 1]);
        prev = Some(Field {
            mesh: mesh.clone(),
            values: s.u.clone(),
        });
        last = Some((s, d));
    }
    let (s, d) = last.unwrap();
    let fr = d.mass_fractions(&s.u, &radii);
    let umax = s.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let umin = s.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let growing = fractions_by_level.len() >= 2
        && fractions_by_level.windows(2).all(|w| w[1] > w[0])
        && fractions_by_level.last().unwrap() > &1e-3
        && fractions_by_level.last().unwrap() > &(1.05 * fractions_by_level[0]);
    Ok(SolveResult {
        value: s.value,
        field: Field {
            mesh: d.mesh.clone(),
            values: s.u,
        },
        history: s.history,
        converged: summaries.iter().all(|l| l.converged),
        iterations: s.iterations,
        level_values: summaries.iter().map(|l| l.value).collect(),
        diagnostics: Diagnostics {
            mass_fractions: radii.iter().zip(&fr).map(|(r, f)| [*r, *f]).collect(),
            non_attainment_suspected: growing,
            boundary_gap: d.mesh.boundary_gap,
            positivity: if umax > 0.0 { umin / umax } else { 0.0 },
            lower_bracket: s.lower_bracket,
        },
        levels: summaries,
    })
}

fn mesh_spec(domain: &DomainSpec, level: usize, weight: WeightKind, opts: &SolveOptions) -> MeshSpec {
    let focus = match weight {
        WeightKind::BoundaryDistance => Focus::Boundary,
        _ => default_focus(domain),
    };
    MeshSpec {
        level,
        grading: opts.grading.unwrap_or(if weight != WeightKind::None { 3.0 } else { 1.0 }),
        focus: opts.focus.unwrap_or(focus),
    }
}

/// Characteristic length used for concentration radii.
fn length_scale(domain: &DomainSpec) -> f64 {
    match domain {
        DomainSpec::ConeCap { .. } => 1.0,
        DomainSpec::Sector { outer, .. } => *outer,
        d => d.diameter().unwrap_or(1.0),
    }
}

/// μ̂_{λ,p}(Ω): minimum of (∫|∇u|^p − λ∫|u|^p)/∫w|u|^p.
pub fn minimize_quotient(problem: &ProblemSpec, domain: &DomainSpec, opts: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    domain.validate()?;
    if matches!(domain, DomainSpec::ConeCap { .. }) {
        return Err(Error::Spec("use solve_cap for cap domains".into()));
    }
    crate::energy::check_weight_domain(problem.weight, domain)?;
    let build = |level: usize| -> Result<Discrete> {
        let mesh = Arc::new(build_mesh_with(domain, &mesh_spec(domain, level, problem.weight, opts))?);
        Discrete::standard(problem, domain, mesh)
    };
    solve_levels(&build, length_scale(domain), opts, None)
}

/// Same as `minimize_quotient`, on Ω ∩ B_radius(0) cut from the level meshes of Ω.
pub fn minimize_on_ball(problem: &ProblemSpec, domain: &DomainSpec, radius: f64, opts: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    crate::energy::check_weight_domain(problem.weight, domain)?;
    let build = |level: usize| -> Result<Discrete> {
        let full = build_mesh_with(domain, &mesh_spec(domain, level, problem.weight, opts))?;
        Discrete::standard(problem, domain, Arc::new(full.restrict_to_ball(radius)?))
    };
    solve_levels(&build, radius, opts, None)
}

/// Minimum of the reduced cap quotient; for p = 2 also the closed form ((N−2)/2)² + λ₁(Σ) when N = 2.
pub fn solve_cap(n: usize, p: f64, cap: &DomainSpec, opts: &SolveOptions) -> Result<SolveResult> {
    cap.validate()?;
    let DomainSpec::ConeCap { n: cn, .. } = cap else {
        return Err(Error::Spec("solve_cap needs a ConeCap domain".into()));
    };
    if *cn != n {
        return Err(Error::Spec("cap dimension does not match N".into()));
    }
    let build = |level: usize| -> Result<Discrete> {
        let mesh = Arc::new(build_mesh_with(
            cap,
            &MeshSpec {
                level,
                grading: 1.0,
                focus: Focus::Uniform,
            },
        )?);
        Discrete::cap(n, p, mesh)
    };
    solve_levels(&build, 1.0, opts, None)
}

/// Closed form of the p = 2 cap value for planar arcs: (π/L)².
pub fn arc_cap_closed_form(length: f64) -> f64 {
    (PI / length).powi(2)
}

fn unit_interval_mesh(level: usize, grading: f64, dir_left: bool) -> Result<Mesh> {
    let n = crate::mesh::INTERVAL_CELLS << level;
    let xs: Vec<f64> = (0..=n).map(|i| 1.0 - (1.0 - i as f64 / n as f64).powf(grading)).collect();
    let g = Grading {
        beta: grading,
        level,
        focus: if grading == 1.0 { Focus::Uniform } else { Focus::Boundary },
    };
    interval_mesh_from_nodes(&xs, dir_left, true, g)
}

/// Λ̂_p = min ∫₀¹ r^{p−1}|f'|^p / ∫₀¹ r^{p−1}|f|^p with f(1) = 0.
/// A grading exponent in `opts` clusters nodes toward r = 1.
pub fn lambda_p_constant(p: f64, opts: &SolveOptions) -> Result<SolveResult> {
    lambda_p_with_ends(p, false, opts)
}

/// Λ̂_p with optional Dirichlet condition at r = 0 as well.
pub fn lambda_p_with_ends(p: f64, dirichlet_origin: bool, opts: &SolveOptions) -> Result<SolveResult> {
    if !(p > 1.0) {
        return Err(Error::Spec("p must exceed 1".into()));
    }
    let grading = opts.grading.unwrap_or(1.0);
    let build = |level: usize| -> Result<Discrete> {
        Discrete::radial(p, Arc::new(unit_interval_mesh(level, grading, dirichlet_origin)?))
    };
    solve_levels(&build, 1.0, opts, None)
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaStarResult {
    pub reference: f64,
    pub result: SolveResult,
    /// Discrete first eigenvalue of the same domain at each level.
    pub lambda1: Vec<f64>,
}

/// Half-space constant for the domain's dimension: closed form where known, else the cap solver.
pub fn reference_constant(n: usize, p: f64, opts: &SolveOptions) -> Result<f64> {
    if let Some(v) = half_space_constant(n, p) {
        return Ok(v);
    }
    let cap_opts = SolveOptions {
        levels: vec![6, 7],
        ..opts.clone()
    };
    Ok(solve_cap(n, p, &DomainSpec::hemisphere(n), &cap_opts)?.value)
}

fn ambient_dim(domain: &DomainSpec) -> usize {
    match domain {
        DomainSpec::Interval { .. } => 1,
        DomainSpec::HalfBall { n, .. } => *n,
        _ => 2,
    }
}

/// λ̂* = min (∫|∇u|^p − μ_H∫|x|^{−p}|u|^p)/∫|u|^p on a domain inside a half-ball.
pub fn lambda_star_direct(p: f64, domain: &DomainSpec, reference: Option<f64>, opts: &SolveOptions) -> Result<LambdaStarResult> {
    domain.validate()?;
    if !domain.in_half_ball() {
        return Err(Error::Spec("direct lambda* needs a domain inside a half-ball centred at 0".into()));
    }
    let n = ambient_dim(domain);
    let mu_h = match reference {
        Some(v) => v,
        None => reference_constant(n, p, opts)?,
    };
    let mut problem = ProblemSpec::new(n, p, 0.0, WeightKind::OriginPower);
    problem.reference_constant = Some(mu_h);
    problem.validate()?;
    let build = |level: usize| -> Result<Discrete> {
        let mesh = Arc::new(build_mesh_with(domain, &mesh_spec(domain, level, WeightKind::OriginPower, opts))?);
        Discrete::shifted(&problem, domain, mesh)
    };
    let result = solve_levels(&build, length_scale(domain), opts, None)?;
    let plain = ProblemSpec::new(n, p, 0.0, WeightKind::None);
    let mut lambda1 = Vec::new();
    for &level in &opts.levels {
        // Same mesh as the shifted problem so that λ̂* ≤ λ̂₁ compares like with like.
        let mesh = Arc::new(build_mesh_with(domain, &mesh_spec(domain, level, WeightKind::OriginPower, opts))?);
        let d = Discrete::standard(&plain, domain, mesh.clone())?;
        lambda1.push(solve_discrete(&d, &Field::bump(mesh).values, opts)?.value);
    }
    Ok(LambdaStarResult {
        reference: mu_h,
        result,
        lambda1,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BisectResult {
    pub threshold: f64,
    pub bracket: [f64; 2],
    /// (λ, μ̂_λ) for every probe, in probe order.
    pub probes: Vec<[f64; 2]>,
    pub monotone: bool,
    pub gap: f64,
}

/// Threshold inf{λ : μ̂_λ < μ_H − gap} by bisection at the finest configured level.
pub fn lambda_star_bisect(
    p: f64,
    domain: &DomainSpec,
    mu_h: f64,
    bracket: [f64; 2],
    tolerance: f64,
    gap: f64,
    opts: &SolveOptions,
) -> Result<BisectResult> {
    if !(bracket[0] < bracket[1]) {
        return Err(Error::Bracket("bracket must satisfy lo < hi".into()));
    }
    if !(tolerance > 0.0) || !(gap >= 0.0) {
        return Err(Error::Spec("bisection tolerance must be positive and gap nonnegative".into()));
    }
    let n = ambient_dim(domain);
    let level_opts = SolveOptions {
        levels: vec![opts.finest()],
        ..opts.clone()
    };
    let base = ProblemSpec::new(n, p, 0.0, WeightKind::OriginPower);
    base.validate()?;
    domain.validate()?;
    let mesh = Arc::new(build_mesh_with(domain, &mesh_spec(domain, opts.finest(), WeightKind::OriginPower, opts))?);
    let mut warm = Field::bump(mesh.clone()).values;
    let mut probes = Vec::new();
    let mut probe = |lambda: f64, warm: &mut Vec<f64>| -> Result<f64> {
        let pr = ProblemSpec { lambda, ..base.clone() };
        let d = Discrete::standard(&pr, domain, mesh.clone())?;
        let s = solve_discrete(&d, warm, &level_opts)?;
        *warm = s.u;
        probes.push([lambda, s.value]);
        Ok(s.value)
    };
    let target = mu_h - gap;
    let (mut lo, mut hi) = (bracket[0], bracket[1]);
    if probe(lo, &mut warm)? < target {
        return Err(Error::Bracket(format!("value at lambda = {lo} is already below the threshold")));
    }
    if probe(hi, &mut warm)? >= target {
        return Err(Error::Bracket(format!("value at lambda = {hi} does not drop below the threshold")));
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut warm)? < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut sorted = probes.clone();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let monotone = sorted
        .windows(2)
        .all(|w| w[1][1] <= w[0][1] + 1e-9 * w[0][1].abs().max(1.0));
    Ok(BisectResult {
        threshold: 0.5 * (lo + hi),
        bracket,
        probes,
        monotone,
        gap,
    })
}

/// ν̂_{λ,p}(Ω): the distance-weight quotient.
pub fn nu_lambda(p: f64, lambda: f64, domain: &DomainSpec, opts: &SolveOptions) -> Result<SolveResult> {
    let problem = ProblemSpec::new(2, p, lambda, WeightKind::BoundaryDistance);
    minimize_quotient(&problem, domain, opts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    /// Truncation radius of an exterior lens, or outer radius of a sector.
    Truncation,
    /// Sector aperture δ.
    Delta,
    /// Radius ρ of Ω ∩ B_ρ(0).
    RefinementRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub level: usize,
    pub mass_near_singularity: f64,
    /// Discrete upper bound min_ρ [μ̂_0(Ω∩B_ρ) + ρ^p|λ|] for λ-sweeps with λ < 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub non_increasing: bool,
    pub non_decreasing: bool,
    pub strictly_decreasing: bool,
    pub strictly_increasing: bool,
    pub all_converged: bool,
    pub limit_estimate: Option<f64>,
}

fn monotone_flags(values: &[f64]) -> (bool, bool, bool, bool) {
    let slack = |a: f64| 1e-12 * a.abs().max(1.0);
    let ni = values.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    let nd = values.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let sd = values.windows(2).all(|w| w[1] < w[0]);
    let si = values.windows(2).all(|w| w[1] > w[0]);
    (ni, nd, sd, si)
}

/// Aitken Δ² limit of the last three values, when defined.
pub fn aitken(values: &[f64]) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let n = values.len();
    let (a, b, c) = (values[n - 3], values[n - 2], values[n - 1]);
    let den = (c - b) - (b - a);
    if den.abs() < 1e-300 || !((c - b) * (b - a) > 0.0) {
        return None;
    }
    Some(c - (c - b) * (c - b) / den)
}

/// One solve per grid value; grid points run concurrently, results keep grid order.
pub fn sweep(
    parameter: SweepParameter,
    grid: &[f64],
    problem: &ProblemSpec,
    domain: &DomainSpec,
    opts: &SolveOptions,
) -> Result<SweepReport> {
    if grid.len() < 2 {
        return Err(Error::Spec("a sweep needs at least two grid values".into()));
    }
    let inc = grid.windows(2).all(|w| w[1] > w[0]);
    let dec = grid.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(Error::Spec("sweep grid must be strictly monotone".into()));
    }
    let points: Vec<Result<SweepPoint>> = grid
        .par_iter()
        .map(|&g| -> Result<SweepPoint> {
            let mut pr = problem.clone();
            let mut dom = domain.clone();
            let res = match parameter {
                SweepParameter::Lambda => {
                    pr.lambda = g;
                    minimize_quotient(&pr, &dom, opts)?
                }
                SweepParameter::Truncation => {
                    match &mut dom {
                        DomainSpec::ExteriorLens { truncation, .. } => *truncation = g,
                        DomainSpec::Sector { outer, .. } => *outer = g,
                        _ => return Err(Error::Spec("truncation sweeps need a lens or sector".into())),
                    }
                    minimize_quotient(&pr, &dom, opts)?
                }
                SweepParameter::Delta => {
                    match &mut dom {
                        DomainSpec::Sector { delta, .. } => *delta = g,
                        _ => return Err(Error::Spec("delta sweeps need a sector".into())),
                    }
                    minimize_quotient(&pr, &dom, opts)?
                }
                SweepParameter::RefinementRadius => minimize_on_ball(&pr, &dom, g, opts)?,
            };
            let bound = if parameter == SweepParameter::Lambda && g < 0.0 && pr.weight == WeightKind::OriginPower {
                Some(envelope_bound(&pr, &dom, &res, opts)?)
            } else {
                None
            };
            let last = res.levels.last().unwrap();
            Ok(SweepPoint {
                parameter: g,
                value: res.value,
                converged: res.converged,
                iterations: res.iterations,
                level: last.level,
                mass_near_singularity: last.mass_near_singularity,
                bound,
            })
        })
        .collect();
    let points: Vec<SweepPoint> = points.into_iter().collect::<Result<_>>()?;
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let (ni, nd, sd, si) = monotone_flags(&values);
    Ok(SweepReport {
        parameter,
        grid: grid.to_vec(),
        all_converged: points.iter().all(|p| p.converged),
        limit_estimate: aitken(&values),
        points,
        non_increasing: ni,
        non_decreasing: nd,
        strictly_decreasing: sd,
        strictly_increasing: si,
    })
}

/// min over ring radii ρ of μ̂_0(Ω∩B_ρ) + ρ^p|λ|, on the finest mesh of `res`.
fn envelope_bound(problem: &ProblemSpec, domain: &DomainSpec, res: &SolveResult, opts: &SolveOptions) -> Result<f64> {
    let mesh = &res.field.mesh;
    let lam = problem.lambda.abs();
    let zero = ProblemSpec {
        lambda: 0.0,
        ..problem.clone()
    };
    let rmax = length_scale(domain);
    let level_opts = SolveOptions {
        levels: vec![opts.finest()],
        ..opts.clone()
    };
    let mut best = f64::INFINITY;
    for k in 0..8 {
        let rho = rmax * 0.5f64.powi(k);
        if rho.powf(problem.p) * lam >= best {
            continue;
        }
        let Ok(sub) = mesh.restrict_to_ball(rho) else { continue };
        if sub.free_nodes().is_empty() {
            continue;
        }
        let sub = Arc::new(sub);
        let d = Discrete::standard(&zero, domain, sub.clone())?;
        let s = solve_discrete(&d, &Field::bump(sub).values, &level_opts)?;
        best = best.min(s.value + rho.powf(problem.p) * lam);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorCandidate {
    pub delta: f64,
    pub inner: f64,
    pub outer: f64,
    pub value: f64,
    pub converged: bool,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SectorSearch {
    pub reference: f64,
    pub candidates: Vec<SectorCandidate>,
    pub best: Option<SectorCandidate>,
    /// Best certified value per δ, in grid order.
    pub best_per_delta: Vec<[f64; 2]>,
    pub decreasing_in_delta: bool,
}

/// Searches sectors C^δ_{r,1} for discrete quotients below the half-space constant.
/// `ratios` are the inner radii r (outer radius 1).
pub fn sector_search(p: f64, deltas: &[f64], ratios: &[f64], reference: Option<f64>, opts: &SolveOptions) -> Result<SectorSearch> {
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(Error::Spec("sector apertures must lie in (0, 1)".into()));
    }
    if ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::Spec("inner radii must lie in (0, 1)".into()));
    }
    let mu_h = match reference {
        Some(v) => v,
        None => reference_constant(2, p, opts)?,
    };
    let problem = ProblemSpec::new(2, p, 0.0, WeightKind::OriginPower);
    let jobs: Vec<(f64, f64)> = deltas.iter().flat_map(|&d| ratios.iter().map(move |&r| (d, r))).collect();
    let cands: Vec<Result<SectorCandidate>> = jobs
        .par_iter()
        .map(|&(delta, inner)| {
            let dom = DomainSpec::Sector {
                delta,
                inner,
                outer: 1.0,
                axis: [0.0, 1.0],
            };
            let res = minimize_quotient(&problem, &dom, opts)?;
            Ok(SectorCandidate {
                delta,
                inner,
                outer: 1.0,
                value: res.value,
                converged: res.converged,
                certified: res.value < mu_h,
            })
        })
        .collect();
    let candidates: Vec<SectorCandidate> = cands.into_iter().collect::<Result<_>>()?;
    let best = candidates
        .iter()
        .filter(|c| c.certified)
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .cloned();
    let best_per_delta: Vec<[f64; 2]> = deltas
        .iter()
        .map(|&d| {
            let v = candidates
                .iter()
                .filter(|c| c.delta == d)
                .map(|c| c.value)
                .fold(f64::INFINITY, f64::min);
            [d, v]
        })
        .collect();
    let mut by_delta = best_per_delta.clone();
    by_delta.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let decreasing_in_delta = by_delta.windows(2).all(|w| w[1][1] < w[0][1]);
    Ok(SectorSearch {
        reference: mu_h,
        candidates,
        best,
        best_per_delta,
        decreasing_in_delta,
    })
}

/// Singular point used by the origin weight.
pub const ORIGIN: Point = [0.0, 0.0];

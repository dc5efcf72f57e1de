//! Refinement studies: level sequences, extrapolated limits and pass/fail against a target.

use serde::{Deserialize, Serialize};

use crate::domain::DomainSpec;
use crate::energy::{ProblemSpec, WeightKind};
use crate::error::{Error, Result};
use crate::solvers::{
    lambda_p_constant, lambda_star_direct, minimize_quotient, nu_lambda, solve_cap, SolveOptions, SolveResult,
};

/// What a study refines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyProblem {
    Quotient { problem: ProblemSpec, domain: DomainSpec },
    Nu {
        p: f64,
        #[serde(default)]
        lambda: f64,
        domain: DomainSpec,
    },
    Cap { n: usize, p: f64, cap: DomainSpec },
    LambdaP { p: f64 },
    LambdaStar {
        p: f64,
        domain: DomainSpec,
        #[serde(default)]
        reference: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// v = limit + C/(L + a)^q with L = ln(diam/h_sing).
    Logarithmic,
    /// v = limit + C·h^q with h halving per level.
    Algebraic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub model: Model,
    pub order: f64,
    pub limit: f64,
    /// Offset a of the logarithmic model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    pub levels_used: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyLevel {
    pub level: usize,
    pub value: f64,
    pub converged: bool,
    pub log_scale: Option<f64>,
    pub mass_near_singularity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyReport {
    pub problem: StudyProblem,
    pub levels: Vec<StudyLevel>,
    pub extrapolation: Option<Extrapolation>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub error: Option<f64>,
    pub monotone: bool,
    pub from_above: Option<bool>,
    pub non_attainment_suspected: bool,
    pub passed: Option<bool>,
}

/// Solves a 3-point logarithmic fit for (limit, a); None when the data admit no such fit.
pub fn fit_logarithmic(l: [f64; 3], v: [f64; 3], q: f64) -> Option<(f64, f64)> {
    let (d1, d2) = (v[0] - v[1], v[1] - v[2]);
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() {
        return None;
    }
    let target = d1 / d2;
    let ratio = |a: f64| {
        let x: Vec<f64> = l.iter().map(|li| (li + a).powf(-q)).collect();
        (x[0] - x[1]) / (x[1] - x[2])
    };
    let lmin = l[0].min(l[1]).min(l[2]);
    let mut lo = -lmin + 1e-9 * lmin.abs().max(1.0);
    if !(ratio(lo) > target) {
        return None;
    }
    let mut hi = lo.abs().max(1.0);
    let mut tries = 0;
    while ratio(hi) > target {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let x: Vec<f64> = l.iter().map(|li| (li + a).powf(-q)).collect();
    let c = (v[1] - v[2]) / (x[1] - x[2]);
    let limit = v[2] - c * x[2];
    limit.is_finite().then_some((limit, a))
}

/// Richardson fit with free order for a level sequence whose mesh size halves per level.
pub fn fit_algebraic(v: [f64; 3]) -> Option<(f64, f64)> {
    let (d1, d2) = (v[0] - v[1], v[1] - v[2]);
    if d2 == 0.0 {
        return (d1 == 0.0).then_some((v[2], f64::INFINITY));
    }
    let r = d1 / d2;
    if !(r > 1.0) {
        return None;
    }
    let order = r.log2();
    Some((v[2] - d2 / (r - 1.0), order))
}

fn model_for(problem: &StudyProblem) -> (Model, f64) {
    match problem {
        StudyProblem::Quotient { problem, .. } if problem.weight != WeightKind::None => (Model::Logarithmic, 2.0),
        StudyProblem::Nu { .. } => (Model::Logarithmic, 2.0),
        StudyProblem::LambdaStar { .. } => (Model::Logarithmic, 1.0),
        _ => (Model::Algebraic, 2.0),
    }
}

/// Runs the underlying solver over the configured levels.
pub fn run_levels(problem: &StudyProblem, opts: &SolveOptions) -> Result<SolveResult> {
    match problem {
        StudyProblem::Quotient { problem, domain } => minimize_quotient(problem, domain, opts),
        StudyProblem::Nu { p, lambda, domain } => nu_lambda(*p, *lambda, domain, opts),
        StudyProblem::Cap { n, p, cap } => solve_cap(*n, *p, cap, opts),
        StudyProblem::LambdaP { p } => lambda_p_constant(*p, opts),
        StudyProblem::LambdaStar { p, domain, reference } => {
            Ok(lambda_star_direct(*p, domain, *reference, opts)?.result)
        }
    }
}

fn length_of(problem: &StudyProblem) -> f64 {
    let d = match problem {
        StudyProblem::Quotient { domain, .. } | StudyProblem::Nu { domain, .. } | StudyProblem::LambdaStar { domain, .. } => {
            domain.diameter().ok()
        }
        _ => None,
    };
    d.unwrap_or(1.0)
}

/// Extrapolates the last three converged levels of a solve.
pub fn extrapolate(problem: &StudyProblem, res: &SolveResult) -> Option<Extrapolation> {
    let conv: Vec<_> = res.levels.iter().filter(|l| l.converged).collect();
    if conv.len() < 3 {
        return None;
    }
    let last = &conv[conv.len() - 3..];
    let v = [last[0].value, last[1].value, last[2].value];
    let levels_used = last.iter().map(|l| l.level).collect();
    let (model, q) = model_for(problem);
    if model == Model::Logarithmic {
        let diam = length_of(problem);
        let ls: Option<Vec<f64>> = last.iter().map(|l| l.singular_gap.map(|g| (diam / g).ln())).collect();
        if let Some(ls) = ls {
            if let Some((limit, a)) = fit_logarithmic([ls[0], ls[1], ls[2]], v, q) {
                return Some(Extrapolation {
                    model,
                    order: q,
                    limit,
                    shift: Some(a),
                    levels_used,
                });
            }
        }
    }
    fit_algebraic(v).map(|(limit, order)| Extrapolation {
        model: Model::Algebraic,
        order,
        limit,
        shift: None,
        levels_used,
    })
}

/// Refinement study with optional target and tolerance.
pub fn study_convergence(
    problem: &StudyProblem,
    opts: &SolveOptions,
    target: Option<f64>,
    tolerance: Option<f64>,
) -> Result<StudyReport> {
    if opts.levels.len() < 3 {
        return Err(Error::Spec("a study needs at least three refinement levels".into()));
    }
    if let Some(t) = tolerance {
        if !(t > 0.0) {
            return Err(Error::Spec("study tolerance must be positive".into()));
        }
    }
    let res = run_levels(problem, opts)?;
    let diam = length_of(problem);
    let levels: Vec<StudyLevel> = res
        .levels
        .iter()
        .map(|l| StudyLevel {
            level: l.level,
            value: l.value,
            converged: l.converged,
            log_scale: l.singular_gap.map(|g| (diam / g).ln()),
            mass_near_singularity: l.mass_near_singularity,
        })
        .collect();
    let values: Vec<f64> = levels.iter().map(|l| l.value).collect();
    let slack = |a: f64| 1e-12 * a.abs().max(1.0);
    let non_increasing = values.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    let non_decreasing = values.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let monotone = match target {
        Some(t) => {
            let closer = values.windows(2).all(|w| (w[1] - t).abs() <= (w[0] - t).abs() + slack(w[0]));
            closer && (non_increasing || non_decreasing)
        }
        None => non_increasing || non_decreasing,
    };
    let extrapolation = extrapolate(problem, &res);
    let error = match (&extrapolation, target) {
        (Some(e), Some(t)) => Some((e.limit - t).abs()),
        _ => None,
    };
    let passed = match (error, tolerance) {
        (Some(err), Some(tol)) => Some(err <= tol && monotone),
        (None, Some(_)) => Some(false),
        _ => None,
    };
    Ok(StudyReport {
        problem: problem.clone(),
        from_above: target.map(|t| values.iter().all(|v| *v >= t)),
        non_attainment_suspected: res.diagnostics.non_attainment_suspected,
        levels,
        extrapolation,
        target,
        tolerance,
        error,
        monotone,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logarithmic_fit_recovers_model() {
        let (lim, c, a, q) = (0.25, 3.0, 1.7, 2.0);
        let l = [6.0, 8.0, 10.0];
        let v = l.map(|x: f64| lim + c / (x + a).powf(q));
        let (fl, fa) = fit_logarithmic(l, v, q).unwrap();
        assert!((fl - lim).abs() < 1e-9 && (fa - a).abs() < 1e-6);
    }

    #[test]
    fn algebraic_fit_recovers_order() {
        let v = [1.0 + 0.5, 1.0 + 0.125, 1.0 + 0.03125];
        let (lim, order) = fit_algebraic(v).unwrap();
        assert!((lim - 1.0).abs() < 1e-12 && (order - 2.0).abs() < 1e-12);
    }
}

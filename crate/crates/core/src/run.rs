//! Run configurations, dispatch to the solvers and checks, JSON/CSV reports and exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::domain::DomainSpec;
use crate::energy::{c_p, ProblemSpec};
use crate::error::{Error, Result};
use crate::lab::{
    bv_ggm_check, build_eigenfield, bump_family, calibrate_c_small_p, collar_sweep, distance_substitution_check,
    lindqvist_random, random_distance_samples, reduction_remainder_check, tidblom_1d_check, truncated_cone_mesh,
    weak_residual, CalibrationSpec, EigenField,
};
use crate::solvers::{
    lambda_star_bisect, lambda_star_direct, minimize_quotient, nu_lambda, sector_search, solve_cap, sweep,
    SolveOptions, SolveResult, SweepParameter,
};
use crate::study::{extrapolate, study_convergence, StudyProblem};

pub const TOOL: &str = "hardylab";

/// Modules whose versions are stamped into every report.
pub const MODULES: [&str; 6] = [
    "hardylab",
    "domain_mesh",
    "energy_assembly",
    "quotient_solvers",
    "inequality_lab",
    "studies_cli",
];

/// Caps the global worker pool; call once, before any solve.
pub fn set_thread_limit(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::Config("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn default_samples_lindqvist() -> usize {
    1_000_000
}
fn default_samples_distance() -> usize {
    10_000
}
fn default_radius() -> f64 {
    10.0
}
fn default_two() -> f64 {
    2.0
}
fn default_eps_r() -> f64 {
    1e-3
}
fn default_profiles() -> usize {
    20
}
fn default_remainder_level() -> usize {
    2
}
fn default_remainder_tolerance() -> f64 {
    1e-8
}
fn default_residual_levels() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_bisect_tolerance() -> f64 {
    1e-3
}
fn default_gap() -> f64 {
    1e-4
}
fn default_base_level() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectSpec {
    pub bracket: [f64; 2],
    #[serde(default = "default_bisect_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_gap")]
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Lindqvist {
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        p_range: Option<[f64; 2]>,
        #[serde(default = "default_samples_lindqvist")]
        samples: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        c_small: Option<f64>,
    },
    Calibrate {
        p: f64,
        #[serde(default)]
        grid: CalibrationSpec,
    },
    DistanceSubstitution {
        p: f64,
        #[serde(default = "default_samples_distance")]
        samples: usize,
        #[serde(default)]
        c_small: Option<f64>,
    },
    WeakResidual {
        #[serde(default = "default_two")]
        p: f64,
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default = "default_residual_levels")]
        levels: Vec<usize>,
        #[serde(default = "default_eps_r")]
        eps_r: f64,
    },
    ReductionRemainder {
        p: f64,
        #[serde(default = "default_profiles")]
        profiles: usize,
        #[serde(default = "default_remainder_level")]
        level: usize,
        #[serde(default = "default_eps_r")]
        eps_r: f64,
        #[serde(default = "default_remainder_tolerance")]
        tolerance: f64,
    },
    Tidblom { p: f64 },
    BvGgm {
        domain: DomainSpec,
        #[serde(default = "default_two")]
        p: f64,
        #[serde(default)]
        c_const: Option<f64>,
        #[serde(default)]
        omega_n: Option<f64>,
    },
    Collar {
        domain: DomainSpec,
        #[serde(default = "default_two")]
        p: f64,
        #[serde(default)]
        lambda: f64,
        betas: Vec<f64>,
        #[serde(default = "default_base_level")]
        base_level: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Solve {
        problem: ProblemSpec,
        domain: DomainSpec,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Cap {
        n: usize,
        p: f64,
        cap: DomainSpec,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    LambdaStar {
        p: f64,
        domain: DomainSpec,
        #[serde(default)]
        reference: Option<f64>,
        #[serde(default)]
        bisect: Option<BisectSpec>,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Nu {
        p: f64,
        #[serde(default)]
        lambda: f64,
        domain: DomainSpec,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Sweep {
        problem: ProblemSpec,
        domain: DomainSpec,
        parameter: SweepParameter,
        grid: Vec<f64>,
    },
    SectorSearch {
        #[serde(default = "default_two")]
        p: f64,
        deltas: Vec<f64>,
        /// Inner radii r of C^δ_{r,1}.
        ratios: Vec<f64>,
        #[serde(default)]
        reference: Option<f64>,
    },
    Verify(Check),
    Study {
        study: StudyProblem,
        #[serde(default)]
        target: Option<f64>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Cap { .. } => "cap",
            Command::LambdaStar { .. } => "lambda-star",
            Command::Nu { .. } => "nu",
            Command::Sweep { .. } => "sweep",
            Command::SectorSearch { .. } => "sector-search",
            Command::Verify(_) => "verify",
            Command::Study { .. } => "study",
        }
    }
}

pub const COMMANDS: [&str; 8] = ["solve", "cap", "lambda-star", "nu", "sweep", "sector-search", "verify", "study"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// File stem for the report files; defaults to the command name.
    pub stem: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub command: Command,
    pub options: SolveOptions,
    pub seed: u64,
    pub output: OutputSpec,
}

impl<'de> Deserialize<'de> for RunConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut map = serde_json::Map::<String, Value>::deserialize(d)?;
        let options = match map.remove("options") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => SolveOptions::default(),
        };
        let seed = match map.remove("seed") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => 0,
        };
        let output = match map.remove("output") {
            Some(v) => serde_json::from_value(v).map_err(D::Error::custom)?,
            None => OutputSpec::default(),
        };
        let command = serde_json::from_value(Value::Object(map)).map_err(D::Error::custom)?;
        Ok(RunConfig {
            command,
            options,
            seed,
            output,
        })
    }
}

/// Parses a JSON config; `verb`, if given, must match (or supplies) the command.
pub fn parse_config(text: &str, verb: Option<&str>) -> Result<RunConfig> {
    let mut v: Value = serde_json::from_str(text)?;
    if let (Some(verb), Some(obj)) = (verb, v.as_object_mut()) {
        match obj.get("command").and_then(|c| c.as_str()) {
            Some(c) if c != verb => {
                return Err(Error::Config(format!("config command '{c}' does not match verb '{verb}'")));
            }
            Some(_) => {}
            None => {
                obj.insert("command".into(), Value::String(verb.into()));
            }
        }
    }
    Ok(serde_json::from_value(v)?)
}

/// Hex SHA-256 of the canonical JSON form of the config.
pub fn config_hash(config: &RunConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Completed with nothing to assert.
    Ok,
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub tool: String,
    pub versions: BTreeMap<String, String>,
    pub config_hash: String,
    pub command: String,
    pub seed: u64,
    pub status: Status,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One CSV table row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub parameter: f64,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub level: usize,
    pub mass_near_singularity: f64,
}

pub struct Outcome {
    pub report: Report,
    pub table: Option<Vec<TableRow>>,
    pub exit_code: i32,
}

impl Outcome {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn csv(&self) -> Option<String> {
        let rows = self.table.as_ref()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).ok()?;
        }
        w.flush().ok()?;
        String::from_utf8(w.into_inner().ok()?).ok()
    }

    /// Writes `<stem>.json` and, for tables, `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut out = vec![dir.join(format!("{stem}.json"))];
        fs::write(&out[0], self.json())?;
        if let Some(csv) = self.csv() {
            let p = dir.join(format!("{stem}.csv"));
            fs::write(&p, csv)?;
            out.push(p);
        }
        Ok(out)
    }
}

struct Executed {
    result: Value,
    passed: Option<bool>,
    table: Option<Vec<TableRow>>,
}

fn level_rows(res: &SolveResult) -> Vec<TableRow> {
    res.levels
        .iter()
        .map(|l| TableRow {
            parameter: l.level as f64,
            value: l.value,
            converged: l.converged,
            iterations: l.iterations,
            level: l.level,
            mass_near_singularity: l.mass_near_singularity,
        })
        .collect()
}

fn target_check(
    study: &StudyProblem,
    res: &SolveResult,
    target: Option<f64>,
    tolerance: Option<f64>,
) -> (Value, Option<bool>) {
    let ex = extrapolate(study, res);
    let estimate = ex.as_ref().map(|e| e.limit).unwrap_or(res.value);
    let passed = match (target, tolerance) {
        (Some(t), Some(tol)) => Some((estimate - t).abs() <= tol),
        _ => None,
    };
    (
        json!({"extrapolation": ex, "estimate": estimate, "target": target, "tolerance": tolerance}),
        passed,
    )
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Some(e)) = (base.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            b.insert(k.clone(), v.clone());
        }
    }
    base
}

fn execute(config: &RunConfig) -> Result<Executed> {
    let opts = &config.options;
    opts.validate()?;
    Ok(match &config.command {
        Command::Solve {
            problem,
            domain,
            target,
            tolerance,
        } => {
            let res = minimize_quotient(problem, domain, opts)?;
            let study = StudyProblem::Quotient {
                problem: problem.clone(),
                domain: domain.clone(),
            };
            let (tc, passed) = target_check(&study, &res, *target, *tolerance);
            Executed {
                result: merge(serde_json::to_value(&res)?, tc),
                passed,
                table: Some(level_rows(&res)),
            }
        }
        Command::Cap {
            n,
            p,
            cap,
            target,
            tolerance,
        } => {
            let res = solve_cap(*n, *p, cap, opts)?;
            let study = StudyProblem::Cap {
                n: *n,
                p: *p,
                cap: cap.clone(),
            };
            let (tc, passed) = target_check(&study, &res, *target, *tolerance);
            Executed {
                result: merge(serde_json::to_value(&res)?, tc),
                passed,
                table: Some(level_rows(&res)),
            }
        }
        Command::LambdaStar {
            p,
            domain,
            reference,
            bisect,
            target,
            tolerance,
        } => match bisect {
            None => {
                let r = lambda_star_direct(*p, domain, *reference, opts)?;
                let study = StudyProblem::LambdaStar {
                    p: *p,
                    domain: domain.clone(),
                    reference: Some(r.reference),
                };
                let (tc, target_ok) = target_check(&study, &r.result, *target, *tolerance);
                let below_lambda1 = r
                    .result
                    .level_values
                    .iter()
                    .zip(&r.lambda1)
                    .all(|(s, l)| s <= l);
                let passed = Some(below_lambda1 && target_ok.unwrap_or(true));
                Executed {
                    result: merge(
                        serde_json::to_value(&r)?,
                        merge(tc, json!({"below_lambda1": below_lambda1})),
                    ),
                    passed,
                    table: Some(level_rows(&r.result)),
                }
            }
            Some(b) => {
                let n = match domain {
                    DomainSpec::Interval { .. } => 1,
                    DomainSpec::HalfBall { n, .. } => *n,
                    _ => 2,
                };
                let mu_h = match reference {
                    Some(v) => *v,
                    None => crate::solvers::reference_constant(n, *p, opts)?,
                };
                let r = lambda_star_bisect(*p, domain, mu_h, b.bracket, b.tolerance, b.gap, opts)?;
                let target_ok = match (target, tolerance) {
                    (Some(t), Some(tol)) => Some((r.threshold - t).abs() <= *tol),
                    _ => None,
                };
                Executed {
                    passed: Some(r.monotone && target_ok.unwrap_or(true)),
                    result: merge(serde_json::to_value(&r)?, json!({"reference": mu_h})),
                    table: None,
                }
            }
        },
        Command::Nu {
            p,
            lambda,
            domain,
            target,
            tolerance,
        } => {
            let res = nu_lambda(*p, *lambda, domain, opts)?;
            let study = StudyProblem::Nu {
                p: *p,
                lambda: *lambda,
                domain: domain.clone(),
            };
            let (tc, passed) = target_check(&study, &res, *target, *tolerance);
            Executed {
                result: merge(serde_json::to_value(&res)?, tc),
                passed,
                table: Some(level_rows(&res)),
            }
        }
        Command::Sweep {
            problem,
            domain,
            parameter,
            grid,
        } => {
            let r = sweep(*parameter, grid, problem, domain, opts)?;
            let table = r
                .points
                .iter()
                .map(|pt| TableRow {
                    parameter: pt.parameter,
                    value: pt.value,
                    converged: pt.converged,
                    iterations: pt.iterations,
                    level: pt.level,
                    mass_near_singularity: pt.mass_near_singularity,
                })
                .collect();
            Executed {
                passed: (!r.all_converged).then_some(false),
                result: serde_json::to_value(&r)?,
                table: Some(table),
            }
        }
        Command::SectorSearch {
            p,
            deltas,
            ratios,
            reference,
        } => {
            let r = sector_search(*p, deltas, ratios, *reference, opts)?;
            Executed {
                result: serde_json::to_value(&r)?,
                passed: None,
                table: None,
            }
        }
        Command::Verify(check) => {
            let (result, passed) = verify(check, config.seed, opts)?;
            Executed {
                result,
                passed: Some(passed),
                table: None,
            }
        }
        Command::Study {
            study,
            target,
            tolerance,
        } => {
            let r = study_convergence(study, opts, *target, *tolerance)?;
            let table = r
                .levels
                .iter()
                .map(|l| TableRow {
                    parameter: l.level as f64,
                    value: l.value,
                    converged: l.converged,
                    iterations: 0,
                    level: l.level,
                    mass_near_singularity: l.mass_near_singularity,
                })
                .collect();
            Executed {
                passed: r.passed,
                result: serde_json::to_value(&r)?,
                table: Some(table),
            }
        }
    })
}

fn calibrated(p: f64, given: Option<f64>) -> Result<Option<f64>> {
    if p >= 2.0 {
        return Ok(None);
    }
    match given {
        Some(c) => Ok(Some(c)),
        None => Ok(Some(calibrate_c_small_p(p, &CalibrationSpec::default())?.estimate)),
    }
}

fn eigenfield_for(p: f64, opts: &SolveOptions) -> Result<EigenField> {
    if p == 2.0 {
        Ok(EigenField::half_plane())
    } else {
        let cap_opts = SolveOptions {
            levels: vec![6, 7, 8],
            ..opts.clone()
        };
        build_eigenfield(2, p, &DomainSpec::hemisphere(2), &cap_opts)
    }
}

fn verify(check: &Check, seed: u64, opts: &SolveOptions) -> Result<(Value, bool)> {
    Ok(match check {
        Check::Lindqvist {
            p,
            p_range,
            samples,
            radius,
            c_small,
        } => {
            let range = match (p, p_range) {
                (Some(p), None) => [*p, *p],
                (None, Some(r)) => *r,
                (None, None) => [2.0, 6.0],
                (Some(_), Some(_)) => return Err(Error::Config("give either p or p_range".into())),
            };
            let c = if range[0] < 2.0 {
                if range[0] != range[1] && c_small.is_none() {
                    return Err(Error::Config("a p range below 2 needs an explicit c_small".into()));
                }
                calibrated(range[0], *c_small)?
            } else {
                None
            };
            let r = lindqvist_random(*samples, seed, range, *radius, c)?;
            (serde_json::to_value(&r)?, r.passed)
        }
        Check::Calibrate { p, grid } => {
            let c = calibrate_c_small_p(*p, grid)?;
            let stable = (c.estimate - c.coarse_estimate).abs() <= 1e-3;
            (json!({"calibration": c, "stable": stable}), stable)
        }
        Check::DistanceSubstitution { p, samples, c_small } => {
            let s = random_distance_samples(*samples, seed);
            let r = distance_substitution_check(&s, *p, calibrated(*p, *c_small)?, Some(seed))?;
            (serde_json::to_value(&r)?, r.passed)
        }
        Check::WeakResidual { p, mu, levels, eps_r } => {
            let ef = eigenfield_for(*p, opts)?;
            let mu = mu.unwrap_or(ef.value);
            let res: Vec<_> = levels
                .iter()
                .map(|&l| weak_residual(&ef, mu, l, *eps_r))
                .collect::<Result<_>>()?;
            let vals: Vec<f64> = res.iter().map(|r| r.residual).collect();
            let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
            (
                json!({"p": p, "mu": mu, "levels": res, "strictly_decreasing": decreasing}),
                decreasing,
            )
        }
        Check::ReductionRemainder {
            p,
            profiles,
            level,
            eps_r,
            tolerance,
        } => {
            let ef = eigenfield_for(*p, opts)?;
            let c = calibrated(*p, None)?;
            let mesh = std::sync::Arc::new(truncated_cone_mesh(&ef, *level, *eps_r)?);
            let fam = bump_family(&ef, mesh, *eps_r, *profiles)?;
            let reports: Vec<_> = fam
                .iter()
                .map(|u| reduction_remainder_check(u, &ef, ef.value, c, *tolerance))
                .collect::<Result<_>>()?;
            let ok = reports.iter().all(|r| r.passed);
            let min = reports.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min);
            (
                json!({"p": p, "mu": ef.value, "c_small": c, "min_margin": min, "profiles": reports}),
                ok,
            )
        }
        Check::Tidblom { p } => {
            let r = tidblom_1d_check(*p, opts)?;
            (serde_json::to_value(&r)?, r.passed)
        }
        Check::BvGgm {
            domain,
            p,
            c_const,
            omega_n,
        } => {
            let r = bv_ggm_check(domain, *p, opts, *c_const, *omega_n)?;
            (serde_json::to_value(&r)?, r.passed)
        }
        Check::Collar {
            domain,
            p,
            lambda,
            betas,
            base_level,
        } => {
            let rows = collar_sweep(domain, *p, *lambda, betas, *base_level, opts)?;
            let decreasing = rows.windows(2).all(|w| w[1][1] < w[0][1]);
            let above = rows.iter().all(|r| r[1] >= c_p(*p));
            (
                json!({"p": p, "lambda": lambda, "bounds": rows, "decreasing": decreasing, "above_constant": above}),
                decreasing,
            )
        }
    })
}

/// Runs a configuration and builds its report; never panics on bad input.
pub fn run(config: &RunConfig) -> Outcome {
    let versions = MODULES
        .iter()
        .map(|m| (m.to_string(), env!("CARGO_PKG_VERSION").to_string()))
        .collect();
    let mut report = Report {
        tool: TOOL.into(),
        versions,
        config_hash: config_hash(config),
        command: config.command.name().into(),
        seed: config.seed,
        status: Status::Ok,
        result: Value::Null,
        error: None,
    };
    match execute(config) {
        Ok(ex) => {
            report.result = ex.result;
            report.status = match ex.passed {
                None => Status::Ok,
                Some(true) => Status::Pass,
                Some(false) => Status::Fail,
            };
            let code = if report.status == Status::Fail { 1 } else { 0 };
            Outcome {
                report,
                table: ex.table,
                exit_code: code,
            }
        }
        Err(e) => {
            report.status = Status::Error;
            report.error = Some(e.to_string());
            Outcome {
                report,
                table: None,
                exit_code: if e.is_config() { 2 } else { 1 },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_config_parses_inline_check() {
        let c = parse_config(r#"{"command":"verify","check":"lindqvist","p":2,"samples":10,"seed":7}"#, None).unwrap();
        assert_eq!(c.seed, 7);
        assert!(matches!(c.command, Command::Verify(Check::Lindqvist { samples: 10, .. })));
    }

    #[test]
    fn verb_mismatch_is_config_error() {
        let e = parse_config(r#"{"command":"nu","p":2,"domain":{"variant":"interval","length":1}}"#, Some("solve"));
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        let e = parse_config(r#"{"command":"tidblom","p":2}"#, None);
        assert!(e.is_err());
        let e = parse_config(r#"{"command":"verify","check":"tidblom","p":2,"bogus":1}"#, None);
        assert!(e.is_err());
    }
}

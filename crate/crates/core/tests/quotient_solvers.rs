mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use hardylab::domain::DomainSpec;
use hardylab::energy::{quotient_value, Discrete, ProblemSpec, WeightKind};
use hardylab::mesh::{build_mesh, Field};
use hardylab::solvers::{
    lambda_p_constant, lambda_p_with_ends, lambda_star_bisect, lambda_star_direct, minimize_quotient, nu_lambda,
    sector_search, solve_cap, solve_discrete, sweep, Method, SolveOptions, SweepParameter,
};
use hardylab::study::{extrapolate, StudyProblem};
use hardylab::Error;
use proptest::prelude::*;

fn half_disc() -> DomainSpec {
    DomainSpec::HalfBall {
        n: 2,
        radius: 1.0,
        axis: [0.0, 1.0],
    }
}

fn unit_interval() -> DomainSpec {
    DomainSpec::Interval { length: 1.0 }
}

fn levels(l: &[usize]) -> SolveOptions {
    SolveOptions::with_levels(l)
}

#[test]
fn hardy_1d_extrapolates_to_quarter_from_above() {
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    let res = minimize_quotient(&pr, &unit_interval(), &levels(&[4, 5, 6])).unwrap();
    assert!(res.converged);
    assert!(res.level_values.windows(2).all(|w| w[1] < w[0]));
    assert!(res.level_values.iter().all(|v| *v > 0.25));
    let study = StudyProblem::Quotient {
        problem: pr,
        domain: unit_interval(),
    };
    let ex = extrapolate(&study, &res).unwrap();
    assert!((ex.limit - 0.25).abs() < 5e-3, "{}", ex.limit);
}

#[test]
fn interval_dirichlet_eigenvalue() {
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::None);
    let res = minimize_quotient(&pr, &unit_interval(), &levels(&[6])).unwrap();
    assert!((res.value - PI * PI).abs() < 1e-3, "{}", res.value);
    assert!(res.value >= PI * PI);
}

#[test]
fn half_disc_decreases_toward_one() {
    let pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    let res = minimize_quotient(&pr, &half_disc(), &levels(&[1, 2, 3])).unwrap();
    assert!(res.level_values.iter().all(|v| *v > 1.0));
    assert!(res.level_values.windows(2).all(|w| w[1] < w[0]), "{:?}", res.level_values);
}

#[test]
fn cone_caps_are_rejected_by_the_quotient_solver() {
    let pr = ProblemSpec::new(3, 2.0, 0.0, WeightKind::OriginPower);
    assert!(matches!(
        minimize_quotient(&pr, &DomainSpec::hemisphere(3), &levels(&[1])),
        Err(Error::Spec(_))
    ));
}

#[test]
fn cap_examples() {
    let r = solve_cap(2, 2.0, &DomainSpec::hemisphere(2), &levels(&[6, 7])).unwrap();
    assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
    let r = solve_cap(3, 2.0, &DomainSpec::hemisphere(3), &levels(&[6, 7])).unwrap();
    assert!((r.value - 2.25).abs() < 1e-4, "{}", r.value);
    let r = solve_cap(2, 2.0, &DomainSpec::arc_cap(1.5 * PI), &levels(&[6, 7])).unwrap();
    // interval eigenvalue (π/L)² for L = 3π/2
    assert!((r.value - 4.0 / 9.0).abs() < 1e-4, "{}", r.value);
    assert!(r.value >= 4.0 / 9.0);
}

#[test]
fn lambda_p_matches_radial_oracle() {
    let oracle = common::disc_eigenvalue_oracle();
    let r = lambda_p_constant(2.0, &levels(&[5, 6])).unwrap();
    assert!((r.value - oracle).abs() < 1e-3, "{} vs {oracle}", r.value);
    for p in [1.5, 3.0, 4.0] {
        let r = lambda_p_constant(p, &levels(&[4, 5])).unwrap();
        assert!(r.value >= 1.0, "p={p}: {}", r.value);
    }
}

#[test]
fn lambda_p3_uniform_and_graded_agree() {
    let u = lambda_p_constant(3.0, &levels(&[6])).unwrap().value;
    let g = lambda_p_constant(
        3.0,
        &SolveOptions {
            grading: Some(2.0),
            ..levels(&[6])
        },
    )
    .unwrap()
    .value;
    assert!((u - g).abs() < 1e-3, "{u} vs {g}");
}

#[test]
fn lambda_p_natural_end_is_the_smaller() {
    let one = lambda_p_with_ends(2.0, false, &levels(&[5])).unwrap().value;
    let both = lambda_p_with_ends(2.0, true, &levels(&[5])).unwrap().value;
    assert!(one < both);
}

#[test]
fn lambda_star_interval_matches_substitution_oracle() {
    let oracle = common::disc_eigenvalue_oracle();
    let r = lambda_star_direct(2.0, &unit_interval(), Some(0.25), &levels(&[6, 7, 8])).unwrap();
    let study = StudyProblem::LambdaStar {
        p: 2.0,
        domain: unit_interval(),
        reference: Some(0.25),
    };
    let ex = extrapolate(&study, &r.result).unwrap();
    assert!((ex.limit - oracle).abs() < 1e-2, "{} vs {oracle}", ex.limit);
    assert!(r.result.level_values.iter().zip(&r.lambda1).all(|(s, l)| s <= l));
}

#[test]
fn lambda_star_half_disc_respects_lower_bound() {
    let oracle = common::disc_eigenvalue_oracle();
    let r = lambda_star_direct(2.0, &half_disc(), Some(1.0), &levels(&[1, 2])).unwrap();
    assert!(r.result.value >= oracle / 4.0);
    assert!(r.result.level_values.iter().zip(&r.lambda1).all(|(s, l)| s <= l));
}

#[test]
fn lambda_star_outside_half_ball_is_spec_error() {
    let sq = DomainSpec::Polygon {
        vertices: vec![[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]],
    };
    assert!(matches!(
        lambda_star_direct(2.0, &sq, Some(1.0), &levels(&[1])),
        Err(Error::Spec(_))
    ));
}

#[test]
fn bisection_agrees_with_direct_estimate() {
    let opts = levels(&[2]);
    let direct = lambda_star_direct(2.0, &half_disc(), Some(1.0), &opts).unwrap().result.value;
    let tol = 1e-2;
    let b = lambda_star_bisect(2.0, &half_disc(), 1.0, [0.0, PI * PI], tol, 1e-4, &opts).unwrap();
    assert!((b.threshold - direct).abs() <= 2.0 * tol, "{} vs {direct}", b.threshold);
    assert!(b.monotone);
    let mut probes = b.probes.clone();
    probes.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert!(probes.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12));
}

#[test]
fn bisection_rejects_invalid_bracket() {
    let opts = levels(&[1]);
    let r = lambda_star_bisect(2.0, &half_disc(), 1.0, [PI * PI, 0.0], 1e-2, 1e-4, &opts);
    assert!(matches!(r, Err(Error::Bracket(_))));
    // both ends already below the reference
    let r = lambda_star_bisect(2.0, &half_disc(), 1.0, [13.0, 14.0], 1e-2, 1e-4, &opts);
    assert!(matches!(r, Err(Error::Bracket(_))));
}

#[test]
fn sector_threshold_is_negative() {
    let dom = DomainSpec::Sector {
        delta: 0.7,
        inner: 0.01,
        outer: 1.0,
        axis: [0.0, 1.0],
    };
    let opts = levels(&[1]);
    let pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    assert!(minimize_quotient(&pr, &dom, &opts).unwrap().value < 1.0);
    let b = lambda_star_bisect(2.0, &dom, 1.0, [-200.0, 0.0], 1e-1, 1e-4, &opts).unwrap();
    assert!(b.threshold < 0.0);
}

#[test]
fn nu_on_convex_domains_decreases_from_above() {
    let disc = DomainSpec::regular_polygon(64, 1.0, [0.0, 0.0]);
    let r = nu_lambda(2.0, 0.0, &disc, &levels(&[1, 2])).unwrap();
    assert!(r.level_values.iter().all(|v| *v > 0.25));
    assert!(r.level_values.windows(2).all(|w| w[1] < w[0]));
    let r = nu_lambda(3.0, 0.0, &DomainSpec::unit_square(), &levels(&[1, 2])).unwrap();
    assert!(r.level_values.iter().all(|v| *v > 8.0 / 27.0));
    assert!(r.level_values.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn lambda_sweep_is_monotone_and_bounded() {
    let pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    let grid = [0.0, -5.0, -20.0, -80.0];
    let r = sweep(SweepParameter::Lambda, &grid, &pr, &half_disc(), &levels(&[1, 2])).unwrap();
    assert!(r.all_converged);
    assert!(r.non_decreasing, "{:?}", r.points);
    for pt in &r.points[1..] {
        let b = pt.bound.expect("negative shifts carry an envelope bound");
        assert!(pt.value <= b + 1e-12, "{} > {b}", pt.value);
    }
}

#[test]
fn sweep_grid_must_be_monotone() {
    let pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    let r = sweep(SweepParameter::Lambda, &[0.0, -5.0, 1.0], &pr, &half_disc(), &levels(&[1]));
    assert!(matches!(r, Err(Error::Spec(_))));
}

#[test]
fn sector_search_certifies_below_half_space() {
    let r = sector_search(2.0, &[0.5, std::f64::consts::FRAC_1_SQRT_2], &[1e-2, 1e-16], None, &levels(&[0, 1])).unwrap();
    let best = r.best.clone().unwrap();
    assert!(best.certified && best.value <= 0.46, "{best:?}");
    let at = |d: f64| r.best_per_delta.iter().find(|x| x[0] == d).unwrap()[1];
    assert!(at(std::f64::consts::FRAC_1_SQRT_2) < at(0.5));
}

#[test]
fn sector_values_rise_toward_one_as_aperture_closes() {
    let deltas = [0.9, 0.5, 0.2, 0.05];
    let r = sector_search(2.0, &deltas, &[1e-16], Some(1.0), &levels(&[1])).unwrap();
    let vals: Vec<f64> = r.best_per_delta.iter().map(|x| x[1]).collect();
    assert!(vals.windows(2).all(|w| w[1] > w[0]), "{vals:?}");
    assert!(vals.iter().all(|v| *v < 1.0));
    assert!(r.decreasing_in_delta);
}

#[test]
fn sector_search_without_certificate_is_not_an_error() {
    let r = sector_search(2.0, &[0.05], &[0.5], Some(1.0), &levels(&[0])).unwrap();
    assert!(r.best.is_none());
}

#[test]
fn invalid_options_are_rejected() {
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    for o in [
        SolveOptions {
            tolerance: 0.0,
            ..Default::default()
        },
        SolveOptions {
            max_iterations: 0,
            ..Default::default()
        },
        SolveOptions::with_levels(&[3, 2]),
    ] {
        assert!(matches!(minimize_quotient(&pr, &unit_interval(), &o), Err(Error::Spec(_))));
    }
}

#[test]
fn options_accept_finest_level_shorthand() {
    let o: SolveOptions = serde_json::from_str(r#"{"levels": 6}"#).unwrap();
    assert_eq!(o.levels, vec![4, 5, 6]);
    let o: SolveOptions = serde_json::from_str(r#"{"levels": [1, 3]}"#).unwrap();
    assert_eq!(o.levels, vec![1, 3]);
    assert!(serde_json::from_str::<SolveOptions>(r#"{"level": 6}"#).is_err());
}

fn mesh_for(p_level: usize) -> Arc<hardylab::Mesh> {
    Arc::new(build_mesh(&half_disc(), p_level, 3.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn history_monotone_and_field_normalized(p in 1.3f64..4.0, lambda in -10.0f64..5.0) {
        let pr = ProblemSpec::new(2, p, lambda, WeightKind::OriginPower);
        let res = minimize_quotient(&pr, &half_disc(), &levels(&[0, 1])).unwrap();
        prop_assert!(res.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)), "{:?}", res.history);
        let b = quotient_value(&res.field, &pr, &half_disc()).unwrap();
        prop_assert!((b.weighted_mass - 1.0).abs() < 1e-10, "{}", b.weighted_mass);
        prop_assert!(res.field.values.iter().zip(&res.field.mesh.dirichlet).all(|(v, d)| !d || *v == 0.0));
    }

    #[test]
    fn eigen_and_descent_agree_at_p2(lambda in -10.0f64..8.0) {
        let pr = ProblemSpec::new(2, 2.0, lambda, WeightKind::OriginPower);
        let m = mesh_for(1);
        let d = Discrete::standard(&pr, &half_disc(), m.clone()).unwrap();
        let u0 = Field::bump(m).values;
        let base = SolveOptions { tolerance: 1e-13, ..Default::default() };
        let e = solve_discrete(&d, &u0, &SolveOptions { method: Method::Eigen, ..base.clone() }).unwrap();
        let g = solve_discrete(&d, &u0, &SolveOptions { method: Method::Descent, ..base }).unwrap();
        prop_assert!((e.value - g.value).abs() <= 1e-8 * e.value.abs().max(1.0), "{} vs {}", e.value, g.value);
    }

    #[test]
    fn rotation_invariance(angle in -3.1f64..3.1, p in 1.5f64..3.5) {
        let pr = ProblemSpec::new(2, p, 0.0, WeightKind::OriginPower);
        let m = mesh_for(1);
        let rot = Arc::new(m.rotate(angle).unwrap());
        let dom_r = DomainSpec::HalfBall { n: 2, radius: 1.0, axis: [-angle.sin(), angle.cos()] };
        let opts = SolveOptions { tolerance: 1e-13, ..Default::default() };
        let a = solve_discrete(&Discrete::standard(&pr, &half_disc(), m.clone()).unwrap(), &Field::bump(m).values, &opts).unwrap();
        let b = solve_discrete(&Discrete::standard(&pr, &dom_r, rot.clone()).unwrap(), &Field::bump(rot).values, &opts).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * a.value, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn quotient_is_homogeneous_in_the_field(alpha in 0.1f64..10.0, lambda in -5.0f64..5.0) {
        let pr = ProblemSpec::new(2, 2.5, lambda, WeightKind::OriginPower);
        let res = minimize_quotient(&pr, &half_disc(), &levels(&[0])).unwrap();
        let mut v = res.field.clone();
        v.scale(alpha);
        let b = quotient_value(&v, &pr, &half_disc()).unwrap();
        prop_assert!((b.weighted_mass - alpha.powf(2.5)).abs() < 1e-9 * alpha.powf(2.5));
        prop_assert!((b.quotient - res.value).abs() < 1e-10 * res.value.abs().max(1.0));
    }
}

use hardylab::domain::DomainSpec;
use hardylab::energy::{ProblemSpec, WeightKind};
use hardylab::solvers::SolveOptions;
use hardylab::study::{fit_algebraic, fit_logarithmic, study_convergence, Model, StudyProblem};
use hardylab::Error;
use proptest::prelude::*;

fn half_disc_problem() -> StudyProblem {
    StudyProblem::Quotient {
        problem: ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower),
        domain: DomainSpec::HalfBall {
            n: 2,
            radius: 1.0,
            axis: [0.0, 1.0],
        },
    }
}

#[test]
fn half_disc_study_reaches_one() {
    let r = study_convergence(&half_disc_problem(), &SolveOptions::with_levels(&[2, 3, 4]), Some(1.0), Some(1e-2)).unwrap();
    assert_eq!(r.passed, Some(true), "{r:?}");
    assert_eq!(r.from_above, Some(true));
    assert!(r.monotone);
    assert_eq!(r.extrapolation.as_ref().unwrap().model, Model::Logarithmic);
}

#[test]
fn disc_nu_study_reaches_a_quarter() {
    let p = StudyProblem::Nu {
        p: 2.0,
        lambda: 0.0,
        domain: DomainSpec::regular_polygon(32, 1.0, [0.0, 0.0]),
    };
    let r = study_convergence(&p, &SolveOptions::with_levels(&[2, 3, 4]), Some(0.25), Some(5e-3)).unwrap();
    assert_eq!(r.passed, Some(true), "{r:?}");
    assert_eq!(r.from_above, Some(true));
}

#[test]
fn cap_study_reaches_closed_form() {
    let p = StudyProblem::Cap {
        n: 3,
        p: 2.0,
        cap: DomainSpec::hemisphere(3),
    };
    let r = study_convergence(&p, &SolveOptions::with_levels(&[4, 5, 6]), Some(2.25), Some(1e-3)).unwrap();
    assert_eq!(r.passed, Some(true), "{r:?}");
}

#[test]
fn wrong_target_fails() {
    let p = StudyProblem::Cap {
        n: 3,
        p: 2.0,
        cap: DomainSpec::hemisphere(3),
    };
    let r = study_convergence(&p, &SolveOptions::with_levels(&[4, 5, 6]), Some(2.0), Some(1e-3)).unwrap();
    assert_eq!(r.passed, Some(false));
}

#[test]
fn too_few_levels_is_an_error() {
    let r = study_convergence(&half_disc_problem(), &SolveOptions::with_levels(&[2, 3]), Some(1.0), Some(1e-2));
    assert!(matches!(r, Err(Error::Spec(_))));
}

#[test]
fn nonpositive_tolerance_is_an_error() {
    let r = study_convergence(&half_disc_problem(), &SolveOptions::with_levels(&[0, 1, 2]), Some(1.0), Some(0.0));
    assert!(matches!(r, Err(Error::Spec(_))));
}

#[test]
fn without_target_there_is_no_verdict() {
    let p = StudyProblem::LambdaP { p: 2.0 };
    let r = study_convergence(&p, &SolveOptions::with_levels(&[3, 4, 5]), None, None).unwrap();
    assert_eq!(r.passed, None);
    assert!(r.extrapolation.is_some());
}

#[test]
fn study_problem_json_uses_kind_tag() {
    let s = r#"{"kind":"cap","n":3,"p":2,"cap":{"variant":"cone_cap","n":3,"theta":1.5707963267948966}}"#;
    let p: StudyProblem = serde_json::from_str(s).unwrap();
    assert!(matches!(p, StudyProblem::Cap { n: 3, .. }));
    assert!(serde_json::from_str::<StudyProblem>(r#"{"kind":"cap","n":3,"p":2}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logarithmic_fit_is_exact_on_model_data(lim in -1.0f64..1.0, c in 0.1f64..10.0, a in 0.0f64..3.0, q in prop::sample::select(vec![1.0, 2.0])) {
        let l = [5.0, 7.0, 9.0];
        let v = l.map(|x: f64| lim + c / (x + a).powf(q));
        let (fl, _) = fit_logarithmic(l, v, q).unwrap();
        prop_assert!((fl - lim).abs() < 1e-7 * (1.0 + c), "{fl} vs {lim}");
    }

    #[test]
    fn algebraic_fit_is_exact_on_model_data(lim in -1.0f64..1.0, c in 0.1f64..10.0, order in 0.5f64..3.0) {
        let v = [0usize, 1, 2].map(|k| lim + c * 2f64.powf(-order * k as f64));
        let (fl, fo) = fit_algebraic(v).unwrap();
        prop_assert!((fl - lim).abs() < 1e-9 * (1.0 + c));
        prop_assert!((fo - order).abs() < 1e-8);
    }
}

mod common;

use std::sync::Arc;

use hardylab::domain::DomainSpec;
use hardylab::energy::{
    cap_quotient, dirichlet_p_energy, quotient_gradient, quotient_value, weighted_p_mass, Discrete, ProblemSpec,
    WeightKind,
};
use hardylab::mesh::{build_mesh, Field, Mesh};
use hardylab::quadrature::QuadratureRule;
use hardylab::solvers::{minimize_quotient, SolveOptions};
use hardylab::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_interval() -> DomainSpec {
    DomainSpec::Interval { length: 1.0 }
}

fn linear_field(n: usize) -> Field {
    // Dirichlet at 0 only, so u(x) = x is admissible
    let m = common::unit_line(n, true, false);
    Field::interpolate(m, |x| x[0])
}

#[test]
fn hat_energy_examples() {
    let m = common::unit_line(2, true, true);
    let hat = Field::new(m, vec![0.0, 1.0, 0.0]).unwrap();
    assert!((dirichlet_p_energy(&hat, 2.0) - 4.0).abs() < 1e-12);
    assert!((dirichlet_p_energy(&hat, 3.0) - 8.0).abs() < 1e-12);
}

#[test]
fn single_triangle_energy() {
    let g = common::uniform();
    let m = Mesh::new(2, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![false; 3], g).unwrap();
    let f = Field::new(Arc::new(m), vec![0.0, 1.0, 0.0]).unwrap();
    assert!((dirichlet_p_energy(&f, 2.0) - 0.5).abs() < 1e-15);
}

#[test]
fn weighted_mass_of_linear_field_is_one() {
    let f = linear_field(16);
    let rule = QuadratureRule::gauss_segment();
    for p in [2.0, 3.0] {
        let pr = ProblemSpec::new(1, p, 0.0, WeightKind::OriginPower);
        let w = weighted_p_mass(&f, &pr, &unit_interval(), &rule).unwrap();
        assert!((w - 1.0).abs() < 1e-12, "p={p}: {w}");
    }
    let zero = Field::zeros(f.mesh.clone());
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    assert_eq!(weighted_p_mass(&zero, &pr, &unit_interval(), &rule).unwrap(), 0.0);
}

#[test]
fn quotient_examples() {
    let f = linear_field(16);
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    let b = quotient_value(&f, &pr, &unit_interval()).unwrap();
    assert!((b.dirichlet_energy - 1.0).abs() < 1e-12);
    assert!((b.weighted_mass - 1.0).abs() < 1e-12);
    assert!((b.quotient - 1.0).abs() < 1e-12);
    let pr = ProblemSpec::new(1, 2.0, 1.0, WeightKind::OriginPower);
    let b = quotient_value(&f, &pr, &unit_interval()).unwrap();
    assert!((b.plain_mass - 1.0 / 3.0).abs() < 1e-12);
    assert!((b.quotient - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn zero_field_is_degenerate() {
    let f = Field::zeros(common::unit_line(8, true, false));
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    assert!(matches!(quotient_value(&f, &pr, &unit_interval()), Err(Error::DegenerateField)));
}

#[test]
fn invalid_problem_specs() {
    assert!(ProblemSpec::new(1, 1.0, 0.0, WeightKind::OriginPower).validate().is_err());
    assert!(ProblemSpec::new(0, 2.0, 0.0, WeightKind::OriginPower).validate().is_err());
    let mut pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    pr.reference_constant = Some(-1.0);
    assert!(pr.validate().is_err());
}

fn half_disc() -> DomainSpec {
    DomainSpec::HalfBall {
        n: 2,
        radius: 1.0,
        axis: [0.0, 1.0],
    }
}

#[test]
fn gradient_vanishes_at_minimizer() {
    let pr = ProblemSpec::new(1, 2.0, 0.0, WeightKind::OriginPower);
    for tol in [1e-10, 1e-13] {
        let opts = SolveOptions {
            tolerance: tol,
            ..SolveOptions::with_levels(&[3])
        };
        let res = minimize_quotient(&pr, &unit_interval(), &opts).unwrap();
        let g = quotient_gradient(&res.field, &pr, &unit_interval()).unwrap();
        let sup = g.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        // the tolerance bounds the relative quotient change, which is quadratic in the residual
        assert!(sup < tol.sqrt(), "tol {tol}: sup {sup}");
    }
}

fn f_minus_mu_g(d: &Discrete, u: &[f64], mu: f64) -> f64 {
    let (num, den) = d.num_den(&d.parts(u));
    num - mu * den
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (p, lambda) in [(2.0, 0.0), (3.0, 1.5), (1.5, -2.0)] {
        let pr = ProblemSpec::new(2, p, lambda, WeightKind::OriginPower);
        let m = Arc::new(build_mesh(&half_disc(), 1, 3.0).unwrap());
        let u = Field::interpolate(m.clone(), |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (1.0 - r) * x[1] * (1.0 + 0.3 * x[0])
        });
        let d = Discrete::standard(&pr, &half_disc(), m.clone()).unwrap();
        let mu = d.quotient(&u.values).unwrap();
        let g = quotient_gradient(&u, &pr, &half_disc()).unwrap();
        for _ in 0..5 {
            let h: Vec<f64> = m
                .dirichlet
                .iter()
                .map(|&dir| if dir { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let eps = 1e-6;
            let plus: Vec<f64> = u.values.iter().zip(&h).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = u.values.iter().zip(&h).map(|(a, b)| a - eps * b).collect();
            let fd = (f_minus_mu_g(&d, &plus, mu) - f_minus_mu_g(&d, &minus, mu)) / (2.0 * eps);
            let an: f64 = g.values.iter().zip(&h).map(|(a, b)| a * b).sum();
            let scale = g.values.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
            assert!((fd - an).abs() <= 1e-5 * scale, "p={p}: fd {fd} an {an}");
        }
    }
}

#[test]
fn p2_gradient_is_linear() {
    let pr = ProblemSpec::new(1, 2.0, 1.0, WeightKind::OriginPower);
    let u = Field::interpolate(common::unit_line(16, true, true), |x| x[0] * (1.0 - x[0]) * (1.0 + x[0]));
    let g1 = quotient_gradient(&u, &pr, &unit_interval()).unwrap();
    let mut u3 = u.clone();
    u3.scale(3.0);
    let g3 = quotient_gradient(&u3, &pr, &unit_interval()).unwrap();
    for (a, b) in g1.values.iter().zip(&g3.values) {
        assert!((3.0 * a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }
}

#[test]
fn cap_quotient_examples() {
    // N = 2, hemisphere = arc (0, π), V = sin θ
    let m = Arc::new(build_mesh(&DomainSpec::hemisphere(2), 8, 1.0).unwrap());
    let v = Field::interpolate(m, |x| x[0].sin());
    let b = cap_quotient(&v, 2.0, 2).unwrap();
    assert!((b.quotient - 1.0).abs() < 1e-4, "{}", b.quotient);
    // N = 3, (0, π/2), V = cos θ
    let m = Arc::new(build_mesh(&DomainSpec::hemisphere(3), 8, 1.0).unwrap());
    let v = Field::interpolate(m, |x| x[0].cos());
    let b = cap_quotient(&v, 2.0, 3).unwrap();
    assert!((b.quotient - 2.25).abs() < 1e-4, "{}", b.quotient);
    // N = p: numerator is the pure angular energy
    let b3 = cap_quotient(&v, 3.0, 3).unwrap();
    let vt = Field::interpolate(v.mesh.clone(), |x| x[0].cos());
    let manual = {
        let m = &vt.mesh;
        (0..m.n_cells())
            .map(|e| {
                let c = m.cell(e);
                let (a, b) = (m.nodes[c[0]][0], m.nodes[c[1]][0]);
                let slope = (vt.values[c[1]] - vt.values[c[0]]) / (b - a);
                // ∫ sin θ dθ over the cell
                slope.abs().powi(3) * (a.cos() - b.cos())
            })
            .sum::<f64>()
    };
    assert!((b3.dirichlet_energy - manual).abs() < 1e-10 * manual, "{} vs {manual}", b3.dirichlet_energy);
}

#[test]
fn dilation_invariance_on_a_cone() {
    let pr = ProblemSpec::new(2, 2.0, 0.0, WeightKind::OriginPower);
    let m = build_mesh(&half_disc(), 2, 3.0).unwrap();
    let f = |x: [f64; 2]| {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        x[1] * (1.0 - r)
    };
    let u = Field::interpolate(Arc::new(m.clone()), f);
    let s = 0.3;
    let ms = Arc::new(m.dilate(s).unwrap());
    let us = Field::interpolate(ms, |x| f([x[0] / s, x[1] / s]));
    let small = DomainSpec::HalfBall {
        n: 2,
        radius: s,
        axis: [0.0, 1.0],
    };
    let a = quotient_value(&u, &pr, &half_disc()).unwrap().quotient;
    let b = quotient_value(&us, &pr, &small).unwrap().quotient;
    assert!((a - b).abs() < 1e-9 * a, "{a} vs {b}");
}

#[test]
fn quadrature_is_exact_for_polynomials() {
    // weights are normalized to the element measure, so these are element averages
    let seg = QuadratureRule::gauss_segment();
    let avg: f64 = seg.bary.iter().zip(&seg.weights).map(|(b, w)| w * b[1].powi(4)).sum();
    assert!((avg - 0.2).abs() < 1e-14);
    let tri = QuadratureRule::triangle_degree4();
    let avg: f64 = tri.bary.iter().zip(&tri.weights).map(|(b, w)| w * b[0].powi(2) * b[1].powi(2)).sum();
    // 2·∫ x²y² over the unit triangle = 2·2!2!/6!
    assert!((avg - 1.0 / 90.0).abs() < 1e-12, "{avg}");
    for r in [&seg, &tri] {
        assert!(r.weights.iter().all(|w| *w > 0.0));
        assert!(r.bary.iter().all(|b| b.iter().take(if r.degree == 7 { 2 } else { 3 }).all(|x| *x > 0.0)));
        assert!(r.degree >= 4);
    }
    // raising exactness leaves affine integrals unchanged
    for (lo, hi) in [(QuadratureRule::centroid(1), seg), (QuadratureRule::centroid(2), tri)] {
        let f = |b: &[f64; 3]| 0.3 + 1.7 * b[0] - 0.4 * b[1];
        let a: f64 = lo.bary.iter().zip(&lo.weights).map(|(b, w)| w * f(b)).sum();
        let c: f64 = hi.bary.iter().zip(&hi.weights).map(|(b, w)| w * f(b)).sum();
        assert!((a - c).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quotient_is_scale_invariant(alpha in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], p in 1.2f64..4.0, lambda in -3.0f64..3.0) {
        let pr = ProblemSpec::new(2, p, lambda, WeightKind::OriginPower);
        let m = Arc::new(build_mesh(&half_disc(), 1, 3.0).unwrap());
        let u = Field::interpolate(m, |x| x[1] * (1.0 - (x[0] * x[0] + x[1] * x[1])));
        let mut v = u.clone();
        v.scale(alpha);
        let a = quotient_value(&u, &pr, &half_disc()).unwrap().quotient;
        let b = quotient_value(&v, &pr, &half_disc()).unwrap().quotient;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn euler_identity(p in 1.2f64..4.0, lambda in -3.0f64..3.0, tilt in -0.5f64..0.5) {
        let pr = ProblemSpec::new(2, p, lambda, WeightKind::OriginPower);
        let m = Arc::new(build_mesh(&half_disc(), 1, 3.0).unwrap());
        let u = Field::interpolate(m, |x| x[1] * (1.0 - (x[0] * x[0] + x[1] * x[1])) * (1.0 + tilt * x[0]));
        let g = quotient_gradient(&u, &pr, &half_disc()).unwrap();
        let pair: f64 = g.values.iter().zip(&u.values).map(|(a, b)| a * b).sum();
        let scale: f64 = g.values.iter().zip(&u.values).map(|(a, b)| (a * b).abs()).sum::<f64>().max(1e-300);
        prop_assert!(pair.abs() <= 1e-10 * scale.max(1.0), "{}", pair);
    }
}

use std::f64::consts::E;

use mvnet::chaos::integrability_audit;
use mvnet::disorder::{DisorderLaw, PiecewiseConstant, Rates};
use mvnet::meanfield::{continuity_bound_c2, moment_bound_c1};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn c1_examples() {
    assert!(close(moment_bound_c1(1.0, 1, 0.0, &Rates::zero()).unwrap(), E));
    let r = Rates::constant(1.0, 0.0, 1.0, 0.0);
    assert!(close(moment_bound_c1(0.0, 2, 2.0, &r).unwrap(), 3.0));
    assert!(close(moment_bound_c1(0.5, 2, 2.0, &r).unwrap(), 3.0 * 4.5f64.exp()));
}

#[test]
fn c2_examples() {
    assert!(close(continuity_bound_c2(0.0, 1, &Rates::zero(), 1.0).unwrap(), 4.0));
    assert!(close(continuity_bound_c2(1.0, 1, &Rates::zero(), E).unwrap(), E * (1.0 + 3.0 * E)));
}

#[test]
fn bounds_use_exact_piecewise_integrals() {
    let k = PiecewiseConstant::new(vec![0.0, 0.5], vec![2.0, 0.0]).unwrap();
    let r = Rates {
        k,
        ..Rates::zero()
    };
    // int_0^1 (K + P) = 1 + 1
    assert!(close(moment_bound_c1(1.0, 1, 0.0, &r).unwrap(), 2.0f64.exp()));
}

#[test]
fn c2_is_nondecreasing_in_t() {
    let r = Rates::constant(0.3, 0.7, 0.2, 0.1);
    let mut prev = 0.0;
    for i in 0..50 {
        let t = i as f64 * 0.04;
        let c1 = moment_bound_c1(t, 2, 0.5, &r).unwrap();
        let c2 = continuity_bound_c2(t, 2, &r, c1).unwrap();
        assert!(c2 >= prev);
        prev = c2;
    }
}

#[test]
fn negative_inputs_are_domain_errors() {
    let r = Rates::zero();
    assert!(moment_bound_c1(-1.0, 1, 0.0, &r).is_err());
    assert!(moment_bound_c1(1.0, 1, -0.1, &r).is_err());
    assert!(continuity_bound_c2(-0.5, 1, &r, 1.0).is_err());
    assert!(continuity_bound_c2(1.0, 1, &r, -1.0).is_err());
}

fn abs_rates(law: &DisorderLaw, draws: u64) -> Vec<Rates> {
    (0..draws)
        .map(|d| {
            let w = law.sample(31, d).omega[0];
            Rates::constant(w.abs(), 0.0, 0.0, 0.0)
        })
        .collect()
}

#[test]
fn integrability_matches_quadrature() {
    // E e^{|Z|} by the trapezoid rule on [-12, 12].
    let h = 1e-4;
    let steps = (24.0 / h) as usize;
    let f = |z: f64| (z.abs() - z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let oracle: f64 = (0..=steps)
        .map(|i| {
            let z = -12.0 + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * f(z) * h
        })
        .sum();
    let law = DisorderLaw::Normal {
        mean: 0.0,
        sd: 1.0,
        dim: 1,
    };
    let a = integrability_audit(&abs_rates(&law, 40_000), 1, 1.0, 1.0);
    assert!((a.estimate - oracle).abs() <= 4.0 * a.se, "{} vs {oracle} (se {})", a.estimate, a.se);
    assert!(!a.divergent);
    assert!(a.max_share < 0.01);
}

#[test]
fn heavy_tails_are_flagged() {
    let law = DisorderLaw::Cauchy {
        location: 0.0,
        scale: 1.0,
        dim: 1,
    };
    let a = integrability_audit(&abs_rates(&law, 256), 1, 1.0, 1.0);
    assert!(a.divergent, "{a:?}");
}

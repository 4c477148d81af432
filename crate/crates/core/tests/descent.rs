use foilopt::bounds::{run_audit, AuditConfig};
use foilopt::descent::{
    convert_constants, run_demo, AdversarialInjector, DemoConfig, DirectionSpec, StepRule,
};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn injected_error_is_orthogonal_and_within_the_relative_bound(
        g in prop::collection::vec(-10.0f64..10.0, 2..16),
        zeta in 0.01f64..0.95,
        seed in 0u64..1000,
    ) {
        prop_assume!(norm(&g) > 1e-6);
        let mut inj = AdversarialInjector::new(zeta, seed);
        let gb = inj.inject(&g);
        let e: Vec<f64> = gb.iter().zip(&g).map(|(a, b)| a - b).collect();
        let dot: f64 = e.iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!(dot.abs() <= 1e-10 * norm(&g) * norm(&e).max(1.0));
        prop_assert!(norm(&e) <= zeta * norm(&gb));
        prop_assert!(norm(&e) >= 0.999 * zeta * norm(&gb));
    }

    #[test]
    fn converted_constants_stay_admissible(c1p in 0.1f64..2.0, ratio in 1.0f64..3.0, frac in 0.0f64..0.99) {
        let c2p = c1p * ratio;
        let zeta = frac * c1p / c2p;
        let cc = convert_constants(&DirectionSpec { c1p, c2p, zeta }).unwrap();
        prop_assert!(cc.c1 > 0.0 && cc.c2 >= c2p && cc.big_c > 0.0);
        prop_assert!((cc.big_c - cc.c1 / (cc.c2 * cc.c2)).abs() <= 1e-14 * cc.big_c);
    }
}

#[test]
fn exact_gradients_converge_under_every_rule() {
    let cfg = DemoConfig { zeta: 0.0, ..DemoConfig::default() };
    let (_, _, runs) = run_demo(&cfg).unwrap();
    for r in &runs {
        assert!(r.history.last().exact_norm.unwrap() < 1e-6, "{}", r.history.rule);
    }
}

#[test]
fn every_logged_direction_satisfies_the_error_model() {
    let cfg = DemoConfig::default();
    let (_, _, runs) = run_demo(&cfg).unwrap();
    for r in &runs {
        for &(e, gb, _, _) in &r.log {
            assert!(e <= cfg.zeta * gb);
        }
    }
}

#[test]
fn inadmissible_bounded_step_is_rejected() {
    let cc = convert_constants(&DirectionSpec { c1p: 1.0, c2p: 1.0, zeta: 0.3 }).unwrap();
    let l = 4.0;
    let gamma = cc.c1;
    let hi = (2.0 * cc.c1 - gamma) / (cc.c2 * cc.c2 * l);
    let ok = StepRule::Bounded { t: hi, t_bar: hi, gamma, lipschitz: l };
    assert!(ok.validate(&cc).is_ok());
    let too_long = StepRule::Bounded { t: 1.01 * hi, t_bar: 1.01 * hi, gamma, lipschitz: l };
    assert!(too_long.validate(&cc).is_err());
    let bad_sigma = StepRule::Armijo { t0: 1.0, theta: 0.5, sigma: cc.big_c, max_backtracks: 10 };
    assert!(bad_sigma.validate(&cc).is_err());
    let demo = DemoConfig { bounded_step_frac: 1.5, ..DemoConfig::default() };
    assert!(run_demo(&demo).is_err());
}

#[test]
fn zeta_outside_the_unit_interval_is_rejected() {
    let cfg = AuditConfig { zeta: 1.0, ..AuditConfig::default() };
    assert!(run_audit(&cfg).is_err());
}

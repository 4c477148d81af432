use foilopt::config::RunConfig;
use foilopt::descent::StopReason;
use foilopt::geometry::{naca0012_cst, DesignVector};
use foilopt::pipeline::{
    evaluate_design, evaluate_gradient, make_reference, mirror_station, optimize, perturbed_design, upper_stations,
    ReferencePressure, Tolerances,
};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scaled_naca(s: f64) -> DesignVector {
    let d = naca0012_cst();
    DesignVector::new(d.upper.iter().map(|v| v * s).collect(), d.lower.iter().map(|v| v * s).collect()).unwrap()
}

#[test]
fn reference_has_one_station_per_upper_node_and_is_symmetric() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    assert_eq!(r.len(), 25);
    assert_eq!(r.stations, upper_stations(48));
    let e = evaluate_design(&naca0012_cst(), &cfg, &r, Tolerances::nominal(&cfg), None).unwrap();
    for (&s, &c) in r.stations.iter().zip(&r.cp) {
        assert!((e.cp[mirror_station(s, 48)] - c).abs() < 1e-8);
    }
}

#[test]
fn reference_design_matches_itself() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    let e = evaluate_design(&naca0012_cst(), &cfg, &r, Tolerances::nominal(&cfg), None).unwrap();
    assert!(e.objective.abs() < 1e-24, "J = {}", e.objective);
    let g = evaluate_gradient(&e, &cfg, &r).unwrap();
    assert!(norm(&g.gradient) <= 10.0 * cfg.adjoint.tol, "|g| = {}", norm(&g.gradient));
}

#[test]
fn perturbed_design_has_positive_mismatch() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    let d = perturbed_design(&naca0012_cst(), 1e-3, 99);
    let e = evaluate_design(&d, &cfg, &r, Tolerances::nominal(&cfg), None).unwrap();
    assert!(e.objective > 0.0);
}

#[test]
fn gradients_of_mirrored_objectives_mirror_each_other() {
    // at a symmetric design, matching the upper surface and matching the
    // mirrored lower stations are reflections of each other
    let cfg = RunConfig::default();
    let upper = make_reference(&cfg).unwrap();
    let lower = ReferencePressure {
        stations: upper.stations.iter().map(|&s| mirror_station(s, 48)).collect(),
        cp: upper.cp.clone(),
    };
    let d = scaled_naca(1.08);
    let eu = evaluate_design(&d, &cfg, &upper, Tolerances::nominal(&cfg), None).unwrap();
    let el = evaluate_design(&d, &cfg, &lower, Tolerances::nominal(&cfg), None).unwrap();
    assert!((eu.objective - el.objective).abs() <= 1e-12 * eu.objective);
    let gu = evaluate_gradient(&eu, &cfg, &upper).unwrap().gradient;
    let gl = evaluate_gradient(&el, &cfg, &lower).unwrap().gradient;
    let h = gu.len() / 2;
    let scale = norm(&gu);
    for k in 0..h {
        assert!((gu[k] + gl[k + h]).abs() < 1e-8 * scale, "{k}: {} vs {}", gu[k], gl[k + h]);
        assert!((gu[k + h] + gl[k]).abs() < 1e-8 * scale, "{k}: {} vs {}", gu[k + h], gl[k]);
    }
}

#[test]
fn warm_and_cold_starts_reach_the_same_state() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    let tol = Tolerances::nominal(&cfg);
    let a = evaluate_design(&perturbed_design(&naca0012_cst(), 5e-3, 1), &cfg, &r, tol, None).unwrap();
    let d = perturbed_design(&naca0012_cst(), 5e-3, 2);
    let cold = evaluate_design(&d, &cfg, &r, tol, None).unwrap();
    let warm = evaluate_design(&d, &cfg, &r, tol, Some(&a)).unwrap();
    assert!(warm.warm && !cold.warm);
    assert!(warm.mesh.iterations < cold.mesh.iterations);
    // both states satisfy the same tolerances, so they agree to the
    // accuracy those tolerances allow
    assert!((warm.objective - cold.objective).abs() < 1e-3 * cold.objective);
    let dcp = warm.cp.iter().zip(&cold.cp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(dcp < 1e-4, "max Cp difference {dcp}");
}

#[test]
fn optimization_from_the_reference_stops_immediately() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    let res = optimize(&cfg, &r, &naca0012_cst()).unwrap();
    assert_eq!(res.history.stop, StopReason::GradientTolerance);
    assert_eq!(res.history.records.len(), 1);
}

#[test]
fn fixed_step_decreases_over_the_first_iterations() {
    let mut cfg = RunConfig::default();
    cfg.optimizer.max_iters = 10;
    let r = make_reference(&cfg).unwrap();
    let start = perturbed_design(&naca0012_cst(), cfg.optimizer.perturbation, cfg.optimizer.seed);
    let res = optimize(&cfg, &r, &start).unwrap();
    assert_eq!(res.history.records.len(), 11);
    for w in res.history.records.windows(2) {
        assert!(w[1].value < w[0].value, "{} -> {}", w[0].value, w[1].value);
    }
}

#[test]
fn crossing_surfaces_are_an_evaluation_failure() {
    let cfg = RunConfig::default();
    let r = make_reference(&cfg).unwrap();
    let d = DesignVector::new(vec![-0.2; 6], vec![0.2; 6]).unwrap();
    let e = evaluate_design(&d, &cfg, &r, Tolerances::nominal(&cfg), None).unwrap_err();
    assert!(e.is_evaluation_failure());
}

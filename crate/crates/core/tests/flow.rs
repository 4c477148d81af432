use foilopt::config::RunConfig;
use foilopt::flow::{
    af2_iterate, field_output, flow_residual_generic, freestream_velocity, solve_flow, surface_cp, Af2Params,
    Af2Workspace, FlowState, FreestreamSpec,
};
use foilopt::geometry::{naca0012_cst, sample_boundary};
use foilopt::meshgen::{elliptic_smooth, parabolic_march, Grid};
use foilopt::pipeline::mirror_station;
use foilopt::Error;

fn naca_grid() -> Grid {
    let c = RunConfig::default();
    let body = sample_boundary(&naca0012_cst(), &c.cst, c.grid.i_max).unwrap();
    let g0 = parabolic_march(&body, &c.farfield, c.grid.j_max).unwrap();
    elliptic_smooth(&g0, &c.mesh).unwrap().0
}

fn at_mach(m: f64) -> FreestreamSpec {
    FreestreamSpec { mach: m, ..FreestreamSpec::default() }
}

#[test]
fn low_mach_density_stays_near_one() {
    let g = naca_grid();
    let fs = at_mach(0.1);
    let s = solve_flow(&g, &fs, &Af2Params::default(), None).unwrap();
    assert!(s.converged && s.residual < 1e-8);
    let out = field_output(&s, &g, &fs).unwrap();
    let worst = out.as_slice().iter().map(|n| (n.rho - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 0.01, "max |rho - 1| = {worst}");
    // near-stagnation at the leading edge: isentropic Cp0 = 1 + M²/4 + …
    let cp = surface_cp(&s, &g, &fs).unwrap();
    let le = cp[g.ni() / 2];
    let cp0 = 1.0 + 0.01 / 4.0;
    assert!((le - cp0).abs() < 0.1, "leading-edge Cp {le}");
}

#[test]
fn moderate_mach_has_no_switched_faces() {
    let g = naca_grid();
    let fs = at_mach(0.5);
    let p = Af2Params::default();
    let s = solve_flow(&g, &fs, &p, None).unwrap();
    let ev = flow_residual_generic(&s.phi, s.shift, &g, &fs, p.kappa).unwrap();
    let nu = ev.faces.nu_xi.max_abs().max(ev.faces.nu_eta.max_abs());
    assert_eq!(nu, 0.0);
}

#[test]
fn symmetric_airfoil_gives_mirror_symmetric_potential() {
    let g = naca_grid();
    let fs = FreestreamSpec::default();
    let s = solve_flow(&g, &fs, &Af2Params::default(), None).unwrap();
    let n = g.ni();
    let u = freestream_velocity(fs.mach, fs.gamma);
    let mut worst: f64 = 0.0;
    for j in 0..g.nj() {
        for i in 0..n {
            worst = worst.max((s.phi[(i, j)] - s.phi[(mirror_station(i, n), j)]).abs());
        }
    }
    assert!(worst < 1e-8 * u.max(1.0), "mirror mismatch {worst}");
    // far from the body the pressure returns to freestream
    let out = field_output(&s, &g, &fs).unwrap();
    let far = (0..n).map(|i| out[(i, g.nj() - 2)].cp.abs()).fold(0.0, f64::max);
    assert!(far < 0.02, "far-field |Cp| = {far}");
}

#[test]
fn folded_grid_is_rejected_without_iterating() {
    let mut g = naca_grid();
    for j in 0..g.nj() {
        g.y[(5, j)] = -g.y[(5, j)] + 0.3;
        g.x[(6, j)] = g.x[(4, j)] - 0.5;
    }
    let e = solve_flow(&g, &FreestreamSpec::default(), &Af2Params::default(), None).unwrap_err();
    assert!(matches!(e, Error::InvalidMesh(_)), "{e}");
}

#[test]
fn first_alpha_cycle_reduces_the_residual() {
    let g = naca_grid();
    let fs = FreestreamSpec::default();
    let p = Af2Params::default();
    let mut s = FlowState::freestream(&g, &fs);
    let r0 = flow_residual_generic(&s.phi, s.shift, &g, &fs, p.kappa).unwrap().residual.max_abs();
    let mut ws = Af2Workspace::new(&p);
    let mut r = r0;
    for _ in 0..p.cycle {
        r = af2_iterate(&mut s, &g, &fs, &p, &mut ws).unwrap();
    }
    assert!(r < r0, "{r} !< {r0}");
}

#[test]
fn converged_state_is_an_af2_fixed_point() {
    let g = naca_grid();
    let fs = FreestreamSpec::default();
    let p = Af2Params::default();
    let s = solve_flow(&g, &fs, &p, None).unwrap();
    let mut t = s.clone();
    let mut ws = Af2Workspace::new(&p);
    af2_iterate(&mut t, &g, &fs, &p, &mut ws).unwrap();
    let change = t.phi.as_slice().iter().zip(s.phi.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(change < 1e-6, "update {change}");
}

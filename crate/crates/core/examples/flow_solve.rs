//! Full-potential AF2 solve at M = 0.7 around NACA 0012, with the surface
//! pressure and its upper/lower symmetry.
//!
//! `cargo run --example flow_solve [mach] [out_dir]`

use std::path::PathBuf;

use foilopt::flow::{solve_flow, surface_cp, write_fields_csv, Af2Params, FreestreamSpec};
use foilopt::geometry::{naca0012_cst, sample_boundary, CstConfig};
use foilopt::meshgen::{elliptic_smooth, parabolic_march, EllipticParams, FarField};
use foilopt::pipeline::mirror_station;

fn main() -> foilopt::Result<()> {
    let mut args = std::env::args().skip(1);
    let mach: f64 = args.next().map_or(Ok(0.7), |s| s.parse()).map_err(|e| foilopt::Error::Parse(format!("{e}")))?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/flow_solve".into()));
    std::fs::create_dir_all(&out)?;

    let body = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49)?;
    let g0 = parabolic_march(&body, &FarField::default(), 31)?;
    let (grid, _) = elliptic_smooth(&g0, &EllipticParams::default())?;
    let fs = FreestreamSpec { mach, ..FreestreamSpec::default() };
    let state = solve_flow(&grid, &fs, &Af2Params::default(), None)?;
    println!("M = {mach}: {} AF2 iterations, max |L| = {:.3e}", state.iterations, state.residual);

    let cp = surface_cp(&state, &grid, &fs)?;
    let n = grid.ni();
    let asym = (0..n).map(|i| (cp[i] - cp[mirror_station(i, n)]).abs()).fold(0.0, f64::max);
    println!("upper/lower Cp mismatch {asym:.2e}");
    println!("{:>6} {:>10} {:>10}", "x", "y", "Cp");
    for i in (n / 2..=n).step_by(3) {
        let (x, y) = body.points[i];
        println!("{x:>6.3} {y:>10.5} {:>10.5}", cp[i % n]);
    }
    write_fields_csv(&out.join("fields.csv"), &state, &grid, &fs)?;
    println!("fields written to {}", out.display());
    Ok(())
}

//! Parabolic march followed by elliptic ADI smoothing around NACA 0012.
//!
//! `cargo run --example mesh_generation [out_dir]`

use std::path::PathBuf;

use foilopt::geometry::{naca0012_cst, sample_boundary, CstConfig};
use foilopt::meshgen::{check_conformity, elliptic_smooth, mesh_residual_norm, parabolic_march, EllipticParams, FarField};

fn main() -> foilopt::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/mesh_generation".into()));
    std::fs::create_dir_all(&out)?;
    let far = FarField::default();
    let body = sample_boundary(&naca0012_cst(), &CstConfig::default(), 49)?;

    let initial = parabolic_march(&body, &far, 31)?;
    println!("initial grid: max |L| = {:.3e}", mesh_residual_norm(&initial));

    let (grid, rep) = elliptic_smooth(&initial, &EllipticParams::default())?;
    let v = check_conformity(&grid, &body, &far);
    println!("smoothed in {} iterations: max |L| = {:.3e}", rep.iterations, rep.residual);
    println!(
        "cell jacobian in [{:.3e}, {:.3e}], {} folded cells",
        v.min_cell_jacobian, v.max_cell_jacobian, v.folded_cells
    );
    initial.write_mesh_csv(&out.join("mesh_initial.csv"))?;
    grid.write_mesh_csv(&out.join("mesh.csv"))?;
    println!("grids written to {}", out.display());
    Ok(())
}

//! Scratch diagnostics: solve a small grid and inspect the value surface,
//! gradients and feedback fields along a demand slice.

use crmkit_core::grid::{fd_derivatives, GridSpec};
use crmkit_core::params::{ModelParams, Pair};
use crmkit_core::pde::{cfl_check, solve_consumer_pde, SolveOptions};

fn main() {
    let p = ModelParams::default_french();
    let g = GridSpec {
        x_c_min: 20.0,
        x_c_max: 160.0,
        x_d_min: 40.0,
        x_d_max: 80.0,
        n_c: 14,
        n_d: 10,
        n_t: 20,
    };
    let r = cfl_check(&p, &g);
    println!("cfl: ratio={:.2} substeps={} eff={:.3}", r.ratio, r.substeps, r.effective_ratio);
    let sol = solve_consumer_pde(&p, &g, &SolveOptions::default()).unwrap();
    let u0 = &sol.surface.slices[0];
    let d = fd_derivatives(u0, &g).unwrap();
    println!("u(0, x_c, x_d=60) along capacity:");
    let j = ((60.0 - g.x_d_min) / g.dx_d()) as usize;
    for i in 0..=g.n_c {
        println!(
            "  x_c={:6.1}  u={:14.4e}  du/dxc={:12.4e}  du/dxd={:12.4e}  z_c={:12.4e} alpha={:8.4}",
            g.x_c(i),
            u0.at(i, j),
            d.d_xc.at(i, j),
            d.d_xd.at(i, j),
            sol.z_c[0].at(i, j),
            sol.alpha[0].at(i, j)
        );
    }
    println!("u(0, x_c=90, x_d) along demand:");
    let i = ((90.0 - g.x_c_min) / g.dx_c()) as usize;
    for j in 0..=g.n_d {
        println!(
            "  x_d={:6.1}  u={:14.4e}  du/dxc={:12.4e}  du/dxd={:12.4e}",
            g.x_d(j),
            u0.at(i, j),
            d.d_xc.at(i, j),
            d.d_xd.at(i, j)
        );
    }
    let x0 = Pair::new(90.0, 60.0);
    println!("u(0, x0) = {:.6e}", sol.surface.value_at(0, x0));
}

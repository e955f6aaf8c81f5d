use blsim_core::data::Preset;
use blsim_core::grid::{Field, StaggeredGrid};
use blsim_core::stokes::*;

fn main() {
    let g = StaggeredGrid::slice_1d(32, 1.0);
    let b = Preset::Flood.boundary(&g, 1.0);
    println!("slip: {:?}", b.slip);
    let sample = b.sample(0.0);
    let h = Field::constant(g.nx, g.ny, 3.0);
    let settings = SolverSettings::default();
    match solve_quasi_stationary(&g, &h, &sample, 0.01, None, &settings, None) {
        Ok((v, rep)) => {
            println!("outer={} inner={} div={:.2e} mom={:.2e}", rep.iterations, rep.inner_iterations, rep.div_residual, rep.momentum_residual);
            for i in 0..=4 { println!("vx[{i},0] = {}", v.vx.at(i,0)); }
            println!("vx[16,0] = {}", v.vx.at(16,0));
        }
        Err(e) => println!("ERR {e}"),
    }
}

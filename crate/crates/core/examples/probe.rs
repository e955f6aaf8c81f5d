use blsim_core::data::Preset;
use blsim_core::driver::*;
use blsim_core::grid::StaggeredGrid;
use blsim_core::kinetic::*;
use blsim_core::riemann::riemann_oracle;
use blsim_core::transport::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "flood128" => flood128(),
        "riemann" => riemann(),
        "eps" => eps_study_probe(),
        "tau" => tau_probe(),
        "profile" => profile512(),
        "short" => short_timing(),
        "cost" => flood_cost(),
        _ => println!("usage: probe [flood128|riemann|eps|tau|profile]"),
    }
}

fn flood128() {
    let t0 = Instant::now();
    let grid = StaggeredGrid::unit_square(128);
    let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.5, 0.0, 0.0).unwrap();
    inputs.dense = true;
    inputs.prepare(InitialVelocity::Lifting).unwrap();
    let traj = run_ibvp_stationary(&inputs).unwrap();
    println!("run: {:?}, {} levels", t0.elapsed(), traj.n_levels());

    // midline shock value vs 1/sqrt(2)
    let u = traj.u.last().unwrap();
    let j = traj.grid.ny / 2;
    let sol = riemann_oracle(&inputs.model, 1.0, 0.0).unwrap();
    println!("oracle u*={} sigma={}", sol.u_star, sol.shock_speed);
    // find steepest drop
    let mut front = 0; let mut best = 0.0;
    for i in 1..traj.grid.nx {
        let d = u.at(i-1,j) - u.at(i,j);
        if d > best { best = d; front = i; }
    }
    println!("front at i={front}, x={}", (front as f64+0.5)*traj.grid.dx);
    for off in 1..8 {
        let i = front.saturating_sub(off);
        println!("  u[front-{off}] = {}", u.at(i,j));
    }
    println!("expected shock x = {}", sol.shock_speed * 0.5);

    let t1 = Instant::now();
    let vg = VGrid::default_grid();
    let rows = run_certificates(&traj, &inputs.model, &inputs.transport, &vg).unwrap();
    let fails: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    println!("certificates: {:?}, {} rows, {} fails", t1.elapsed(), rows.len(), fails.len());
    for f in fails.iter().take(10) { println!("  FAIL {} v={} value={} bound={}", f.name, f.v, f.value, f.bound); }
    // weak residual summary
    let min_weak = rows.iter().filter(|r| r.name=="weak_inequality_min").map(|r| r.value).fold(f64::INFINITY, f64::min);
    println!("worst weak residual: {min_weak}, tol would be {}", weak_tolerance(&traj));
    println!("total elapsed {:?}", t0.elapsed());
}

fn riemann() {
    for n in [64usize, 128, 256, 512] {
        let t0 = Instant::now();
        let grid = StaggeredGrid::slice_1d(n, 1.0);
        let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.25, 0.0, 0.0).unwrap();
        inputs.transport.cfl = 0.45;
        inputs.prepare(InitialVelocity::Lifting).unwrap();
        let traj = run_ibvp_stationary(&inputs).unwrap();
        let u = traj.u.last().unwrap();
        let g = &traj.grid;
        let sol = riemann_oracle(&inputs.model, 1.0, 0.0).unwrap();
        let t = 0.25;
        // L1 error against oracle
        let mut l1 = 0.0;
        for i in 0..g.nx {
            let x = (i as f64 + 0.5) * g.dx;
            l1 += (u.at(i, 0) - sol.sample(x / t)).abs() * g.dx;
        }
        // shock position: crossing of u*/2
        let half = sol.u_star / 2.0;
        let mut x_s = f64::NAN;
        for i in 1..g.nx {
            let (a, b) = (u.at(i - 1, 0), u.at(i, 0));
            if a >= half && b < half {
                let w = (a - half) / (a - b);
                x_s = (i as f64 - 0.5 + w) * g.dx;
                break;
            }
        }
        let x_exact = sol.shock_speed * t;
        // post-shock value: shoulder detection
        let mut front = 0; let mut best = 0.0;
        for i in 1..g.nx {
            let d = u.at(i - 1, 0) - u.at(i, 0);
            if d > best { best = d; front = i; }
        }
        let mut shoulder = front;
        while shoulder > 1 && u.at(shoulder - 1, 0) - u.at(shoulder, 0) > 0.15 * best {
            shoulder -= 1;
        }
        let u_star_num = u.at(shoulder, 0);
        println!(
            "nx={n}: L1={l1:.5}, x_s={x_s:.5} vs {x_exact:.5} (err {} dx), u*_num={u_star_num:.5} vs {:.5} (diff {:.4}), elapsed {:?}",
            ((x_s - x_exact).abs() / g.dx).round(),
            sol.u_star,
            (u_star_num - sol.u_star).abs(),
            t0.elapsed()
        );
    }
}

fn eps_study_probe() {
    for (nx, t_end) in [(512usize, 0.25f64), (512, 0.35), (256, 0.25)] {
        let t0 = Instant::now();
        let grid = StaggeredGrid::slice_1d(nx, 1.0);
        let base = RunInputs::preset(Preset::Flood, grid, t_end, 0.0, 0.0).unwrap();
        let eps = [4e-2, 2e-2, 1e-2, 5e-3];
        let study = epsilon_study(&base, &eps).unwrap();
        let d: Vec<f64> = study.rows.iter().filter_map(|r| r.cauchy_diff).collect();
        println!(
            "nx={nx} T={t_end}: diffs {:?} ratio_last_first={:.4} decreasing={} flags={:?} elapsed {:?}",
            d,
            d.last().unwrap() / d[0],
            d.windows(2).all(|w| w[1] < w[0]),
            study.rows.iter().map(|r| r.under_resolved).collect::<Vec<_>>(),
            t0.elapsed()
        );
        for b in &study.bounds {
            if !b.pass { println!("  series {} UNBOUNDED {:?}", b.name, b.values); }
        }
    }
}

fn tau_probe() {
    let t0 = Instant::now();
    let grid = StaggeredGrid::unit_square(64);
    let base = RunInputs::preset(Preset::Flood, grid, 0.5, 1e-1, 0.0).unwrap();
    let taus = [1e-1, 1e-2, 1e-3, 1e-4];
    let study = tau_study(&base, &taus).unwrap();
    for r in &study.rows {
        println!("tau={:.0e}: D={:.6e} Bmax={:.4} dtB={:.4}", r.tau, r.deviation_sq, r.b_v1_max, r.dtb_l2);
    }
    println!("slope = {:?}, elapsed {:?}", study.slope, t0.elapsed());
    for b in &study.bounds {
        println!("  series {}: pass={} {:?}", b.name, b.pass, b.values);
    }
}

#[allow(dead_code)]
fn profile512() {
    let grid = StaggeredGrid::slice_1d(512, 1.0);
    let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.25, 0.0, 0.0).unwrap();
    inputs.transport.cfl = 0.45;
    inputs.prepare(InitialVelocity::Lifting).unwrap();
    let traj = run_ibvp_stationary(&inputs).unwrap();
    let u = traj.u.last().unwrap();
    let g = &traj.grid;
    let sol = riemann_oracle(&inputs.model, 1.0, 0.0).unwrap();
    let mut front = 0; let mut best = 0.0;
    for i in 1..g.nx {
        let d = u.at(i-1,0)-u.at(i,0);
        if d > best { best = d; front = i; }
    }
    println!("front i={front} x={:.5} (exact {:.5})", (front as f64+0.5)*g.dx, sol.shock_speed*0.25);
    for off in (0..20).rev() {
        let i = front - off;
        let x = (i as f64+0.5)*g.dx;
        println!("i={i} x={x:.5} u={:.5} exact={:.5}", u.at(i,0), sol.sample(x/0.25));
    }
}

fn short_timing() {
    use blsim_core::stokes::solve_quasi_stationary;
    use blsim_core::model::{FluidParams, FluxMode, FluxModel, RelPermModel};
    let grid = StaggeredGrid::unit_square(128);
    let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.02, 0.0, 0.0).unwrap();
    let nu: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    inputs.model = FluxModel::new(FluidParams::new(1.0,1.0,nu,0.0).unwrap(), RelPermModel::corey_quadratic(), FluxMode::Simple).unwrap();
    println!("nu = {nu}");
    inputs.prepare(InitialVelocity::Lifting).unwrap();
    let sample = inputs.boundary.sample(0.0);
    let h = h_field(&inputs.model, &inputs.init.u0);
    let t0 = Instant::now();
    let (v1, rep1) = solve_quasi_stationary(
        &inputs.grid, &h, &sample, nu, None, &inputs.solver, None).unwrap();
    println!("cold solve: {:?}, outer={} inner={} div={:.2e}", t0.elapsed(), rep1.iterations, rep1.inner_iterations, rep1.div_residual);
    let t0 = Instant::now();
    let (_v2, rep2) = solve_quasi_stationary(
        &inputs.grid, &h, &sample, nu, None, &inputs.solver, Some(&v1)).unwrap();
    println!("warm same-h solve: {:?}, outer={} inner={} div={:.2e}", t0.elapsed(), rep2.iterations, rep2.inner_iterations, rep2.div_residual);
    let mut h2 = h.clone();
    for (k, v) in h2.data.iter_mut().enumerate() { if k % 97 == 0 { *v += 0.01; } }
    let t0 = Instant::now();
    let (_v3, rep3) = solve_quasi_stationary(
        &inputs.grid, &h2, &sample, nu, None, &inputs.solver, Some(&v1)).unwrap();
    println!("warm perturbed-h: {:?}, outer={} inner={} div={:.2e}", t0.elapsed(), rep3.iterations, rep3.inner_iterations, rep3.div_residual);

    let t0 = Instant::now();
    let traj = run_ibvp_stationary(&inputs).unwrap();
    println!("T=0.02 run ({} levels): {:?}", traj.n_levels(), t0.elapsed());
}

fn flood_cost() {
    let grid = StaggeredGrid::unit_square(128);
    let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.1, 0.0, 0.0).unwrap();
    inputs.cadence = 0.01;
    inputs.solver.trace = true;
    inputs.prepare(InitialVelocity::Lifting).unwrap();
    let t0 = Instant::now();
    let traj = run_ibvp_stationary(&inputs).unwrap();
    println!("total outer iterations: {}", traj.solver_trace.len());
    let steps_est = (0.1 / (0.3 * (1.0/128.0) / 2.0)) as usize;
    println!("T=0.1 flood nx=128: {:?} ({} cadence levels, est {} steps)", t0.elapsed(), traj.n_levels(), steps_est);
    let v = traj.v.last().unwrap();
    println!("vmax = {:?}", v.max_speed());
}

//! Result persistence: raw little-endian field dumps with a text sidecar,
//! CSV reports, and trajectory reload for the diagnose pipeline. Everything
//! except the marked wall-clock line is byte-stable across reruns.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::driver::{EpsilonStudy, RunInputs, TauStudy, Trajectory};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::kinetic::CertificateRow;
use crate::stokes::VelocityField;

/// Raw dump: 64-bit little-endian floats, row-major with y outer.
pub fn write_field_dump(path: &Path, field: &Field) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.data.len() * 8);
    for v in &field.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_field_dump(path: &Path, nx: usize, ny: usize) -> Result<Field> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != nx * ny * 8 {
        return Err(Error::Shape(format!(
            "{}: expected {} bytes for {nx}x{ny}, found {}",
            path.display(),
            nx * ny * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Field { nx, ny, data })
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// report.csv rows from the energy report.
pub fn energy_csv(traj: &Trajectory) -> String {
    let mut out = String::from(
        "t,min_u,max_u,sqrt_tau_v_L2,v_L2V1_running,eps_gradu_running,vneg1_proxy\n",
    );
    for r in &traj.energy.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.min_u),
            fmt_f64(r.max_u),
            fmt_f64(r.sqrt_tau_v_l2),
            fmt_f64(r.v_l2v1_running),
            fmt_f64(r.eps_gradu_running),
            fmt_f64(r.vneg1_proxy)
        );
    }
    out
}

fn sidecar_text(traj: &Trajectory, wallclock: bool) -> String {
    let g = &traj.grid;
    let mut out = String::from("# field dump sidecar\n");
    let _ = writeln!(out, "nx={}", g.nx);
    let _ = writeln!(out, "ny={}", g.ny);
    let _ = writeln!(out, "Lx={}", g.lx);
    let _ = writeln!(out, "Ly={}", g.ly);
    let _ = writeln!(out, "dx={}", g.dx);
    let _ = writeln!(out, "dy={}", g.dy);
    out.push_str("byte_order=little_endian\n");
    out.push_str("layout=row_major_y_outer\n");
    let _ = writeln!(out, "dense={}", traj.dense);
    let _ = writeln!(out, "fields=u:{}x{},vx:{}x{},vy:{}x{},p:{}x{}",
        g.nx, g.ny, g.nx + 1, g.ny, g.nx, g.ny + 1, g.nx, g.ny);
    let _ = writeln!(out, "n_levels={}", traj.times.len());
    let times: Vec<String> = traj.times.iter().map(|t| format!("{t}")).collect();
    let _ = writeln!(out, "times={}", times.join(","));
    if wallclock {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(out, "# nondeterministic: written_at_unix={now}");
    }
    out
}

/// Persist a run: effective config echo, report.csv, field dumps and the
/// sidecar. External data files referenced by the config are copied in so
/// the directory is self-contained.
pub fn write_run_outputs(outdir: &Path, traj: &Trajectory, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    let fields_dir = outdir.join("fields");
    std::fs::create_dir_all(&fields_dir)?;

    let mut cfg = config.clone();
    if let Some(src) = &config.boundary_file {
        let name = PathBuf::from("boundary_data.csv");
        std::fs::copy(src, outdir.join(&name))?;
        cfg.boundary_file = Some(name);
    }
    if let Some(src) = &config.rel_perm_table {
        let name = PathBuf::from("rel_perm_table.csv");
        std::fs::copy(src, outdir.join(&name))?;
        cfg.rel_perm_table = Some(name);
    }
    std::fs::write(outdir.join("effective.cfg"), cfg.echo())?;
    std::fs::write(outdir.join("report.csv"), energy_csv(traj))?;
    std::fs::write(fields_dir.join("sidecar.txt"), sidecar_text(traj, true))?;

    for (k, (u, v)) in traj.u.iter().zip(&traj.v).enumerate() {
        write_field_dump(&fields_dir.join(format!("u_{k:06}.raw")), u)?;
        write_field_dump(&fields_dir.join(format!("vx_{k:06}.raw")), &v.vx)?;
        write_field_dump(&fields_dir.join(format!("vy_{k:06}.raw")), &v.vy)?;
        write_field_dump(&fields_dir.join(format!("p_{k:06}.raw")), &v.p)?;
    }

    if !traj.solver_trace.is_empty() {
        let mut out = String::from("iteration,momentum_residual,div_residual\n");
        for (it, mom, div) in &traj.solver_trace {
            let _ = writeln!(out, "{it},{mom},{div}");
        }
        std::fs::write(outdir.join("solver_trace.csv"), out)?;
    }
    Ok(())
}

/// Reload a persisted run for diagnosis. Returns the trajectory and the
/// resolved inputs (model, transport settings, boundary data).
pub fn load_trajectory(outdir: &Path) -> Result<(Trajectory, RunInputs)> {
    let cfg = RunConfig::from_path(&outdir.join("effective.cfg"))?;
    let mut inputs = cfg.resolve(outdir)?;
    inputs.prepare(cfg.initial_velocity())?;

    let sidecar = std::fs::read_to_string(outdir.join("fields").join("sidecar.txt"))?;
    let mut times: Vec<f64> = Vec::new();
    let mut dense = false;
    for line in sidecar.lines() {
        if let Some(rest) = line.strip_prefix("times=") {
            times = rest
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Config {
                        line: 0,
                        msg: format!("sidecar: bad time {s:?}"),
                    })
                })
                .collect::<Result<_>>()?;
        } else if let Some(rest) = line.strip_prefix("dense=") {
            dense = rest == "true";
        }
    }
    if times.is_empty() {
        return Err(Error::Config {
            line: 0,
            msg: "sidecar lists no time levels".into(),
        });
    }

    let g = &inputs.grid;
    let fields_dir = outdir.join("fields");
    let mut u = Vec::with_capacity(times.len());
    let mut v = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        u.push(read_field_dump(&fields_dir.join(format!("u_{k:06}.raw")), g.nx, g.ny)?);
        v.push(VelocityField {
            vx: read_field_dump(&fields_dir.join(format!("vx_{k:06}.raw")), g.nx + 1, g.ny)?,
            vy: read_field_dump(&fields_dir.join(format!("vy_{k:06}.raw")), g.nx, g.ny + 1)?,
            p: read_field_dump(&fields_dir.join(format!("p_{k:06}.raw")), g.nx, g.ny)?,
        });
    }
    let traj = Trajectory {
        grid: inputs.grid.clone(),
        boundary: inputs.boundary.clone(),
        times,
        u,
        v,
        dense,
        energy: Default::default(),
        solver_trace: Vec::new(),
    };
    Ok((traj, inputs))
}

pub fn certificates_csv(rows: &[CertificateRow]) -> String {
    let mut out = String::from("name,v,value,bound,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.name,
            fmt_f64(r.v),
            fmt_f64(r.value),
            fmt_f64(r.bound),
            r.pass
        );
    }
    out
}

pub fn write_certificates(outdir: &Path, rows: &[CertificateRow]) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    std::fs::write(outdir.join("certificate.csv"), certificates_csv(rows))?;
    Ok(())
}

pub fn write_epsilon_study(outdir: &Path, study: &EpsilonStudy) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    let mut csv = String::from("epsilon,cauchy_diff,eps_gradu,min_u,max_u,under_resolved\n");
    for r in &study.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f64(r.epsilon),
            r.cauchy_diff.map_or(String::new(), fmt_f64),
            fmt_f64(r.eps_gradu),
            fmt_f64(r.min_u),
            fmt_f64(r.max_u),
            r.under_resolved
        );
    }
    std::fs::write(outdir.join("study.csv"), csv)?;

    let mut fit = String::new();
    let diffs: Vec<f64> = study.rows.iter().filter_map(|r| r.cauchy_diff).collect();
    if diffs.len() >= 2 {
        let _ = writeln!(fit, "cauchy_last_over_first: {}", diffs.last().unwrap() / diffs[0]);
    }
    for b in &study.bounds {
        let vals: Vec<String> = b.values.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(
            fit,
            "series {}: {} [{}]",
            b.name,
            if b.pass { "bounded" } else { "unbounded" },
            vals.join(",")
        );
    }
    std::fs::write(outdir.join("fit.txt"), fit)?;
    Ok(())
}

pub fn write_tau_study(outdir: &Path, study: &TauStudy) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    let mut csv = String::from("tau,deviation_sq,b_v1_max,dtb_l2\n");
    for r in &study.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(r.tau),
            fmt_f64(r.deviation_sq),
            fmt_f64(r.b_v1_max),
            fmt_f64(r.dtb_l2)
        );
    }
    std::fs::write(outdir.join("study.csv"), csv)?;

    let mut fit = String::new();
    match study.slope {
        Some(s) => {
            let _ = writeln!(fit, "slope: {s}");
        }
        None => {
            let _ = writeln!(fit, "slope: insufficient points");
        }
    }
    for b in &study.bounds {
        let vals: Vec<String> = b.values.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(
            fit,
            "series {}: {} [{}]",
            b.name,
            if b.pass { "bounded" } else { "unbounded" },
            vals.join(",")
        );
    }
    std::fs::write(outdir.join("fit.txt"), fit)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Preset;
    use crate::driver::{run_ibvp_stationary, InitialVelocity};
    use crate::grid::{norm, NormKind, StaggeredGrid};

    #[test]
    fn dump_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.raw");
        let f = Field::from_fn(7, 5, |i, j| (i as f64 * 0.37 + j as f64 * 1.11).sin() * 1e-7);
        write_field_dump(&path, &f).unwrap();
        let back = read_field_dump(&path, 7, 5).unwrap();
        for (a, b) in f.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(read_field_dump(&path, 5, 7).is_ok());
        assert!(read_field_dump(&path, 6, 5).is_err());
    }

    #[test]
    fn run_outputs_round_trip_and_norm_match() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_text(
            "grid.nx=8\nrun.T=0.04\nboundary.preset=flood\nrun.dense_output=true\n",
        )
        .unwrap();
        let mut inputs = cfg.resolve(dir.path()).unwrap();
        inputs.prepare(cfg.initial_velocity()).unwrap();
        let traj = run_ibvp_stationary(&inputs).unwrap();
        let out = dir.path().join("run");
        write_run_outputs(&out, &traj, &cfg).unwrap();

        let (back, inputs2) = load_trajectory(&out).unwrap();
        assert_eq!(back.times.len(), traj.times.len());
        assert!(back.dense);
        for (a, b) in back.u.iter().zip(&traj.u) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Recomputed norm matches at machine precision.
        let n1 = norm(&traj.u[2], &traj.grid, NormKind::L2).unwrap();
        let n2 = norm(&back.u[2], &inputs2.grid, NormKind::L2).unwrap();
        assert!((n1 - n2).abs() <= 1e-14 * n1.max(1.0));
    }

    #[test]
    fn reports_are_rerun_stable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg =
            RunConfig::from_text("grid.nx=8\nrun.T=0.02\nboundary.preset=flood\n").unwrap();
        let mut inputs = cfg.resolve(dir.path()).unwrap();
        inputs.prepare(cfg.initial_velocity()).unwrap();
        let t1 = run_ibvp_stationary(&inputs).unwrap();
        let t2 = run_ibvp_stationary(&inputs).unwrap();
        assert_eq!(energy_csv(&t1), energy_csv(&t2));
        let s1 = sidecar_text(&t1, false);
        let s2 = sidecar_text(&t2, false);
        assert_eq!(s1, s2);
    }

    #[test]
    fn quiescent_report_rows_constant() {
        let grid = StaggeredGrid::unit_square(8);
        let mut inputs =
            crate::driver::RunInputs::preset(Preset::Quiescent, grid, 0.03, 0.0, 0.0).unwrap();
        inputs.prepare(InitialVelocity::Zero).unwrap();
        let traj = run_ibvp_stationary(&inputs).unwrap();
        let csv = energy_csv(&traj);
        for line in csv.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[1].parse::<f64>().unwrap(), 0.3);
            assert_eq!(cols[2].parse::<f64>().unwrap(), 0.3);
        }
    }
}

//! Boundary and initial data containers, named presets, and the
//! compatibility validation gate that every run must pass.

use crate::defaults;
use crate::error::{Error, Result};
use crate::grid::{discrete_divergence, Field, Side, StaggeredGrid};

/// Velocity and saturation data on the boundary, piecewise linear in time.
///
/// `b_n` is the outward-normal velocity component (so inflow is negative),
/// `b_t` the tangential component in grid orientation (x on horizontal
/// walls, y on vertical walls). A side can be marked `slip`, in which case
/// the tangential condition is replaced by a zero-shear mirror; that is the
/// 1-D slice mode wall treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub times: Vec<f64>,
    /// u_b[time][face], face order as in `StaggeredGrid::boundary_faces`.
    pub u_b: Vec<Vec<f64>>,
    pub b_n: Vec<Vec<f64>>,
    pub b_t: Vec<Vec<f64>>,
    /// Free-slip flag per side, indexed left, right, bottom, top.
    pub slip: [bool; 4],
}

/// Boundary values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub u_b: Vec<f64>,
    pub b_n: Vec<f64>,
    pub b_t: Vec<f64>,
    pub slip: [bool; 4],
}

impl BoundaryData {
    /// Constant-in-time data from per-face values.
    pub fn steady(t_end: f64, u_b: Vec<f64>, b_n: Vec<f64>, b_t: Vec<f64>) -> Self {
        Self {
            times: vec![0.0, t_end],
            u_b: vec![u_b.clone(), u_b],
            b_n: vec![b_n.clone(), b_n],
            b_t: vec![b_t.clone(), b_t],
            slip: [false; 4],
        }
    }

    pub fn n_faces(&self) -> usize {
        self.u_b.first().map_or(0, Vec::len)
    }

    fn interp_weights(&self, t: f64) -> (usize, usize, f64) {
        let n = self.times.len();
        if t <= self.times[0] {
            return (0, 0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.times.partition_point(|&s| s <= t).min(n - 1);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        (lo, hi, w)
    }

    /// Linear interpolation in time (clamped at the ends).
    pub fn sample(&self, t: f64) -> BoundarySample {
        let (lo, hi, w) = self.interp_weights(t);
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
        };
        BoundarySample {
            u_b: lerp(&self.u_b[lo], &self.u_b[hi]),
            b_n: lerp(&self.b_n[lo], &self.b_n[hi]),
            b_t: lerp(&self.b_t[lo], &self.b_t[hi]),
            slip: self.slip,
        }
    }

    /// Exact slope of the piecewise-linear normal data at time t.
    pub fn b_n_slope(&self, t: f64) -> Vec<f64> {
        let (lo, hi, _) = self.interp_weights(t);
        if lo == hi {
            return vec![0.0; self.n_faces()];
        }
        let dt = self.times[hi] - self.times[lo];
        self.b_n[lo]
            .iter()
            .zip(&self.b_n[hi])
            .map(|(a, b)| (b - a) / dt)
            .collect()
    }

    /// Net outward volume flux at a time level (should vanish).
    pub fn net_flux(&self, grid: &StaggeredGrid, level: usize) -> f64 {
        let mut net = 0.0;
        for face in grid.boundary_faces() {
            let idx = grid.boundary_face_index(face);
            net += self.b_n[level][idx] * grid.face_length(face);
        }
        net
    }

    /// Smooth u_b along each side with a [1/4, 1/2, 1/4] pass
    /// (`defaults::MOLLIFY_PASSES` times). Stand-in for regularized data.
    pub fn mollify(&mut self, grid: &StaggeredGrid) {
        for level in 0..self.times.len() {
            for side in Side::ALL {
                let n = match side {
                    Side::Left | Side::Right => grid.ny,
                    Side::Bottom | Side::Top => grid.nx,
                };
                let base = grid.boundary_face_index(crate::grid::BoundaryFace { side, k: 0 });
                for _ in 0..defaults::MOLLIFY_PASSES {
                    let vals: Vec<f64> =
                        (0..n).map(|k| self.u_b[level][base + k]).collect();
                    for k in 0..n {
                        let lo = if k == 0 { 0 } else { k - 1 };
                        let hi = if k + 1 == n { k } else { k + 1 };
                        self.u_b[level][base + k] =
                            0.25 * vals[lo] + 0.5 * vals[k] + 0.25 * vals[hi];
                    }
                }
            }
        }
    }
}

/// Initial saturation, plus an initial velocity when the model carries the
/// time-delay term.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: Field,
    /// (vx, vy) face components; required when tau > 0.
    pub v0: Option<(Field, Field)>,
}

impl InitialData {
    pub fn constant(grid: &StaggeredGrid, u: f64) -> Self {
        Self {
            u0: Field::constant(grid.nx, grid.ny, u),
            v0: None,
        }
    }

    /// [1/4, 1/2, 1/4] smoothing passes in x then y.
    pub fn mollify(&mut self) {
        let (nx, ny) = (self.u0.nx, self.u0.ny);
        for _ in 0..defaults::MOLLIFY_PASSES {
            let old = self.u0.clone();
            for j in 0..ny {
                for i in 0..nx {
                    let lo = if i == 0 { 0 } else { i - 1 };
                    let hi = if i + 1 == nx { i } else { i + 1 };
                    *self.u0.at_mut(i, j) =
                        0.25 * old.at(lo, j) + 0.5 * old.at(i, j) + 0.25 * old.at(hi, j);
                }
            }
            let old = self.u0.clone();
            for j in 0..ny {
                let lo = if j == 0 { 0 } else { j - 1 };
                let hi = if j + 1 == ny { j } else { j + 1 };
                for i in 0..nx {
                    *self.u0.at_mut(i, j) =
                        0.25 * old.at(i, lo) + 0.5 * old.at(i, j) + 0.25 * old.at(i, hi);
                }
            }
        }
    }
}

/// One validation line: condition name, pass flag, measured residual.
#[derive(Debug, Clone)]
pub struct ValidationItem {
    pub name: String,
    pub pass: bool,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|it| it.pass)
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.all_pass() {
            Ok(self)
        } else {
            let msg = self
                .items
                .iter()
                .filter(|it| !it.pass)
                .map(|it| format!("  {} (residual {:.3e})", it.name, it.residual))
                .collect::<Vec<_>>()
                .join("\n");
            Err(Error::Validation(msg))
        }
    }
}

/// Checks saturation bounds, zero net flux per time level, initial
/// divergence, and the t = 0 normal-trace match between v0 and b.
/// The trace check is skipped when tau = 0 (v0 is not part of the data).
pub fn validate_data(
    grid: &StaggeredGrid,
    boundary: &BoundaryData,
    init: &InitialData,
    tau: f64,
) -> Result<ValidationReport> {
    let nf = grid.n_boundary_faces();
    if boundary.u_b.len() != boundary.times.len()
        || boundary.b_n.len() != boundary.times.len()
        || boundary.b_t.len() != boundary.times.len()
        || boundary.u_b.iter().any(|v| v.len() != nf)
        || boundary.b_n.iter().any(|v| v.len() != nf)
        || boundary.b_t.iter().any(|v| v.len() != nf)
    {
        return Err(Error::Shape("boundary data does not match the grid".into()));
    }
    if init.u0.nx != grid.nx || init.u0.ny != grid.ny {
        return Err(Error::Shape("initial saturation does not match the grid".into()));
    }
    if let Some((vx, vy)) = &init.v0 {
        if vx.nx != grid.nx + 1 || vx.ny != grid.ny || vy.nx != grid.nx || vy.ny != grid.ny + 1 {
            return Err(Error::Shape("initial velocity does not match the grid".into()));
        }
    }

    let mut items = Vec::new();

    let ub_violation = boundary
        .u_b
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max((-v).max(v - 1.0)));
    items.push(ValidationItem {
        name: "boundary saturation in [0, 1]".into(),
        pass: ub_violation <= 0.0,
        residual: ub_violation.max(0.0),
    });

    let u0_violation = init
        .u0
        .data
        .iter()
        .fold(0.0f64, |m, &v| m.max((-v).max(v - 1.0)));
    items.push(ValidationItem {
        name: "initial saturation in [0, 1]".into(),
        pass: u0_violation <= 0.0,
        residual: u0_violation.max(0.0),
    });

    let flux_tol = defaults::NET_FLUX_TOL * grid.perimeter();
    let mut worst_flux = 0.0f64;
    for level in 0..boundary.times.len() {
        worst_flux = worst_flux.max(boundary.net_flux(grid, level).abs());
    }
    items.push(ValidationItem {
        name: "zero net boundary flux per time level".into(),
        pass: worst_flux <= flux_tol,
        residual: worst_flux,
    });

    if tau > 0.0 {
        match &init.v0 {
            None => items.push(ValidationItem {
                name: "initial velocity present (tau > 0)".into(),
                pass: false,
                residual: f64::NAN,
            }),
            Some((vx, vy)) => {
                let div = discrete_divergence(vx, vy, grid)?;
                let div_max = div.max_abs();
                items.push(ValidationItem {
                    name: "initial velocity divergence-free".into(),
                    pass: div_max <= defaults::INITIAL_DIVERGENCE_TOL,
                    residual: div_max,
                });

                let b0 = boundary.sample(boundary.times[0]);
                let mut worst = 0.0f64;
                for face in grid.boundary_faces() {
                    let idx = grid.boundary_face_index(face);
                    let v_n = match face.side {
                        Side::Left => -vx.at(0, face.k),
                        Side::Right => vx.at(grid.nx, face.k),
                        Side::Bottom => -vy.at(face.k, 0),
                        Side::Top => vy.at(face.k, grid.ny),
                    };
                    worst = worst.max((v_n - b0.b_n[idx]).abs());
                }
                items.push(ValidationItem {
                    name: "v0 normal trace matches b(0)".into(),
                    pass: worst <= 1e-10,
                    residual: worst,
                });
            }
        }
    }

    Ok(ValidationReport { items })
}

/// Named boundary/initial presets used by the harnesses and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Everything at rest; u0 = 0.3.
    Quiescent,
    /// Uniform inflow (u_b = 1) through the left edge, outflow right,
    /// no-slip walls top and bottom. In slice mode (ny = 1) the walls
    /// become free-slip so the flow is genuinely one-dimensional.
    Flood,
    /// Unit tangential velocity on the top lid, all normal velocities zero.
    LidDriven,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "quiescent" => Some(Preset::Quiescent),
            "flood" => Some(Preset::Flood),
            "lid_driven" => Some(Preset::LidDriven),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Quiescent => "quiescent",
            Preset::Flood => "flood",
            Preset::LidDriven => "lid_driven",
        }
    }

    pub fn boundary(&self, grid: &StaggeredGrid, t_end: f64) -> BoundaryData {
        let nf = grid.n_boundary_faces();
        let mut u_b = vec![0.0; nf];
        let mut b_n = vec![0.0; nf];
        let mut b_t = vec![0.0; nf];
        match self {
            Preset::Quiescent => {
                u_b.fill(0.3);
            }
            Preset::Flood => {
                // Inflow profile ramps to zero over a tenth of the height so
                // the normal trace stays continuous at the no-slip corners
                // (a jump trace would fall outside the H^{1/2} data class).
                let ramp = 0.1 * grid.ly;
                for face in grid.boundary_faces() {
                    let idx = grid.boundary_face_index(face);
                    let y = (face.k as f64 + 0.5) * grid.dy;
                    let q = if grid.ny == 1 {
                        1.0
                    } else {
                        (y / ramp).min((grid.ly - y) / ramp).min(1.0)
                    };
                    match face.side {
                        Side::Left => {
                            u_b[idx] = 1.0;
                            b_n[idx] = -q;
                        }
                        Side::Right => {
                            b_n[idx] = q;
                        }
                        _ => {}
                    }
                }
            }
            Preset::LidDriven => {
                for face in grid.boundary_faces() {
                    let idx = grid.boundary_face_index(face);
                    if face.side == Side::Top {
                        b_t[idx] = 1.0;
                    }
                }
            }
        }
        let mut data = BoundaryData::steady(t_end, u_b, b_n, b_t);
        if grid.ny == 1 {
            data.slip = [false, false, true, true];
        }
        data
    }

    pub fn initial(&self, grid: &StaggeredGrid) -> InitialData {
        match self {
            Preset::Quiescent => InitialData::constant(grid, 0.3),
            Preset::Flood => InitialData::constant(grid, 0.0),
            Preset::LidDriven => InitialData::constant(grid, 0.3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_validates() {
        let g = StaggeredGrid::unit_square(8);
        let nf = g.n_boundary_faces();
        let b = BoundaryData::steady(1.0, vec![0.3; nf], vec![0.0; nf], vec![0.0; nf]);
        let mut init = InitialData::constant(&g, 0.3);
        init.v0 = Some((g.xface_field(), g.yface_field()));
        let rep = validate_data(&g, &b, &init, 1e-3).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }

    #[test]
    fn flood_preset_balances_flux() {
        let g = StaggeredGrid::unit_square(8);
        let b = Preset::Flood.boundary(&g, 1.0);
        assert!(b.net_flux(&g, 0).abs() < 1e-14);
        let init = Preset::Flood.initial(&g);
        let rep = validate_data(&g, &b, &init, 0.0).unwrap();
        assert!(rep.all_pass());
    }

    #[test]
    fn unbalanced_flux_fails_with_residual() {
        // Inflow -1 left, outflow +0.5 right: net flux -0.5 * Ly.
        let g = StaggeredGrid::unit_square(8);
        let nf = g.n_boundary_faces();
        let mut b_n = vec![0.0; nf];
        for face in g.boundary_faces() {
            let idx = g.boundary_face_index(face);
            match face.side {
                Side::Left => b_n[idx] = -1.0,
                Side::Right => b_n[idx] = 0.5,
                _ => {}
            }
        }
        let b = BoundaryData::steady(1.0, vec![0.5; nf], b_n, vec![0.0; nf]);
        let init = Preset::Flood.initial(&g);
        let rep = validate_data(&g, &b, &init, 0.0).unwrap();
        assert!(!rep.all_pass());
        let item = rep
            .items
            .iter()
            .find(|it| it.name.contains("net boundary flux"))
            .unwrap();
        assert!(!item.pass);
        assert!((item.residual - 0.5 * g.ly).abs() < 1e-12);
    }

    #[test]
    fn validation_is_idempotent() {
        let g = StaggeredGrid::unit_square(8);
        let b = Preset::Quiescent.boundary(&g, 1.0);
        let init = Preset::Quiescent.initial(&g);
        let r1 = validate_data(&g, &b, &init, 0.0).unwrap();
        let r2 = validate_data(&g, &b, &init, 0.0).unwrap();
        assert_eq!(r1.items.len(), r2.items.len());
        for (a, b) in r1.items.iter().zip(&r2.items) {
            assert_eq!(a.pass, b.pass);
            assert_eq!(a.residual.to_bits(), b.residual.to_bits());
        }
    }

    #[test]
    fn missing_v0_fails_for_positive_tau() {
        let g = StaggeredGrid::unit_square(8);
        let b = Preset::Quiescent.boundary(&g, 1.0);
        let init = Preset::Quiescent.initial(&g);
        let rep = validate_data(&g, &b, &init, 1e-3).unwrap();
        assert!(!rep.all_pass());
        assert!(rep.into_result().is_err());
    }

    #[test]
    fn time_interpolation_is_linear() {
        let g = StaggeredGrid::unit_square(4);
        let nf = g.n_boundary_faces();
        let mut b = BoundaryData::steady(2.0, vec![0.0; nf], vec![0.0; nf], vec![0.0; nf]);
        b.b_n[1] = vec![1.0; nf];
        let s = b.sample(0.5);
        assert!((s.b_n[0] - 0.25).abs() < 1e-14);
        let slope = b.b_n_slope(0.5);
        assert!((slope[0] - 0.5).abs() < 1e-14);
        // Clamped outside the grid.
        assert_eq!(b.sample(-1.0).b_n[0], 0.0);
        assert_eq!(b.sample(5.0).b_n[0], 1.0);
    }

    #[test]
    fn mollify_preserves_constants_and_bounds() {
        let g = StaggeredGrid::unit_square(16);
        let mut init = InitialData::constant(&g, 0.4);
        init.mollify();
        for v in &init.u0.data {
            assert!((v - 0.4).abs() < 1e-15);
        }

        let mut step = InitialData::constant(&g, 0.0);
        for j in 0..g.ny {
            for i in 0..g.nx / 2 {
                *step.u0.at_mut(i, j) = 1.0;
            }
        }
        step.mollify();
        assert!(step.u0.min() >= 0.0 && step.u0.max() <= 1.0);
        // Smoothing did something at the interface.
        assert!(step.u0.at(g.nx / 2 - 1, 0) < 1.0);
    }
}

//! Explicit monotone finite-volume transport of the saturation.
//!
//! The update is conservative: interior face fluxes telescope, boundary
//! faces upwind against the prescribed data (inflow takes u_b, outflow the
//! interior value) and, when artificial viscosity is active, apply the
//! Robin condition `eps du/dn + M (u - u_b) = 0` with `M = K |b_n|` through
//! a first-order ghost value.

use crate::data::BoundarySample;
use crate::error::{Error, Result};
use crate::grid::{Field, Side, StaggeredGrid};
use crate::model::FluxModel;
use crate::stokes::VelocityField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxScheme {
    /// Velocity-sign upwinding; monotone for nondecreasing g.
    UpwindMonotone,
    /// Engquist-Osher splitting of v_n g'; monotone for any g.
    EngquistOsher,
    /// Exact interval extremum flux; monotone for any g.
    Godunov,
}

impl FluxScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "upwind_monotone" => Some(Self::UpwindMonotone),
            "engquist_osher" => Some(Self::EngquistOsher),
            "godunov" => Some(Self::Godunov),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::UpwindMonotone => "upwind_monotone",
            Self::EngquistOsher => "engquist_osher",
            Self::Godunov => "godunov",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportSettings {
    pub epsilon: f64,
    pub cfl: f64,
    pub scheme: FluxScheme,
    pub mollify_data: bool,
    /// Step cap used when neither advection nor diffusion binds.
    pub dt_max: f64,
}

impl Default for TransportSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            cfl: crate::defaults::CFL_DEFAULT,
            scheme: FluxScheme::UpwindMonotone,
            mollify_data: false,
            dt_max: crate::defaults::DT_MAX_DEFAULT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaturationField {
    pub u: Field,
    pub t: f64,
}

/// Per-step diagnostics; conservation holds as
/// `sum(u_new - u) * cell_area = -dt * (advective + diffusive outflux)`.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub min_before_clamp: f64,
    pub max_before_clamp: f64,
    pub clamp_magnitude: f64,
    pub boundary_advective_outflux: f64,
    pub boundary_diffusive_outflux: f64,
}

/// Largest stable explicit step:
/// `cfl * min(dx/(K max|vx|), dy/(K max|vy|), min(dx,dy)^2/(4 eps))`,
/// capped by `dt_max`; the cap alone is returned when nothing moves.
pub fn stable_dt(
    v: &VelocityField,
    model: &FluxModel,
    settings: &TransportSettings,
    grid: &StaggeredGrid,
) -> f64 {
    let (vxm, vym) = v.max_speed();
    let k = model.lipschitz;
    let mut bound = f64::INFINITY;
    if k * vxm > 0.0 {
        bound = bound.min(grid.dx / (k * vxm));
    }
    if k * vym > 0.0 {
        bound = bound.min(grid.dy / (k * vym));
    }
    if settings.epsilon > 0.0 {
        let h = grid.dx.min(grid.dy);
        bound = bound.min(h * h / (4.0 * settings.epsilon));
    }
    if bound.is_finite() {
        (settings.cfl * bound).min(settings.dt_max)
    } else {
        settings.dt_max
    }
}

fn g_extrema_on(model: &FluxModel, lo: f64, hi: f64) -> (f64, f64) {
    let mut gmin = model.g(lo).min(model.g(hi));
    let mut gmax = model.g(lo).max(model.g(hi));
    for &c in model.critical_points() {
        if c > lo && c < hi {
            let gc = model.g(c);
            gmin = gmin.min(gc);
            gmax = gmax.max(gc);
        }
    }
    (gmin, gmax)
}

/// Numerical flux for `s -> v_n g(s)` across one face. Consistent
/// (`F(a,a) = v_n g(a)`), nondecreasing in the left state and nonincreasing
/// in the right state for fixed `v_n`. A face with `v_n = 0` carries no flux.
pub fn face_flux(u_l: f64, u_r: f64, v_n: f64, model: &FluxModel, scheme: FluxScheme) -> f64 {
    if v_n == 0.0 {
        return 0.0;
    }
    match scheme {
        FluxScheme::UpwindMonotone => {
            if v_n > 0.0 {
                v_n * model.g(u_l)
            } else {
                v_n * model.g(u_r)
            }
        }
        FluxScheme::EngquistOsher => {
            let g0 = model.g(0.0);
            if v_n > 0.0 {
                v_n * (g0 + model.gp_pos(u_l) + model.gp_neg(u_r))
            } else {
                v_n * (g0 + model.gp_neg(u_l) + model.gp_pos(u_r))
            }
        }
        FluxScheme::Godunov => {
            let (lo, hi) = if u_l <= u_r { (u_l, u_r) } else { (u_r, u_l) };
            let (gmin, gmax) = g_extrema_on(model, lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
            let minimizing = u_l <= u_r;
            if v_n > 0.0 {
                v_n * if minimizing { gmin } else { gmax }
            } else {
                v_n * if minimizing { gmax } else { gmin }
            }
        }
    }
}

/// One conservative explicit update without clamping or admissibility
/// checks. This is the raw scheme map H(u); the entropy-defect construction
/// re-applies it to clipped states, so it must stay a pure function of its
/// inputs.
pub fn explicit_update(
    u: &Field,
    v: &VelocityField,
    sample: &BoundarySample,
    model: &FluxModel,
    settings: &TransportSettings,
    dt: f64,
    grid: &StaggeredGrid,
) -> (Field, StepReport) {
    let g = grid;
    let eps = settings.epsilon;
    let scheme = settings.scheme;
    let k_lip = model.lipschitz;
    let mut out = u.clone();
    let rx = dt / g.dx;
    let ry = dt / g.dy;

    // Interior advective + diffusive x-fluxes.
    for j in 0..g.ny {
        for i in 1..g.nx {
            let vn = v.vx.at(i, j);
            let mut f = face_flux(u.at(i - 1, j), u.at(i, j), vn, model, scheme);
            if eps > 0.0 {
                f -= eps * (u.at(i, j) - u.at(i - 1, j)) / g.dx;
            }
            *out.at_mut(i - 1, j) -= rx * f;
            *out.at_mut(i, j) += rx * f;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let vn = v.vy.at(i, j);
            let mut f = face_flux(u.at(i, j - 1), u.at(i, j), vn, model, scheme);
            if eps > 0.0 {
                f -= eps * (u.at(i, j) - u.at(i, j - 1)) / g.dy;
            }
            *out.at_mut(i, j - 1) -= ry * f;
            *out.at_mut(i, j) += ry * f;
        }
    }

    // Boundary faces: upwind advection against the data, Robin diffusion.
    let mut adv_out = 0.0;
    let mut diff_out = 0.0;
    for face in g.boundary_faces() {
        let idx = g.boundary_face_index(face);
        let (ci, cj) = g.adjacent_cell(face);
        let u_in = u.at(ci, cj);
        let u_b = sample.u_b[idx];
        let b_n = sample.b_n[idx];
        let len = g.face_length(face);
        let r = dt / match face.side {
            Side::Left | Side::Right => g.dx,
            Side::Bottom | Side::Top => g.dy,
        };
        // Outward-oriented advective flux: outside state is the left state
        // of a face whose positive direction points outward.
        let adv = face_flux(u_in, u_b, b_n, model, scheme);
        let mut total = adv;
        if eps > 0.0 {
            let m = k_lip * b_n.abs();
            let u_mid = if b_n < 0.0 { u_b } else { u_in };
            total += m * (u_mid - u_b);
        }
        *out.at_mut(ci, cj) -= r * total;
        adv_out += adv * len;
        diff_out += (total - adv) * len;
    }

    let report = StepReport {
        min_before_clamp: out.min(),
        max_before_clamp: out.max(),
        clamp_magnitude: 0.0,
        boundary_advective_outflux: adv_out,
        boundary_diffusive_outflux: diff_out,
    };
    (out, report)
}

/// Advance the saturation by one explicit step. Checks the step bound,
/// detects NaNs (with the offending cell), clamps the result to [0, 1] and
/// records by how much.
pub fn step_saturation(
    field: &SaturationField,
    v: &VelocityField,
    sample: &BoundarySample,
    model: &FluxModel,
    settings: &TransportSettings,
    dt: f64,
    grid: &StaggeredGrid,
) -> Result<(SaturationField, StepReport)> {
    if field.u.nx != grid.nx || field.u.ny != grid.ny {
        return Err(Error::Shape("saturation does not match the grid".into()));
    }
    let bound = stable_dt(v, model, settings, grid);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::CflViolation { dt, bound });
    }
    let (mut u_new, mut report) = explicit_update(&field.u, v, sample, model, settings, dt, grid);
    let mut clamp = 0.0f64;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let val = u_new.at(i, j);
            if val.is_nan() {
                return Err(Error::NumericFault {
                    what: "NaN saturation".into(),
                    i,
                    j,
                });
            }
            if val < 0.0 {
                clamp = clamp.max(-val);
                *u_new.at_mut(i, j) = 0.0;
            } else if val > 1.0 {
                clamp = clamp.max(val - 1.0);
                *u_new.at_mut(i, j) = 1.0;
            }
        }
    }
    report.clamp_magnitude = clamp;
    Ok((
        SaturationField {
            u: u_new,
            t: field.t + dt,
        },
        report,
    ))
}

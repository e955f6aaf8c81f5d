//! Coupled time loop for the saturation / velocity system, energy
//! diagnostics, and the two singular-limit study harnesses.

use rayon::prelude::*;

use crate::data::{validate_data, BoundaryData, InitialData, Preset};
use crate::error::{Error, Result};
use crate::grid::{norm, Field, NormKind, StaggeredGrid};
use crate::model::{FluidParams, FluxMode, FluxModel, RelPermModel};
use crate::stokes::{
    solve_b_tau, solve_lifting, solve_quasi_stationary, solve_quasi_stationary_recycled,
    step_unsteady_recycled, v1_diff_norm_sq, v1_norm_sq, velocity_l2_sq, vneg1_proxy_sq,
    RectPoisson, SchurRecycle, SolverSettings, VelocityBc, VelocityField,
};
use crate::transport::{
    stable_dt, step_saturation, SaturationField, StepReport, TransportSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialVelocity {
    /// Stokes lifting of b(0); the default compatible choice.
    Lifting,
    /// Zero field (compatible only with b(0) . n = 0).
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    /// Advance the velocity with h(u^n), then transport with v^{n+1}.
    VelocityFirst,
    /// Transport with v^n, then advance the velocity with h(u^{n+1}).
    SaturationFirst,
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub grid: StaggeredGrid,
    pub model: FluxModel,
    pub boundary: BoundaryData,
    pub init: InitialData,
    pub transport: TransportSettings,
    pub solver: SolverSettings,
    pub tau: f64,
    pub t_end: f64,
    pub cadence: f64,
    /// Store every step (required by the kinetic diagnostics).
    pub dense: bool,
    /// Optional inner coupling loop instead of plain lagging.
    pub picard: bool,
    pub order: UpdateOrder,
    /// Initial step cap; grows geometrically. The relaxation studies use it
    /// to resolve the O(tau) initial layer.
    pub dt_ramp_start: Option<f64>,
}

impl RunInputs {
    /// Preset-based inputs with the quadratic fractional-flow model.
    pub fn preset(
        preset: Preset,
        grid: StaggeredGrid,
        t_end: f64,
        tau: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let fluid = FluidParams::new(1.0, 1.0, 0.01, tau)?;
        let model = FluxModel::new(fluid, RelPermModel::corey_quadratic(), FluxMode::Simple)?;
        let boundary = preset.boundary(&grid, t_end);
        let init = preset.initial(&grid);
        Ok(Self {
            grid,
            model,
            boundary,
            init,
            transport: TransportSettings {
                epsilon,
                ..Default::default()
            },
            solver: SolverSettings::default(),
            tau,
            t_end,
            cadence: t_end / 50.0,
            dense: false,
            picard: false,
            order: UpdateOrder::VelocityFirst,
            dt_ramp_start: None,
        })
    }

    /// Build the initial velocity when the relaxation term needs one, then
    /// validate everything. Must be called before running.
    pub fn prepare(&mut self, v0_kind: InitialVelocity) -> Result<()> {
        if self.transport.mollify_data {
            self.init.mollify();
            self.boundary.mollify(&self.grid);
        }
        if self.tau > 0.0 && self.init.v0.is_none() {
            let v0 = match v0_kind {
                InitialVelocity::Zero => VelocityField::zeros(&self.grid),
                InitialVelocity::Lifting => {
                    let sample = self.boundary.sample(self.boundary.times[0]);
                    let settings = SolverSettings {
                        tolerance: crate::defaults::INITIAL_DIVERGENCE_TARGET * 2.0,
                        max_iterations: 2 * crate::defaults::SOLVER_MAX_ITERATIONS,
                        ..SolverSettings::default()
                    };
                    let (v, _rep, _ratio) =
                        solve_lifting(&self.grid, &sample, self.model.fluid.nu, &settings)?;
                    v
                }
            };
            self.init.v0 = Some((v0.vx, v0.vy));
        }
        validate_data(&self.grid, &self.boundary, &self.init, self.tau)?.into_result()?;
        Ok(())
    }
}

/// One row of the a-priori estimate report (written at cadence times).
#[derive(Debug, Clone, Copy)]
pub struct EnergyRow {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// Running sup of sqrt(tau) ||v(t)||_L2.
    pub sqrt_tau_v_l2: f64,
    /// Running sqrt(int_0^t ||v||_V1^2).
    pub v_l2v1_running: f64,
    /// Running eps int ||grad u||^2.
    pub eps_gradu_running: f64,
    /// Running tau * sqrt(int ||dv/dt||_{V^-1 proxy}^2), cadence-level
    /// differences through one exact inverse Dirichlet Laplacian.
    pub vneg1_proxy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn last(&self) -> Option<&EnergyRow> {
        self.rows.last()
    }

    pub fn global_min_u(&self) -> f64 {
        self.rows.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min)
    }

    pub fn global_max_u(&self) -> f64 {
        self.rows.iter().map(|r| r.max_u).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Stored run history. `v[k]` is the field that advanced level k-1 to k
/// (`v[0]` is the initial velocity); boundary samples are taken at the
/// step's start time, matching the scheme.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: StaggeredGrid,
    pub boundary: BoundaryData,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub v: Vec<VelocityField>,
    pub dense: bool,
    pub energy: EnergyReport,
    /// (iteration, momentum residual, divergence) rows from every velocity
    /// solve, concatenated, when `solver.trace` is on.
    pub solver_trace: Vec<(usize, f64, f64)>,
}

impl Trajectory {
    pub fn n_levels(&self) -> usize {
        self.times.len()
    }
}

/// Callbacks fired by the run loop; all state flows through arguments.
pub trait StepObserver {
    fn on_initial(&mut self, _t: f64, _u: &Field, _v: &VelocityField) {}
    #[allow(clippy::too_many_arguments)]
    fn on_step(
        &mut self,
        _t_new: f64,
        _dt: f64,
        _u_new: &Field,
        _v_new: &VelocityField,
        _rep: &StepReport,
        _stored: bool,
    ) {
    }
}

/// No-op observer.
pub struct NullObserver;
impl StepObserver for NullObserver {}

/// Collects a trajectory (dense or at cadence).
pub struct TrajectoryCollector {
    times: Vec<f64>,
    u: Vec<Field>,
    v: Vec<VelocityField>,
    dense: bool,
}

impl TrajectoryCollector {
    pub fn new(dense: bool) -> Self {
        Self {
            times: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            dense,
        }
    }

    pub fn into_trajectory(self, inputs: &RunInputs, outcome: RunOutcome) -> Trajectory {
        Trajectory {
            grid: inputs.grid.clone(),
            boundary: inputs.boundary.clone(),
            times: self.times,
            u: self.u,
            v: self.v,
            dense: self.dense,
            energy: outcome.energy,
            solver_trace: outcome.solver_trace,
        }
    }
}

impl StepObserver for TrajectoryCollector {
    fn on_initial(&mut self, t: f64, u: &Field, v: &VelocityField) {
        self.times.push(t);
        self.u.push(u.clone());
        self.v.push(v.clone());
    }

    fn on_step(
        &mut self,
        t_new: f64,
        _dt: f64,
        u_new: &Field,
        v_new: &VelocityField,
        _rep: &StepReport,
        stored: bool,
    ) {
        if self.dense || stored {
            self.times.push(t_new);
            self.u.push(u_new.clone());
            self.v.push(v_new.clone());
        }
    }
}

struct EnergyAccumulator {
    tau: f64,
    epsilon: f64,
    sup_sqrt_tau_v: f64,
    v1_integral: f64,
    gradu_integral: f64,
    vneg1_integral: f64,
    last_cadence_v: Option<VelocityField>,
    last_cadence_t: f64,
    poisson_d: Option<RectPoisson>,
    rows: Vec<EnergyRow>,
}

impl EnergyAccumulator {
    fn new(inputs: &RunInputs) -> Self {
        Self {
            tau: inputs.tau,
            epsilon: inputs.transport.epsilon,
            sup_sqrt_tau_v: 0.0,
            v1_integral: 0.0,
            gradu_integral: 0.0,
            vneg1_integral: 0.0,
            last_cadence_v: None,
            last_cadence_t: 0.0,
            poisson_d: if inputs.tau > 0.0 {
                Some(RectPoisson::dirichlet(&inputs.grid))
            } else {
                None
            },
            rows: Vec::new(),
        }
    }

    fn per_step(
        &mut self,
        dt: f64,
        u: &Field,
        v: &VelocityField,
        bc: &VelocityBc,
        grid: &StaggeredGrid,
    ) -> Result<()> {
        if self.tau > 0.0 {
            let l2 = velocity_l2_sq(v, grid).sqrt();
            self.sup_sqrt_tau_v = self.sup_sqrt_tau_v.max(self.tau.sqrt() * l2);
        }
        self.v1_integral += dt * v1_norm_sq(v, bc, grid);
        if self.epsilon > 0.0 {
            let h1 = norm(u, grid, NormKind::H1Semi)?;
            self.gradu_integral += dt * self.epsilon * h1 * h1;
        }
        Ok(())
    }

    fn cadence_row(
        &mut self,
        t: f64,
        u: &Field,
        v: &VelocityField,
        grid: &StaggeredGrid,
    ) -> EnergyRow {
        if let (Some(pois), Some(prev)) = (&self.poisson_d, &self.last_cadence_v) {
            let dt = t - self.last_cadence_t;
            if dt > 0.0 {
                let mut wx = v.vx.clone();
                wx.axpy(-1.0, &prev.vx);
                wx.scale(1.0 / dt);
                let mut wy = v.vy.clone();
                wy.axpy(-1.0, &prev.vy);
                wy.scale(1.0 / dt);
                self.vneg1_integral += dt * vneg1_proxy_sq(&wx, &wy, grid, pois);
            }
        }
        self.last_cadence_v = Some(v.clone());
        self.last_cadence_t = t;
        let row = EnergyRow {
            t,
            min_u: u.min(),
            max_u: u.max(),
            sqrt_tau_v_l2: self.sup_sqrt_tau_v,
            v_l2v1_running: self.v1_integral.sqrt(),
            eps_gradu_running: self.gradu_integral,
            vneg1_proxy: self.tau * self.vneg1_integral.sqrt(),
        };
        self.rows.push(row);
        row
    }
}

/// Energy report plus the concatenated solver histories (when tracing).
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub energy: EnergyReport,
    pub solver_trace: Vec<(usize, f64, f64)>,
}

/// Run the coupled system, driving the observer. Returns the diagnostics;
/// the observer owns whatever state it collected even if this errors.
pub fn run_with_observer(inputs: &RunInputs, obs: &mut dyn StepObserver) -> Result<RunOutcome> {
    let grid = &inputs.grid;
    let model = &inputs.model;
    let t_end = inputs.t_end;
    let cadence = if inputs.cadence > 0.0 {
        inputs.cadence
    } else {
        t_end
    };

    let mut u = SaturationField {
        u: inputs.init.u0.clone(),
        t: 0.0,
    };
    let sample0 = inputs.boundary.sample(0.0);
    let h0 = h_field(model, &u.u);
    let mut v = if inputs.tau > 0.0 {
        let (vx, vy) = inputs
            .init
            .v0
            .clone()
            .ok_or_else(|| Error::Validation("tau > 0 requires initial velocity".into()))?;
        VelocityField {
            vx,
            vy,
            p: grid.cell_field(),
        }
    } else {
        let (v, _rep) = solve_quasi_stationary(
            grid,
            &h0,
            &sample0,
            model.fluid.nu,
            None,
            &inputs.solver,
            None,
        )?;
        v
    };

    let mut energy = EnergyAccumulator::new(inputs);
    let mut trace: Vec<(usize, f64, f64)> = Vec::new();
    let mut v_prev: Option<VelocityField> = None;
    let mut recycle = SchurRecycle::new();
    obs.on_initial(0.0, &u.u, &v);
    energy.cadence_row(0.0, &u.u, &v, grid);

    let mut next_cadence = cadence.min(t_end);
    let mut ramp_cap = inputs.dt_ramp_start.unwrap_or(f64::INFINITY);
    let eps_t = 1e-12 * t_end.max(1.0);

    while u.t < t_end - eps_t {
        let sample_now = inputs.boundary.sample(u.t);
        let h_now = h_field(model, &u.u);

        // Candidate step from the current speeds, clipped to the cadence
        // boundary, the final time and the ramp cap.
        let mut dt = stable_dt(&v, model, &inputs.transport, grid)
            .min(next_cadence - u.t)
            .min(t_end - u.t)
            .min(ramp_cap);
        if !(dt > 0.0) {
            return Err(Error::Unsupported(format!("nonpositive step at t = {}", u.t)));
        }

        // Linear extrapolation of the previous velocity/pressure pair as
        // the warm start; the damping drift per step is first order, the
        // extrapolated guess second order.
        let warm = match &v_prev {
            Some(prev) => {
                let mut w = v.clone();
                w.vx.scale(2.0);
                w.vx.axpy(-1.0, &prev.vx);
                w.vy.scale(2.0);
                w.vy.axpy(-1.0, &prev.vy);
                w.p.scale(2.0);
                w.p.axpy(-1.0, &prev.p);
                w
            }
            None => v.clone(),
        };
        let (u_next, v_next, rep) = if inputs.picard {
            advance_picard(
                inputs, &u, &v, &warm, &h_now, &sample_now, &mut dt, &mut trace, &mut recycle,
            )?
        } else {
            advance_once(
                inputs, &u, &v, &warm, &h_now, &sample_now, &mut dt, &mut trace, &mut recycle,
            )?
        };

        v_prev = Some(v.clone());
        u = u_next;
        v = v_next;
        ramp_cap = (ramp_cap * 1.3).min(f64::MAX);

        let sample_new = inputs.boundary.sample(u.t);
        let bc_new = VelocityBc::from_sample(&sample_new, grid);
        energy.per_step(dt, &u.u, &v, &bc_new, grid)?;

        let at_cadence = u.t >= next_cadence - eps_t || u.t >= t_end - eps_t;
        obs.on_step(u.t, dt, &u.u, &v, &rep, at_cadence);
        if at_cadence {
            energy.cadence_row(u.t, &u.u, &v, grid);
            while next_cadence <= u.t + eps_t {
                next_cadence += cadence;
            }
            next_cadence = next_cadence.min(t_end);
        }
    }

    Ok(RunOutcome {
        energy: EnergyReport { rows: energy.rows },
        solver_trace: trace,
    })
}

pub fn h_field(model: &FluxModel, u: &Field) -> Field {
    let mut h = Field::zeros(u.nx, u.ny);
    for (out, &val) in h.data.iter_mut().zip(&u.data) {
        *out = model.h(val);
    }
    h
}

type StepTriple = (SaturationField, VelocityField, StepReport);

/// One lagged splitting step; `dt` may shrink if the new velocity tightens
/// the stability bound.
#[allow(clippy::too_many_arguments)]
fn advance_once(
    inputs: &RunInputs,
    u: &SaturationField,
    v: &VelocityField,
    warm: &VelocityField,
    h_now: &Field,
    sample_now: &crate::data::BoundarySample,
    dt: &mut f64,
    trace: &mut Vec<(usize, f64, f64)>,
    recycle: &mut SchurRecycle,
) -> Result<StepTriple> {
    let grid = &inputs.grid;
    let model = &inputs.model;
    match inputs.order {
        UpdateOrder::VelocityFirst => {
            // The implicit velocity step depends on dt; re-check the CFL
            // bound against the new velocity and retry if it tightened.
            for _attempt in 0..8 {
                let sample_next = inputs.boundary.sample(u.t + *dt);
                let (v_next, solve_rep) = if inputs.tau > 0.0 {
                    step_unsteady_recycled(
                        v,
                        grid,
                        h_now,
                        &sample_next,
                        model.fluid.nu,
                        inputs.tau,
                        *dt,
                        &inputs.solver,
                        Some(recycle),
                    )?
                } else {
                    solve_quasi_stationary_recycled(
                        grid,
                        h_now,
                        &sample_next,
                        model.fluid.nu,
                        None,
                        &inputs.solver,
                        Some(warm),
                        Some(recycle),
                    )?
                };
                if inputs.solver.trace {
                    trace.extend_from_slice(&solve_rep.history);
                }
                let bound = stable_dt(&v_next, model, &inputs.transport, grid);
                if *dt <= bound * (1.0 + 1e-12) {
                    let (u_next, rep) =
                        step_saturation(u, &v_next, sample_now, model, &inputs.transport, *dt, grid)?;
                    return Ok((u_next, v_next, rep));
                }
                *dt = 0.9 * bound;
            }
            Err(Error::Unsupported("step size negotiation failed".into()))
        }
        UpdateOrder::SaturationFirst => {
            let (u_next, rep) =
                step_saturation(u, v, sample_now, model, &inputs.transport, *dt, grid)?;
            let h_next = h_field(model, &u_next.u);
            let sample_next = inputs.boundary.sample(u.t + *dt);
            let (v_next, solve_rep) = if inputs.tau > 0.0 {
                step_unsteady_recycled(
                    v,
                    grid,
                    &h_next,
                    &sample_next,
                    model.fluid.nu,
                    inputs.tau,
                    *dt,
                    &inputs.solver,
                    Some(recycle),
                )?
            } else {
                solve_quasi_stationary_recycled(
                    grid,
                    &h_next,
                    &sample_next,
                    model.fluid.nu,
                    None,
                    &inputs.solver,
                    Some(warm),
                    Some(recycle),
                )?
            };
            if inputs.solver.trace {
                trace.extend_from_slice(&solve_rep.history);
            }
            Ok((u_next, v_next, rep))
        }
    }
}

/// Inner coupling loop: iterate velocity and transport against the updated
/// damping until the increment stalls (or the cap is hit).
#[allow(clippy::too_many_arguments)]
fn advance_picard(
    inputs: &RunInputs,
    u: &SaturationField,
    v: &VelocityField,
    warm: &VelocityField,
    h_now: &Field,
    sample_now: &crate::data::BoundarySample,
    dt: &mut f64,
    trace: &mut Vec<(usize, f64, f64)>,
    recycle: &mut SchurRecycle,
) -> Result<StepTriple> {
    let mut h_guess = h_now.clone();
    let mut best: Option<StepTriple> = None;
    let mut prev_u: Option<Field> = None;
    for _ in 0..crate::defaults::PICARD_MAX_ITERATIONS {
        let mut dt_try = *dt;
        let (u_next, v_next, rep) = advance_once(
            inputs, u, v, warm, &h_guess, sample_now, &mut dt_try, trace, recycle,
        )?;
        *dt = dt_try;
        let done = if let Some(prev) = &prev_u {
            let mut diff = 0.0f64;
            for (a, b) in u_next.u.data.iter().zip(&prev.data) {
                diff = diff.max((a - b).abs());
            }
            diff <= crate::defaults::PICARD_TOLERANCE
        } else {
            false
        };
        prev_u = Some(u_next.u.clone());
        h_guess = h_field(&inputs.model, &u_next.u);
        best = Some((u_next, v_next, rep));
        if done {
            break;
        }
    }
    Ok(best.expect("at least one picard iteration"))
}

/// Relaxation-model run (tau > 0).
pub fn run_ibvp_tau(inputs: &RunInputs) -> Result<Trajectory> {
    if !(inputs.tau > 0.0) {
        return Err(Error::Unsupported("run_ibvp_tau requires tau > 0".into()));
    }
    run_collecting(inputs)
}

/// Quasi-stationary run (tau = 0).
pub fn run_ibvp_stationary(inputs: &RunInputs) -> Result<Trajectory> {
    if inputs.tau != 0.0 {
        return Err(Error::Unsupported("run_ibvp_stationary requires tau = 0".into()));
    }
    run_collecting(inputs)
}

pub fn run_collecting(inputs: &RunInputs) -> Result<Trajectory> {
    let mut collector = TrajectoryCollector::new(inputs.dense);
    let outcome = run_with_observer(inputs, &mut collector)?;
    Ok(collector.into_trajectory(inputs, outcome))
}

/// Uniform-boundedness verdict for one diagnostic series across a parameter
/// study: the tail (parameters strictly below the second value) must either
/// agree within 10% or stay below 1.1x its first entry (series that carry a
/// positive power of the vanishing parameter decrease; boundedness is the
/// estimate's content for those).
#[derive(Debug, Clone)]
pub struct SeriesBound {
    pub name: String,
    pub values: Vec<f64>,
    pub pass: bool,
}

fn series_bound(name: &str, values: &[f64]) -> SeriesBound {
    let tail: Vec<f64> = values.iter().copied().skip(2).collect();
    let pass = if tail.len() < 2 {
        true
    } else {
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = hi.abs().max(1e-12);
        let spread_ok = (hi - lo) / scale < 0.10;
        let bounded_ok = hi <= 1.1 * tail[0].abs().max(1e-12);
        spread_ok || bounded_ok
    };
    SeriesBound {
        name: name.into(),
        values: values.to_vec(),
        pass,
    }
}

fn energy_series(reports: &[EnergyReport]) -> Vec<SeriesBound> {
    let pick = |f: &dyn Fn(&EnergyReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    vec![
        series_bound("min_u", &pick(&|r| r.global_min_u())),
        series_bound("max_u", &pick(&|r| r.global_max_u())),
        series_bound(
            "sqrt_tau_v_L2",
            &pick(&|r| r.last().map_or(0.0, |x| x.sqrt_tau_v_l2)),
        ),
        series_bound(
            "v_L2V1",
            &pick(&|r| r.last().map_or(0.0, |x| x.v_l2v1_running)),
        ),
        series_bound(
            "eps_gradu",
            &pick(&|r| r.last().map_or(0.0, |x| x.eps_gradu_running)),
        ),
        series_bound(
            "vneg1_proxy",
            &pick(&|r| r.last().map_or(0.0, |x| x.vneg1_proxy)),
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct EpsilonStudyRow {
    pub epsilon: f64,
    pub under_resolved: bool,
    /// L1(Omega_T) distance to the previous (larger-eps) run.
    pub cauchy_diff: Option<f64>,
    pub eps_gradu: f64,
    pub min_u: f64,
    pub max_u: f64,
}

#[derive(Debug, Clone)]
pub struct EpsilonStudy {
    pub rows: Vec<EpsilonStudyRow>,
    pub bounds: Vec<SeriesBound>,
}

/// Vanishing-viscosity study: same grid and data, decreasing eps list.
pub fn epsilon_study(base: &RunInputs, epsilons: &[f64]) -> Result<EpsilonStudy> {
    if epsilons.is_empty() {
        return Err(Error::Unsupported("epsilon list is empty".into()));
    }
    let max_bn = base
        .boundary
        .b_n
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let resolve_floor = base.grid.dx.max(base.grid.dy) * base.model.lipschitz * max_bn.max(1e-30);

    let runs: Vec<Result<(Trajectory, EnergyReport)>> = epsilons
        .par_iter()
        .map(|&eps| {
            let mut inputs = base.clone();
            inputs.transport.epsilon = eps;
            inputs.dense = false;
            inputs.prepare(InitialVelocity::Lifting)?;
            let traj = run_collecting(&inputs)?;
            let energy = traj.energy.clone();
            Ok((traj, energy))
        })
        .collect();

    let mut trajs = Vec::new();
    let mut reports = Vec::new();
    for r in runs {
        let (t, e) = r?;
        trajs.push(t);
        reports.push(e);
    }

    let mut rows = Vec::new();
    for (k, traj) in trajs.iter().enumerate() {
        let cauchy = if k == 0 {
            None
        } else {
            Some(trajectory_l1_distance(&trajs[k - 1], traj)?)
        };
        let last = reports[k].last().cloned();
        rows.push(EpsilonStudyRow {
            epsilon: epsilons[k],
            under_resolved: epsilons[k] < resolve_floor,
            cauchy_diff: cauchy,
            eps_gradu: last.map_or(0.0, |r| r.eps_gradu_running),
            min_u: reports[k].global_min_u(),
            max_u: reports[k].global_max_u(),
        });
    }
    Ok(EpsilonStudy {
        rows,
        bounds: energy_series(&reports),
    })
}

/// L1 distance in space-time between two trajectories stored on the same
/// cadence grid (trapezoid in time).
pub fn trajectory_l1_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::Shape(format!(
            "trajectories store {} vs {} levels",
            a.times.len(),
            b.times.len()
        )));
    }
    let area = a.grid.cell_area();
    let mut acc = 0.0;
    for k in 1..a.times.len() {
        let dt = a.times[k] - a.times[k - 1];
        let l1 = |x: &Field, y: &Field| -> f64 {
            x.data
                .iter()
                .zip(&y.data)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
                * area
        };
        acc += 0.5 * dt * (l1(&a.u[k - 1], &b.u[k - 1]) + l1(&a.u[k], &b.u[k]));
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct TauStudyRow {
    pub tau: f64,
    /// ||v^tau - B^tau||^2 in L2(0,T; V1).
    pub deviation_sq: f64,
    pub b_v1_max: f64,
    pub dtb_l2: f64,
}

#[derive(Debug, Clone)]
pub struct TauStudy {
    pub rows: Vec<TauStudyRow>,
    /// Least-squares slope of log deviation vs log tau (None below 2 points).
    pub slope: Option<f64>,
    pub bounds: Vec<SeriesBound>,
}

struct BTauObserver<'a> {
    inputs: &'a RunInputs,
    b_prev: Option<(f64, VelocityField)>,
    prev_sample_sq: f64,
    prev_t: f64,
    deviation_sq: f64,
    b_v1_max: f64,
    dtb_sq: f64,
    error: Option<Error>,
    recycle: SchurRecycle,
}

impl BTauObserver<'_> {
    fn measure(&mut self, t: f64, u: &Field, v: &VelocityField) -> Result<()> {
        let grid = &self.inputs.grid;
        let h = h_field(&self.inputs.model, u);
        let sample = self.inputs.boundary.sample(t);
        let warm = self.b_prev.take().map(|(_, b)| b);
        let (b, _rep) = solve_b_tau(
            grid,
            &h,
            &sample,
            self.inputs.model.fluid.nu,
            &self.inputs.solver,
            warm.as_ref(),
            Some(&mut self.recycle),
        )?;
        let bc = VelocityBc::from_sample(&sample, grid);
        let dev = v1_diff_norm_sq(v, &b, grid);
        self.b_v1_max = self.b_v1_max.max(v1_norm_sq(&b, &bc, grid).sqrt());
        if let Some((t_prev, b_prev)) = &self.b_prev {
            let dt = t - t_prev;
            if dt > 0.0 {
                self.dtb_sq += v1_diff_norm_sq(&b, b_prev, grid) / dt;
                self.deviation_sq += 0.5 * dt * (self.prev_sample_sq + dev);
            }
        }
        self.prev_sample_sq = dev;
        self.prev_t = t;
        self.b_prev = Some((t, b));
        Ok(())
    }
}

impl StepObserver for BTauObserver<'_> {
    fn on_initial(&mut self, t: f64, u: &Field, v: &VelocityField) {
        if self.error.is_none() {
            if let Err(e) = self.measure(t, u, v) {
                self.error = Some(e);
            }
        }
    }

    fn on_step(
        &mut self,
        t_new: f64,
        _dt: f64,
        u_new: &Field,
        v_new: &VelocityField,
        _rep: &StepReport,
        _stored: bool,
    ) {
        if self.error.is_none() {
            if let Err(e) = self.measure(t_new, u_new, v_new) {
                self.error = Some(e);
            }
        }
    }
}

/// Relaxation-limit study: for each tau, run the coupled system and solve
/// the damped quasi-stationary problem along its own saturation, measuring
/// the squared V1 distance in time. The first steps are refined to tau/8 so
/// the O(tau) initial layer is integrated rather than aliased.
pub fn tau_study(base: &RunInputs, taus: &[f64]) -> Result<TauStudy> {
    if taus.is_empty() {
        return Err(Error::Unsupported("tau list is empty".into()));
    }
    let results: Vec<Result<(TauStudyRow, EnergyReport)>> = taus
        .par_iter()
        .map(|&tau| {
            let mut inputs = base.clone();
            inputs.tau = tau;
            inputs.model = FluxModel::new(
                FluidParams::new(
                    inputs.model.fluid.mu1,
                    inputs.model.fluid.mu2,
                    inputs.model.fluid.nu,
                    tau,
                )?,
                inputs.model.rel_perm.clone(),
                inputs.model.mode,
            )?;
            inputs.dense = false;
            inputs.dt_ramp_start = Some((tau / 8.0).max(1e-12));
            inputs.init.v0 = None;
            inputs.prepare(InitialVelocity::Lifting)?;
            let mut obs = BTauObserver {
                inputs: &inputs,
                b_prev: None,
                prev_sample_sq: 0.0,
                prev_t: 0.0,
                deviation_sq: 0.0,
                b_v1_max: 0.0,
                dtb_sq: 0.0,
                error: None,
                recycle: SchurRecycle::new(),
            };
            let outcome = run_with_observer(&inputs, &mut obs)?;
            let energy = outcome.energy;
            if let Some(e) = obs.error {
                return Err(e);
            }
            Ok((
                TauStudyRow {
                    tau,
                    deviation_sq: obs.deviation_sq,
                    b_v1_max: obs.b_v1_max,
                    dtb_l2: obs.dtb_sq.sqrt(),
                },
                energy,
            ))
        })
        .collect();

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let (row, energy) = r?;
        rows.push(row);
        reports.push(energy);
    }

    let usable: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.deviation_sq > 0.0)
        .map(|r| (r.tau.ln(), r.deviation_sq.ln()))
        .collect();
    let slope = if usable.len() >= 2 {
        let n = usable.len() as f64;
        let sx: f64 = usable.iter().map(|p| p.0).sum();
        let sy: f64 = usable.iter().map(|p| p.1).sum();
        let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    } else {
        None
    };

    Ok(TauStudy {
        rows,
        slope,
        bounds: energy_series(&reports),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_inputs(n: usize, tau: f64) -> RunInputs {
        let grid = StaggeredGrid::unit_square(n);
        let mut inputs = RunInputs::preset(Preset::Quiescent, grid, 0.05, tau, 0.0).unwrap();
        inputs.prepare(InitialVelocity::Zero).unwrap();
        inputs
    }

    #[test]
    fn quiescent_equilibrium_is_preserved() {
        let inputs = quiet_inputs(8, 0.0);
        let traj = run_ibvp_stationary(&inputs).unwrap();
        for u in &traj.u {
            for val in &u.data {
                assert!((val - 0.3).abs() < 1e-13);
            }
        }
        for v in &traj.v {
            assert!(v.vx.max_abs() < 1e-11 && v.vy.max_abs() < 1e-11);
        }
        let last = traj.energy.last().unwrap();
        assert!((last.min_u - 0.3).abs() < 1e-13);
        assert!((last.max_u - 0.3).abs() < 1e-13);
        assert_eq!(last.sqrt_tau_v_l2, 0.0);

        let inputs_tau = quiet_inputs(8, 1e-3);
        let traj_tau = run_ibvp_tau(&inputs_tau).unwrap();
        for u in &traj_tau.u {
            for val in &u.data {
                assert!((val - 0.3).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn determinism_bitwise() {
        let grid = StaggeredGrid::unit_square(12);
        let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.05, 1e-3, 0.0).unwrap();
        inputs.prepare(InitialVelocity::Lifting).unwrap();
        let t1 = run_ibvp_tau(&inputs).unwrap();
        let t2 = run_ibvp_tau(&inputs).unwrap();
        assert_eq!(t1.times.len(), t2.times.len());
        for (a, b) in t1.u.iter().zip(&t2.u) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (a, b) in t1.v.iter().zip(&t2.v) {
            for (x, y) in a.vx.data.iter().zip(&b.vx.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn constant_damping_velocity_is_time_independent() {
        // Linear rel-perms with equal viscosities: h = 2 regardless of u,
        // so the quasi-stationary velocity never changes while u advects.
        let grid = StaggeredGrid::unit_square(12);
        let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.1, 0.0, 0.0).unwrap();
        inputs.model = FluxModel::linear_flux();
        inputs.prepare(InitialVelocity::Lifting).unwrap();
        let traj = run_ibvp_stationary(&inputs).unwrap();
        let v0 = &traj.v[1];
        for v in traj.v.iter().skip(2) {
            let d = v1_diff_norm_sq(v, v0, &traj.grid).sqrt();
            assert!(d < 1e-8, "velocity drifted by {d}");
        }
        // Saturation did evolve.
        let first = &traj.u[0];
        let last = traj.u.last().unwrap();
        let mut moved = 0.0f64;
        for (a, b) in first.data.iter().zip(&last.data) {
            moved = moved.max((a - b).abs());
        }
        assert!(moved > 0.1);
    }

    #[test]
    fn flood_front_is_monotone_in_x() {
        let grid = StaggeredGrid::unit_square(32);
        let mut inputs = RunInputs::preset(Preset::Flood, grid, 0.15, 0.0, 0.0).unwrap();
        inputs.prepare(InitialVelocity::Lifting).unwrap();
        let traj = run_ibvp_stationary(&inputs).unwrap();
        let u = traj.u.last().unwrap();
        let j = traj.grid.ny / 2;
        for i in 1..traj.grid.nx {
            assert!(
                u.at(i, j) <= u.at(i - 1, j) + 1e-10,
                "profile not monotone at i = {i}"
            );
        }
        let last = traj.energy.last().unwrap();
        assert!(last.min_u >= -1e-12 && last.max_u <= 1.0 + 1e-12);
    }

    #[test]
    fn update_order_swap_is_first_order_small() {
        let grid = StaggeredGrid::unit_square(16);
        let mut a = RunInputs::preset(Preset::Flood, grid.clone(), 0.1, 0.0, 0.0).unwrap();
        a.prepare(InitialVelocity::Lifting).unwrap();
        let mut b = a.clone();
        b.order = UpdateOrder::SaturationFirst;
        let ta = run_ibvp_stationary(&a).unwrap();
        let tb = run_ibvp_stationary(&b).unwrap();
        let ua = ta.u.last().unwrap();
        let ub = tb.u.last().unwrap();
        let mut diff = 0.0f64;
        for (x, y) in ua.data.iter().zip(&ub.data) {
            diff = diff.max((x - y).abs());
        }
        // First-order splittings: the discrepancy is O(dt), far below O(1).
        let dt_scale = 0.3 * grid.dx / 2.0;
        assert!(diff <= 20.0 * dt_scale, "diff {diff} vs dt {dt_scale}");
        assert!(diff > 0.0);
    }

    #[test]
    fn picard_matches_lagged_to_first_order() {
        let grid = StaggeredGrid::unit_square(12);
        let mut a = RunInputs::preset(Preset::Flood, grid, 0.05, 0.0, 0.0).unwrap();
        a.prepare(InitialVelocity::Lifting).unwrap();
        let mut b = a.clone();
        b.picard = true;
        let ta = run_ibvp_stationary(&a).unwrap();
        let tb = run_ibvp_stationary(&b).unwrap();
        let ua = ta.u.last().unwrap();
        let ub = tb.u.last().unwrap();
        let mut diff = 0.0f64;
        for (x, y) in ua.data.iter().zip(&ub.data) {
            diff = diff.max((x - y).abs());
        }
        assert!(diff < 0.05, "picard vs lagged diff {diff}");
    }

    #[test]
    fn epsilon_study_smoke() {
        let grid = StaggeredGrid::slice_1d(64, 1.0);
        let base = RunInputs::preset(Preset::Flood, grid, 0.1, 0.0, 0.0).unwrap();
        let study = epsilon_study(&base, &[4e-2, 2e-2, 1e-2]).unwrap();
        assert_eq!(study.rows.len(), 3);
        assert!(study.rows[0].cauchy_diff.is_none());
        let d1 = study.rows[1].cauchy_diff.unwrap();
        let d2 = study.rows[2].cauchy_diff.unwrap();
        assert!(d1 > 0.0 && d2 > 0.0 && d2 < d1, "d1 {d1} d2 {d2}");

        // Single-epsilon list degenerates to bound checks only.
        let single = epsilon_study(&base, &[1e-2]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert!(single.rows[0].cauchy_diff.is_none());
    }

    #[test]
    fn tau_study_smoke_constant_damping() {
        // Constant h and steady b: v relaxes to B and stays there; the
        // deviation is pure initial layer and shrinks with tau.
        let grid = StaggeredGrid::unit_square(8);
        let mut base = RunInputs::preset(Preset::Flood, grid, 0.05, 1e-2, 0.0).unwrap();
        base.model = FluxModel::linear_flux();
        let study = tau_study(&base, &[1e-2, 1e-3]).unwrap();
        assert_eq!(study.rows.len(), 2);
        assert!(study.rows[0].deviation_sq > study.rows[1].deviation_sq);
        assert!(study.slope.is_some());

        let single = tau_study(&base, &[1e-2]).unwrap();
        assert!(single.slope.is_none());
    }
}

//! Finite-volume solver for a coupled saturation / Stokes-Brinkman system
//! on a 2-D MAC grid, with entropy, kinetic-function and defect-measure
//! certificates plus singular-limit study harnesses.

pub mod config;
pub mod data;
pub mod defaults;
pub mod driver;
pub mod error;
pub mod grid;
pub mod kinetic;
pub mod model;
pub mod output;
pub mod riemann;
pub mod stokes;
pub mod transport;

pub use config::RunConfig;
pub use data::{validate_data, BoundaryData, BoundarySample, InitialData, Preset, ValidationReport};
pub use driver::{
    epsilon_study, run_ibvp_stationary, run_ibvp_tau, tau_study, EnergyReport, EnergyRow,
    EpsilonStudy, InitialVelocity, RunInputs, TauStudy, Trajectory, UpdateOrder,
};
pub use error::{Error, Result};
pub use grid::{discrete_divergence, norm, BoundaryFace, Field, NormKind, Side, StaggeredGrid};
pub use kinetic::{
    boundary_measures, build_kinetic, entropy_production, indicator_certificate,
    m_estimate_check, run_certificates, weak_solution_residual, CertificateRow, DefectMeasure,
    KineticField, TestFamily, VGrid,
};
pub use model::{
    make_entropy_pair, series_sum, EntropyFamily, EntropyPair, FluidParams, FluxMode, FluxModel,
    RelPermKind, RelPermModel,
};
pub use riemann::{riemann_oracle, RiemannSolution};
pub use stokes::{
    solve_b_tau, solve_lifting, solve_quasi_stationary, step_unsteady, SolveReport,
    SolverSettings, VelocityBc, VelocityField,
};
pub use transport::{
    face_flux, stable_dt, step_saturation, FluxScheme, SaturationField, StepReport,
    TransportSettings,
};

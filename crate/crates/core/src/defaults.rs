//! Frozen tolerances and calibration constants.
//!
//! Every threshold used by the certificate machinery lives here with its
//! origin. Constants marked "calibrated" were measured once on the
//! linear-flux exact-advection solution and then frozen; they are not
//! tuned per run.

/// Resolution of the sample grid used for the flux Lipschitz constant,
/// the damping lower bound and the flux derivative tables.
pub const MODEL_SAMPLE_POINTS: usize = 10_001;

/// Relative-permeability floor applied in series mode, where
/// `lambda_i = mu_i / k_ri` would blow up at the endpoints.
pub const K_REG_DEFAULT: f64 = 1e-8;

/// Linear-solver residual target (discrete L2 on momentum, max-norm on
/// divergence).
pub const SOLVER_TOLERANCE: f64 = 1e-10;

/// Outer iteration cap for the velocity saddle-point solve.
pub const SOLVER_MAX_ITERATIONS: usize = 500;

/// Divergence target used when constructing initial velocity data; tighter
/// than the run tolerance so that validation at 1e-12 has headroom.
pub const INITIAL_DIVERGENCE_TARGET: f64 = 5e-14;

/// Cell-wise divergence bound enforced on initial data.
pub const INITIAL_DIVERGENCE_TOL: f64 = 1e-12;

/// Net boundary flux tolerance, scaled by the boundary perimeter.
pub const NET_FLUX_TOL: f64 = 1e-10;

/// Default Courant number. The explicit update is monotone when the sum of
/// advective, diffusive and boundary rates stays below one; 0.3 leaves that
/// margin even when all of them are active at once.
pub const CFL_DEFAULT: f64 = 0.3;

/// Fallback step cap used when nothing moves (zero velocity, no diffusion).
pub const DT_MAX_DEFAULT: f64 = 1e-2;

/// Defect-measure negativity floor, per unit of scheme rate. The clipped-state
/// construction is nonnegative up to the divergence residual of the velocity
/// field, which the solver keeps at the 1e-10 level.
pub const DEFECT_TOL_PER_RATE: f64 = 1e-10;

/// Weak-inequality floor per unit of (dx + dt), calibrated on the exact
/// linear-advection solution (measured residual floor was below 0.05*(dx+dt)
/// across nx in {64,128,256}; 0.5 keeps a 10x margin).
pub const WEAK_TOL_PER_DX_DT: f64 = 0.5;

/// Entropy-compatibility check: relative tolerance for finite-difference
/// verification of q' = eta' g' away from the kink.
pub const ENTROPY_COMPAT_RTOL: f64 = 1e-6;

/// Picard coupling loop (optional): iteration cap and increment tolerance.
pub const PICARD_MAX_ITERATIONS: usize = 5;
pub const PICARD_TOLERANCE: f64 = 1e-8;

/// Mollification width for regularized boundary/initial data, in cells.
pub const MOLLIFY_PASSES: usize = 2;

//! Flux and damping coefficients for the two-phase model.
//!
//! The fractional flow `g` and the damping `h` are built from relative
//! permeabilities and fluid viscosities. Two evaluation modes exist:
//! `Simple` uses the phase mobilities directly and recovers the classical
//! fractional-flow curve; `Series` replaces each resistance by the
//! reciprocal of the lattice sum S(lambda, nu) = sum_n 1/(lambda + n^2 nu),
//! evaluated in closed form.

use crate::defaults;
use crate::error::{Error, Result};

/// Fluid constants. Porosity, absolute permeability and phase densities are
/// fixed to one; they are kept as fields so configs can state them.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidParams {
    pub mu1: f64,
    pub mu2: f64,
    /// Effective (Brinkman) viscosity.
    pub nu: f64,
    /// Relaxation time multiplying the velocity time derivative.
    pub tau: f64,
    pub porosity: f64,
    pub k0: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl FluidParams {
    pub fn new(mu1: f64, mu2: f64, nu: f64, tau: f64) -> Result<Self> {
        let p = Self {
            mu1,
            mu2,
            nu,
            tau,
            porosity: 1.0,
            k0: 1.0,
            rho1: 1.0,
            rho2: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 > 0.0 && self.mu2 > 0.0) {
            return Err(Error::Model("viscosities mu1, mu2 must be positive".into()));
        }
        if !(self.nu > 0.0) {
            return Err(Error::Model("effective viscosity nu must be positive".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Model("time delay tau must be nonnegative".into()));
        }
        if self.porosity != 1.0 || self.k0 != 1.0 || self.rho1 != 1.0 || self.rho2 != 1.0 {
            return Err(Error::Model(
                "porosity, absolute permeability and densities are fixed to 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for FluidParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 0.01, 0.0).unwrap()
    }
}

/// Relative permeability curves. `k_r1` is nondecreasing, `k_r2`
/// nonincreasing, with k_r1(1) = k_r2(0) = 1.
#[derive(Debug, Clone, PartialEq)]
pub enum RelPermKind {
    /// k_r1 = s^e, k_r2 = (1-s)^e.
    Corey { exponent: f64 },
    /// k_r1 = s, k_r2 = 1-s.
    Linear,
    /// Piecewise-linear interpolation of (s, k_r1, k_r2) rows.
    Tabulated { table: Vec<(f64, f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelPermModel {
    pub kind: RelPermKind,
    /// Lower clamp applied in series mode.
    pub k_reg: f64,
}

impl RelPermModel {
    pub fn corey(exponent: f64) -> Self {
        Self {
            kind: RelPermKind::Corey { exponent },
            k_reg: defaults::K_REG_DEFAULT,
        }
    }

    pub fn corey_quadratic() -> Self {
        Self::corey(2.0)
    }

    pub fn linear() -> Self {
        Self {
            kind: RelPermKind::Linear,
            k_reg: defaults::K_REG_DEFAULT,
        }
    }

    pub fn tabulated(table: Vec<(f64, f64, f64)>) -> Result<Self> {
        let m = Self {
            kind: RelPermKind::Tabulated { table },
            k_reg: defaults::K_REG_DEFAULT,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_reg > 0.0) {
            return Err(Error::Model("k_reg must be positive".into()));
        }
        match &self.kind {
            RelPermKind::Corey { exponent } => {
                if !(*exponent > 0.0) {
                    return Err(Error::Model("corey exponent must be positive".into()));
                }
            }
            RelPermKind::Linear => {}
            RelPermKind::Tabulated { table } => {
                if table.len() < 2 {
                    return Err(Error::Model("tabulated rel-perm needs >= 2 rows".into()));
                }
                for w in table.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::Model("tabulated s values must increase".into()));
                    }
                    if w[1].1 + 1e-12 < w[0].1 {
                        return Err(Error::Model("k_r1 must be nondecreasing".into()));
                    }
                    if w[1].2 > w[0].2 + 1e-12 {
                        return Err(Error::Model("k_r2 must be nonincreasing".into()));
                    }
                }
                let first = table.first().unwrap();
                let last = table.last().unwrap();
                if (first.0 - 0.0).abs() > 1e-12 || (last.0 - 1.0).abs() > 1e-12 {
                    return Err(Error::Model("tabulated s must span [0, 1]".into()));
                }
                if (last.1 - 1.0).abs() > 1e-9 || (first.2 - 1.0).abs() > 1e-9 {
                    return Err(Error::Model("need k_r1(1) = k_r2(0) = 1".into()));
                }
            }
        }
        Ok(())
    }

    /// (k_r1, k_r2) at saturation s, clamped to [0, 1] first.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        match &self.kind {
            RelPermKind::Corey { exponent } => (s.powf(*exponent), (1.0 - s).powf(*exponent)),
            RelPermKind::Linear => (s, 1.0 - s),
            RelPermKind::Tabulated { table } => {
                let pos = table.partition_point(|row| row.0 <= s);
                if pos == 0 {
                    return (table[0].1, table[0].2);
                }
                if pos == table.len() {
                    let r = table.last().unwrap();
                    return (r.1, r.2);
                }
                let (s0, a0, b0) = table[pos - 1];
                let (s1, a1, b1) = table[pos];
                let w = (s - s0) / (s1 - s0);
                (a0 + w * (a1 - a0), b0 + w * (b1 - b0))
            }
        }
    }
}

/// Closed form of the absolutely convergent lattice sum
/// S(lambda, nu) = sum over all integers n of 1/(lambda + n^2 nu),
/// namely (pi / sqrt(lambda nu)) * coth(pi sqrt(lambda / nu)).
pub fn series_sum(lambda: f64, nu: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(nu > 0.0) {
        return Err(Error::Model(format!(
            "series_sum needs positive arguments, got lambda={lambda}, nu={nu}"
        )));
    }
    let x = std::f64::consts::PI * (lambda / nu).sqrt();
    let coth = 1.0 / x.tanh();
    Ok(std::f64::consts::PI / (lambda * nu).sqrt() * coth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxMode {
    Simple,
    Series,
}

/// Flux/damping model with precomputed derivative tables and constants.
///
/// Outside [0, 1] both g and h continue with their endpoint values, so g'
/// vanishes there and the Lipschitz constant over the real line equals the
/// one measured on [0, 1].
#[derive(Debug, Clone)]
pub struct FluxModel {
    pub fluid: FluidParams,
    pub rel_perm: RelPermModel,
    pub mode: FluxMode,
    /// Lipschitz constant of g (max |g'| over the sample grid).
    pub lipschitz: f64,
    /// Positive lower bound of h over the sample grid.
    pub h0: f64,
    /// Sample grid resolution used for the tables below.
    pub samples: usize,
    /// g' at the sample nodes (central differences, one-sided at the ends).
    gprime_table: Vec<f64>,
    /// Cumulative integral of max(g', 0) from 0 (Engquist-Osher splitting).
    gp_pos_integral: Vec<f64>,
    /// Cumulative integral of min(g', 0) from 0.
    gp_neg_integral: Vec<f64>,
    /// Interior local extrema of g (for the Godunov flux).
    critical_points: Vec<f64>,
}

impl FluxModel {
    pub fn new(fluid: FluidParams, rel_perm: RelPermModel, mode: FluxMode) -> Result<Self> {
        fluid.validate()?;
        rel_perm.validate()?;
        let samples = defaults::MODEL_SAMPLE_POINTS;
        let mut model = Self {
            fluid,
            rel_perm,
            mode,
            lipschitz: 0.0,
            h0: 0.0,
            samples,
            gprime_table: Vec::new(),
            gp_pos_integral: Vec::new(),
            gp_neg_integral: Vec::new(),
            critical_points: Vec::new(),
        };
        model.build_tables()?;
        Ok(model)
    }

    pub fn bl_quadratic() -> Self {
        Self::new(
            FluidParams::default(),
            RelPermModel::corey_quadratic(),
            FluxMode::Simple,
        )
        .unwrap()
    }

    /// Identity flux g(u) = u (linear rel-perms give g(u) = u when mu1 = mu2
    /// only in mobility ratio; this helper uses a tabulated ratio that makes
    /// the fractional flow exactly linear). Used by oracle tests.
    pub fn linear_flux() -> Self {
        // psi1/(psi1+psi2) = u requires k_r1 = u, k_r2 = 1-u with mu1 = mu2.
        Self::new(FluidParams::default(), RelPermModel::linear(), FluxMode::Simple).unwrap()
    }

    fn lambdas(&self, u: f64) -> (f64, f64) {
        let (k1, k2) = self.rel_perm.eval(u);
        let k1 = k1.max(self.rel_perm.k_reg);
        let k2 = k2.max(self.rel_perm.k_reg);
        (self.fluid.mu1 / k1, self.fluid.mu2 / k2)
    }

    /// Phase resistance lambda_1 = mu1 / k_r1 (clamped below by k_reg).
    pub fn lambda1(&self, u: f64) -> f64 {
        self.lambdas(u).0
    }

    /// Phase resistance lambda_2 = mu2 / k_r2.
    pub fn lambda2(&self, u: f64) -> f64 {
        self.lambdas(u).1
    }

    /// Fractional flow of phase 1. In simple mode this is evaluated in
    /// mobility form psi_i = k_ri / mu_i, which avoids the 0/0 at the
    /// endpoints without any regularization.
    pub fn g(&self, u: f64) -> f64 {
        let s = u.clamp(0.0, 1.0);
        match self.mode {
            FluxMode::Simple => {
                let (k1, k2) = self.rel_perm.eval(s);
                let psi1 = k1 / self.fluid.mu1;
                let psi2 = k2 / self.fluid.mu2;
                if psi1 + psi2 == 0.0 {
                    // Degenerate table; split evenly.
                    0.5
                } else {
                    psi1 / (psi1 + psi2)
                }
            }
            FluxMode::Series => {
                let (l1, l2) = self.lambdas(s);
                let s1 = series_sum(l1, self.fluid.nu).expect("positive lambda");
                let s2 = series_sum(l2, self.fluid.nu).expect("positive lambda");
                s1 / (s1 + s2)
            }
        }
    }

    /// Damping coefficient of the velocity equation.
    pub fn h(&self, u: f64) -> f64 {
        let s = u.clamp(0.0, 1.0);
        match self.mode {
            FluxMode::Simple => {
                let (k1, k2) = self.rel_perm.eval(s);
                let psi1 = k1 / self.fluid.mu1;
                let psi2 = k2 / self.fluid.mu2;
                2.0 / (psi1 + psi2)
            }
            FluxMode::Series => {
                let (l1, l2) = self.lambdas(s);
                let s1 = series_sum(l1, self.fluid.nu).expect("positive lambda");
                let s2 = series_sum(l2, self.fluid.nu).expect("positive lambda");
                (l1 * s1 + l2 * s2) / (s1 + s2)
            }
        }
    }

    /// g' from the precomputed table (linear interpolation; zero outside [0,1]).
    pub fn gprime(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        let n = self.samples - 1;
        let x = u * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        self.gprime_table[i] * (1.0 - w) + self.gprime_table[i + 1] * w
    }

    /// Integral of max(g', 0) from 0 to u (clamped). Nondecreasing in u.
    pub fn gp_pos(&self, u: f64) -> f64 {
        self.table_lookup(&self.gp_pos_integral, u)
    }

    /// Integral of min(g', 0) from 0 to u (clamped). Nonincreasing in u.
    pub fn gp_neg(&self, u: f64) -> f64 {
        self.table_lookup(&self.gp_neg_integral, u)
    }

    pub fn critical_points(&self) -> &[f64] {
        &self.critical_points
    }

    fn table_lookup(&self, table: &[f64], u: f64) -> f64 {
        let s = u.clamp(0.0, 1.0);
        let n = self.samples - 1;
        let x = s * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        table[i] * (1.0 - w) + table[i + 1] * w
    }

    fn build_tables(&mut self) -> Result<()> {
        let n = self.samples;
        let du = 1.0 / (n - 1) as f64;
        let g: Vec<f64> = (0..n).map(|k| self.g(k as f64 * du)).collect();
        let h: Vec<f64> = (0..n).map(|k| self.h(k as f64 * du)).collect();

        let mut gp = vec![0.0; n];
        for k in 0..n {
            gp[k] = if k == 0 {
                (g[1] - g[0]) / du
            } else if k == n - 1 {
                (g[n - 1] - g[n - 2]) / du
            } else {
                (g[k + 1] - g[k - 1]) / (2.0 * du)
            };
        }

        let mut pos = vec![0.0; n];
        let mut neg = vec![0.0; n];
        for k in 1..n {
            let a = gp[k - 1];
            let b = gp[k];
            pos[k] = pos[k - 1] + 0.5 * (a.max(0.0) + b.max(0.0)) * du;
            neg[k] = neg[k - 1] + 0.5 * (a.min(0.0) + b.min(0.0)) * du;
        }

        let mut crit = Vec::new();
        for k in 1..n {
            if gp[k - 1] * gp[k] < 0.0 {
                crit.push((k as f64 - 0.5) * du);
            }
        }

        self.lipschitz = gp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.h0 = h.iter().copied().fold(f64::INFINITY, f64::min);
        if !(self.h0 > 0.0) {
            return Err(Error::Model(format!(
                "damping lower bound h0 = {} is not positive",
                self.h0
            )));
        }
        self.gprime_table = gp;
        self.gp_pos_integral = pos;
        self.gp_neg_integral = neg;
        self.critical_points = crit;
        Ok(())
    }

    /// (K, h0) as measured on the sample grid.
    pub fn derived_constants(&self) -> (f64, f64) {
        (self.lipschitz, self.h0)
    }
}

/// sgn+(w): 1 for w > 0, else 0.
#[inline]
pub fn sgn_plus(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// sgn-(w): -1 for w < 0, else 0. With this convention sgn = sgn+ + sgn-
/// and both one-sided pairs satisfy the compatibility q' = eta' g'.
#[inline]
pub fn sgn_minus(w: f64) -> f64 {
    if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn pos_part(w: f64) -> f64 {
    w.max(0.0)
}

#[inline]
pub fn neg_part(w: f64) -> f64 {
    (-w).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyFamily {
    Kruzhkov,
    Plus,
    Minus,
    Square,
}

/// An entropy/flux pair for the saturation equation.
#[derive(Debug, Clone)]
pub struct EntropyPair {
    pub family: EntropyFamily,
    /// Kruzhkov parameter; ignored for the square family.
    pub v: f64,
    g_of_v: f64,
    /// Cumulative integral of g for the square family: q is evaluated via
    /// integration by parts, q(u) = 2 u g(u) - 2 int_0^u g, which keeps the
    /// interpolant one order smoother than tabulating 2 s g'(s) directly.
    g_integral: Vec<f64>,
    samples: usize,
}

impl EntropyPair {
    pub fn new(family: EntropyFamily, v: f64, model: &FluxModel) -> Self {
        let mut g_integral = Vec::new();
        let samples = model.samples;
        if family == EntropyFamily::Square {
            let n = samples;
            let du = 1.0 / (n - 1) as f64;
            g_integral = vec![0.0; n];
            for k in 1..n {
                let s0 = (k - 1) as f64 * du;
                let s1 = k as f64 * du;
                g_integral[k] = g_integral[k - 1] + 0.5 * (model.g(s0) + model.g(s1)) * du;
            }
        }
        Self {
            family,
            v,
            g_of_v: model.g(v),
            g_integral,
            samples,
        }
    }

    pub fn eta(&self, u: f64) -> f64 {
        match self.family {
            EntropyFamily::Kruzhkov => (u - self.v).abs(),
            EntropyFamily::Plus => pos_part(u - self.v),
            EntropyFamily::Minus => neg_part(u - self.v),
            EntropyFamily::Square => u * u,
        }
    }

    pub fn q(&self, u: f64, model: &FluxModel) -> f64 {
        match self.family {
            EntropyFamily::Kruzhkov => (u - self.v).signum_zero() * (model.g(u) - self.g_of_v),
            EntropyFamily::Plus => sgn_plus(u - self.v) * (model.g(u) - self.g_of_v),
            EntropyFamily::Minus => sgn_minus(u - self.v) * (model.g(u) - self.g_of_v),
            EntropyFamily::Square => {
                let s = u.clamp(0.0, 1.0);
                let n = self.samples - 1;
                let du = 1.0 / n as f64;
                let i = ((s * n as f64).floor() as usize).min(n - 1);
                let s_i = i as f64 * du;
                // Partial trapezoid from the node to s keeps q piecewise quadratic.
                let g_int =
                    self.g_integral[i] + 0.5 * (model.g(s_i) + model.g(s)) * (s - s_i);
                2.0 * s * model.g(s) - 2.0 * g_int
            }
        }
    }
}

trait SignumZero {
    fn signum_zero(self) -> f64;
}

impl SignumZero for f64 {
    /// signum with sgn(0) = 0.
    fn signum_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

pub fn make_entropy_pair(family: EntropyFamily, v: f64, model: &FluxModel) -> EntropyPair {
    EntropyPair::new(family, v, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: truncated sum plus a midpoint-corrected integral
    /// tail; the tail error is O(1/(nu N^3)).
    fn series_sum_oracle(lambda: f64, nu: f64, n_terms: usize) -> f64 {
        let mut s = 1.0 / lambda;
        for n in 1..=n_terms {
            s += 2.0 / (lambda + (n as f64) * (n as f64) * nu);
        }
        // 2 * integral from N + 1/2 to infinity of dx / (lambda + nu x^2)
        let a = (lambda / nu).sqrt();
        let tail = 2.0 / (lambda * nu).sqrt()
            * (std::f64::consts::FRAC_PI_2 - ((n_terms as f64 + 0.5) / a).atan());
        s + tail
    }

    #[test]
    fn series_closed_form_matches_truncated_sum() {
        // Frozen spot value first: S(1,1) ~ 3.15335, Lambda ~ 0.31712.
        let s11 = series_sum(1.0, 1.0).unwrap();
        assert!((s11 - 3.153348094).abs() < 1e-5, "S(1,1) = {s11}");
        assert!((1.0 / s11 - 0.31712).abs() < 1e-5);

        for &l in &[0.1, 1.0, 10.0] {
            for &nu in &[0.1, 1.0, 10.0] {
                let closed = series_sum(l, nu).unwrap();
                let oracle = series_sum_oracle(l, nu, 1_000_000);
                assert!(
                    (closed - oracle).abs() <= 1e-10,
                    "lambda={l} nu={nu}: {closed} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn series_large_nu_limit() {
        // Only the n = 0 term survives: S -> 1/lambda.
        let a = 3.7;
        let s = series_sum(a, 1e12).unwrap();
        assert!((s - 1.0 / a).abs() < 1e-8);
    }

    #[test]
    fn series_rejects_nonpositive() {
        assert!(series_sum(0.0, 1.0).is_err());
        assert!(series_sum(1.0, -2.0).is_err());
        assert!(series_sum(-1.0, 1.0).is_err());
    }

    #[test]
    fn bl_flux_values() {
        let m = FluxModel::bl_quadratic();
        assert!((m.g(0.5) - 0.5).abs() < 1e-14);
        assert!((m.g(0.8) - 0.64 / 0.68).abs() < 1e-14);
        assert_eq!(m.g(0.0), 0.0);
        assert_eq!(m.g(1.0), 1.0);
        // Extension rule.
        assert_eq!(m.g(-0.5), m.g(0.0));
        assert_eq!(m.g(1.5), m.g(1.0));
        assert_eq!(m.h(-0.5), m.h(0.0));
        assert_eq!(m.h(1.5), m.h(1.0));
    }

    #[test]
    fn bl_damping_values() {
        let m = FluxModel::bl_quadratic();
        assert!((m.h(0.5) - 4.0).abs() < 1e-13);
        assert!((m.h(0.8) - 2.0 / 0.68).abs() < 1e-13);

        // Constant rel-perms k_r1 = k_r2 = 1 -> h = 1 everywhere.
        let table = vec![(0.0, 1.0, 1.0), (1.0, 1.0, 1.0)];
        let m1 = FluxModel::new(
            FluidParams::default(),
            RelPermModel::tabulated(table).unwrap(),
            FluxMode::Simple,
        )
        .unwrap();
        for k in 0..=10 {
            let u = k as f64 / 10.0;
            assert!((m1.h(u) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derived_constants_bl() {
        let m = FluxModel::bl_quadratic();
        let (k, h0) = m.derived_constants();
        // max g' of u^2/(u^2+(1-u)^2) is 2, attained at u = 1/2;
        // min h = 2/(u^2+(1-u)^2) is 2, attained at the endpoints.
        assert!((k - 2.0).abs() < 1e-3, "K = {k}");
        assert!((h0 - 2.0).abs() < 1e-6, "h0 = {h0}");

        let lin = FluxModel::linear_flux();
        let (k, _) = lin.derived_constants();
        assert!((k - 1.0).abs() < 1e-9, "K = {k}");
    }

    #[test]
    fn g_monotone_on_sample_grid() {
        for model in [FluxModel::bl_quadratic(), FluxModel::linear_flux()] {
            let mut prev = model.g(0.0);
            for k in 1..10_000 {
                let u = k as f64 / 9_999.0;
                let gu = model.g(u);
                assert!(gu + 1e-12 >= prev, "g not monotone at u = {u}");
                prev = gu;
            }
        }
    }

    #[test]
    fn series_mode_converges_to_simple_for_large_nu() {
        let fluid = FluidParams::new(1.0, 1.0, 1e6, 0.0).unwrap();
        let series = FluxModel::new(fluid, RelPermModel::corey_quadratic(), FluxMode::Series).unwrap();
        let simple = FluxModel::bl_quadratic();
        for k in 0..=50 {
            let u = k as f64 / 50.0;
            assert!(
                (series.g(u) - simple.g(u)).abs() < 1e-4,
                "u = {u}: {} vs {}",
                series.g(u),
                simple.g(u)
            );
        }
    }

    #[test]
    fn series_mode_monotone_and_bounded() {
        let fluid = FluidParams::new(2.0, 0.5, 0.3, 0.0).unwrap();
        let m = FluxModel::new(fluid, RelPermModel::corey_quadratic(), FluxMode::Series).unwrap();
        assert!(m.h0 > 0.0);
        let mut prev = m.g(0.0);
        for k in 1..=1000 {
            let u = k as f64 / 1000.0;
            let gu = m.g(u);
            assert!(gu + 1e-10 >= prev);
            prev = gu;
        }
    }

    #[test]
    fn entropy_pair_values() {
        let m = FluxModel::bl_quadratic();

        let kr = make_entropy_pair(EntropyFamily::Kruzhkov, 0.5, &m);
        assert_eq!(kr.eta(0.5), 0.0);
        assert_eq!(kr.q(0.5, &m), 0.0);

        let plus = make_entropy_pair(EntropyFamily::Plus, 0.3, &m);
        assert!((plus.eta(0.6) - 0.3).abs() < 1e-14);
        let expect = m.g(0.6) - m.g(0.3);
        assert!((expect - (0.692308 - 0.155172)).abs() < 1e-5);
        assert!((plus.q(0.6, &m) - expect).abs() < 1e-14);

        let minus = make_entropy_pair(EntropyFamily::Minus, 0.3, &m);
        assert_eq!(minus.eta(0.6), 0.0);
        assert_eq!(minus.q(0.6, &m), 0.0);
        // And on the active side eta >= 0, q = -(g(u) - g(v)).
        assert!((minus.eta(0.1) - 0.2).abs() < 1e-14);
        assert!((minus.q(0.1, &m) + (m.g(0.1) - m.g(0.3))).abs() < 1e-14);
    }

    #[test]
    fn entropy_compatibility_fd() {
        // Central difference of q matches eta'(u) g'(u) away from the kink.
        let m = FluxModel::bl_quadratic();
        let fd = 1e-5;
        let mut state = 123456789u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let u = 0.05 + 0.9 * next();
            let v = 0.05 + 0.9 * next();
            if (u - v).abs() < 10.0 * fd {
                continue;
            }
            for family in [
                EntropyFamily::Kruzhkov,
                EntropyFamily::Plus,
                EntropyFamily::Minus,
                EntropyFamily::Square,
            ] {
                let pair = make_entropy_pair(family, v, &m);
                let qd = (pair.q(u + fd, &m) - pair.q(u - fd, &m)) / (2.0 * fd);
                let etap = (pair.eta(u + fd) - pair.eta(u - fd)) / (2.0 * fd);
                let expect = etap * m.gprime(u);
                let scale = 1.0 + expect.abs();
                assert!(
                    (qd - expect).abs() <= crate::defaults::ENTROPY_COMPAT_RTOL * scale,
                    "{family:?} at u={u}, v={v}: {qd} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn entropy_q_bounded_by_k_eta() {
        let m = FluxModel::bl_quadratic();
        let (k, _) = m.derived_constants();
        for iv in 0..=20 {
            let v = iv as f64 / 20.0;
            for family in [EntropyFamily::Kruzhkov, EntropyFamily::Plus, EntropyFamily::Minus] {
                let pair = make_entropy_pair(family, v, &m);
                for iu in 0..=200 {
                    let u = iu as f64 / 200.0;
                    assert!(
                        pair.q(u, &m).abs() <= k * pair.eta(u) + 1e-12,
                        "{family:?} u={u} v={v}"
                    );
                }
            }
        }
    }

    #[test]
    fn eo_split_tables_consistent() {
        let m = FluxModel::bl_quadratic();
        // Monotone g: positive part integral equals g - g(0), negative is 0.
        for k in 0..=40 {
            let u = k as f64 / 40.0;
            assert!((m.gp_pos(u) - (m.g(u) - m.g(0.0))).abs() < 2e-4);
            assert!(m.gp_neg(u).abs() < 1e-12);
        }
        assert!(m.critical_points().is_empty());
    }
}

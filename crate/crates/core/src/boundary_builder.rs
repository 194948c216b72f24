//! Goursat boundary construction: the planar rarefaction wave, the positive
//! characteristic AB from the sonic point A down to the wave foot B, a strictly
//! convex negative characteristic BC from B to a near-sonic end C, and the
//! assembled boundary data with its box constraints.
//!
//! Orientation: AB samples are ordered from B (`j = 0`) to A (`j = n`), i.e.
//! along `+∂̂₊`; BC samples run from B along `−∂̂₋`, with arc length `s`
//! increasing away from B, so `dc/ds = −∂̂₋c > 0` on BC.

use crate::flow_kinematics::{bernoulli_phi, KinematicsError, NodeState, NodeStatus};
use crate::gas_model::{self, GasError, GasParameters};
use crate::numerics::{adaptive_simpson, integrate_adaptive, AdaptiveOptions, Stop, Trajectory};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use thiserror::Error;

/// Rows of the tabulated velocity integral.
const WAVE_TABLE: usize = 2048;
/// Absolute tolerance of the velocity quadrature over the whole wave.
const QUADRATURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundaryError {
    #[error("invalid wave parameters: {0}")]
    Wave(String),
    #[error("eta = {eta} outside the wave strip [{lo}, {hi}]")]
    EtaRange { eta: f64, lo: f64, hi: f64 },
    #[error("characteristic construction failed: {0}")]
    Construction(String),
    #[error("beta passed -pi/2 on BC at s = {s}")]
    BetaRange { s: f64 },
    #[error("{curve} sample {index}: {reason}")]
    Assembly { curve: &'static str, index: usize, reason: String },
    #[error(transparent)]
    Gas(#[from] GasError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Placement of boundary samples along a curve of length `L`: sample `k` of
/// `n` sits at the arc fraction `map(k/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampling {
    Uniform,
    /// `6u⁵ − 15u⁴ + 10u³`: clusters samples at both ends of the curve.
    Smootherstep,
    /// `u^p`: clusters samples at the start of the curve for `p > 1`.
    Power { p: f64 },
    /// `(1 − w)·u + w·smootherstep(u)`: end clustering with a floor on the
    /// spacing of `(1 − w)/n`.
    Blend { w: f64 },
}

impl Default for Sampling {
    /// Smootherstep clustering with a uniform share that keeps the first
    /// and last cells from collapsing.
    fn default() -> Self {
        Sampling::Blend { w: 0.9 }
    }
}

impl Sampling {
    pub fn map(&self, u: f64) -> f64 {
        match *self {
            Sampling::Uniform => u,
            Sampling::Smootherstep => u * u * u * (u * (6.0 * u - 15.0) + 10.0),
            Sampling::Power { p } => u.powf(p),
            Sampling::Blend { w } => (1.0 - w) * u + w * Sampling::Smootherstep.map(u),
        }
    }
}

/// Planar rarefaction wave joining the constant states `ρ₄` (below) and `ρ₁`
/// (above): `u = 0`, `v = ∫_{ρ₄}^{ρ} c/ρ dρ`, and `η = c(ρ) + v(ρ)`.
#[derive(Debug, Clone)]
pub struct RarefactionWave {
    pub params: GasParameters,
    pub rho1: f64,
    pub rho4: f64,
    pub c1: f64,
    pub c4: f64,
    pub v1: f64,
    pub eta1: f64,
    pub eta4: f64,
    table_rho: Vec<f64>,
    table_v: Vec<f64>,
}

/// Flow state of the rarefaction wave at one level `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveState {
    pub rho: f64,
    pub c: f64,
    pub u: f64,
    pub v: f64,
}

impl RarefactionWave {
    pub fn new(params: GasParameters, rho1: f64, rho4: f64) -> Result<Self, BoundaryError> {
        params.check()?;
        if !(rho4 > 0.0 && rho1 > rho4) {
            return Err(BoundaryError::Wave(format!("need rho1 > rho4 > 0, got {rho1}, {rho4}")));
        }
        if 1.0 / rho1 < params.tau_min || 1.0 / rho4 > params.tau_max {
            return Err(BoundaryError::Wave(format!(
                "specific volumes [{}, {}] leave the admissible window [{}, {}]",
                1.0 / rho1,
                1.0 / rho4,
                params.tau_min,
                params.tau_max
            )));
        }
        let mut table_rho = Vec::with_capacity(WAVE_TABLE + 1);
        let mut table_v = Vec::with_capacity(WAVE_TABLE + 1);
        let integrand = |r: f64| gas_model::evaluate(&params, 1.0 / r).map(|e| e.c / r).unwrap_or(f64::NAN);
        let mut v = 0.0;
        let h = (rho1 - rho4) / WAVE_TABLE as f64;
        for k in 0..=WAVE_TABLE {
            let r = if k == WAVE_TABLE { rho1 } else { rho4 + h * k as f64 };
            if k > 0 {
                let r0 = *table_rho.last().unwrap();
                v += adaptive_simpson(&integrand, r0, r, QUADRATURE_TOL / WAVE_TABLE as f64);
            }
            table_rho.push(r);
            table_v.push(v);
        }
        if !v.is_finite() {
            return Err(BoundaryError::Wave("velocity quadrature is not finite".into()));
        }
        let c1 = gas_model::evaluate(&params, 1.0 / rho1)?.c;
        let c4 = gas_model::evaluate(&params, 1.0 / rho4)?.c;
        let wave = RarefactionWave {
            params,
            rho1,
            rho4,
            c1,
            c4,
            v1: v,
            eta1: v + c1,
            eta4: c4,
            table_rho,
            table_v,
        };
        // η(ρ) must be strictly increasing for the inversion to be well posed.
        let mut prev = f64::NEG_INFINITY;
        for &r in wave.table_rho.iter().step_by(16) {
            let e = wave.eta_of_rho(r)?;
            if !(e > prev) {
                return Err(BoundaryError::Wave(format!("eta(rho) not increasing at rho = {r}")));
            }
            prev = e;
        }
        Ok(wave)
    }

    pub fn c_of_rho(&self, rho: f64) -> Result<f64, BoundaryError> {
        Ok(gas_model::evaluate(&self.params, 1.0 / rho)?.c)
    }

    /// `dc/dρ` from the closed-form pressure derivatives.
    fn dc_drho(&self, rho: f64) -> Result<f64, BoundaryError> {
        let tau = 1.0 / rho;
        let e = gas_model::evaluate(&self.params, tau)?;
        let dc_dtau = -(2.0 * tau * e.dp + tau * tau * e.d2p) / (2.0 * e.c);
        Ok(-dc_dtau * tau * tau)
    }

    /// `v(ρ)` by cubic Hermite interpolation of the quadrature table using the
    /// exact integrand `c/ρ` as the derivative.
    pub fn v_of_rho(&self, rho: f64) -> Result<f64, BoundaryError> {
        let r = rho.clamp(self.rho4, self.rho1);
        let h = (self.rho1 - self.rho4) / WAVE_TABLE as f64;
        let k = (((r - self.rho4) / h) as usize).min(WAVE_TABLE - 1);
        let (r0, r1) = (self.table_rho[k], self.table_rho[k + 1]);
        let (v0, v1) = (self.table_v[k], self.table_v[k + 1]);
        let d0 = self.c_of_rho(r0)? / r0;
        let d1 = self.c_of_rho(r1)? / r1;
        let hh = r1 - r0;
        let t = (r - r0) / hh;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        Ok(h00 * v0 + h10 * hh * d0 + h01 * v1 + h11 * hh * d1)
    }

    pub fn eta_of_rho(&self, rho: f64) -> Result<f64, BoundaryError> {
        Ok(self.c_of_rho(rho)? + self.v_of_rho(rho)?)
    }

    /// Solves `η = c(ρ) + v(ρ)` by safeguarded Newton iteration on `[ρ₄, ρ₁]`.
    pub fn rho_of_eta(&self, eta: f64) -> Result<f64, BoundaryError> {
        let tol = 1e-14 * (self.eta1 - self.eta4);
        if !(eta >= self.eta4 - tol && eta <= self.eta1 + tol) {
            return Err(BoundaryError::EtaRange { eta, lo: self.eta4, hi: self.eta1 });
        }
        if eta <= self.eta4 {
            return Ok(self.rho4);
        }
        if eta >= self.eta1 {
            return Ok(self.rho1);
        }
        let (mut lo, mut hi) = (self.rho4, self.rho1);
        let mut r = self.rho4 + (self.rho1 - self.rho4) * (eta - self.eta4) / (self.eta1 - self.eta4);
        for _ in 0..200 {
            let f = self.eta_of_rho(r)? - eta;
            if f.abs() <= 1e-15 * eta.abs() {
                return Ok(r);
            }
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let d = self.dc_drho(r)? + self.c_of_rho(r)? / r;
            let nr = r - f / d;
            r = if nr > lo && nr < hi { nr } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-16 * hi {
                return Ok(r);
            }
        }
        Ok(r)
    }

    pub fn c_of_eta(&self, eta: f64) -> Result<f64, BoundaryError> {
        self.c_of_rho(self.rho_of_eta(eta)?)
    }

    /// `dc/dη` inside the wave.
    pub fn dc_deta(&self, eta: f64) -> Result<f64, BoundaryError> {
        let r = self.rho_of_eta(eta)?;
        let dc = self.dc_drho(r)?;
        Ok(dc / (dc + self.c_of_rho(r)? / r))
    }
}

/// Wave state at level `η`.
pub fn wave_state(wave: &RarefactionWave, eta: f64) -> Result<WaveState, BoundaryError> {
    let rho = wave.rho_of_eta(eta)?;
    Ok(WaveState { rho, c: wave.c_of_rho(rho)?, u: 0.0, v: wave.v_of_rho(rho)? })
}

/// Lattice node carrying the wave state at `(ξ, η)`, with the pseudo-potential
/// set by the pseudo-Bernoulli law.
pub fn wave_node(
    wave: &RarefactionWave,
    xi: f64,
    eta: f64,
    status: NodeStatus,
) -> Result<NodeState, BoundaryError> {
    let w = wave_state(wave, eta)?;
    // Inside the wave U = −ξ and V = −c, so σ = ω = atan2(c, ξ) and β = 0.
    let sigma = w.c.atan2(xi);
    let mut node = NodeState { xi, eta, alpha: 2.0 * sigma, beta: 0.0, c: w.c, phi: 0.0, status };
    with_bernoulli_phi(&mut node, &wave.params)?;
    Ok(node)
}

/// Sets `phi` from the pseudo-Bernoulli law.
pub fn with_bernoulli_phi(node: &mut NodeState, params: &GasParameters) -> Result<(), BoundaryError> {
    let (u, v) = node.pseudo_velocity();
    let tau = gas_model::tau_from_c(params, node.c)?;
    node.phi = bernoulli_phi(tau, u, v, params)?;
    Ok(())
}

/// Characteristic family of a boundary curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Plus,
    Minus,
}

/// Sampled characteristic curve.
#[derive(Debug, Clone)]
pub struct CharacteristicPolyline {
    pub family: Family,
    pub samples: Vec<NodeState>,
    /// Cumulative arc length from the first sample.
    pub arc_lengths: Vec<f64>,
    /// `dc/ds` in the sample ordering direction.
    pub dc_ds: Vec<f64>,
}

impl CharacteristicPolyline {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Maximum angle between each chord and the sample tangents at its ends.
    pub fn max_tangent_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.samples.windows(2) {
            let ang = (w[1].eta - w[0].eta).atan2(w[1].xi - w[0].xi);
            for s in w {
                let t = match self.family {
                    Family::Plus => s.alpha,
                    Family::Minus => s.beta + PI,
                };
                let mut d = (ang - t).rem_euclid(PI);
                if d > FRAC_PI_2 {
                    d = PI - d;
                }
                worst = worst.max(d);
            }
        }
        worst
    }
}

fn ab_options() -> AdaptiveOptions {
    AdaptiveOptions { rtol: 1e-13, atol: 1e-14, h_init: 1e-4, h_max: 2e-3, max_steps: 2_000_000 }
}

/// Dense trace of the positive characteristic from A = (0, η₁) down to the
/// wave foot η = η₄, parameterized by arc length from A.
pub fn trace_ab_dense(wave: &RarefactionWave) -> Result<Trajectory<2>, BoundaryError> {
    let rhs = ab_rhs(wave);
    let event = |_s: f64, y: &[f64; 2]| y[1] - wave.eta4;
    let (traj, stop) = integrate_adaptive(&rhs, 0.0, [0.0, wave.eta1], 100.0, Some(&event), &ab_options());
    match stop {
        Stop::Event(_) => Ok(traj),
        other => Err(BoundaryError::Construction(format!("AB did not reach eta4: {other:?}"))),
    }
}

/// Right-hand side of the positive characteristic traced away from A,
/// `d(ξ, η)/ds = −(cos α, sin α)` with `α = 2 atan2(c(η), ξ)`.
pub fn ab_rhs(wave: &RarefactionWave) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + '_ {
    move |_s, y| {
        let eta = y[1].clamp(wave.eta4, wave.eta1);
        let c = wave.c_of_eta(eta).unwrap_or(f64::NAN);
        let a = 2.0 * c.atan2(y[0]);
        [-a.cos(), -a.sin()]
    }
}

/// Samples the positive characteristic AB: `n_plus + 1` samples, `j = 0` at B
/// and `j = n_plus` at the sonic point A.
pub fn trace_ab(
    wave: &RarefactionWave,
    n_plus: usize,
    sampling: Sampling,
) -> Result<CharacteristicPolyline, BoundaryError> {
    let traj = trace_ab_dense(wave)?;
    let total = traj.last();
    let mut samples = Vec::with_capacity(n_plus + 1);
    let mut arc = Vec::with_capacity(n_plus + 1);
    let mut dc = Vec::with_capacity(n_plus + 1);
    for j in 0..=n_plus {
        let f = sampling.map(j as f64 / n_plus as f64);
        let s = total * (1.0 - f);
        let mut y = traj.eval(s);
        if j == 0 {
            y[1] = wave.eta4;
        }
        if j == n_plus {
            y = [0.0, wave.eta1];
        }
        let node = wave_node(wave, y[0], y[1], NodeStatus::Boundary)?;
        // Along +∂̂₊ the level rises at rate sin α.
        let rate = if j == 0 || j == n_plus { 0.0 } else { wave.dc_deta(y[1])? * node.alpha.sin() };
        dc.push(rate);
        arc.push(total * f);
        samples.push(node);
    }
    Ok(CharacteristicPolyline { family: Family::Plus, samples, arc_lengths: arc, dc_ds: dc })
}

/// Right-hand side of BC in arc length from B: `y = (ξ, η, β, c, α)` with
///
/// ```text
/// dξ/ds = −cos β,  dη/ds = −sin β,  dβ/ds = −k,
/// dc/ds = 2μ² c (dβ/ds)/(sin 2ω · Ω),  dα/ds = (tan ω/μ²)(dc/ds)/c + 2 sin²ω/c.
/// ```
pub fn bc_rhs(params: &GasParameters, k: f64) -> impl Fn(f64, &[f64; 5]) -> [f64; 5] + '_ {
    move |_s, y| {
        let (be, c, al) = (y[2], y[3], y[4]);
        let w = 0.5 * (al - be);
        let ev = gas_model::tau_from_c(params, c).and_then(|t| gas_model::evaluate(params, t));
        let Ok(e) = ev else { return [f64::NAN; 5] };
        let Ok(om) = e.omega_coefficient(w) else { return [f64::NAN; 5] };
        let dbe = -k;
        let dc = 2.0 * e.mu2 * c * dbe / ((2.0 * w).sin() * om);
        let dal = (w.tan() / e.mu2 * dc + 2.0 * w.sin().powi(2)) / c;
        [-be.cos(), -be.sin(), dbe, dc, dal]
    }
}

/// Settings of the BC construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcSettings {
    /// Constant turning rate `k = −dβ/ds > 0`.
    pub turning_rate: f64,
    /// Integration stops when `ω ≥ π/2 − sonic_margin`.
    pub sonic_margin: f64,
    /// Optional early stop when β reaches this value.
    #[serde(default)]
    pub beta_cap: Option<f64>,
}

impl Default for BcSettings {
    fn default() -> Self {
        BcSettings { turning_rate: 0.3, sonic_margin: 0.01, beta_cap: None }
    }
}

/// Builds the negative characteristic BC from the corner B with constant
/// turning rate, stopping near sonic; `n_minus + 1` samples from B.
pub fn build_bc(
    params: &GasParameters,
    corner: &NodeState,
    bc: &BcSettings,
    n_minus: usize,
    sampling: Sampling,
) -> Result<CharacteristicPolyline, BoundaryError> {
    if !(bc.turning_rate > 0.0) {
        return Err(BoundaryError::Construction("turning rate must be positive".into()));
    }
    if !(bc.sonic_margin > 0.0 && bc.sonic_margin < FRAC_PI_4) {
        return Err(BoundaryError::Construction("sonic margin must lie in (0, pi/4)".into()));
    }
    let rhs = bc_rhs(params, bc.turning_rate);
    let stop_omega = FRAC_PI_2 - bc.sonic_margin;
    let cap = bc.beta_cap.unwrap_or(f64::NEG_INFINITY).max(-FRAC_PI_2);
    let event = |_s: f64, y: &[f64; 5]| (stop_omega - 0.5 * (y[4] - y[2])).min(y[2] - cap);
    let y0 = [corner.xi, corner.eta, corner.beta, corner.c, corner.alpha];
    let s_max = (FRAC_PI_2 + corner.beta) / bc.turning_rate * 1.000001;
    let (traj, stop) = integrate_adaptive(&rhs, 0.0, y0, s_max, Some(&event), &ab_options());
    let total = match stop {
        Stop::Event(s) => s,
        Stop::End => return Err(BoundaryError::BetaRange { s: traj.last() }),
        Stop::Breakdown(s) => {
            return Err(BoundaryError::Construction(format!("BC integration broke down at s = {s}")))
        }
    };
    let mut samples = Vec::with_capacity(n_minus + 1);
    let mut arc = Vec::with_capacity(n_minus + 1);
    let mut dcs = Vec::with_capacity(n_minus + 1);
    let mut prev_w = f64::NEG_INFINITY;
    for i in 0..=n_minus {
        let s = total * sampling.map(i as f64 / n_minus as f64);
        let y = if i == 0 { y0 } else { traj.eval(s) };
        let mut node = NodeState {
            xi: y[0],
            eta: y[1],
            alpha: y[4],
            beta: y[2],
            c: y[3],
            phi: 0.0,
            status: NodeStatus::Boundary,
        };
        if i == 0 {
            node.phi = corner.phi;
        } else {
            with_bernoulli_phi(&mut node, params)?;
        }
        let d = rhs(s, &y);
        if !(d[3] > 0.0) {
            return Err(BoundaryError::Construction(format!("dc/ds = {} not positive at s = {s}", d[3])));
        }
        let w = node.omega();
        if i > 0 && !(w > prev_w) {
            return Err(BoundaryError::Construction(format!("omega not increasing at s = {s}")));
        }
        if node.beta <= -FRAC_PI_2 {
            return Err(BoundaryError::BetaRange { s });
        }
        prev_w = w;
        samples.push(node);
        arc.push(s);
        dcs.push(d[3]);
    }
    Ok(CharacteristicPolyline { family: Family::Minus, samples, arc_lengths: arc, dc_ds: dcs })
}

/// Assembled Goursat data on the two characteristic boundaries.
#[derive(Debug, Clone)]
pub struct GoursatData {
    pub ab: CharacteristicPolyline,
    pub bc: CharacteristicPolyline,
    pub corner: NodeState,
    /// Terminal inclination achieved on BC.
    pub beta_c: f64,
    /// Mismatch of α and c between the two curves at B.
    pub corner_mismatch: f64,
}

impl GoursatData {
    /// Pairs two polylines without checking the box constraints (used for
    /// manufactured test problems whose data are not of patch type).
    pub fn from_polylines(ab: CharacteristicPolyline, bc: CharacteristicPolyline) -> GoursatData {
        let corner = ab.samples[0];
        let b0 = bc.samples[0];
        let mismatch = (corner.alpha - b0.alpha)
            .abs()
            .max((corner.c - b0.c).abs())
            .max((corner.beta - b0.beta).abs())
            .max(corner.distance(&b0));
        let beta_c = bc.samples.last().unwrap().beta;
        GoursatData { ab, bc, corner, beta_c, corner_mismatch: mismatch }
    }
}

/// Checks the patch box constraints samplewise and assembles the data.
pub fn assemble_goursat(
    ab: CharacteristicPolyline,
    bc: CharacteristicPolyline,
) -> Result<GoursatData, BoundaryError> {
    let fail = |curve, index, reason: String| Err(BoundaryError::Assembly { curve, index, reason });
    if ab.len() < 3 || bc.len() < 3 {
        return fail("AB", 0, "fewer than three samples".into());
    }
    let n = ab.len() - 1;
    for (j, s) in ab.samples.iter().enumerate() {
        let w = s.omega();
        if s.beta != 0.0 {
            return fail("AB", j, format!("beta = {} is not 0", s.beta));
        }
        if !(s.alpha >= FRAC_PI_2 && s.alpha <= PI) {
            return fail("AB", j, format!("alpha = {} outside [pi/2, pi]", s.alpha));
        }
        let sonic_end = j == n && (w - FRAC_PI_2).abs() < 1e-12;
        if !(w > FRAC_PI_4 && w < FRAC_PI_2) && !sonic_end {
            return fail("AB", j, format!("omega = {w} outside (pi/4, pi/2)"));
        }
        if j > 0 {
            let p = &ab.samples[j - 1];
            if !(s.alpha > p.alpha) {
                return fail("AB", j, "alpha not increasing towards A".into());
            }
            if !(s.c > p.c) {
                return fail("AB", j, "c not increasing towards A".into());
            }
        }
    }
    let beta_c = bc.samples.last().unwrap().beta;
    if !(beta_c > -FRAC_PI_2 && beta_c < 0.0) {
        return fail("BC", bc.len() - 1, format!("beta_C = {beta_c} outside (-pi/2, 0)"));
    }
    for (i, s) in bc.samples.iter().enumerate() {
        let w = s.omega();
        if !(s.beta <= 0.0 && s.beta >= beta_c) {
            return fail("BC", i, format!("beta = {} outside [beta_C, 0]", s.beta));
        }
        if !(w > FRAC_PI_4 && w < FRAC_PI_2) {
            return fail("BC", i, format!("omega = {w} outside (pi/4, pi/2)"));
        }
        if i > 0 {
            let p = &bc.samples[i - 1];
            if !(s.beta < p.beta) {
                return fail("BC", i, "beta not decreasing along BC".into());
            }
            if !(s.c > p.c) {
                return fail("BC", i, "c not increasing along BC".into());
            }
        }
        if !(bc.dc_ds[i] > 0.0) {
            return fail("BC", i, "dc/ds not positive".into());
        }
    }
    let data = GoursatData::from_polylines(ab, bc);
    if data.corner_mismatch > 1e-12 {
        return fail("BC", 0, format!("corner mismatch {} with AB at B", data.corner_mismatch));
    }
    Ok(data)
}

/// Builds the default patch data: AB through the wave and BC with constant
/// turning rate.
pub fn default_goursat(
    wave: &RarefactionWave,
    bc: &BcSettings,
    n_plus: usize,
    n_minus: usize,
    sampling: Sampling,
) -> Result<GoursatData, BoundaryError> {
    let ab = trace_ab(wave, n_plus, sampling)?;
    let bcl = build_bc(&wave.params, &ab.samples[0], bc, n_minus, sampling)?;
    assemble_goursat(ab, bcl)
}

/// Goursat data cut from a flow with constant velocity `(u, v)` and sound
/// speed `c`: both characteristics through `corner` are straight, AB runs a
/// length `len_plus` along `+∂̂₊` and BC a length `len_minus` along `−∂̂₋`.
#[allow(clippy::too_many_arguments)]
pub fn constant_state_goursat(
    params: &GasParameters,
    (u, v, c): (f64, f64, f64),
    corner: (f64, f64),
    len_plus: f64,
    len_minus: f64,
    n_plus: usize,
    n_minus: usize,
) -> Result<GoursatData, BoundaryError> {
    let b = NodeState::from_velocity(corner.0, corner.1, u, v, c, NodeStatus::Boundary)?;
    let line = |dir: (f64, f64), len: f64, n: usize, fam: Family| -> Result<_, BoundaryError> {
        let mut samples = Vec::new();
        let mut arc = Vec::new();
        for k in 0..=n {
            let s = len * k as f64 / n as f64;
            let mut node = NodeState::from_velocity(
                corner.0 + s * dir.0,
                corner.1 + s * dir.1,
                u,
                v,
                c,
                NodeStatus::Boundary,
            )?;
            with_bernoulli_phi(&mut node, params)?;
            samples.push(node);
            arc.push(s);
        }
        let dc = vec![0.0; samples.len()];
        Ok(CharacteristicPolyline { family: fam, samples, arc_lengths: arc, dc_ds: dc })
    };
    let ab = line(b.dir_plus(), len_plus, n_plus, Family::Plus)?;
    let (mx, my) = b.dir_minus();
    let bc = line((-mx, -my), len_minus, n_minus, Family::Minus)?;
    Ok(GoursatData::from_polylines(ab, bc))
}

/// Goursat data lying strictly inside the rarefaction wave: AB is the
/// positive characteristic through `corner` traced a length `len_plus` along
/// `+∂̂₊`, BC the level line `η = η_B` traced a length `len_minus` along `−∂̂₋`.
pub fn simple_wave_goursat(
    wave: &RarefactionWave,
    corner: (f64, f64),
    len_plus: f64,
    len_minus: f64,
    n_plus: usize,
    n_minus: usize,
    sampling: Sampling,
) -> Result<GoursatData, BoundaryError> {
    let rhs = |s: f64, y: &[f64; 2]| {
        let d = ab_rhs(wave)(s, y);
        [-d[0], -d[1]]
    };
    let none: Option<&fn(f64, &[f64; 2]) -> f64> = None;
    let (traj, stop) = integrate_adaptive(&rhs, 0.0, [corner.0, corner.1], len_plus, none, &ab_options());
    if stop != Stop::End {
        return Err(BoundaryError::Construction(format!("wave characteristic stopped: {stop:?}")));
    }
    let mut samples = Vec::new();
    let mut arc = Vec::new();
    let mut dc = Vec::new();
    for j in 0..=n_plus {
        let s = len_plus * sampling.map(j as f64 / n_plus as f64);
        let y = if j == 0 { [corner.0, corner.1] } else { traj.eval(s) };
        let node = wave_node(wave, y[0], y[1], NodeStatus::Boundary)?;
        dc.push(wave.dc_deta(y[1])? * node.alpha.sin());
        samples.push(node);
        arc.push(s);
    }
    let ab = CharacteristicPolyline { family: Family::Plus, samples, arc_lengths: arc, dc_ds: dc };
    let mut samples = Vec::new();
    let mut arc = Vec::new();
    for i in 0..=n_minus {
        let s = len_minus * sampling.map(i as f64 / n_minus as f64);
        samples.push(wave_node(wave, corner.0 - s, corner.1, NodeStatus::Boundary)?);
        arc.push(s);
    }
    let dc = vec![0.0; samples.len()];
    let bc = CharacteristicPolyline { family: Family::Minus, samples, arc_lengths: arc, dc_ds: dc };
    Ok(GoursatData::from_polylines(ab, bc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rk4_step;

    fn gas() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 }
    }

    fn wave() -> RarefactionWave {
        RarefactionWave::new(gas(), 2.0, 1.0).unwrap()
    }

    #[test]
    fn wave_endpoints_match_reference() {
        let w = wave();
        // 30-digit quadrature and root-finding references.
        assert!((w.c1 - 1.649_417_397_143_530_9).abs() < 1e-14);
        assert!((w.c4 - 1.298_163_001_314_112_9).abs() < 1e-14);
        assert!((w.v1 - 1.012_427_441_718_208_6).abs() < 1e-12);
        assert!((w.eta1 - 2.661_844_838_861_739_5).abs() < 1e-12);
        let s4 = wave_state(&w, w.eta4).unwrap();
        assert!((s4.rho - 1.0).abs() < 1e-15 && s4.v.abs() < 1e-15 && (s4.c - w.c4).abs() < 1e-15);
        let s1 = wave_state(&w, w.eta1).unwrap();
        assert!((s1.rho - 2.0).abs() < 1e-15 && (s1.v - w.v1).abs() < 1e-15);
        assert!(wave_state(&w, w.eta1 + 1e-3).is_err());
    }

    #[test]
    fn wave_midpoint_matches_reference() {
        let w = wave();
        let m = wave_state(&w, 0.5 * (w.eta1 + w.eta4)).unwrap();
        assert!((m.rho - 1.450_589_638_574_221_1).abs() < 1e-10);
        assert!((m.c - 1.466_893_065_256_154_9).abs() < 1e-10);
        assert!((m.v - 0.513_110_854_831_771_3).abs() < 1e-10);
    }

    #[test]
    fn wave_is_monotone() {
        let w = wave();
        let mut prev = (0.0, 0.0);
        for k in 0..=200 {
            let eta = w.eta4 + (w.eta1 - w.eta4) * k as f64 / 200.0;
            let s = wave_state(&w, eta).unwrap();
            if k > 0 {
                assert!(s.rho > prev.0 && s.c > prev.1);
            }
            prev = (s.rho, s.c);
        }
    }

    #[test]
    fn ab_endpoints_and_signs() {
        let w = wave();
        let ab = trace_ab(&w, 64, Sampling::Smootherstep).unwrap();
        let a = ab.samples.last().unwrap();
        assert!((a.omega() - FRAC_PI_2).abs() < 1e-15 && (a.alpha - PI).abs() < 1e-15);
        let b = ab.samples[0];
        assert!((b.c - w.c4).abs() < 1e-15 && b.eta == w.eta4);
        let (u, v) = b.velocity();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
        for p in ab.samples.windows(2) {
            assert!(p[1].alpha > p[0].alpha && p[1].c > p[0].c);
        }
        assert!(ab.max_tangent_mismatch() < 0.05);
    }

    #[test]
    fn ab_rk4_is_fourth_order() {
        // Fixed arc length strictly inside the wave so no step straddles its edge.
        let w = wave();
        let rhs = ab_rhs(&w);
        let span = 0.64;
        let (exact, _) = integrate_adaptive(&rhs, 0.0, [0.0, w.eta1], span, None::<&fn(f64, &[f64; 2]) -> f64>, &ab_options());
        let exact = exact.final_state();
        assert!(exact[1] > w.eta4 + 0.1);
        let err = |n: usize| {
            let h = span / n as f64;
            let mut y = [0.0, w.eta1];
            for k in 0..n {
                y = rk4_step(&rhs, k as f64 * h, &y, h);
            }
            (y[0] - exact[0]).hypot(y[1] - exact[1])
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let (r1, r2) = (e1 / e2, e2 / e3);
        assert!(r1 > 12.0 && r1 < 20.0 && r2 > 12.0 && r2 < 20.0, "ratios {r1} {r2} ({e1} {e2} {e3})");
    }

    #[test]
    fn bc_signs_and_compatibility() {
        let w = wave();
        let data = default_goursat(&w, &BcSettings::default(), 40, 40, Sampling::Smootherstep).unwrap();
        assert!(data.beta_c > -FRAC_PI_2 && data.beta_c < 0.0);
        assert!(data.corner_mismatch < 1e-15);
        let bc = &data.bc;
        for (i, s) in bc.samples.iter().enumerate() {
            assert!(bc.dc_ds[i] > 0.0);
            if i > 0 {
                assert!(s.beta < bc.samples[i - 1].beta);
                assert!(s.omega() > bc.samples[i - 1].omega());
            }
        }
        let last = bc.samples.last().unwrap();
        assert!((last.omega() - (FRAC_PI_2 - 0.01)).abs() < 1e-10);
        assert!(bc.max_tangent_mismatch() < 0.05);
    }

    #[test]
    fn bc_turning_scales_with_rate() {
        let w = wave();
        let ab = trace_ab(&w, 16, Sampling::Uniform).unwrap();
        let run = |k: f64| {
            let s = BcSettings { turning_rate: k, ..BcSettings::default() };
            let bc = build_bc(&w.params, &ab.samples[0], &s, 50, Sampling::Uniform).unwrap();
            let l = *bc.arc_lengths.last().unwrap();
            (bc.samples.last().unwrap().beta, l)
        };
        let (b1, l1) = run(0.3);
        let (b2, l2) = run(0.15);
        assert!((b1 + 0.3 * l1).abs() < 1e-10 && (b2 + 0.15 * l2).abs() < 1e-10);
        assert!(b2 > b1);
    }

    #[test]
    fn bc_relations_hold_on_samples() {
        // Discrete residual of the BC differential relations falls as O(step²).
        let w = wave();
        let ab = trace_ab(&w, 16, Sampling::Uniform).unwrap();
        let res = |n: usize| {
            let bc = build_bc(&w.params, &ab.samples[0], &BcSettings::default(), n, Sampling::Uniform)
                .unwrap();
            let mut worst: f64 = 0.0;
            for k in 1..n {
                let (p, q) = (&bc.samples[k - 1], &bc.samples[k]);
                let ds = bc.arc_lengths[k] - bc.arc_lengths[k - 1];
                let dc = 0.5 * (bc.dc_ds[k] + bc.dc_ds[k - 1]);
                worst = worst.max(((q.c - p.c) / ds - dc).abs());
            }
            worst
        };
        let r = res(50) / res(100);
        assert!(r > 3.0 && r < 5.0, "ratio {r}");
    }

    #[test]
    fn assembly_rejects_perturbed_ab() {
        let w = wave();
        let mut ab = trace_ab(&w, 20, Sampling::Uniform).unwrap();
        let bc = build_bc(&w.params, &ab.samples[0], &BcSettings::default(), 20, Sampling::Uniform).unwrap();
        ab.samples[5].beta = 1e-3;
        match assemble_goursat(ab, bc) {
            Err(BoundaryError::Assembly { curve: "AB", index: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sampling_maps_fix_endpoints() {
        for s in [Sampling::Uniform, Sampling::Smootherstep, Sampling::Power { p: 2.0 }, Sampling::Blend { w: 0.8 }] {
            assert_eq!(s.map(0.0), 0.0);
            assert!((s.map(1.0) - 1.0).abs() < 1e-15);
            let mut prev = -1.0;
            for k in 0..=50 {
                let v = s.map(k as f64 / 50.0);
                assert!(v > prev);
                prev = v;
            }
        }
    }
}

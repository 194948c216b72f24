//! Straight positive characteristics continued from BC into the simple-wave
//! region, their envelope by two independent oracles, and the race between
//! envelope and sonic point along each line.
//!
//! In the simple-wave region `∂₊c = ∂₊α = 0`, so every positive
//! characteristic is a straight line carrying constant `c` and `α`. Fan lines
//! leave their BC foot along `−(cos α, sin α)`; on that ray the half-angle
//! obeys `cot ω(s) = cot ω₀ − s/c` and turns sonic at `s = c·cot ω₀`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_builder::CharacteristicPolyline;
use crate::gas_model::{evaluate, tau_from_c, GasError, GasParameters};
use crate::numerics::{fit_line, integrate_adaptive, three_point_derivative, AdaptiveOptions, Stop};

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("fan data at line {index}: {reason}")]
    Data { index: usize, reason: String },
    #[error("fan needs at least 3 lines, got {0}")]
    Shape(usize),
    #[error(transparent)]
    Gas(#[from] GasError),
}

/// One straight line of the fan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanLine {
    /// Foot on BC.
    pub foot: (f64, f64),
    /// Arc length of the foot along BC, the family parameter.
    pub arc: f64,
    pub alpha: f64,
    pub c: f64,
    pub omega0: f64,
    /// Reciprocal gradient `1/(dc/ds)` at the foot, BC arc length `s`.
    pub z0: f64,
    pub mu2: f64,
}

impl FanLine {
    /// Unit direction of the line away from its foot.
    pub fn direction(&self) -> (f64, f64) {
        (-self.alpha.cos(), -self.alpha.sin())
    }

    /// Distance from the foot to the sonic point.
    pub fn s_sonic(&self) -> f64 {
        self.c / self.omega0.tan()
    }

    /// Half-angle at distance `s` along the line.
    pub fn omega_at(&self, s: f64) -> f64 {
        1f64.atan2(1.0 / self.omega0.tan() - s / self.c)
    }

    /// Coefficients `(A, B)` of the reciprocal-gradient equation at `s`:
    /// `A = sin 2ω/c`, `B = 1/(2μ²c cos²ω)`.
    pub fn coefficients(&self, s: f64) -> (f64, f64) {
        let w = self.omega_at(s);
        ((2.0 * w).sin() / self.c, 1.0 / (2.0 * self.mu2 * self.c * w.cos().powi(2)))
    }
}

/// Straight lines continued from the BC samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleWaveFan {
    pub lines: Vec<FanLine>,
}

/// Builds the fan from the BC polyline.
pub fn build_fan(params: &GasParameters, bc: &CharacteristicPolyline) -> Result<SimpleWaveFan, EnvelopeError> {
    let mut lines = Vec::with_capacity(bc.len());
    for (k, n) in bc.samples.iter().enumerate() {
        let dc = bc.dc_ds[k];
        if !(dc > 0.0 && dc.is_finite()) {
            return Err(EnvelopeError::Data { index: k, reason: format!("dc/ds = {dc} is not positive") });
        }
        let omega0 = n.omega();
        if !(omega0 > 0.0 && omega0 < FRAC_PI_2) {
            return Err(EnvelopeError::Data { index: k, reason: format!("half-angle {omega0} outside (0, π/2)") });
        }
        let mu2 = evaluate(params, tau_from_c(params, n.c)?)?.mu2;
        lines.push(FanLine {
            foot: (n.xi, n.eta),
            arc: bc.arc_lengths[k],
            alpha: n.alpha,
            c: n.c,
            omega0,
            z0: 1.0 / dc,
            mu2,
        });
    }
    Ok(SimpleWaveFan { lines })
}

/// Caustic distance of each line of the family: with `θ = α + π` the line
/// direction, `s* = −P′·e⊥(θ)/θ′`, `e⊥(θ) = (−sin θ, cos θ)`. `None` marks no
/// envelope ahead of the foot (parallel neighbours or `s* < 0`).
pub fn geometric_envelope(fan: &SimpleWaveFan) -> Result<Vec<Option<f64>>, EnvelopeError> {
    let m = fan.lines.len();
    if m < 3 {
        return Err(EnvelopeError::Shape(m));
    }
    let s: Vec<f64> = fan.lines.iter().map(|l| l.arc).collect();
    let x: Vec<f64> = fan.lines.iter().map(|l| l.foot.0).collect();
    let y: Vec<f64> = fan.lines.iter().map(|l| l.foot.1).collect();
    let a: Vec<f64> = fan.lines.iter().map(|l| l.alpha).collect();
    let length = (s[m - 1] - s[0]).abs();
    Ok((0..m)
        .map(|k| {
            let (dx, dy, da) =
                (three_point_derivative(&s, &x, k), three_point_derivative(&s, &y, k), three_point_derivative(&s, &a, k));
            let theta = a[k] + std::f64::consts::PI;
            let normal = -dx * theta.sin() + dy * theta.cos();
            if da.abs() * length <= 1e-12 * (1.0 + a[k].abs()) {
                return None;
            }
            let v = -normal / da;
            // Negative values within round-off of the fan size are a common foot.
            let v = if v < 0.0 && v > -1e-12 * length { 0.0 } else { v };
            (v.is_finite() && v >= 0.0).then_some(v)
        })
        .collect())
}

fn envelope_options() -> AdaptiveOptions {
    AdaptiveOptions { rtol: 1e-12, atol: 1e-14, h_init: 1e-5, h_max: 1e-2, max_steps: 1_000_000 }
}

/// First zero of `z' = f(s, z)` on `[0, s_end)` starting from `z(0) = z0`.
pub fn first_zero<F: Fn(f64, f64) -> f64>(f: &F, z0: f64, s_end: f64) -> Option<f64> {
    let rhs = |s: f64, y: &[f64; 1]| [f(s, y[0])];
    let event = |_: f64, y: &[f64; 1]| y[0];
    match integrate_adaptive(&rhs, 0.0, [z0], s_end, Some(&event), &envelope_options()).1 {
        Stop::Event(s) => Some(s),
        Stop::End | Stop::Breakdown(_) => None,
    }
}

/// Gradient blow-up along one line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    /// Distance at which the reciprocal gradient reaches zero.
    pub distance: Option<f64>,
    /// `+1`: along the fan line towards its sonic point, `−1`: the reverse ray.
    pub orientation: i8,
}

/// Integrates the reciprocal gradient `z = 1/(dc/ds)` along the line.
///
/// Towards the sonic point `z′ = −(Az + B)`; on the reverse ray the signs
/// flip. The orientation with decreasing `z` at the foot is integrated,
/// up to the sonic point or, on the reverse ray, a hundred sound speeds.
/// An infinite `z0` (vanishing gradient) never blows up.
pub fn ode_blowup(line: &FanLine) -> BlowUp {
    if line.z0.is_infinite() {
        return BlowUp { distance: None, orientation: 1 };
    }
    let slope = |o: f64, s: f64, z: f64| {
        let (a, b) = line.coefficients(o * s);
        -o * (a * z + b)
    };
    let orientation = if slope(1.0, 0.0, line.z0) < 0.0 { 1 } else { -1 };
    let o = orientation as f64;
    let s_end = if orientation > 0 { line.s_sonic() * (1.0 - 1e-9) } else { 100.0 * line.c };
    let distance = first_zero(&|s, z| slope(o, s, z), line.z0, s_end);
    BlowUp { distance, orientation }
}

/// Exponent of `B(s) ∝ (s_sonic − s)^p` over `s_sonic − s ∈ [lo, hi]·s_sonic`.
pub fn sonic_blowup_exponent(line: &FanLine, (lo, hi): (f64, f64), samples: usize) -> Option<f64> {
    let ss = line.s_sonic();
    let (x, y): (Vec<f64>, Vec<f64>) = (0..samples)
        .map(|k| {
            let gap = ss * lo * (hi / lo).powf(k as f64 / (samples - 1) as f64);
            (gap.ln(), line.coefficients(ss - gap).1.ln())
        })
        .unzip();
    fit_line(&x, &y).map(|(_, p, _)| p)
}

/// Outcome of the envelope–sonic race on one line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EnvelopeFirst,
    SonicFirst,
    NoEnvelope,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::EnvelopeFirst => "envelope-first",
            Verdict::SonicFirst => "sonic-first",
            Verdict::NoEnvelope => "no-envelope",
        }
    }
}

/// Per-line result of the race.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeLine {
    pub n: usize,
    pub line: FanLine,
    pub s_sonic: f64,
    pub s_env_geo: Option<f64>,
    pub s_env_ode: Option<f64>,
    pub ode_orientation: i8,
    /// `|s_ode − s_geo|/s_geo` when both are finite.
    pub mismatch: Option<f64>,
    pub verdict: Verdict,
}

/// Race results over the whole fan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub lines: Vec<EnvelopeLine>,
    /// Every line with a finite envelope distance is envelope-first.
    pub passed: bool,
    /// No line has a finite envelope distance.
    pub vacuous: bool,
    pub max_mismatch: Option<f64>,
}

impl EnvelopeReport {
    pub fn count(&self, v: Verdict) -> usize {
        self.lines.iter().filter(|l| l.verdict == v).count()
    }

    /// Median geometric envelope distance over lines where it is finite.
    pub fn median_geometric(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.lines.iter().filter_map(|l| l.s_env_geo).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len();
        Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
    }
}

/// Runs both oracles on every line and decides the race.
pub fn verify_theorem(fan: &SimpleWaveFan) -> Result<EnvelopeReport, EnvelopeError> {
    let geo = geometric_envelope(fan)?;
    let lines: Vec<EnvelopeLine> = fan
        .lines
        .iter()
        .zip(geo)
        .enumerate()
        .map(|(n, (line, s_geo))| {
            let blow = ode_blowup(line);
            let s_sonic = line.s_sonic();
            let mismatch = match (s_geo, blow.distance) {
                (Some(g), Some(o)) if g > 0.0 => Some((o - g).abs() / g),
                _ => None,
            };
            let first = [s_geo, blow.distance].into_iter().flatten().reduce(f64::min);
            let verdict = match first {
                None => Verdict::NoEnvelope,
                Some(s) if s < s_sonic => Verdict::EnvelopeFirst,
                Some(_) => Verdict::SonicFirst,
            };
            EnvelopeLine {
                n,
                line: *line,
                s_sonic,
                s_env_geo: s_geo,
                s_env_ode: blow.distance,
                ode_orientation: blow.orientation,
                mismatch,
                verdict,
            }
        })
        .collect();
    let vacuous = lines.iter().all(|l| l.verdict == Verdict::NoEnvelope);
    let passed = lines.iter().all(|l| l.verdict != Verdict::SonicFirst);
    let max_mismatch = lines.iter().filter_map(|l| l.mismatch).reduce(f64::max);
    Ok(EnvelopeReport { lines, passed, vacuous, max_mismatch })
}

/// Builds the fan from BC and runs the race.
pub fn detect_envelope(params: &GasParameters, bc: &CharacteristicPolyline) -> Result<EnvelopeReport, EnvelopeError> {
    verify_theorem(&build_fan(params, bc)?)
}

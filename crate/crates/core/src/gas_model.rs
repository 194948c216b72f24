//! Van der Waals thermodynamics: pressure and its derivatives, sound speed,
//! the coefficient functions κ, m, μ², Ω, monotone τ ↔ c inversion and
//! admissible-regime validation.
//!
//! The isentropic law is `p(τ) = K/(τ−b)^(γ+1) − a/τ²`; `a = b = 0` recovers
//! the polytropic gas with constant `κ = 2/γ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance of the τ ↔ c inversion.
pub const INVERSION_TOL: f64 = 1e-13;
/// Iteration cap of the τ ↔ c inversion.
pub const INVERSION_MAX_ITER: usize = 200;
/// Number of τ samples used by [`validate_regime`].
pub const REGIME_SAMPLES: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GasError {
    #[error("specific volume {tau} is not above the covolume b = {b}")]
    Domain { tau: f64, b: f64 },
    #[error("non-finite intermediate while evaluating the equation of state at tau = {tau}")]
    Evaluation { tau: f64 },
    #[error("omega = {omega} is outside (0, pi/2)")]
    Omega { omega: f64 },
    #[error("sound speed {c} is outside the admissible band [{lo}, {hi}]")]
    Range { c: f64, lo: f64, hi: f64 },
    #[error("inversion for c = {c} did not converge")]
    NoConvergence { c: f64 },
    #[error("invalid gas parameters: {0}")]
    Parameters(String),
}

/// Equation-of-state constants and the admissible specific-volume window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasParameters {
    /// Entropy constant.
    #[serde(rename = "K")]
    pub k: f64,
    /// Adiabatic-type exponent, `0 < γ < 1`.
    pub gamma: f64,
    /// Molecular attraction constant.
    pub a: f64,
    /// Covolume.
    pub b: f64,
    /// Lower end of the admissible specific-volume window.
    pub tau_min: f64,
    /// Upper end of the admissible specific-volume window.
    pub tau_max: f64,
}

impl GasParameters {
    /// Checks the scalar constraints on the constants (not the regime predicate).
    pub fn check(&self) -> Result<(), GasError> {
        let p = self;
        let fin = [p.k, p.gamma, p.a, p.b, p.tau_min, p.tau_max].iter().all(|x| x.is_finite());
        if !fin {
            return Err(GasError::Parameters("non-finite constant".into()));
        }
        if p.k <= 0.0 {
            return Err(GasError::Parameters(format!("K = {} must be positive", p.k)));
        }
        if !(p.gamma > 0.0 && p.gamma < 1.0) {
            return Err(GasError::Parameters(format!("gamma = {} must lie in (0, 1)", p.gamma)));
        }
        if p.a < 0.0 || p.b < 0.0 {
            return Err(GasError::Parameters("a and b must be non-negative".into()));
        }
        if p.tau_min <= p.b {
            return Err(GasError::Parameters(format!(
                "tau_min = {} must exceed b = {}",
                p.tau_min, p.b
            )));
        }
        if p.tau_max <= p.tau_min {
            return Err(GasError::Parameters("tau_max must exceed tau_min".into()));
        }
        Ok(())
    }

    /// Sound speed band `[c(tau_max), c(tau_min)]`.
    pub fn c_band(&self) -> Result<(f64, f64), GasError> {
        Ok((evaluate(self, self.tau_max)?.c, evaluate(self, self.tau_min)?.c))
    }

    /// Enthalpy-like term of the pseudo-Bernoulli law,
    /// `K/(τ−b)^γ·((γ+1)/γ + b/(τ−b)) − 2a/τ`.
    pub fn enthalpy(&self, tau: f64) -> Result<f64, GasError> {
        if tau <= self.b {
            return Err(GasError::Domain { tau, b: self.b });
        }
        let d = tau - self.b;
        let g = self.gamma;
        let h = self.k / d.powf(g) * ((g + 1.0) / g + self.b / d) - 2.0 * self.a / tau;
        if h.is_finite() {
            Ok(h)
        } else {
            Err(GasError::Evaluation { tau })
        }
    }
}

/// Inequalities of the admissible regime that failed at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RegimeFlags {
    pub dp_nonnegative: bool,
    pub d2p_nonpositive: bool,
    pub kappa_nonpositive: bool,
    pub m_out_of_range: bool,
    pub dkappa_negative: bool,
}

impl RegimeFlags {
    pub fn any(&self) -> bool {
        self.dp_nonnegative
            || self.d2p_nonpositive
            || self.kappa_nonpositive
            || self.m_out_of_range
            || self.dkappa_negative
    }
}

/// Pointwise thermodynamic coefficients at one specific volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoEval {
    pub tau: f64,
    pub p: f64,
    pub dp: f64,
    pub d2p: f64,
    pub c: f64,
    pub kappa: f64,
    pub dkappa: f64,
    pub m: f64,
    pub mu2: f64,
    pub flags: RegimeFlags,
}

impl ThermoEval {
    /// `Ω(τ, ω) = m(τ) − tan²ω`.
    pub fn omega_coefficient(&self, omega: f64) -> Result<f64, GasError> {
        omega_coefficient(self, omega)
    }
}

/// Evaluates pressure, its derivatives and the coefficient functions at `tau`.
pub fn evaluate(params: &GasParameters, tau: f64) -> Result<ThermoEval, GasError> {
    let GasParameters { k, gamma: g, a, b, .. } = *params;
    if !(tau > b) {
        return Err(GasError::Domain { tau, b });
    }
    let d = tau - b;
    let q = k / d.powf(g + 1.0);
    let p = q - a / (tau * tau);
    let dp = -(g + 1.0) * q / d + 2.0 * a / tau.powi(3);
    let d2p = (g + 1.0) * (g + 2.0) * q / (d * d) - 6.0 * a / tau.powi(4);
    let d3p = -(g + 1.0) * (g + 2.0) * (g + 3.0) * q / d.powi(3) + 24.0 * a / tau.powi(5);
    let den = 2.0 * dp + tau * d2p;
    let dden = 3.0 * d2p + tau * d3p;
    let kappa = -2.0 * dp / den;
    let dkappa = (-2.0 * d2p * den + 2.0 * dp * dden) / (den * den);
    let m = (kappa - 1.0) / (kappa + 1.0);
    let mu2 = 1.0 / (1.0 + kappa);
    let c2 = -tau * tau * dp;
    let vals = [p, dp, d2p, kappa, dkappa, m, mu2, c2];
    if vals.iter().any(|x| !x.is_finite()) || c2 < 0.0 {
        return Err(GasError::Evaluation { tau });
    }
    let flags = RegimeFlags {
        dp_nonnegative: dp >= 0.0,
        d2p_nonpositive: d2p <= 0.0,
        kappa_nonpositive: !(kappa > 0.0) || den <= 0.0,
        m_out_of_range: !(m > 0.0 && m < 1.0),
        dkappa_negative: dkappa < -1e-12 * kappa.abs().max(1.0),
    };
    Ok(ThermoEval { tau, p, dp, d2p, c: c2.sqrt(), kappa, dkappa, m, mu2, flags })
}

/// `Ω = m − tan²ω` for `ω ∈ (0, π/2)`.
pub fn omega_coefficient(eval: &ThermoEval, omega: f64) -> Result<f64, GasError> {
    if !(omega > 0.0 && omega < std::f64::consts::FRAC_PI_2) {
        return Err(GasError::Omega { omega });
    }
    let t = omega.tan();
    Ok(eval.m - t * t)
}

/// Inverts the strictly decreasing map τ ↦ c(τ) on `[tau_min, tau_max]`.
///
/// Bisection brackets the root and safeguarded Newton steps refine it until
/// `|c(τ) − c|/c ≤ 1e−13`.
pub fn tau_from_c(params: &GasParameters, c: f64) -> Result<f64, GasError> {
    let mut lo = params.tau_min;
    let mut hi = params.tau_max;
    let c_hi = evaluate(params, lo)?.c;
    let c_lo = evaluate(params, hi)?.c;
    if !(c.is_finite() && c >= c_lo * (1.0 - 1e-14) && c <= c_hi * (1.0 + 1e-14)) {
        return Err(GasError::Range { c, lo: c_lo, hi: c_hi });
    }
    // Initial guess from the polytropic closed form, clamped into the bracket.
    let g = params.gamma;
    let guess = params.b + (params.k * (g + 1.0) / (c * c)).powf(1.0 / g);
    let mut tau = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    for _ in 0..INVERSION_MAX_ITER {
        let e = evaluate(params, tau)?;
        let r = e.c - c;
        if r.abs() <= INVERSION_TOL * c {
            return Ok(tau);
        }
        if r > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        // dc/dτ = −(2τ p′ + τ² p″)/(2c).
        let dc = -(2.0 * tau * e.dp + tau * tau * e.d2p) / (2.0 * e.c);
        let newton = tau - r / dc;
        tau = if dc < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * hi {
            return Ok(tau);
        }
    }
    Err(GasError::NoConvergence { c })
}

/// Outcome of sampling the regime inequalities over the admissible window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub pass: bool,
    pub samples: usize,
    /// First sampled τ at which an inequality failed.
    pub first_violation_tau: Option<f64>,
    pub first_violation: Option<String>,
    /// `κ′ ≡ 0` to round-off (polytropic limit); informational only.
    pub dkappa_identically_zero: bool,
    pub dkappa_min: f64,
    pub c_min: f64,
    pub c_max: f64,
}

/// Samples `p′ < 0`, `p″ > 0`, `2p′ + τp″ > 0`, `0 < m < 1` and `κ′ ≥ 0` on
/// `REGIME_SAMPLES` points of `[tau_min, tau_max]`.
pub fn validate_regime(params: &GasParameters) -> RegimeReport {
    let mut rep = RegimeReport {
        pass: true,
        samples: 0,
        first_violation_tau: None,
        first_violation: None,
        dkappa_identically_zero: true,
        dkappa_min: f64::INFINITY,
        c_min: f64::INFINITY,
        c_max: f64::NEG_INFINITY,
    };
    let fail = |rep: &mut RegimeReport, tau: Option<f64>, why: String| {
        if rep.pass {
            rep.pass = false;
            rep.first_violation_tau = tau;
            rep.first_violation = Some(why);
        }
    };
    if let Err(e) = params.check() {
        fail(&mut rep, None, e.to_string());
        return rep;
    }
    let mut prev_c = f64::INFINITY;
    for s in 0..REGIME_SAMPLES {
        let tau = params.tau_min
            + (params.tau_max - params.tau_min) * s as f64 / (REGIME_SAMPLES - 1) as f64;
        rep.samples += 1;
        let e = match evaluate(params, tau) {
            Ok(e) => e,
            Err(err) => {
                fail(&mut rep, Some(tau), err.to_string());
                continue;
            }
        };
        let f = e.flags;
        let why = if f.dp_nonnegative {
            Some("p' >= 0")
        } else if f.d2p_nonpositive {
            Some("p'' <= 0")
        } else if f.kappa_nonpositive {
            Some("2p' + tau p'' <= 0")
        } else if f.m_out_of_range {
            Some("m outside (0, 1)")
        } else if f.dkappa_negative {
            Some("kappa' < 0")
        } else if !(e.c < prev_c) {
            Some("c not strictly decreasing")
        } else {
            None
        };
        if let Some(w) = why {
            fail(&mut rep, Some(tau), w.to_string());
        }
        prev_c = e.c;
        rep.dkappa_min = rep.dkappa_min.min(e.dkappa);
        if e.dkappa.abs() > 1e-12 * e.kappa {
            rep.dkappa_identically_zero = false;
        }
        rep.c_min = rep.c_min.min(e.c);
        rep.c_max = rep.c_max.max(e.c);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.0, b: 0.0, tau_min: 0.3, tau_max: 5.0 }
    }

    fn vdw() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 }
    }

    #[test]
    fn ideal_gas_values() {
        let e = evaluate(&ideal(), 1.0).unwrap();
        assert!((e.p - 1.0).abs() < 1e-15);
        assert!((e.dp + 1.5).abs() < 1e-15);
        assert!((e.c - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((e.kappa - 4.0).abs() < 1e-14);
        assert!((e.m - 0.6).abs() < 1e-15);
        assert!((e.mu2 - 0.2).abs() < 1e-15);
        assert_eq!(e.dkappa, 0.0);
        let e4 = evaluate(&ideal(), 4.0).unwrap();
        assert!((e4.p - 0.125).abs() < 1e-16);
    }

    #[test]
    fn van_der_waals_pressure() {
        // 30-digit reference value of K/(0.95)^1.5 − 0.01.
        let e = evaluate(&vdw(), 1.0).unwrap();
        assert!((e.p - 1.069_977_212_721_214_8).abs() < 1e-15, "p = {}", e.p);
        assert!(!e.flags.any());
        assert!(e.dkappa > 0.0);
    }

    #[test]
    fn coefficient_identities() {
        let g = vdw();
        for s in 0..200 {
            let tau = 0.3 + 1.7 * s as f64 / 199.0;
            let e = evaluate(&g, tau).unwrap();
            assert!((e.c * e.c + tau * tau * e.dp).abs() < 1e-13 * e.c * e.c);
            assert!((e.m - (e.kappa - 1.0) / (e.kappa + 1.0)).abs() < 1e-15);
            assert!((e.mu2 * (1.0 + e.kappa) - 1.0).abs() < 1e-15);
            assert!(e.mu2 > 0.0 && e.mu2 < 0.5);
        }
    }

    #[test]
    fn dkappa_matches_finite_difference() {
        let g = vdw();
        for &tau in &[0.4, 0.8, 1.3, 1.9] {
            let h = 1e-5;
            let fd = (evaluate(&g, tau + h).unwrap().kappa - evaluate(&g, tau - h).unwrap().kappa)
                / (2.0 * h);
            let e = evaluate(&g, tau).unwrap();
            assert!((e.dkappa - fd).abs() < 1e-7 * e.dkappa.abs().max(1.0));
        }
    }

    #[test]
    fn omega_coefficient_examples() {
        let e = evaluate(&ideal(), 1.0).unwrap();
        let pi = std::f64::consts::PI;
        assert!((omega_coefficient(&e, pi / 4.0).unwrap() - (e.m - 1.0)).abs() < 1e-15);
        assert!((omega_coefficient(&e, pi / 3.0).unwrap() + 2.4).abs() < 1e-14);
        assert!(omega_coefficient(&e, pi / 2.0).is_err());
        for s in 1..100 {
            let w = pi / 4.0 + (pi / 4.0) * s as f64 / 100.0;
            assert!(omega_coefficient(&e, w).unwrap() < 0.0);
        }
    }

    #[test]
    fn inversion_round_trip() {
        for g in [ideal(), vdw()] {
            for s in 0..1000 {
                let tau = g.tau_min + (g.tau_max - g.tau_min) * s as f64 / 999.0;
                let c = evaluate(&g, tau).unwrap().c;
                let t = tau_from_c(&g, c).unwrap();
                assert!((t - tau).abs() <= 1e-12 * tau, "tau {tau} -> {t}");
            }
        }
    }

    #[test]
    fn inversion_closed_form_and_monotone() {
        let g = ideal();
        let t = tau_from_c(&g, 1.5f64.sqrt()).unwrap();
        assert!((t - 1.0).abs() < 1e-13);
        let (lo, hi) = vdw().c_band().unwrap();
        let mut prev = f64::INFINITY;
        for s in 0..300 {
            let c = lo + (hi - lo) * s as f64 / 299.0;
            let t = tau_from_c(&vdw(), c).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!(matches!(tau_from_c(&vdw(), hi * 1.01), Err(GasError::Range { .. })));
    }

    #[test]
    fn regime_reports() {
        let r = validate_regime(&ideal());
        assert!(r.pass);
        assert!(r.dkappa_identically_zero);
        assert!(validate_regime(&vdw()).pass);
        let mut bad = vdw();
        bad.tau_min = 0.04;
        assert!(!validate_regime(&bad).pass);
        // A strong attraction term makes p'' change sign while p' < 0.
        let strong = GasParameters { a: 1.0, tau_min: 1.9, tau_max: 2.0, ..vdw() };
        let r = validate_regime(&strong);
        assert!(!r.pass);
        assert_eq!(r.first_violation.as_deref(), Some("p'' <= 0"));
        let e = evaluate(&strong, r.first_violation_tau.unwrap()).unwrap();
        assert!(e.dp < 0.0 && e.d2p <= 0.0);
    }

    #[test]
    fn polytropic_limit_is_exact() {
        for &g in &[0.2, 0.5, 0.9] {
            let p = GasParameters { gamma: g, ..ideal() };
            for &tau in &[0.4, 1.0, 3.0] {
                let e = evaluate(&p, tau).unwrap();
                assert!((e.kappa - 2.0 / g).abs() < 1e-13);
                assert!((e.mu2 - g / (g + 2.0)).abs() < 1e-15);
                assert!((e.m - (2.0 - g) / (2.0 + g)).abs() < 1e-15);
            }
        }
    }
}

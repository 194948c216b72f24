//! State algebra in the self-similar plane: characteristic angles and
//! pseudo-velocities, characteristic slopes, the pseudo-Bernoulli potential and
//! the first-order characteristic relations.
//!
//! Directional derivatives are taken along the unit vectors
//! `∂̂₊ = (cos α, sin α)·∇` and `∂̂₋ = (cos β, sin β)·∇`. The physical
//! pseudo-velocity is `(U, V) = −c (cos σ, sin σ)/sin ω`, so that the
//! characteristic directions are the Mach lines of the pseudo-flow.

use crate::gas_model::{self, GasError, GasParameters, ThermoEval};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("omega = 0 gives a singular direction")]
    SingularDirection,
    #[error("pseudo-subsonic state: U^2 + V^2 = {q2} < c^2 = {c2}")]
    Subsonic { q2: f64, c2: f64 },
    #[error("vertical characteristic (U^2 = c^2); use the angle form")]
    VerticalCharacteristic,
    #[error("omega = {0} outside (0, pi/2)")]
    Omega(f64),
    #[error(transparent)]
    Gas(#[from] GasError),
}

/// Lifecycle of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    /// Goursat data sample.
    Boundary,
    /// Solved interior node below the sonic cutoff.
    Interior,
    /// Solved node at or above the sonic cutoff; not marched further.
    SonicFrontier,
    /// The local solve passed the sonic state; lies beyond the degenerate boundary.
    BeyondSonic,
    /// The local solve failed an invariant or did not converge.
    Failed,
    /// Never attempted because a parent was not marchable.
    Unreached,
}

impl NodeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeStatus::Boundary => "boundary",
            NodeStatus::Interior => "interior",
            NodeStatus::SonicFrontier => "sonic-frontier",
            NodeStatus::BeyondSonic => "beyond-sonic",
            NodeStatus::Failed => "failed",
            NodeStatus::Unreached => "unreached",
        }
    }

    pub fn parse(s: &str) -> Option<NodeStatus> {
        Some(match s {
            "boundary" => NodeStatus::Boundary,
            "interior" => NodeStatus::Interior,
            "sonic-frontier" => NodeStatus::SonicFrontier,
            "beyond-sonic" => NodeStatus::BeyondSonic,
            "failed" => NodeStatus::Failed,
            "unreached" => NodeStatus::Unreached,
            _ => return None,
        })
    }

    /// Holds a valid flow state (boundary, interior or frontier).
    pub fn is_solved(&self) -> bool {
        matches!(self, NodeStatus::Boundary | NodeStatus::Interior | NodeStatus::SonicFrontier)
    }

    /// Holds a valid state below the sonic cutoff, so marching continues from it.
    pub fn is_marchable(&self) -> bool {
        matches!(self, NodeStatus::Boundary | NodeStatus::Interior)
    }
}

/// One flow sample in the self-similar plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub xi: f64,
    pub eta: f64,
    /// Inclination of the positive characteristic.
    pub alpha: f64,
    /// Inclination of the negative characteristic.
    pub beta: f64,
    /// Sound speed.
    pub c: f64,
    /// Pseudo-potential.
    pub phi: f64,
    pub status: NodeStatus,
}

impl NodeState {
    /// A placeholder carrying no state.
    pub fn empty(status: NodeStatus) -> NodeState {
        NodeState {
            xi: f64::NAN,
            eta: f64::NAN,
            alpha: f64::NAN,
            beta: f64::NAN,
            c: f64::NAN,
            phi: f64::NAN,
            status,
        }
    }

    /// Builds the state at `(xi, eta)` of a flow with velocity `(u, v)` and
    /// sound speed `c`; `phi` is left at zero.
    pub fn from_velocity(
        xi: f64,
        eta: f64,
        u: f64,
        v: f64,
        c: f64,
        status: NodeStatus,
    ) -> Result<NodeState, KinematicsError> {
        let (uu, vv) = (u - xi, v - eta);
        let q = uu.hypot(vv);
        if q < c {
            return Err(KinematicsError::Subsonic { q2: q * q, c2: c * c });
        }
        let sigma = (-vv).atan2(-uu);
        let omega = (c / q).asin();
        Ok(NodeState { xi, eta, alpha: sigma + omega, beta: sigma - omega, c, phi: 0.0, status })
    }

    /// Half-angle `ω = (α − β)/2`.
    pub fn omega(&self) -> f64 {
        0.5 * (self.alpha - self.beta)
    }

    /// Mean inclination `σ = (α + β)/2`.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.alpha + self.beta)
    }

    /// Physical pseudo-velocity `(U, V)`.
    pub fn pseudo_velocity(&self) -> (f64, f64) {
        let s = self.c / self.omega().sin();
        let sg = self.sigma();
        (-s * sg.cos(), -s * sg.sin())
    }

    /// Flow velocity `(u, v) = (U + ξ, V + η)`.
    pub fn velocity(&self) -> (f64, f64) {
        let (u, v) = self.pseudo_velocity();
        (u + self.xi, v + self.eta)
    }

    pub fn tau(&self, params: &GasParameters) -> Result<f64, GasError> {
        gas_model::tau_from_c(params, self.c)
    }

    pub fn thermo(&self, params: &GasParameters) -> Result<ThermoEval, GasError> {
        gas_model::evaluate(params, self.tau(params)?)
    }

    /// Unit vector of the positive characteristic direction.
    pub fn dir_plus(&self) -> (f64, f64) {
        (self.alpha.cos(), self.alpha.sin())
    }

    /// Unit vector of the negative characteristic direction.
    pub fn dir_minus(&self) -> (f64, f64) {
        (self.beta.cos(), self.beta.sin())
    }

    pub fn distance(&self, other: &NodeState) -> f64 {
        (self.xi - other.xi).hypot(self.eta - other.eta)
    }
}

/// `(c cos σ / sin ω, c sin σ / sin ω)`, the pseudo-speed vector resolved along σ.
///
/// The physical pseudo-velocity of a [`NodeState`] is the negative of this vector.
pub fn pseudo_velocity(c: f64, sigma: f64, omega: f64) -> Result<(f64, f64), KinematicsError> {
    let s = omega.sin();
    if s == 0.0 || !(omega > 0.0 && omega <= std::f64::consts::FRAC_PI_2) {
        return Err(KinematicsError::SingularDirection);
    }
    Ok((c * sigma.cos() / s, c * sigma.sin() / s))
}

/// Characteristic slopes `λ± = (UV ± c√(U²+V²−c²))/(U²−c²)`.
pub fn characteristic_slopes(u: f64, v: f64, c: f64) -> Result<(f64, f64), KinematicsError> {
    let q2 = u * u + v * v;
    let disc = q2 - c * c;
    if disc < -1e-14 * c * c {
        return Err(KinematicsError::Subsonic { q2, c2: c * c });
    }
    let den = u * u - c * c;
    if den.abs() <= 1e-14 * c * c {
        return Err(KinematicsError::VerticalCharacteristic);
    }
    let r = c * disc.max(0.0).sqrt();
    Ok(((u * v + r) / den, (u * v - r) / den))
}

/// Pseudo-Bernoulli potential `φ = −[(U²+V²)/2 + h(τ)]` with the additive
/// constant taken as zero.
pub fn bernoulli_phi(tau: f64, u: f64, v: f64, params: &GasParameters) -> Result<f64, GasError> {
    Ok(-(0.5 * (u * u + v * v) + params.enthalpy(tau)?))
}

/// Directional derivatives of α, β, ω implied by given derivatives of c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicDerivatives {
    pub d_alpha_plus: f64,
    pub d_beta_plus: f64,
    pub d_alpha_minus: f64,
    pub d_beta_minus: f64,
    pub d_omega_plus: f64,
    pub d_omega_minus: f64,
}

/// First-order characteristic relations: given `∂̂₊c` and `∂̂₋c` at a state,
/// returns the corresponding derivatives of α, β and ω along both families:
///
/// ```text
/// ∂̂₊c  = −(μ²/tan ω)(c ∂̂₊β − 2 sin²ω),   c ∂̂₊α = Ω cos²ω (c ∂̂₊β − 2 sin²ω)
/// ∂̂₋c  =  (μ²/tan ω)(c ∂̂₋α + 2 sin²ω),   c ∂̂₋β = Ω cos²ω (c ∂̂₋α + 2 sin²ω)
/// c ∂̂±ω = tan ω (1 + κ sin²ω) ∂̂±c − sin²ω
/// ```
pub fn characteristic_relations(
    state: &NodeState,
    eval: &ThermoEval,
    dc_plus: f64,
    dc_minus: f64,
) -> Result<CharacteristicDerivatives, KinematicsError> {
    let w = state.omega();
    if !(w > 0.0 && w < std::f64::consts::FRAC_PI_2) {
        return Err(KinematicsError::Omega(w));
    }
    let c = state.c;
    let (s, co, t) = (w.sin(), w.cos(), w.tan());
    let om = eval.omega_coefficient(w)?;
    let mu2 = eval.mu2;
    let cb_plus = 2.0 * s * s - t * dc_plus / mu2;
    let ca_plus = om * co * co * (cb_plus - 2.0 * s * s);
    let ca_minus = t * dc_minus / mu2 - 2.0 * s * s;
    let cb_minus = om * co * co * (ca_minus + 2.0 * s * s);
    let cw = |dc: f64| (t * (1.0 + eval.kappa * s * s) * dc - s * s) / c;
    Ok(CharacteristicDerivatives {
        d_alpha_plus: ca_plus / c,
        d_beta_plus: cb_plus / c,
        d_alpha_minus: ca_minus / c,
        d_beta_minus: cb_minus / c,
        d_omega_plus: cw(dc_plus),
        d_omega_minus: cw(dc_minus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn ideal() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.0, b: 0.0, tau_min: 0.3, tau_max: 5.0 }
    }

    #[test]
    fn pseudo_velocity_examples() {
        let (u, v) = pseudo_velocity(1.0, 0.0, FRAC_PI_2).unwrap();
        assert!((u - 1.0).abs() < 1e-15 && v.abs() < 1e-15);
        let (u, v) = pseudo_velocity(1.0, FRAC_PI_2, FRAC_PI_4).unwrap();
        assert!(u.abs() < 1e-15 && (v - 2f64.sqrt()).abs() < 1e-15);
        assert!(pseudo_velocity(1.0, 0.3, 0.0).is_err());
        for k in 0..50 {
            let (c, sg, w) = (0.5 + 0.03 * k as f64, -1.0 + 0.07 * k as f64, 0.2 + 0.025 * k as f64);
            let (u, v) = pseudo_velocity(c, sg, w).unwrap();
            assert!((u * u + v * v - c * c / (w.sin() * w.sin())).abs() < 1e-12 * (u * u + v * v));
        }
    }

    #[test]
    fn slope_examples() {
        let (lp, lm) = characteristic_slopes(2.0, 0.0, 1.0).unwrap();
        let r = 3f64.sqrt() / 3.0;
        assert!((lp - r).abs() < 1e-15 && (lm + r).abs() < 1e-15);
        let (u, v) = (0.6, 0.8);
        let (lp, lm) = characteristic_slopes(u, v, 1.0).unwrap();
        assert!((lp - lm).abs() < 1e-12 && (lp - u * v / (u * u - 1.0)).abs() < 1e-12);
        assert!(characteristic_slopes(0.1, 0.1, 1.0).is_err());
        assert!(characteristic_slopes(1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn angles_round_trip_through_slopes() {
        for k in 0..40 {
            let s = NodeState {
                xi: 0.0,
                eta: 0.0,
                alpha: 1.7 + 0.02 * k as f64,
                beta: -0.05 * k as f64 / 4.0,
                c: 1.2,
                phi: 0.0,
                status: NodeStatus::Interior,
            };
            let (u, v) = s.pseudo_velocity();
            let (lp, lm) = characteristic_slopes(u, v, s.c).unwrap();
            let mut a = lp.atan();
            if a < 0.0 {
                a += std::f64::consts::PI;
            }
            assert!((a - s.alpha).abs() < 1e-10);
            assert!((lm.atan() - s.beta).abs() < 1e-10);
            assert!(1.0 / s.omega().sin() >= 1.0);
        }
    }

    #[test]
    fn from_velocity_inverts_pseudo_velocity() {
        let s = NodeState::from_velocity(0.4, 1.1, 0.1, -0.2, 1.0, NodeStatus::Boundary).unwrap();
        let (u, v) = s.velocity();
        assert!((u - 0.1).abs() < 1e-14 && (v + 0.2).abs() < 1e-14);
        assert!((s.pseudo_velocity().0.hypot(s.pseudo_velocity().1) - 1.0 / s.omega().sin()).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_examples() {
        let g = ideal();
        assert!((bernoulli_phi(1.0, 0.0, 0.0, &g).unwrap() + 3.0).abs() < 1e-15);
        let (u, v, tau): (f64, f64, f64) = (0.7, -0.4, 1.7);
        let c2 = 1.5 * tau.powf(-0.5);
        let phi = bernoulli_phi(tau, u, v, &g).unwrap();
        assert!((phi + (0.5 * (u * u + v * v) + c2 / 0.5)).abs() < 1e-14);
        for k in 0..16 {
            let th = 0.4 * k as f64;
            let (ur, vr) = (u * th.cos() - v * th.sin(), u * th.sin() + v * th.cos());
            assert!((bernoulli_phi(tau, ur, vr, &g).unwrap() - phi).abs() < 1e-14);
        }
        assert!(bernoulli_phi(0.0, 0.0, 0.0, &g).is_err());
    }

    #[test]
    fn relation_examples() {
        let g = ideal();
        let e = gas_model::evaluate(&g, 1.0).unwrap();
        let s = NodeState {
            xi: 0.0,
            eta: 0.0,
            alpha: FRAC_PI_2 + 0.6,
            beta: -0.2,
            c: e.c,
            phi: 0.0,
            status: NodeStatus::Interior,
        };
        let w = s.omega();
        let d = characteristic_relations(&s, &e, 0.0, 0.0).unwrap();
        assert!(d.d_alpha_plus.abs() < 1e-15);
        assert!((s.c * d.d_beta_plus - 2.0 * w.sin().powi(2)).abs() < 1e-14);
        assert!((d.d_omega_plus + w.sin().powi(2) / s.c).abs() < 1e-14);
        let d = characteristic_relations(&s, &e, 0.3, -0.2).unwrap();
        assert!(d.d_alpha_plus > 0.0);
        assert!((d.d_omega_plus - 0.5 * (d.d_alpha_plus - d.d_beta_plus)).abs() < 1e-13);
        assert!((d.d_omega_minus - 0.5 * (d.d_alpha_minus - d.d_beta_minus)).abs() < 1e-13);
        let at_third = NodeState { alpha: FRAC_PI_3, beta: -FRAC_PI_3, ..s };
        assert!(characteristic_relations(&at_third, &e, 0.1, -0.1).is_ok());
    }

    #[test]
    fn status_strings_round_trip() {
        for st in [
            NodeStatus::Boundary,
            NodeStatus::Interior,
            NodeStatus::SonicFrontier,
            NodeStatus::BeyondSonic,
            NodeStatus::Failed,
            NodeStatus::Unreached,
        ] {
            assert_eq!(NodeStatus::parse(st.as_str()), Some(st));
        }
    }
}

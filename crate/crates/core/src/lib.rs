//! Semi-hyperbolic patch solver for the two-dimensional self-similar isentropic
//! Euler equations with a van der Waals equation of state.
//!
//! The crate builds Goursat data from a planar rarefaction wave, marches a
//! characteristic lattice up to the sonic frontier, extracts the sonic curve,
//! certifies gradient bounds and regularity numerically, and detects envelope
//! formation in the adjacent simple-wave fan.

pub mod boundary_builder;
pub mod cli_runner;
pub mod envelope_detector;
pub mod flow_kinematics;
pub mod gas_model;
pub mod numerics;
pub mod patch_solver;
pub mod sonic_diagnostics;

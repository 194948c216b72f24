//! Characteristic-lattice Goursat solver: local predictor–corrector node
//! solves, anti-diagonal marching with a per-node sonic cutoff, and sonic-curve
//! extraction by extrapolation in `ζ = (π/2 − ω)²`.
//!
//! Node `(i, j)` lies on the positive characteristic seeded at BC sample `i`
//! and the negative characteristic seeded at AB sample `j`. Its positive
//! predecessor is `L = (i, j−1)`, its negative predecessor `R = (i−1, j)`; the
//! new node is reached from `L` along `+∂̂₊` and from `R` along `−∂̂₋`.

use crate::boundary_builder::GoursatData;
use crate::flow_kinematics::{NodeState, NodeStatus};
use crate::gas_model::{self, GasError, GasParameters};
use crate::numerics::fit_line;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use thiserror::Error;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PATCHWAVE_THREADS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("iterate passed the sonic state")]
    Sonic,
    #[error("fixed point did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("characteristic lines are parallel")]
    Parallel,
    #[error("wrong orientation: ds+ = {ds_plus}, ds- = {ds_minus}")]
    Orientation { ds_plus: f64, ds_minus: f64 },
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error(transparent)]
    Gas(#[from] GasError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver settings: {0}")]
    Settings(String),
    #[error("marching blocked: no interior node could be solved")]
    Blocked,
    #[error("lattice size {found:?} does not match the settings {expected:?}")]
    Shape { expected: (usize, usize), found: (usize, usize) },
    #[error("thread pool: {0}")]
    Threads(String),
    #[error("sonic extraction: {0}")]
    Extraction(String),
}

/// Numerical settings of the lattice solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Number of AB intervals.
    pub n_plus: usize,
    /// Number of BC intervals.
    pub n_minus: usize,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Nodes with `ω ≥ omega_stop` are frontier nodes and are not marched from.
    pub omega_stop: f64,
    /// Bound on the per-node disagreement of the two sound-speed predictions;
    /// exceedances are counted and reported.
    pub consistency_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            n_plus: 100,
            n_minus: 100,
            fp_tol: 1e-12,
            fp_max_iter: 50,
            omega_stop: FRAC_PI_2 - 0.05,
            consistency_tol: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn check(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::Settings(m));
        if !(self.fp_tol > 0.0 && self.fp_tol <= 1e-10) {
            return bad(format!("fp_tol = {} must lie in (0, 1e-10]", self.fp_tol));
        }
        if !(self.omega_stop > FRAC_PI_4 && self.omega_stop < FRAC_PI_2) {
            return bad(format!("omega_stop = {} must lie in (pi/4, pi/2)", self.omega_stop));
        }
        if self.n_plus < 8 || self.n_minus < 8 {
            return bad(format!("n_plus = {}, n_minus = {} must be >= 8", self.n_plus, self.n_minus));
        }
        if self.fp_max_iter == 0 {
            return bad("fp_max_iter must be positive".into());
        }
        if !(self.consistency_tol > 0.0) {
            return bad("consistency_tol must be positive".into());
        }
        Ok(())
    }
}

/// Bookkeeping of one local solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeReport {
    /// `|c₁ − c₃|`, disagreement of the two sound-speed predictions.
    pub residual: f64,
    pub iterations: usize,
    /// Signed arc length from `L` along `+∂̂₊` (positive).
    pub ds_plus: f64,
    /// Signed arc length from `R` along `+∂̂₋` (negative).
    pub ds_minus: f64,
}

/// Exact `∫ sin²ω ds` over a segment of signed length `ds` whenever `cot ω` is
/// affine in arc length, as it is along the straight characteristics of a
/// constant state; second order otherwise.
fn sin2_integral(ds: f64, wa: f64, wb: f64) -> f64 {
    let d = wa - wb;
    let ratio = if d.abs() < 1e-4 { 1.0 + d * d / 6.0 } else { d / d.sin() };
    ds * wa.sin() * wb.sin() * ratio
}

/// `(μ², Ω)` at sound speed `c` and half-angle `omega`.
fn coefficients(params: &GasParameters, c: f64, omega: f64) -> Result<(f64, f64), GasError> {
    let e = gas_model::evaluate(params, gas_model::tau_from_c(params, c)?)?;
    Ok((e.mu2, e.omega_coefficient(omega)?))
}

/// Solves one lattice node from its positive predecessor `l` and negative
/// predecessor `r` by fixed-point iteration with coefficients frozen at the
/// segment means.
///
/// Along each segment the discrete relations are
///
/// ```text
/// c(α_N − α_L) = Ω cos²ω (c(β_N − β_L) − 2S₊),   c_N − c_L = −(μ²/tan ω)(c(β_N − β_L) − 2S₊),
/// c(β_N − β_R) = Ω cos²ω (c(α_N − α_R) + 2S₋),   c_N − c_R = +(μ²/tan ω)(c(α_N − α_R) + 2S₋),
/// ```
///
/// with `S± = ∫ sin²ω ds` on the segment. α and β come from the angle
/// relations, `c_N` is the mean of the two sound-speed predictions, and the
/// pseudo-potential is integrated by the trapezoidal rule along `L → N`.
pub fn solve_node(
    params: &GasParameters,
    l: &NodeState,
    r: &NodeState,
    settings: &SolverSettings,
) -> Result<(NodeState, NodeReport), SolveError> {
    let (mut an, mut bn, mut cn) = (l.alpha, r.beta, 0.5 * (l.c + r.c));
    let mut max_omega = l.omega().max(r.omega());
    let sonic_or = |e: SolveError, max_omega: f64| {
        if max_omega >= settings.omega_stop {
            SolveError::Sonic
        } else {
            e
        }
    };
    let (wl, wr) = (l.omega(), r.omega());
    for it in 1..=settings.fp_max_iter {
        let ap = 0.5 * (l.alpha + an);
        let bm = 0.5 * (r.beta + bn);
        let (d1, d2) = ((ap.cos(), ap.sin()), (bm.cos(), bm.sin()));
        // L + t d1 = R + u d2.
        let det = -d1.0 * d2.1 + d2.0 * d1.1;
        if det.abs() < 1e-14 {
            return Err(sonic_or(SolveError::Parallel, max_omega));
        }
        let (rx, ry) = (r.xi - l.xi, r.eta - l.eta);
        let t = (-rx * d2.1 + d2.0 * ry) / det;
        let u = (d1.0 * ry - d1.1 * rx) / det;
        let wn = 0.5 * (an - bn);
        let cp = 0.5 * (l.c + cn);
        let cm = 0.5 * (r.c + cn);
        let op = 0.5 * (wl + wn);
        let om = 0.5 * (wr + wn);
        let ((mup, omp), (mum, omm)) = match (coefficients(params, cp, op), coefficients(params, cm, om)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return Err(sonic_or(e.into(), max_omega)),
        };
        let sp = sin2_integral(t, wl, wn);
        let sm = sin2_integral(u, wr, wn);
        let p = omp * op.cos().powi(2);
        let q = omm * om.cos().powi(2);
        let r1 = l.alpha - p * l.beta - 2.0 * p * sp / cp;
        let r2 = r.beta - q * r.alpha + 2.0 * q * sm / cm;
        let dd = 1.0 - p * q;
        let a_new = (r1 + p * r2) / dd;
        let b_new = (r2 + q * r1) / dd;
        let c1 = l.c - (mup / op.tan()) * (cp * (b_new - l.beta) - 2.0 * sp);
        let c3 = r.c + (mum / om.tan()) * (cm * (a_new - r.alpha) + 2.0 * sm);
        let c_new = 0.5 * (c1 + c3);
        let change = (a_new - an).abs().max((b_new - bn).abs()).max((c_new - cn).abs());
        (an, bn, cn) = (a_new, b_new, c_new);
        let w = 0.5 * (an - bn);
        if !w.is_finite() || !cn.is_finite() {
            return Err(sonic_or(SolveError::Invariant("non-finite iterate".into()), max_omega));
        }
        if w >= FRAC_PI_2 {
            return Err(SolveError::Sonic);
        }
        max_omega = max_omega.max(w);
        if change < settings.fp_tol {
            let xi = l.xi + t * d1.0;
            let eta = l.eta + t * d1.1;
            return finish(params, l, xi, eta, (an, bn, cn), NodeReport {
                residual: (c1 - c3).abs(),
                iterations: it,
                ds_plus: t,
                ds_minus: u,
            });
        }
    }
    Err(sonic_or(SolveError::NoConvergence(settings.fp_max_iter), max_omega))
}

fn finish(
    params: &GasParameters,
    l: &NodeState,
    xi: f64,
    eta: f64,
    (alpha, beta, c): (f64, f64, f64),
    rep: NodeReport,
) -> Result<(NodeState, NodeReport), SolveError> {
    if !(rep.ds_plus > 0.0 && rep.ds_minus < 0.0) {
        return Err(SolveError::Orientation { ds_plus: rep.ds_plus, ds_minus: rep.ds_minus });
    }
    let mut n = NodeState { xi, eta, alpha, beta, c, phi: 0.0, status: NodeStatus::Interior };
    let w = n.omega();
    if !(w > FRAC_PI_4 && w < FRAC_PI_2) {
        return Err(SolveError::Invariant(format!("omega = {w} outside (pi/4, pi/2)")));
    }
    let (lo, hi) = params.c_band()?;
    if !(c > lo && c < hi) {
        return Err(SolveError::Invariant(format!("c = {c} outside the admissible band ({lo}, {hi})")));
    }
    let (ul, vl) = l.pseudo_velocity();
    let (un, vn) = n.pseudo_velocity();
    n.phi = l.phi + 0.5 * (ul + un) * (xi - l.xi) + 0.5 * (vl + vn) * (eta - l.eta);
    Ok((n, rep))
}

/// Characteristic lattice with per-node status and solve bookkeeping.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    /// Largest BC index `i`.
    pub n_minus: usize,
    /// Largest AB index `j`.
    pub n_plus: usize,
    nodes: Vec<NodeState>,
    residual: Vec<f64>,
    iterations: Vec<usize>,
    ds_plus: Vec<f64>,
    ds_minus: Vec<f64>,
    /// Reason for every failed or beyond-sonic node.
    pub failures: Vec<((usize, usize), String)>,
}

/// Status histogram of a lattice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub boundary: usize,
    pub interior: usize,
    pub sonic_frontier: usize,
    pub beyond_sonic: usize,
    pub failed: usize,
    pub unreached: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.boundary + self.interior + self.sonic_frontier + self.beyond_sonic + self.failed + self.unreached
    }
}

impl PatchGrid {
    /// An all-unreached lattice of `(n_minus + 1) × (n_plus + 1)` nodes.
    pub fn new(n_minus: usize, n_plus: usize) -> PatchGrid {
        let len = (n_minus + 1) * (n_plus + 1);
        PatchGrid {
            n_minus,
            n_plus,
            nodes: vec![NodeState::empty(NodeStatus::Unreached); len],
            residual: vec![0.0; len],
            iterations: vec![0; len],
            ds_plus: vec![f64::NAN; len],
            ds_minus: vec![f64::NAN; len],
            failures: Vec::new(),
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        assert!(i <= self.n_minus && j <= self.n_plus, "node ({i}, {j}) out of range");
        i * (self.n_plus + 1) + j
    }

    pub fn node(&self, i: usize, j: usize) -> &NodeState {
        &self.nodes[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, node: NodeState) {
        let k = self.idx(i, j);
        self.nodes[k] = node;
    }

    pub fn set_report(&mut self, i: usize, j: usize, rep: &NodeReport) {
        let k = self.idx(i, j);
        self.residual[k] = rep.residual;
        self.iterations[k] = rep.iterations;
        self.ds_plus[k] = rep.ds_plus;
        self.ds_minus[k] = rep.ds_minus;
    }

    pub fn status(&self, i: usize, j: usize) -> NodeStatus {
        self.node(i, j).status
    }

    /// Consistency residual `|c₁ − c₃|` of a solved node (0 on boundary data).
    pub fn residual(&self, i: usize, j: usize) -> f64 {
        self.residual[self.idx(i, j)]
    }

    pub fn iterations(&self, i: usize, j: usize) -> usize {
        self.iterations[self.idx(i, j)]
    }

    /// Segment lengths `(L→N, R→N)` of a solved interior node.
    pub fn segment_lengths(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.idx(i, j);
        (self.ds_plus[k], -self.ds_minus[k])
    }

    /// Iterates `(i, j, node)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &NodeState)> {
        let w = self.n_plus + 1;
        self.nodes.iter().enumerate().map(move |(k, n)| (k / w, k % w, n))
    }

    pub fn counts(&self) -> StatusCounts {
        let mut c = StatusCounts::default();
        for n in &self.nodes {
            match n.status {
                NodeStatus::Boundary => c.boundary += 1,
                NodeStatus::Interior => c.interior += 1,
                NodeStatus::SonicFrontier => c.sonic_frontier += 1,
                NodeStatus::BeyondSonic => c.beyond_sonic += 1,
                NodeStatus::Failed => c.failed += 1,
                NodeStatus::Unreached => c.unreached += 1,
            }
        }
        c
    }

    /// Largest consistency residual over solved nodes.
    pub fn max_residual(&self) -> f64 {
        self.iter()
            .filter(|(_, _, n)| n.status.is_solved())
            .map(|(i, j, _)| self.residual(i, j))
            .fold(0.0, f64::max)
    }

    /// Largest arc length of any solved lattice segment `(L→N, R→N)`.
    pub fn max_segment_lengths(&self) -> (f64, f64) {
        let mut m = (0.0_f64, 0.0_f64);
        for (i, j, n) in self.iter() {
            if n.status == NodeStatus::Interior || n.status == NodeStatus::SonicFrontier {
                let (a, b) = self.segment_lengths(i, j);
                m = (m.0.max(a), m.1.max(b));
            }
        }
        m
    }
}

/// Worker-thread cap from the environment, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)
}

fn boundary_status(node: &NodeState, settings: &SolverSettings) -> NodeStatus {
    if node.omega() >= settings.omega_stop {
        NodeStatus::SonicFrontier
    } else {
        NodeStatus::Boundary
    }
}

/// Fills the lattice anti-diagonal by anti-diagonal. Nodes on one diagonal
/// depend only on the previous one, so they are solved concurrently unless
/// `serial` is set; the result is identical either way.
pub fn march(
    params: &GasParameters,
    data: &GoursatData,
    settings: &SolverSettings,
    serial: bool,
) -> Result<PatchGrid, SolverError> {
    settings.check()?;
    let found = (data.bc.len() - 1, data.ab.len() - 1);
    if found != (settings.n_minus, settings.n_plus) {
        return Err(SolverError::Shape { expected: (settings.n_minus, settings.n_plus), found });
    }
    let run = || march_inner(params, data, settings, serial);
    let grid = if serial {
        run()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = thread_cap() {
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| SolverError::Threads(e.to_string()))?.install(run)
    };
    if !grid.iter().any(|(i, j, n)| i > 0 && j > 0 && n.status.is_solved()) {
        return Err(SolverError::Blocked);
    }
    Ok(grid)
}

fn march_inner(params: &GasParameters, data: &GoursatData, s: &SolverSettings, serial: bool) -> PatchGrid {
    let (nm, np) = (s.n_minus, s.n_plus);
    let mut g = PatchGrid::new(nm, np);
    for (j, n) in data.ab.samples.iter().enumerate() {
        let mut n = *n;
        n.status = boundary_status(&n, s);
        g.set(0, j, n);
    }
    for (i, n) in data.bc.samples.iter().enumerate().skip(1) {
        let mut n = *n;
        n.status = boundary_status(&n, s);
        g.set(i, 0, n);
    }
    for d in 2..=(nm + np) {
        let lo = d.saturating_sub(np).max(1);
        let hi = (d - 1).min(nm);
        if lo > hi {
            continue;
        }
        let solve = |i: usize| {
            let j = d - i;
            let (l, r) = (g.node(i, j - 1), g.node(i - 1, j));
            if !(l.status.is_marchable() && r.status.is_marchable()) {
                return (i, j, None);
            }
            (i, j, Some(solve_node(params, l, r, s)))
        };
        let results: Vec<_> = if serial {
            (lo..=hi).map(solve).collect()
        } else {
            (lo..=hi).into_par_iter().map(solve).collect()
        };
        for (i, j, res) in results {
            match res {
                None => {}
                Some(Ok((mut n, rep))) => {
                    n.status = if n.omega() >= s.omega_stop {
                        NodeStatus::SonicFrontier
                    } else {
                        NodeStatus::Interior
                    };
                    g.set(i, j, n);
                    g.set_report(i, j, &rep);
                }
                Some(Err(e)) => {
                    let status = if e == SolveError::Sonic { NodeStatus::BeyondSonic } else { NodeStatus::Failed };
                    g.set(i, j, NodeState::empty(status));
                    g.failures.push(((i, j), e.to_string()));
                }
            }
        }
    }
    g
}

/// One extrapolated sonic point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonicPoint {
    /// Positive-family index (BC sample) the point was extracted from.
    pub i: usize,
    pub xi: f64,
    pub eta: f64,
    pub c: f64,
    pub sigma: f64,
    /// Largest RMS misfit of the affine fits.
    pub fit_residual: f64,
}

/// Sonic curve assembled from A towards C.
#[derive(Debug, Clone, Default)]
pub struct SonicCurve {
    pub points: Vec<SonicPoint>,
    /// Families without enough near-sonic nodes, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Number of near-sonic nodes used per family.
pub const SONIC_FIT_NODES: usize = 3;

/// Extrapolates each positive family to `ω = π/2`: the last three solved
/// nodes below sonic are fitted affinely in `ζ = (π/2 − ω)²` and the fits are
/// evaluated at `ζ = 0`. A family is used only if its last node lies within
/// twice the cutoff margin of sonic.
pub fn extract_sonic(grid: &PatchGrid, settings: &SolverSettings) -> Result<SonicCurve, SolverError> {
    let margin = 2.0 * (FRAC_PI_2 - settings.omega_stop);
    let mut curve = SonicCurve::default();
    for i in 0..=grid.n_minus {
        let fam: Vec<&NodeState> = (0..=grid.n_plus)
            .map(|j| grid.node(i, j))
            .filter(|n| n.status.is_solved() && n.omega() < FRAC_PI_2)
            .collect();
        if fam.len() < SONIC_FIT_NODES {
            curve.skipped.push((i, format!("{} usable nodes", fam.len())));
            continue;
        }
        let last = &fam[fam.len() - SONIC_FIT_NODES..];
        let top = last[SONIC_FIT_NODES - 1].omega();
        if top < FRAC_PI_2 - margin {
            curve.skipped.push((i, format!("last omega {top} too far from sonic")));
            continue;
        }
        let z: Vec<f64> = last.iter().map(|n| (FRAC_PI_2 - n.omega()).powi(2)).collect();
        let mut vals = [0.0; 4];
        let mut res: f64 = 0.0;
        let fields: [fn(&NodeState) -> f64; 4] = [|n| n.xi, |n| n.eta, |n| n.c, |n| n.sigma()];
        let mut ok = true;
        for (k, f) in fields.iter().enumerate() {
            let y: Vec<f64> = last.iter().map(|n| f(n)).collect();
            match fit_line(&z, &y) {
                Some((c0, _, rms)) => {
                    vals[k] = c0;
                    res = res.max(rms);
                }
                None => ok = false,
            }
        }
        if !ok {
            curve.skipped.push((i, "degenerate fit".into()));
            continue;
        }
        curve.points.push(SonicPoint { i, xi: vals[0], eta: vals[1], c: vals[2], sigma: vals[3], fit_residual: res });
    }
    if curve.points.is_empty() {
        return Err(SolverError::Extraction("no family reached the sonic cutoff".into()));
    }
    Ok(curve)
}

/// Nodes used for each extracted sonic point, `(i, j)` per family.
pub fn sonic_fit_nodes(grid: &PatchGrid, curve: &SonicCurve) -> Vec<Vec<(usize, usize)>> {
    curve
        .points
        .iter()
        .map(|p| {
            let js: Vec<usize> = (0..=grid.n_plus)
                .filter(|&j| {
                    let n = grid.node(p.i, j);
                    n.status.is_solved() && n.omega() < FRAC_PI_2
                })
                .collect();
            js[js.len() - SONIC_FIT_NODES..].iter().map(|&j| (p.i, j)).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_builder::{
        default_goursat, simple_wave_goursat, wave_node, BcSettings, RarefactionWave, Sampling,
    };

    fn gas() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 }
    }

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn constant_state_is_reproduced() {
        let g = gas();
        let mk = |x: f64, y: f64| NodeState::from_velocity(x, y, 0.0, 0.0, 1.2, NodeStatus::Boundary).unwrap();
        let b = mk(-0.6, 1.3);
        let (px, py) = b.dir_plus();
        let (mx, my) = b.dir_minus();
        let l = mk(b.xi - 0.07 * mx, b.eta - 0.07 * my);
        let r = mk(b.xi + 0.05 * px, b.eta + 0.05 * py);
        let (n, rep) = solve_node(&g, &l, &r, &settings()).unwrap();
        let exact = mk(n.xi, n.eta);
        assert!((n.alpha - exact.alpha).abs() < 1e-13);
        assert!((n.beta - exact.beta).abs() < 1e-13);
        assert!((n.c - 1.2).abs() < 1e-13);
        assert!(rep.residual < 1e-13);
        let (u, v) = n.velocity();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
    }

    #[test]
    fn simple_wave_local_error_is_small_and_converges() {
        let w = RarefactionWave::new(gas(), 2.0, 1.0).unwrap();
        let eta0 = 0.5 * (w.eta1 + w.eta4);
        let err = |h: f64| {
            let b = wave_node(&w, 0.8, eta0, NodeStatus::Boundary).unwrap();
            let (px, py) = b.dir_plus();
            // R on the positive characteristic (straight to first order), L on the level line.
            let r = wave_node(&w, b.xi + h * px, b.eta + h * py, NodeStatus::Boundary).unwrap();
            let l = wave_node(&w, b.xi - h, b.eta, NodeStatus::Boundary).unwrap();
            let (n, rep) = solve_node(&w.params, &l, &r, &settings()).unwrap();
            let exact = wave_node(&w, n.xi, n.eta, NodeStatus::Interior).unwrap();
            ((n.c - exact.c).abs().max((n.alpha - exact.alpha).abs()), rep.residual)
        };
        let (e1, r1) = err(0.02);
        let (e2, r2) = err(0.01);
        assert!(e1 < 1e-4, "{e1}");
        assert!(e1 / e2 > 3.5, "error ratio {}", e1 / e2);
        assert!(r1 / r2 > 3.5, "residual ratio {}", r1 / r2);
    }

    #[test]
    fn settings_are_validated() {
        assert!(settings().check().is_ok());
        assert!(SolverSettings { fp_tol: 1e-8, ..settings() }.check().is_err());
        assert!(SolverSettings { omega_stop: 1.6, ..settings() }.check().is_err());
        assert!(SolverSettings { n_plus: 4, ..settings() }.check().is_err());
    }

    fn default_run(n: usize, serial: bool) -> (PatchGrid, SolverSettings) {
        let w = RarefactionWave::new(gas(), 2.0, 1.0).unwrap();
        let data = default_goursat(&w, &BcSettings::default(), n, n, Sampling::default()).unwrap();
        let s = SolverSettings { n_plus: n, n_minus: n, ..settings() };
        (march(&w.params, &data, &s, serial).unwrap(), s)
    }

    #[test]
    fn march_counts_and_monotone_omega() {
        let (g, _) = default_run(40, true);
        let c = g.counts();
        assert_eq!(c.total(), 41 * 41);
        assert!(c.interior > 0 && c.sonic_frontier > 0);
        for i in 0..=g.n_minus {
            let mut prev = f64::NEG_INFINITY;
            for j in 0..=g.n_plus {
                let n = g.node(i, j);
                if !n.status.is_solved() {
                    break;
                }
                assert!(n.omega() > prev, "omega not increasing at ({i}, {j})");
                prev = n.omega();
            }
        }
    }

    #[test]
    fn parallel_march_matches_serial() {
        let (a, _) = default_run(24, true);
        let (b, _) = default_run(24, false);
        for ((_, _, x), (_, _, y)) in a.iter().zip(b.iter()) {
            assert_eq!(x.status, y.status);
            if x.status.is_solved() {
                assert_eq!(x.c.to_bits(), y.c.to_bits());
                assert_eq!(x.alpha.to_bits(), y.alpha.to_bits());
            }
        }
    }

    #[test]
    fn sonic_extraction_near_a_and_in_band() {
        let w = RarefactionWave::new(gas(), 2.0, 1.0).unwrap();
        let (g, s) = default_run(80, true);
        let curve = extract_sonic(&g, &s).unwrap();
        let a = curve.points.iter().find(|p| p.i == 0).expect("family through A");
        assert!(a.xi.abs() < 5e-3 && (a.eta - w.eta1).abs() < 1e-6, "{a:?}");
        for p in &curve.points {
            assert!(p.c > w.c4 && p.c < w.c1 + 1e-3, "{p:?}");
        }
    }

    #[test]
    fn manufactured_sonic_line_is_recovered() {
        // ω = π/2 − √d with d the distance below the line η = 1 + 0.2ξ.
        let n = 10;
        let mut g = PatchGrid::new(n, n);
        let (a, b) = (0.2_f64, 1.0_f64);
        for i in 0..=n {
            for j in 0..=n {
                let xi = i as f64 * 0.1;
                let line = b + a * xi;
                let d = 0.02 * (n - j) as f64 + 1e-3;
                let eta = line - d * (1.0 + a * a).sqrt();
                let w = FRAC_PI_2 - d.sqrt();
                let node = NodeState { xi, eta, alpha: 0.3 + w, beta: 0.3 - w, c: 1.0, phi: 0.0, status: NodeStatus::Interior };
                g.set(i, j, node);
            }
        }
        let s = SolverSettings { omega_stop: FRAC_PI_2 - 0.04, ..settings() };
        let curve = extract_sonic(&g, &s).unwrap();
        assert_eq!(curve.points.len(), n + 1);
        for p in &curve.points {
            assert!((p.eta - (b + a * p.xi)).abs() < 1e-12, "{p:?}");
            assert!((p.sigma - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn simple_wave_patch_matches_closed_form() {
        let w = RarefactionWave::new(gas(), 2.0, 1.0).unwrap();
        let eta_b = w.eta4 + 0.3 * (w.eta1 - w.eta4);
        let n = 16;
        let data = simple_wave_goursat(&w, (0.9, eta_b), 0.3, 0.3, n, n, Sampling::Uniform).unwrap();
        let s = SolverSettings { n_plus: n, n_minus: n, ..settings() };
        let g = march(&w.params, &data, &s, true).unwrap();
        assert_eq!(g.counts().interior, n * n);
        let (mut ec, mut eb) = (0.0_f64, 0.0_f64);
        for (_, _, node) in g.iter() {
            ec = ec.max((node.c - w.c_of_eta(node.eta).unwrap()).abs());
            eb = eb.max(node.beta.abs());
        }
        assert!(ec < 1e-5 && eb < 1e-4, "{ec} {eb}");
    }
}

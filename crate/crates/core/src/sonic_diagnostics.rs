//! Numerical certification of a solved patch: sign invariants, gradient
//! bounds, the partial hodograph map `(z, t) = (φ, cos ω)` with its Jacobian
//! and derivative identities, injectivity, Hölder regularity at the sonic
//! curve, and residuals of the second-order characteristic decompositions.
//!
//! Derivatives are one-sided differences along the lattice's own
//! characteristic lines; the segment between a node and a lattice neighbour is
//! straight by construction, so chord lengths are the exact step lengths.

use crate::flow_kinematics::{NodeState, NodeStatus};
use crate::gas_model::{self, GasParameters, ThermoEval};
use crate::numerics::{fit_line, solve3};
use crate::patch_solver::{extract_sonic, PatchGrid, SolverSettings, SonicCurve};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("Hölder estimate: {0}")]
    Holder(String),
    #[error("thermodynamic evaluation failed at node ({0}, {1})")]
    Thermo(usize, usize),
}

/// Tunables of the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsSettings {
    /// Slack of the upper and lower gradient bounds.
    pub bound_slack: f64,
    /// Stencils touching a node with larger ω are excluded from the
    /// derivative-identity fits and the decomposition residuals.
    pub interior_omega_cap: f64,
    /// Minimum normalized singular-value ratio of a fit stencil.
    pub min_stencil_conditioning: f64,
    /// Separation window of the Hölder fit as fractions of the diameter.
    pub holder_window: (f64, f64),
    pub holder_min_pairs: usize,
    pub holder_min_decades: f64,
    /// Number of ω-levels scanned for monotonicity of φ.
    pub level_count: usize,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings {
            bound_slack: 0.05,
            interior_omega_cap: 1.3,
            min_stencil_conditioning: 0.05,
            holder_window: (1e-4, 1e-2),
            holder_min_pairs: 50,
            holder_min_decades: 1.5,
            level_count: 24,
        }
    }
}

/// A node that can be differenced: solved and strictly below sonic.
pub fn is_accepted(n: &NodeState) -> bool {
    n.status.is_solved() && n.omega() < FRAC_PI_2
}

fn thermo(params: &GasParameters, n: &NodeState) -> Option<ThermoEval> {
    gas_model::tau_from_c(params, n.c).and_then(|t| gas_model::evaluate(params, t)).ok()
}

/// One-sided characteristic derivatives at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDerivatives {
    pub dc_plus: f64,
    pub dc_minus: f64,
    pub dalpha_plus: f64,
    pub dalpha_minus: f64,
    pub dbeta_plus: f64,
    pub dbeta_minus: f64,
    pub domega_plus: f64,
    pub domega_minus: f64,
    pub dphi_plus: f64,
    pub dphi_minus: f64,
}

fn diff(a: &NodeState, b: &NodeState, sign: f64) -> [f64; 5] {
    // Difference quotient from a to b, b reached along sign·(direction).
    let d = sign * a.distance(b);
    [
        (b.c - a.c) / d,
        (b.alpha - a.alpha) / d,
        (b.beta - a.beta) / d,
        (b.omega() - a.omega()) / d,
        (b.phi - a.phi) / d,
    ]
}

/// Derivatives along `∂̂₊` (lattice index `j`) and `∂̂₋` (index `i`, traversed
/// along `−∂̂₋`), preferring the backward neighbour and falling back to the
/// forward one.
pub fn node_derivatives(grid: &PatchGrid, i: usize, j: usize) -> Option<NodeDerivatives> {
    let n = grid.node(i, j);
    if !is_accepted(n) {
        return None;
    }
    let ok = |i: usize, j: usize| i <= grid.n_minus && j <= grid.n_plus && is_accepted(grid.node(i, j));
    let p = if j > 0 && ok(i, j - 1) {
        diff(grid.node(i, j - 1), n, 1.0)
    } else if ok(i, j + 1) {
        diff(n, grid.node(i, j + 1), 1.0)
    } else {
        return None;
    };
    let m = if i > 0 && ok(i - 1, j) {
        diff(grid.node(i - 1, j), n, -1.0)
    } else if ok(i + 1, j) {
        diff(n, grid.node(i + 1, j), -1.0)
    } else {
        return None;
    };
    Some(NodeDerivatives {
        dc_plus: p[0],
        dc_minus: m[0],
        dalpha_plus: p[1],
        dalpha_minus: m[1],
        dbeta_plus: p[2],
        dbeta_minus: m[2],
        domega_plus: p[3],
        domega_minus: m[3],
        dphi_plus: p[4],
        dphi_minus: m[4],
    })
}

/// Sign-invariant check result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub checked: usize,
    /// `(i, j, failed conditions)` per violating node.
    pub violations: Vec<(usize, usize, Vec<String>)>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.violations.is_empty()
    }
}

/// Checks at every solved interior node, against both lattice parents:
/// `ω ∈ (π/4, π/2)`, `∂₊c > 0`, `−∂₋c > 0`, `∂₊α > 0`, `−∂₋α > 0`,
/// `∂₊β < 0`, `−∂₋β < 0`; `∂₊ω > 0` is checked as well.
pub fn check_invariants(grid: &PatchGrid) -> InvariantReport {
    let mut rep = InvariantReport::default();
    for (i, j, n) in grid.iter() {
        if i == 0 || j == 0 || !matches!(n.status, NodeStatus::Interior | NodeStatus::SonicFrontier) {
            continue;
        }
        let (l, r) = (grid.node(i, j - 1), grid.node(i - 1, j));
        rep.checked += 1;
        let w = n.omega();
        let checks = [
            (w > FRAC_PI_4 && w < FRAC_PI_2, "omega in (pi/4, pi/2)"),
            (n.c > l.c, "d+c > 0"),
            (n.c > r.c, "-d-c > 0"),
            (n.alpha > l.alpha, "d+alpha > 0"),
            (n.alpha > r.alpha, "-d-alpha > 0"),
            (n.beta < l.beta, "d+beta < 0"),
            (n.beta < r.beta, "-d-beta < 0"),
            (w > l.omega(), "d+omega > 0"),
        ];
        let bad: Vec<String> = checks.iter().filter(|c| !c.0).map(|c| c.1.to_string()).collect();
        if !bad.is_empty() {
            rep.violations.push((i, j, bad));
        }
    }
    rep
}

/// Hodograph quantities at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HodographNode {
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub t: f64,
    /// `(1 + κ sin²ω)(∂₊c − ∂₋c)/(2 cos ω)`.
    pub jacobian: f64,
    /// `∂₊c/c`.
    pub r: f64,
    /// `∂₋c/c`.
    pub s: f64,
    /// `(R + S)/t`.
    pub w: f64,
}

/// Hodograph field and its summary checks.
#[derive(Debug, Clone, Default)]
pub struct HodographField {
    pub nodes: Vec<HodographNode>,
    /// Accepted nodes for which no derivative stencil was available.
    pub missing: Vec<(usize, usize)>,
}

/// Derivative-identity fit at interior nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityFit {
    pub fitted: usize,
    /// Stencils skipped as degenerate.
    pub degenerate: usize,
    pub max_rel_error_cz: f64,
    pub max_rel_error_ct: f64,
    pub median_rel_error_cz: f64,
    pub median_rel_error_ct: f64,
}

/// Hodograph summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HodographSummary {
    pub nodes: usize,
    pub missing: usize,
    pub jacobian_min: f64,
    pub jacobian_max: f64,
    pub jacobian_single_signed: bool,
    /// `t ∈ (0, √2/2)` at every interior node.
    pub t_in_range: bool,
    /// `R > 0` and `S < 0` at every node.
    pub rs_signs: bool,
    /// `sup |W|`.
    pub m1: f64,
    pub identities: IdentityFit,
}

/// Builds `z = φ`, `t = cos ω`, `J`, `R`, `S`, `W` at every accepted node.
pub fn hodograph_map(params: &GasParameters, grid: &PatchGrid) -> HodographField {
    let mut f = HodographField::default();
    for (i, j, n) in grid.iter() {
        if !is_accepted(n) {
            continue;
        }
        let (Some(d), Some(e)) = (node_derivatives(grid, i, j), thermo(params, n)) else {
            f.missing.push((i, j));
            continue;
        };
        let w = n.omega();
        let t = w.cos();
        let jac = (1.0 + e.kappa * w.sin().powi(2)) * (d.dc_plus - d.dc_minus) / (2.0 * t);
        let (r, s) = (d.dc_plus / n.c, d.dc_minus / n.c);
        f.nodes.push(HodographNode { i, j, z: n.phi, t, jacobian: jac, r, s, w: (r + s) / t });
    }
    f
}

/// `c_t = −ct/((1 + κ(1−t²))(1−t²))` in the hodograph plane.
pub fn exact_ct(c: f64, t: f64, kappa: f64) -> f64 {
    let s2 = 1.0 - t * t;
    -c * t / ((1.0 + kappa * s2) * s2)
}

/// `c_z = (t² − 1)/(c(1 + κ(1−t²)))` in the hodograph plane.
pub fn exact_cz(c: f64, t: f64, kappa: f64) -> f64 {
    (t * t - 1.0) / (c * (1.0 + kappa * (1.0 - t * t)))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Fits `c ≈ c₀ + c_z Δz + c_t Δt` by least squares over 3×3 stencils of
/// boundary/interior nodes below the ω cap and compares with the exact forms.
pub fn fit_identities(params: &GasParameters, grid: &PatchGrid, ds: &DiagnosticsSettings) -> IdentityFit {
    let mut out = IdentityFit::default();
    let (mut ez, mut et) = (Vec::new(), Vec::new());
    let ok = |i: usize, j: usize| grid.node(i, j).status.is_marchable();
    for i in 1..grid.n_minus {
        for j in 1..grid.n_plus {
            let mut pts = Vec::with_capacity(9);
            for a in [i - 1, i, i + 1] {
                for b in [j - 1, j, j + 1] {
                    if ok(a, b) {
                        pts.push(grid.node(a, b));
                    }
                }
            }
            if pts.len() < 9 || pts.iter().any(|p| p.omega() > ds.interior_omega_cap) {
                continue;
            }
            let nd = grid.node(i, j);
            let (z0, t0) = (nd.phi, nd.omega().cos());
            let xs: Vec<[f64; 2]> = pts.iter().map(|p| [p.phi - z0, p.omega().cos() - t0]).collect();
            // Conditioning of the centred design with unit-norm columns.
            let mean = [xs.iter().map(|x| x[0]).sum::<f64>() / 9.0, xs.iter().map(|x| x[1]).sum::<f64>() / 9.0];
            let cen: Vec<[f64; 2]> = xs.iter().map(|x| [x[0] - mean[0], x[1] - mean[1]]).collect();
            let n0 = cen.iter().map(|x| x[0] * x[0]).sum::<f64>().sqrt();
            let n1 = cen.iter().map(|x| x[1] * x[1]).sum::<f64>().sqrt();
            let cond = if n0 > 0.0 && n1 > 0.0 {
                let g01 = cen.iter().map(|x| x[0] * x[1]).sum::<f64>() / (n0 * n1);
                // Gram matrix [[1, g], [g, 1]] has eigenvalues 1 ± |g|.
                ((1.0 - g01.abs()) / (1.0 + g01.abs())).max(0.0).sqrt()
            } else {
                0.0
            };
            if cond < ds.min_stencil_conditioning {
                out.degenerate += 1;
                continue;
            }
            let mut m = [[0.0; 3]; 3];
            let mut rhs = [0.0; 3];
            for (x, p) in xs.iter().zip(&pts) {
                let row = [1.0, x[0], x[1]];
                for a in 0..3 {
                    for b in 0..3 {
                        m[a][b] += row[a] * row[b];
                    }
                    rhs[a] += row[a] * p.c;
                }
            }
            let (Some(co), Some(e)) = (solve3(m, rhs), thermo(params, nd)) else {
                out.degenerate += 1;
                continue;
            };
            let cz = exact_cz(nd.c, t0, e.kappa);
            let ct = exact_ct(nd.c, t0, e.kappa);
            ez.push(((co[1] - cz) / cz).abs());
            et.push(((co[2] - ct) / ct).abs());
        }
    }
    out.fitted = ez.len();
    out.max_rel_error_cz = ez.iter().cloned().fold(0.0, f64::max);
    out.max_rel_error_ct = et.iter().cloned().fold(0.0, f64::max);
    out.median_rel_error_cz = median(&mut ez);
    out.median_rel_error_ct = median(&mut et);
    out
}

/// Summarizes a hodograph field.
pub fn summarize_hodograph(field: &HodographField, identities: IdentityFit) -> HodographSummary {
    let mut s = HodographSummary {
        nodes: field.nodes.len(),
        missing: field.missing.len(),
        jacobian_min: f64::INFINITY,
        jacobian_max: f64::NEG_INFINITY,
        t_in_range: true,
        rs_signs: true,
        identities,
        ..Default::default()
    };
    for n in &field.nodes {
        s.jacobian_min = s.jacobian_min.min(n.jacobian);
        s.jacobian_max = s.jacobian_max.max(n.jacobian);
        if !(n.t > 0.0 && n.t < std::f64::consts::FRAC_1_SQRT_2) {
            s.t_in_range = false;
        }
        if !(n.r > 0.0 && n.s < 0.0) {
            s.rs_signs = false;
        }
        s.m1 = s.m1.max(n.w.abs());
    }
    s.jacobian_single_signed =
        !field.nodes.is_empty() && (s.jacobian_min > 0.0 || s.jacobian_max < 0.0);
    s
}

/// Injectivity of the hodograph map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    /// Node pairs sharing `(z, t)` to the scan resolution.
    pub duplicates: Vec<((usize, usize), (usize, usize))>,
    pub levels_scanned: usize,
    /// Levels along which φ is not strictly monotone.
    pub non_monotone_levels: Vec<f64>,
    /// Level segments whose change of φ disagrees in sign with `∇φ·T`, `T`
    /// the segment direction.
    pub direction_mismatches: usize,
    pub segments: usize,
    /// Segments with `∇φ·(l_η, −l_ξ)` positive and negative, respectively.
    pub formula_positive: usize,
    pub formula_negative: usize,
}

impl InjectivityReport {
    pub fn passed(&self) -> bool {
        self.duplicates.is_empty() && self.non_monotone_levels.is_empty() && self.direction_mismatches == 0
    }

    /// `∇φ·(l_η, −l_ξ)` keeps one sign on every scanned segment.
    pub fn formula_single_signed(&self) -> bool {
        self.segments > 0 && (self.formula_positive == 0 || self.formula_negative == 0)
    }
}

/// Scans `(z, t)` pairs for duplicates via hashing at `1e−9` times the cloud
/// diameter and checks that φ is strictly monotone along discrete ω-levels.
pub fn injectivity_check(grid: &PatchGrid, field: &HodographField, levels: usize) -> InjectivityReport {
    let mut rep = InjectivityReport::default();
    if field.nodes.is_empty() {
        return rep;
    }
    let (mut zl, mut zh, mut tl, mut th) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for n in &field.nodes {
        zl = zl.min(n.z);
        zh = zh.max(n.z);
        tl = tl.min(n.t);
        th = th.max(n.t);
    }
    let res = 1e-9 * (zh - zl).hypot(th - tl).max(f64::MIN_POSITIVE);
    let key = |z: f64, t: f64| (((z - zl) / res).floor() as i64, ((t - tl) / res).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, n) in field.nodes.iter().enumerate() {
        let (a, b) = key(n.z, n.t);
        for da in -1..=1 {
            for db in -1..=1 {
                if let Some(v) = buckets.get(&(a + da, b + db)) {
                    for &o in v {
                        let m = &field.nodes[o];
                        if (m.z - n.z).abs() <= res && (m.t - n.t).abs() <= res {
                            rep.duplicates.push(((m.i, m.j), (n.i, n.j)));
                        }
                    }
                }
            }
        }
        buckets.entry((a, b)).or_default().push(k);
    }
    level_monotonicity(grid, levels, &mut rep);
    rep
}

fn level_monotonicity(grid: &PatchGrid, levels: usize, rep: &mut InjectivityReport) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, j, n) in grid.iter() {
        if i > 0 && j > 0 && is_accepted(n) {
            lo = lo.min(n.omega());
            hi = hi.max(n.omega());
        }
    }
    if !(hi > lo) || levels == 0 {
        return;
    }
    for k in 1..=levels {
        let level = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
        // Crossing of the level on every positive family, in family order.
        let mut pts: Vec<(usize, [f64; 3], (f64, f64, f64, f64))> = Vec::new();
        for i in 0..=grid.n_minus {
            for j in 0..grid.n_plus {
                let (a, b) = (grid.node(i, j), grid.node(i, j + 1));
                if !(is_accepted(a) && is_accepted(b)) {
                    continue;
                }
                let (wa, wb) = (a.omega(), b.omega());
                if wa <= level && level < wb {
                    let s = (level - wa) / (wb - wa);
                    let lerp = |x: f64, y: f64| x + s * (y - x);
                    let (gx, gy) = level_gradient(grid, i, j).unwrap_or((f64::NAN, f64::NAN));
                    let (u, v) = a.pseudo_velocity();
                    let g = (gx, gy, u, v);
                    pts.push((i, [lerp(a.xi, b.xi), lerp(a.eta, b.eta), lerp(a.phi, b.phi)], g));
                    break;
                }
            }
        }
        if pts.len() < 2 {
            continue;
        }
        rep.levels_scanned += 1;
        let mut sign = 0.0;
        let mut monotone = true;
        for w in pts.windows(2) {
            if w[1].0 != w[0].0 + 1 {
                continue;
            }
            let dphi = w[1].1[2] - w[0].1[2];
            let s = dphi.signum();
            if dphi == 0.0 || (sign != 0.0 && s != sign) {
                monotone = false;
            }
            sign = s;
            // Along the level, dφ = ∇φ·T with ∇φ = (U, V) and T ∥ (l_η, −l_ξ).
            let (lx, ly, u, v) = w[0].2;
            if lx.is_finite() && ly.is_finite() {
                rep.segments += 1;
                let q = u * ly - v * lx;
                if q > 0.0 {
                    rep.formula_positive += 1;
                } else if q < 0.0 {
                    rep.formula_negative += 1;
                }
                let tang = (w[1].1[0] - w[0].1[0], w[1].1[1] - w[0].1[1]);
                let along = tang.0 * ly - tang.1 * lx;
                if !(along * q * dphi > 0.0) {
                    rep.direction_mismatches += 1;
                }
            }
        }
        if !monotone {
            rep.non_monotone_levels.push(level);
        }
    }
}

/// `∇l` for the level function `l = 1 − sin ω` at a node, from its
/// characteristic derivatives of ω.
pub fn level_gradient(grid: &PatchGrid, i: usize, j: usize) -> Option<(f64, f64)> {
    let n = grid.node(i, j);
    let d = node_derivatives(grid, i, j)?;
    let (ca, sa, cb, sb) = (n.alpha.cos(), n.alpha.sin(), n.beta.cos(), n.beta.sin());
    let det = ca * sb - sa * cb;
    if det.abs() < 1e-14 {
        return None;
    }
    let wx = (d.domega_plus * sb - sa * d.domega_minus) / det;
    let wy = (ca * d.domega_minus - cb * d.domega_plus) / det;
    let f = -n.omega().cos();
    Some((f * wx, f * wy))
}

/// Gradient certificates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub m_eps: f64,
    pub m_bar: f64,
    pub kappa_max: f64,
    pub kappa_hat: f64,
    pub diameter: f64,
    pub lower_bound: f64,
    pub interior_sup: f64,
    pub interior_inf: f64,
    pub upper_violations: Vec<(usize, usize)>,
    pub lower_violations: Vec<(usize, usize)>,
    /// Block-size constant for the local existence step, with `ε` the sonic margin.
    pub nu0: f64,
    /// `μ²` used for `nu0`: its minimum over the boundary data.
    pub nu0_mu2: f64,
    /// Largest lattice segments `(positive, negative)`.
    pub max_segment: (f64, f64),
    pub m1: f64,
    /// `(min, max)` of `l_ξ² + l_η²` over accepted nodes.
    pub level_gradient_range: (f64, f64),
}

impl BoundCertificate {
    pub fn passed(&self) -> bool {
        self.upper_violations.is_empty()
            && self.lower_violations.is_empty()
            && [self.m_eps, self.m_bar, self.kappa_hat, self.diameter, self.lower_bound]
                .iter()
                .all(|x| x.is_finite() && *x > 0.0)
    }
}

fn diameter(pts: &[(f64, f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for (k, a) in pts.iter().enumerate() {
        for b in &pts[k + 1..] {
            d = d.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    d
}

/// Upper and lower gradient certificates against boundary-derived constants,
/// with `ν₀`, `M₁` and the level-gradient range reported.
pub fn bound_certificates(
    params: &GasParameters,
    grid: &PatchGrid,
    field: &HodographField,
    sonic_margin: f64,
    slack: f64,
) -> BoundCertificate {
    let mut b = BoundCertificate::default();
    let marchable = |n: &NodeState| n.status.is_marchable();
    let mut m_eps: f64 = 0.0;
    let mut m_bar = f64::INFINITY;
    let mut mu2_min = f64::INFINITY;
    // AB: j increasing along +∂̂₊; BC: i increasing along −∂̂₋.
    let seg = |p: &NodeState, q: &NodeState| {
        let d = (q.c - p.c) / p.distance(q);
        let w = 0.5 * (p.omega() + q.omega());
        (d / w.sin().powi(2), d / (0.5 * (p.c + q.c)))
    };
    for j in 1..=grid.n_plus {
        let (p, q) = (grid.node(0, j - 1), grid.node(0, j));
        if !(marchable(p) && marchable(q)) {
            break;
        }
        let (u, l) = seg(p, q);
        m_eps = m_eps.max(u);
        m_bar = m_bar.min(l);
    }
    for i in 1..=grid.n_minus {
        let (p, q) = (grid.node(i - 1, 0), grid.node(i, 0));
        if !(marchable(p) && marchable(q)) {
            break;
        }
        let (u, l) = seg(p, q);
        m_eps = m_eps.max(u);
        m_bar = m_bar.min(l);
    }
    for (i, j, n) in grid.iter() {
        if (i == 0 || j == 0) && is_accepted(n) {
            if let Some(e) = thermo(params, n) {
                mu2_min = mu2_min.min(e.mu2);
            }
        }
    }
    b.m_eps = m_eps;
    b.m_bar = 0.5 * m_bar;
    let mut pts = Vec::new();
    let mut kmax: f64 = 0.0;
    for (_, _, n) in grid.iter() {
        if n.status.is_solved() {
            pts.push((n.xi, n.eta));
            if let Some(e) = thermo(params, n) {
                kmax = kmax.max(e.kappa);
            }
        }
    }
    let c4 = grid.node(0, 0).c;
    b.kappa_max = kmax;
    b.kappa_hat = (3.0 + 4.0 * kmax) / (2.0 * c4);
    b.diameter = diameter(&pts);
    b.lower_bound = b.m_bar * (-b.kappa_hat * b.diameter).exp();
    b.interior_sup = 0.0;
    b.interior_inf = f64::INFINITY;
    for (i, j, n) in grid.iter() {
        if i == 0 || j == 0 || !matches!(n.status, NodeStatus::Interior | NodeStatus::SonicFrontier) {
            continue;
        }
        let (l, r) = (grid.node(i, j - 1), grid.node(i - 1, j));
        let (up, lp) = seg(l, n);
        let (um, lm) = seg(r, n);
        let sup = up.max(um);
        let inf = lp.min(lm);
        b.interior_sup = b.interior_sup.max(sup);
        b.interior_inf = b.interior_inf.min(inf);
        if sup > (1.0 + slack) * b.m_eps {
            b.upper_violations.push((i, j));
        }
        if inf < (1.0 - slack) * b.lower_bound {
            b.lower_violations.push((i, j));
        }
    }
    let e = sonic_margin;
    b.nu0_mu2 = mu2_min;
    b.nu0 = c4 * (FRAC_PI_2 - e).sin() / (3.0 * b.m_eps * (FRAC_PI_4 + 0.5 * e).tan().powi(2))
        * (FRAC_PI_4 - 0.5 * e)
        * mu2_min;
    b.max_segment = grid.max_segment_lengths();
    b.m1 = field.nodes.iter().map(|n| n.w.abs()).fold(0.0, f64::max);
    let mut lg = (f64::INFINITY, 0.0_f64);
    for (i, j, n) in grid.iter() {
        if is_accepted(n) {
            if let Some((x, y)) = level_gradient(grid, i, j) {
                let v = x * x + y * y;
                lg = (lg.0.min(v), lg.1.max(v));
            }
        }
    }
    b.level_gradient_range = lg;
    b
}

/// Least-squares Hölder fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Median of the per-group slopes.
    pub exponent: f64,
    /// RMS log residual with the median slope and per-group intercepts.
    pub residual: f64,
    pub pairs: usize,
    pub groups: usize,
    pub decades: f64,
}

/// Fits the slope of `log|Δω|` against `log|Δx|` over pairs `(separation,
/// |Δω|)` whose separation lies in `[lo, hi]`.
///
/// Pairs come in groups sharing a reference point; each group with two or
/// more pairs in the window gets its own least-squares slope and the median
/// is reported, so differing constants between groups do not bias the slope.
pub fn holder_exponent(
    groups: &[Vec<(f64, f64)>],
    (lo, hi): (f64, f64),
    min_pairs: usize,
    min_decades: f64,
) -> Result<HolderFit, DiagnosticsError> {
    let mut fits = Vec::new();
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in groups {
        let (x, y): (Vec<f64>, Vec<f64>) =
            g.iter().filter(|&&(d, w)| d >= lo && d <= hi && w > 0.0).map(|&(d, w)| (d.ln(), w.ln())).unzip();
        if x.len() < 2 {
            continue;
        }
        if let Some((_, slope, _)) = fit_line(&x, &y) {
            for &v in &x {
                dmin = dmin.min(v);
                dmax = dmax.max(v);
            }
            fits.push((slope, x, y));
        }
    }
    let pairs: usize = fits.iter().map(|f| f.1.len()).sum();
    if pairs < min_pairs {
        return Err(DiagnosticsError::Holder(format!("{pairs} pairs in window, need {min_pairs}")));
    }
    let span = (dmax - dmin) / std::f64::consts::LN_10;
    if span < min_decades {
        return Err(DiagnosticsError::Holder(format!("separations span {span:.2} decades, need {min_decades}")));
    }
    let mut slopes: Vec<f64> = fits.iter().map(|f| f.0).collect();
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    let exponent = if m % 2 == 1 { slopes[m / 2] } else { 0.5 * (slopes[m / 2 - 1] + slopes[m / 2]) };
    let mut ss = 0.0;
    for (_, x, y) in &fits {
        let k = x.len() as f64;
        let b = y.iter().sum::<f64>() / k - exponent * x.iter().sum::<f64>() / k;
        ss += x.iter().zip(y).map(|(xi, yi)| (yi - b - exponent * xi).powi(2)).sum::<f64>();
    }
    Ok(HolderFit { exponent, residual: (ss / pairs as f64).sqrt(), pairs, groups: m, decades: span })
}

/// Pairs `(distance to the family's sonic point, π/2 − ω)` for the accepted
/// nodes of each extracted family, one group per family.
pub fn holder_samples(grid: &PatchGrid, curve: &SonicCurve) -> Vec<Vec<(f64, f64)>> {
    curve
        .points
        .iter()
        .map(|p| {
            (0..=grid.n_plus)
                .map(|j| grid.node(p.i, j))
                .filter(|n| is_accepted(n))
                .map(|n| ((n.xi - p.xi).hypot(n.eta - p.eta), FRAC_PI_2 - n.omega()))
                .collect()
        })
        .collect()
}

/// Residual norms of one decomposition identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorm {
    pub max: f64,
    pub mean: f64,
    pub cells: usize,
}

/// Residuals of the second-order characteristic decompositions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `c ∂₊(∂₋c)` decomposition.
    pub plus_of_minus_c: ResidualNorm,
    /// `c ∂₋(∂₊c)` decomposition.
    pub minus_of_plus_c: ResidualNorm,
    /// `c ∂₊(∂₋c/sin²ω)` decomposition.
    pub plus_of_scaled_minus_c: ResidualNorm,
    /// `c ∂₋(∂₊c/sin²ω)` decomposition.
    pub minus_of_scaled_plus_c: ResidualNorm,
    /// `c ∂₊(∂₋α)` decomposition.
    pub plus_of_minus_alpha: ResidualNorm,
    /// `c ∂₋(∂₊β)` decomposition.
    pub minus_of_plus_beta: ResidualNorm,
}

impl DecompositionReport {
    pub fn norms(&self) -> [(&'static str, ResidualNorm); 6] {
        [
            ("plus_of_minus_c", self.plus_of_minus_c),
            ("minus_of_plus_c", self.minus_of_plus_c),
            ("plus_of_scaled_minus_c", self.plus_of_scaled_minus_c),
            ("minus_of_scaled_plus_c", self.minus_of_scaled_plus_c),
            ("plus_of_minus_alpha", self.plus_of_minus_alpha),
            ("minus_of_plus_beta", self.minus_of_plus_beta),
        ]
    }
}

/// Backward differences at a node against both parents.
#[derive(Clone, Copy)]
struct Back {
    dp: f64,
    dm: f64,
    r: f64,
    s: f64,
    pa: f64,
    ma: f64,
    pb: f64,
    mb: f64,
}

fn back(grid: &PatchGrid, i: usize, j: usize) -> Option<Back> {
    if i == 0 || j == 0 {
        return None;
    }
    let (n, l, r) = (grid.node(i, j), grid.node(i, j - 1), grid.node(i - 1, j));
    if ![n, l, r].iter().all(|x| is_accepted(x)) {
        return None;
    }
    let dp = n.distance(l);
    let dm = -n.distance(r);
    Some(Back {
        dp,
        dm,
        r: (n.c - l.c) / dp,
        s: (n.c - r.c) / dm,
        pa: (n.alpha - l.alpha) / dp,
        ma: (n.alpha - r.alpha) / dm,
        pb: (n.beta - l.beta) / dp,
        mb: (n.beta - r.beta) / dm,
    })
}

/// Cell-centred residuals of the six decomposition identities over lattice
/// cells whose four corners have `ω ≤ omega_cap`.
pub fn decomposition_residuals(params: &GasParameters, grid: &PatchGrid, omega_cap: f64) -> DecompositionReport {
    let mut acc = [[0.0_f64; 3]; 6];
    for i in 1..=grid.n_minus {
        for j in 1..=grid.n_plus {
            let (Some(d), Some(dl), Some(dr)) =
                (back(grid, i, j), if j > 1 { back(grid, i, j - 1) } else { None }, if i > 1 { back(grid, i - 1, j) } else { None })
            else {
                continue;
            };
            let corners = [grid.node(i, j), grid.node(i, j - 1), grid.node(i - 1, j), grid.node(i - 1, j - 1)];
            if corners.iter().any(|p| !is_accepted(p) || p.omega() > omega_cap) {
                continue;
            }
            let c = corners.iter().map(|p| p.c).sum::<f64>() / 4.0;
            let o = corners.iter().map(|p| p.omega()).sum::<f64>() / 4.0;
            let Some(e) = gas_model::tau_from_c(params, c).and_then(|t| gas_model::evaluate(params, t)).ok() else {
                continue;
            };
            let Ok(om) = e.omega_coefficient(o) else { continue };
            let (kap, mu2, dk, tau) = (e.kappa, e.mu2, e.dkappa, e.tau);
            let (so, co, to) = (o.sin(), o.cos(), o.tan());
            let s2o = (2.0 * o).sin();
            let dpl = 0.5 * (d.dp + dr.dp);
            let dml = 0.5 * (d.dm + dl.dm);
            let r = 0.5 * (d.r + dr.r);
            let s = 0.5 * (d.s + dl.s);
            let pa = 0.5 * (d.pa + dr.pa);
            let pb = 0.5 * (d.pb + dr.pb);
            let ma = 0.5 * (d.ma + dl.ma);
            let mb = 0.5 * (d.mb + dl.mb);
            let p_s = (d.s - dl.s) / dpl;
            let m_r = (d.r - dr.r) / dml;
            let coef = 1.0 + om * (2.0 * o).cos() / (2.0 * mu2) + tau * dk;
            let a2 = 2.0 * mu2 * co * co;
            let res0 = c * p_s - (s * s / a2 - s * s2o + coef * s * r);
            let res1 = c * m_r - (r * r / a2 - r * s2o + coef * r * s);
            let q = -tau * dk + 4.0 * kap * so * so + 2.0;
            let w = |p: &NodeState| p.omega();
            let (on, ol, or, olr) = (w(corners[0]), w(corners[1]), w(corners[2]), w(corners[3]));
            let sin2 = |x: f64| x.sin().powi(2);
            let p_y = (d.s / sin2(0.5 * (on + or)) - dl.s / sin2(0.5 * (ol + olr))) / dpl;
            let m_y = (d.r / sin2(0.5 * (on + ol)) - dr.r / sin2(0.5 * (or + olr))) / dml;
            let res2 = c * p_y - (s / (so * so)) * ((r + s) / a2 - q * r);
            let res3 = c * m_y - (r / (so * so)) * ((r + s) / a2 - q * s);
            let t_coef = to * (1.0 - 4.0 * so * so) + 2.0 * to * tau * dk / om * mu2 * mu2;
            let p0 = so * so * (2.0 * to - om * s2o) + tau * dk * s2o * mu2 * mu2;
            let k = 1.0 / s2o - om * s2o / 2.0 + tau * dk / to * mu2 * mu2;
            let p1 = p0 + c * ma / s2o - k * c * pb;
            let p2 = p0 - c * pb / s2o + k * c * ma;
            let p_ma = (d.ma - dl.ma) / dpl;
            let m_pb = (d.pb - dr.pb) / dml;
            let res4 = c * p_ma - p1 * ma + t_coef * pa;
            let res5 = c * m_pb - p2 * pb + t_coef * mb;
            for (slot, v) in acc.iter_mut().zip([res0, res1, res2, res3, res4, res5]) {
                if v.is_finite() {
                    slot[0] = slot[0].max(v.abs());
                    slot[1] += v.abs();
                    slot[2] += 1.0;
                }
            }
        }
    }
    let norm = |a: [f64; 3]| ResidualNorm {
        max: a[0],
        mean: if a[2] > 0.0 { a[1] / a[2] } else { 0.0 },
        cells: a[2] as usize,
    };
    DecompositionReport {
        plus_of_minus_c: norm(acc[0]),
        minus_of_plus_c: norm(acc[1]),
        plus_of_scaled_minus_c: norm(acc[2]),
        minus_of_scaled_plus_c: norm(acc[3]),
        plus_of_minus_alpha: norm(acc[4]),
        minus_of_plus_beta: norm(acc[5]),
    }
}

/// Named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Full diagnostics of one patch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchDiagnostics {
    pub invariants: InvariantReport,
    pub hodograph: HodographSummary,
    pub bounds: BoundCertificate,
    pub injectivity: InjectivityReport,
    pub holder: Result<HolderFit, String>,
    pub decomposition: DecompositionReport,
    pub sonic_points: usize,
    pub max_consistency_residual: f64,
    pub consistency_exceedances: usize,
    /// Verdicts that decide the run's certificate status.
    pub certificates: Vec<Verdict>,
}

impl PatchDiagnostics {
    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|v| v.passed)
    }
}

/// Runs every diagnostic on a solved lattice.
pub fn diagnose_patch(
    params: &GasParameters,
    grid: &PatchGrid,
    solver: &SolverSettings,
    ds: &DiagnosticsSettings,
) -> PatchDiagnostics {
    let invariants = check_invariants(grid);
    let field = hodograph_map(params, grid);
    let identities = fit_identities(params, grid, ds);
    let hodograph = summarize_hodograph(&field, identities);
    let bounds = bound_certificates(params, grid, &field, FRAC_PI_2 - solver.omega_stop, ds.bound_slack);
    let injectivity = injectivity_check(grid, &field, ds.level_count);
    let curve = extract_sonic(grid, solver).unwrap_or_default();
    let pairs = holder_samples(grid, &curve);
    let diam = bounds.diameter;
    let holder = holder_exponent(
        &pairs,
        (ds.holder_window.0 * diam, ds.holder_window.1 * diam),
        ds.holder_min_pairs,
        ds.holder_min_decades,
    )
    .map_err(|e| e.to_string());
    let decomposition = decomposition_residuals(params, grid, ds.interior_omega_cap);
    let mut exceed = 0;
    for (i, j, n) in grid.iter() {
        if n.status.is_solved() && grid.residual(i, j) > solver.consistency_tol {
            exceed += 1;
        }
    }
    let certificates = vec![
        Verdict {
            name: "sign-invariants".into(),
            passed: invariants.passed(),
            detail: format!("{} nodes checked, {} violations", invariants.checked, invariants.violations.len()),
        },
        Verdict {
            name: "upper-bound".into(),
            passed: bounds.passed() && bounds.upper_violations.is_empty(),
            detail: format!("sup {:.6e} vs M_eps {:.6e}", bounds.interior_sup, bounds.m_eps),
        },
        Verdict {
            name: "lower-bound".into(),
            passed: bounds.passed() && bounds.lower_violations.is_empty(),
            detail: format!("inf {:.6e} vs bound {:.6e}", bounds.interior_inf, bounds.lower_bound),
        },
        Verdict {
            name: "jacobian-single-signed".into(),
            passed: hodograph.jacobian_single_signed,
            detail: format!("J in [{:.6e}, {:.6e}]", hodograph.jacobian_min, hodograph.jacobian_max),
        },
        Verdict {
            name: "injectivity".into(),
            passed: injectivity.passed(),
            detail: format!(
                "{} duplicates, {} non-monotone levels of {}",
                injectivity.duplicates.len(),
                injectivity.non_monotone_levels.len(),
                injectivity.levels_scanned
            ),
        },
    ];
    PatchDiagnostics {
        invariants,
        hodograph,
        bounds,
        injectivity,
        holder,
        decomposition,
        sonic_points: curve.points.len(),
        max_consistency_residual: grid.max_residual(),
        consistency_exceedances: exceed,
        certificates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_builder::{constant_state_goursat, default_goursat, BcSettings, RarefactionWave, Sampling};
    use crate::patch_solver::march;

    fn gas() -> GasParameters {
        GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 }
    }

    fn default_grid(n: usize) -> (PatchGrid, SolverSettings) {
        let w = RarefactionWave::new(gas(), 2.0, 1.0).unwrap();
        let data = default_goursat(&w, &BcSettings::default(), n, n, Sampling::default()).unwrap();
        let s = SolverSettings { n_plus: n, n_minus: n, ..Default::default() };
        (march(&w.params, &data, &s, true).unwrap(), s)
    }

    #[test]
    fn holder_calibrations() {
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<(f64, f64)> {
            (0..200).map(|k| 10f64.powf(-4.0 + 2.0 * k as f64 / 199.0)).map(|d| (d, f(d))).collect()
        };
        let sq = holder_exponent(&[mk(&|d| 0.7 * d.sqrt())], (1e-4, 1e-2), 50, 1.5).unwrap();
        assert!((sq.exponent - 0.5).abs() < 0.02, "{sq:?}");
        let lin = holder_exponent(&[mk(&|d| 3.0 * d)], (1e-4, 1e-2), 50, 1.5).unwrap();
        assert!((lin.exponent - 1.0).abs() < 0.02, "{lin:?}");
        // Groups with different constants still give the common exponent.
        let groups: Vec<_> = (1..=10).map(|k| mk(&|d| k as f64 * d.sqrt())).collect();
        let g = holder_exponent(&groups, (1e-4, 1e-2), 50, 1.5).unwrap();
        assert!((g.exponent - 0.5).abs() < 1e-12 && g.residual < 1e-12, "{g:?}");
        let narrow: Vec<_> = (0..100).map(|k| (1e-3 * (1.0 + k as f64 / 100.0), 1e-2)).collect();
        assert!(holder_exponent(&[narrow], (1e-4, 1e-2), 50, 1.5).is_err());
    }

    #[test]
    fn exact_identity_forms() {
        // c_z and c_t from the pseudo-Bernoulli law at a reference state.
        let (c, t, k) = (1.3, 0.4, 4.0);
        assert!((exact_cz(c, t, k) - (0.16 - 1.0) / (1.3 * (1.0 + 4.0 * 0.84))).abs() < 1e-15);
        assert!((exact_ct(c, t, k) + 1.3 * 0.4 / ((1.0 + 4.0 * 0.84) * 0.84)).abs() < 1e-15);
    }

    #[test]
    fn default_patch_signs_and_jacobian() {
        let (g, _) = default_grid(40);
        let inv = check_invariants(&g);
        assert!(inv.passed(), "{:?}", &inv.violations[..inv.violations.len().min(5)]);
        let f = hodograph_map(&gas(), &g);
        let s = summarize_hodograph(&f, IdentityFit::default());
        assert!(s.jacobian_single_signed && s.jacobian_min > 0.0);
        assert!(s.rs_signs);
        assert!(f.missing.iter().all(|&(i, j)| i == 0 || j == 0), "{:?}", f.missing);
    }

    #[test]
    fn folded_field_is_detected() {
        let (g, _) = default_grid(16);
        let mut f = hodograph_map(&gas(), &g);
        let mut dup = f.nodes[3];
        dup.i = 99;
        dup.j = 98;
        f.nodes.push(dup);
        let rep = injectivity_check(&g, &f, 4);
        assert_eq!(rep.duplicates.len(), 1);
        assert_eq!(rep.duplicates[0].1, (99, 98));
    }

    #[test]
    fn default_patch_is_injective() {
        let (g, _) = default_grid(40);
        let f = hodograph_map(&gas(), &g);
        let rep = injectivity_check(&g, &f, 12);
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.levels_scanned > 5 && rep.segments > 0);
        assert!(rep.formula_single_signed() && rep.formula_positive > 0, "{rep:?}");
    }

    #[test]
    fn bounds_hold_on_default_patch() {
        let (g, s) = default_grid(40);
        let f = hodograph_map(&gas(), &g);
        let b = bound_certificates(&gas(), &g, &f, FRAC_PI_2 - s.omega_stop, 0.05);
        assert!(b.passed(), "{b:?}");
        assert!(b.nu0 > 0.0 && b.m1 > 0.0);
        assert!(b.level_gradient_range.0 > 0.0 && b.level_gradient_range.1.is_finite());
    }

    #[test]
    fn constant_state_residuals_vanish() {
        let g0 = gas();
        let data = constant_state_goursat(&g0, (0.0, 0.0, 1.2), (-0.6, 1.3), 0.15, 0.3, 20, 20).unwrap();
        let s = SolverSettings { n_plus: 20, n_minus: 20, ..Default::default() };
        let g = march(&g0, &data, &s, true).unwrap();
        let rep = decomposition_residuals(&g0, &g, FRAC_PI_2);
        for (name, r) in rep.norms().iter().take(4) {
            assert!(r.cells > 0 && r.max < 1e-9, "{name}: {r:?}");
        }
    }

    #[test]
    fn identical_state_grid_has_zero_residuals() {
        let mut g = PatchGrid::new(6, 6);
        for i in 0..=6 {
            for j in 0..=6 {
                let (x, y) = (i as f64 * 0.1 - j as f64 * 0.05, j as f64 * 0.1 + i as f64 * 0.03);
                g.set(i, j, NodeState { xi: x, eta: y, alpha: 2.0, beta: -0.3, c: 1.3, phi: 0.0, status: NodeStatus::Interior });
            }
        }
        let rep = decomposition_residuals(&gas(), &g, FRAC_PI_2);
        for (name, r) in rep.norms() {
            assert!(r.cells > 0 && r.max == 0.0, "{name}: {r:?}");
        }
    }
}

//! Run configuration, the solve/diagnose/shock pipeline, flat-file
//! serialization and the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_builder::{default_goursat, BcSettings, RarefactionWave, Sampling};
use crate::envelope_detector::{detect_envelope, EnvelopeError, EnvelopeReport, Verdict as RaceVerdict};
use crate::flow_kinematics::{NodeState, NodeStatus};
use crate::gas_model::{validate_regime, GasParameters, RegimeReport};
use crate::patch_solver::{extract_sonic, march, thread_cap, NodeReport, PatchGrid, SolverSettings, SonicCurve, StatusCounts};
use crate::sonic_diagnostics::{diagnose_patch, hodograph_map, DiagnosticsSettings, HodographField, PatchDiagnostics, Verdict};

/// Version of the output file layout.
pub const FORMAT_VERSION: u32 = 1;

pub const PATCH_HEADER: [&str; 16] =
    ["i", "j", "xi", "eta", "alpha", "beta", "c", "omega", "sigma", "U", "V", "u", "v", "phi", "status", "residual"];
pub const SONIC_HEADER: [&str; 6] = ["i", "xi", "eta", "c", "sigma", "fit_residual"];
pub const ENVELOPE_HEADER: [&str; 11] =
    ["n", "foot_xi", "foot_eta", "alpha", "c", "omega0", "z0", "s_sonic", "s_env_geo", "s_env_ode", "verdict"];
pub const HODOGRAPH_HEADER: [&str; 8] = ["i", "j", "z", "t", "J", "R", "S", "W"];

/// Failure of a run, each kind with its own exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("gas regime: {0}")]
    Regime(String),
    #[error("boundary data: {0}")]
    Boundary(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("certificates failed: {}", .0.join(", "))]
    Certificate(Vec<String>),
    #[error("{file}: row {row}, column {column}: {reason}")]
    Parse { file: String, row: usize, column: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Parse { .. } | RunError::Io { .. } => 2,
            RunError::Regime(_) => 3,
            RunError::Boundary(_) => 4,
            RunError::Solver(_) => 5,
            RunError::Certificate(_) => 6,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io { path: path.display().to_string(), reason: e.to_string() }
}

/// Densities on both sides of the rarefaction wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiemannData {
    pub rho1: f64,
    pub rho4: f64,
}

impl Default for RiemannData {
    fn default() -> Self {
        RiemannData { rho1: 2.0, rho4: 1.0 }
    }
}

/// Lattice size and boundary sample placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_plus: usize,
    pub n_minus: usize,
    pub sampling: Sampling,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_plus: 100, n_minus: 100, sampling: Sampling::default() }
    }
}

/// The desk-scale van der Waals gas.
pub fn default_gas() -> GasParameters {
    GasParameters { k: 1.0, gamma: 0.5, a: 0.01, b: 0.05, tau_min: 0.3, tau_max: 2.0 }
}

fn default_gas_serde() -> GasParameters {
    default_gas()
}

fn always_true() -> bool {
    true
}

/// Everything a run depends on. Every section may be omitted; the grid
/// section decides the lattice size used by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_gas_serde")]
    pub gas: GasParameters,
    #[serde(default)]
    pub riemann: RiemannData,
    #[serde(default)]
    pub bc: BcSettings,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub diagnostics: DiagnosticsSettings,
    /// Runs are seedless and reproducible; `false` is rejected.
    #[serde(default = "always_true")]
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gas: default_gas(),
            riemann: RiemannData::default(),
            bc: BcSettings::default(),
            grid: GridConfig::default(),
            solver: SolverSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
            deterministic: true,
        }
    }
}

impl RunConfig {
    /// Parses a JSON config and copies the grid size into the solver settings.
    pub fn from_json(text: &str) -> Result<RunConfig, RunError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.solver.n_plus = cfg.grid.n_plus;
        cfg.solver.n_minus = cfg.grid.n_minus;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every scalar constraint; the gas regime is checked separately.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        self.gas.check().map_err(|e| RunError::Config(e.to_string()))?;
        let RiemannData { rho1, rho4 } = self.riemann;
        if !(rho4 > 0.0 && rho1 > rho4 && rho1.is_finite()) {
            return bad(format!("need rho1 > rho4 > 0, got rho1 = {rho1}, rho4 = {rho4}"));
        }
        let bc = &self.bc;
        if !(bc.turning_rate > 0.0 && bc.turning_rate.is_finite()) {
            return bad(format!("bc.turning_rate = {} must be positive", bc.turning_rate));
        }
        if !(bc.sonic_margin > 0.0 && bc.sonic_margin < std::f64::consts::FRAC_PI_4) {
            return bad(format!("bc.sonic_margin = {} must lie in (0, pi/4)", bc.sonic_margin));
        }
        match self.grid.sampling {
            Sampling::Power { p } if !(p > 0.0 && p.is_finite()) => return bad(format!("sampling power {p} must be positive")),
            Sampling::Blend { w } if !(0.0..=1.0).contains(&w) => return bad(format!("sampling weight {w} must lie in [0, 1]")),
            _ => {}
        }
        if (self.solver.n_plus, self.solver.n_minus) != (self.grid.n_plus, self.grid.n_minus) {
            return bad("solver lattice size differs from the grid section".into());
        }
        self.solver.check().map_err(|e| RunError::Config(e.to_string()))?;
        let d = &self.diagnostics;
        if !(d.holder_window.0 > 0.0 && d.holder_window.0 < d.holder_window.1) || d.level_count == 0 {
            return bad("diagnostics: Hölder window must satisfy 0 < lo < hi and level_count > 0".into());
        }
        if !self.deterministic {
            return bad("non-deterministic runs are not supported".into());
        }
        Ok(())
    }

    /// Config checks followed by the gas-regime predicate.
    pub fn validate_all(&self) -> Result<RegimeReport, RunError> {
        self.validate()?;
        let rep = validate_regime(&self.gas);
        if !rep.pass {
            return Err(RunError::Regime(format!(
                "{} at tau = {:?}",
                rep.first_violation.clone().unwrap_or_default(),
                rep.first_violation_tau
            )));
        }
        Ok(rep)
    }
}

/// Stages of `solve` besides marching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub serial: bool,
    pub diagnose: bool,
    pub shock: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { serial: false, diagnose: true, shock: true }
    }
}

/// Aggregate of an envelope race.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub passed: bool,
    pub vacuous: bool,
    pub lines: usize,
    pub envelope_first: usize,
    pub sonic_first: usize,
    pub no_envelope: usize,
    pub max_oracle_mismatch: Option<f64>,
}

impl From<&EnvelopeReport> for EnvelopeSummary {
    fn from(r: &EnvelopeReport) -> Self {
        EnvelopeSummary {
            passed: r.passed,
            vacuous: r.vacuous,
            lines: r.lines.len(),
            envelope_first: r.count(RaceVerdict::EnvelopeFirst),
            sonic_first: r.count(RaceVerdict::SonicFirst),
            no_envelope: r.count(RaceVerdict::NoEnvelope),
            max_oracle_mismatch: r.max_mismatch,
        }
    }
}

/// Node tallies whose sum is the lattice size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTally {
    /// Boundary samples and interior nodes below the cutoff.
    pub accepted: usize,
    pub frontier: usize,
    /// Failed solves, including those that passed the sonic state.
    pub failed: usize,
    pub unreached: usize,
    pub lattice: usize,
}

impl From<StatusCounts> for NodeTally {
    fn from(c: StatusCounts) -> Self {
        NodeTally {
            accepted: c.boundary + c.interior,
            frontier: c.sonic_frontier,
            failed: c.failed + c.beyond_sonic,
            unreached: c.unreached,
            lattice: c.total(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub config: RunConfig,
    pub options: RunOptions,
    pub threads: Option<usize>,
    pub nodes: NodeTally,
    pub status_counts: StatusCounts,
    pub sonic_points: usize,
    pub certificates: Vec<Verdict>,
    pub envelope: Option<EnvelopeSummary>,
    /// Every enabled certificate and the envelope race passed.
    pub passed: bool,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    /// Names of failed certificates, the envelope race included.
    pub fn failures(&self) -> Vec<String> {
        let mut f: Vec<String> = self.certificates.iter().filter(|v| !v.passed).map(|v| v.name.clone()).collect();
        if self.envelope.is_some_and(|e| !e.passed) {
            f.push("envelope-race".into());
        }
        f
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            6
        }
    }
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsFile<'a> {
    pub format_version: u32,
    #[serde(flatten)]
    pub diagnostics: &'a PatchDiagnostics,
    pub sonic_curve_skipped: &'a [(usize, String)],
    /// Rows whose ω or σ column disagreed with α and β (diagnose only).
    pub column_mismatches: &'a [(usize, usize)],
    pub envelope: Option<EnvelopeSummary>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, RunError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn finish_csv(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), RunError> {
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes every lattice node in row-major order.
pub fn write_patch_csv(path: &Path, grid: &PatchGrid) -> Result<(), RunError> {
    let mut w = writer(path)?;
    w.write_record(PATCH_HEADER).map_err(|e| io_err(path, e))?;
    for (i, j, n) in grid.iter() {
        let (uu, vv) = n.pseudo_velocity();
        let (u, v) = n.velocity();
        let rec = [
            i.to_string(),
            j.to_string(),
            num(n.xi),
            num(n.eta),
            num(n.alpha),
            num(n.beta),
            num(n.c),
            num(n.omega()),
            num(n.sigma()),
            num(uu),
            num(vv),
            num(u),
            num(v),
            num(n.phi),
            n.status.as_str().to_string(),
            num(grid.residual(i, j)),
        ];
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish_csv(w, path)
}

pub fn write_sonic_csv(path: &Path, curve: &SonicCurve) -> Result<(), RunError> {
    let mut w = writer(path)?;
    w.write_record(SONIC_HEADER).map_err(|e| io_err(path, e))?;
    for p in &curve.points {
        let rec = [p.i.to_string(), num(p.xi), num(p.eta), num(p.c), num(p.sigma), num(p.fit_residual)];
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish_csv(w, path)
}

/// Missing envelope distances are written as empty fields.
pub fn write_envelope_csv(path: &Path, rep: &EnvelopeReport) -> Result<(), RunError> {
    let mut w = writer(path)?;
    w.write_record(ENVELOPE_HEADER).map_err(|e| io_err(path, e))?;
    for l in &rep.lines {
        let rec = [
            l.n.to_string(),
            num(l.line.foot.0),
            num(l.line.foot.1),
            num(l.line.alpha),
            num(l.line.c),
            num(l.line.omega0),
            num(l.line.z0),
            num(l.s_sonic),
            opt(l.s_env_geo),
            opt(l.s_env_ode),
            l.verdict.as_str().to_string(),
        ];
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish_csv(w, path)
}

pub fn write_hodograph_csv(path: &Path, field: &HodographField) -> Result<(), RunError> {
    let mut w = writer(path)?;
    w.write_record(HODOGRAPH_HEADER).map_err(|e| io_err(path, e))?;
    for n in &field.nodes {
        let rec = [n.i.to_string(), n.j.to_string(), num(n.z), num(n.t), num(n.jacobian), num(n.r), num(n.s), num(n.w)];
        w.write_record(&rec).map_err(|e| io_err(path, e))?;
    }
    finish_csv(w, path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// A lattice read back from `patch.csv`.
#[derive(Debug, Clone)]
pub struct PatchFile {
    pub grid: PatchGrid,
    /// Rows whose ω or σ column disagreed with α and β; there the columns
    /// win and α = σ + ω, β = σ − ω are rebuilt from them.
    pub column_mismatches: Vec<(usize, usize)>,
}

/// Reads `patch.csv`, checking the header, every field and lattice coverage.
/// Segment lengths are recomputed as chords to the lattice parents.
pub fn read_patch_csv(path: &Path) -> Result<PatchFile, RunError> {
    let file = path.display().to_string();
    let perr = |row: usize, column: &str, reason: String| RunError::Parse {
        file: file.clone(),
        row,
        column: column.to_string(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| io_err(path, e))?;
    let header = rdr.headers().map_err(|e| perr(1, "-", e.to_string()))?.clone();
    if header.iter().ne(PATCH_HEADER.iter().copied()) {
        return Err(perr(1, "-", format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), PATCH_HEADER)));
    }
    struct Row {
        i: usize,
        j: usize,
        node: NodeState,
        omega: f64,
        sigma: f64,
        residual: f64,
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| perr(row, "-", e.to_string()))?;
        if rec.len() != PATCH_HEADER.len() {
            return Err(perr(row, "-", format!("{} fields, expected {}", rec.len(), PATCH_HEADER.len())));
        }
        let int = |c: usize| rec[c].trim().parse::<usize>().map_err(|e| perr(row, PATCH_HEADER[c], e.to_string()));
        let flt = |c: usize| rec[c].trim().parse::<f64>().map_err(|e| perr(row, PATCH_HEADER[c], e.to_string()));
        let status = NodeStatus::parse(rec[14].trim())
            .ok_or_else(|| perr(row, "status", format!("unknown status {:?}", &rec[14])))?;
        rows.push(Row {
            i: int(0)?,
            j: int(1)?,
            node: NodeState { xi: flt(2)?, eta: flt(3)?, alpha: flt(4)?, beta: flt(5)?, c: flt(6)?, phi: flt(13)?, status },
            omega: flt(7)?,
            sigma: flt(8)?,
            residual: flt(15)?,
        });
    }
    let last = rows.len() + 1;
    let (nm, np) = rows.iter().fold((0, 0), |(a, b), r| (a.max(r.i), b.max(r.j)));
    if rows.is_empty() || rows.len() != (nm + 1) * (np + 1) {
        return Err(perr(last, "-", format!("{} rows do not cover a {}×{} lattice", rows.len(), nm + 1, np + 1)));
    }
    let mut grid = PatchGrid::new(nm, np);
    let mut seen = vec![false; rows.len()];
    let mut mismatches = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        let slot = r.i * (np + 1) + r.j;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(perr(k + 2, "i", format!("node ({}, {}) appears twice", r.i, r.j)));
        }
        let mut node = r.node;
        let close = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * (1.0 + b.abs());
        if !(close(r.omega, node.omega()) && close(r.sigma, node.sigma())) {
            node.alpha = r.sigma + r.omega;
            node.beta = r.sigma - r.omega;
            mismatches.push((r.i, r.j));
        }
        grid.set(r.i, r.j, node);
    }
    for r in &rows {
        let solved = matches!(r.node.status, NodeStatus::Interior | NodeStatus::SonicFrontier);
        let (ds_plus, ds_minus) = if solved && r.i > 0 && r.j > 0 {
            let n = grid.node(r.i, r.j);
            let (l, q) = (grid.node(r.i, r.j - 1), grid.node(r.i - 1, r.j));
            (n.distance(l), -n.distance(q))
        } else {
            (f64::NAN, f64::NAN)
        };
        grid.set_report(r.i, r.j, &NodeReport { residual: r.residual, iterations: 0, ds_plus, ds_minus });
    }
    Ok(PatchFile { grid, column_mismatches: mismatches })
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn boundary_err(e: impl std::fmt::Display) -> RunError {
    RunError::Boundary(e.to_string())
}

fn envelope_err(e: EnvelopeError) -> RunError {
    RunError::Boundary(e.to_string())
}

/// Runs boundary construction, marching and the enabled diagnostics, and
/// writes all artifacts into `out`. Certificate failures are reported in
/// the summary, not as an error.
pub fn run_pipeline(cfg: &RunConfig, out: &Path, opts: RunOptions) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    cfg.validate_all()?;
    ensure_dir(out)?;
    let wave = RarefactionWave::new(cfg.gas, cfg.riemann.rho1, cfg.riemann.rho4).map_err(boundary_err)?;
    let data = default_goursat(&wave, &cfg.bc, cfg.grid.n_plus, cfg.grid.n_minus, cfg.grid.sampling)
        .map_err(boundary_err)?;
    let grid = march(&cfg.gas, &data, &cfg.solver, opts.serial).map_err(|e| RunError::Solver(e.to_string()))?;
    write_patch_csv(&out.join("patch.csv"), &grid)?;
    let curve = extract_sonic(&grid, &cfg.solver).unwrap_or_default();
    write_sonic_csv(&out.join("sonic_curve.csv"), &curve)?;

    let envelope = if opts.shock {
        let rep = detect_envelope(&cfg.gas, &data.bc).map_err(envelope_err)?;
        write_envelope_csv(&out.join("envelope.csv"), &rep)?;
        Some(EnvelopeSummary::from(&rep))
    } else {
        None
    };
    let mut certificates = Vec::new();
    if opts.diagnose {
        let diag = diagnose_patch(&cfg.gas, &grid, &cfg.solver, &cfg.diagnostics);
        write_hodograph_csv(&out.join("hodograph.csv"), &hodograph_map(&cfg.gas, &grid))?;
        let file = DiagnosticsFile {
            format_version: FORMAT_VERSION,
            diagnostics: &diag,
            sonic_curve_skipped: &curve.skipped,
            column_mismatches: &[],
            envelope,
        };
        write_json(&out.join("diagnostics.json"), &file)?;
        certificates = diag.certificates;
    }
    let counts = grid.counts();
    let mut summary = RunSummary {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        options: opts,
        threads: if opts.serial { Some(1) } else { thread_cap() },
        nodes: counts.into(),
        status_counts: counts,
        sonic_points: curve.points.len(),
        certificates,
        envelope,
        passed: false,
        wall_clock_seconds: 0.0,
    };
    summary.passed = summary.failures().is_empty();
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Builds BC from the config and runs the envelope race alone, writing
/// `envelope.csv` and `envelope.json` into `out`.
pub fn run_shock(cfg: &RunConfig, out: &Path) -> Result<EnvelopeReport, RunError> {
    cfg.validate_all()?;
    ensure_dir(out)?;
    let wave = RarefactionWave::new(cfg.gas, cfg.riemann.rho1, cfg.riemann.rho4).map_err(boundary_err)?;
    let data = default_goursat(&wave, &cfg.bc, cfg.grid.n_plus, cfg.grid.n_minus, cfg.grid.sampling)
        .map_err(boundary_err)?;
    let rep = detect_envelope(&cfg.gas, &data.bc).map_err(envelope_err)?;
    write_envelope_csv(&out.join("envelope.csv"), &rep)?;
    #[derive(Serialize)]
    struct EnvelopeJson<'a> {
        format_version: u32,
        summary: EnvelopeSummary,
        config: &'a RunConfig,
    }
    write_json(&out.join("envelope.json"), &EnvelopeJson { format_version: FORMAT_VERSION, summary: (&rep).into(), config: cfg })?;
    Ok(rep)
}

/// Config for re-diagnosing a patch file: an explicit path, else the
/// `summary.json` written next to the patch.
fn diagnose_config(patch: &Path, config: Option<&Path>) -> Result<RunConfig, RunError> {
    if let Some(p) = config {
        return RunConfig::load(p);
    }
    let sibling = patch.parent().unwrap_or(Path::new(".")).join("summary.json");
    let text = fs::read_to_string(&sibling)
        .map_err(|e| RunError::Config(format!("{} (pass --config to override): {e}", sibling.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", sibling.display())))?;
    let cfg = v.get("config").ok_or_else(|| RunError::Config(format!("{} has no config", sibling.display())))?;
    RunConfig::from_json(&cfg.to_string())
}

/// Recomputes the diagnostics from a patch file alone.
pub fn diagnose_file(patch: &Path, config: Option<&Path>) -> Result<(PatchDiagnostics, PatchFile, RunConfig), RunError> {
    let cfg = diagnose_config(patch, config)?;
    cfg.validate()?;
    let pf = read_patch_csv(patch)?;
    if (pf.grid.n_minus, pf.grid.n_plus) != (cfg.grid.n_minus, cfg.grid.n_plus) {
        return Err(RunError::Config(format!(
            "patch lattice {}×{} does not match the config's {}×{}",
            pf.grid.n_minus, pf.grid.n_plus, cfg.grid.n_minus, cfg.grid.n_plus
        )));
    }
    let diag = diagnose_patch(&cfg.gas, &pf.grid, &cfg.solver, &cfg.diagnostics);
    Ok((diag, pf, cfg))
}

#[derive(Debug, Parser)]
#[command(name = "patchwave", version, about = "Semi-hyperbolic patch solver for a van der Waals gas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the patch and write all artifacts.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Solve nodes one at a time.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        no_diagnose: bool,
        #[arg(long)]
        no_shock: bool,
    },
    /// Check the gas constants and the admissible regime.
    ValidateGas {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute diagnostics from a patch.csv.
    Diagnose {
        #[arg(long)]
        patch: PathBuf,
        /// Config to use instead of the summary.json next to the patch.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write diagnostics.json here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the envelope race on BC alone.
    Shock {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Solve { config, out, serial, no_diagnose, no_shock } => {
            let cfg = RunConfig::load(&config)?;
            let opts = RunOptions { serial, diagnose: !no_diagnose, shock: !no_shock };
            let s = run_pipeline(&cfg, &out, opts)?;
            let n = s.nodes;
            println!(
                "lattice {}: {} accepted, {} frontier, {} failed, {} unreached; {} sonic points; {:.2} s",
                n.lattice, n.accepted, n.frontier, n.failed, n.unreached, s.sonic_points, s.wall_clock_seconds
            );
            for v in &s.certificates {
                println!("{:<24} {}  {}", v.name, if v.passed { "pass" } else { "FAIL" }, v.detail);
            }
            if let Some(e) = s.envelope {
                println!(
                    "{:<24} {}  {} of {} lines envelope-first",
                    "envelope-race",
                    if e.passed { "pass" } else { "FAIL" },
                    e.envelope_first,
                    e.lines
                );
            }
            let f = s.failures();
            if f.is_empty() {
                Ok(())
            } else {
                Err(RunError::Certificate(f))
            }
        }
        Command::ValidateGas { config } => {
            let cfg = RunConfig::load(&config)?;
            cfg.gas.check().map_err(|e| RunError::Config(e.to_string()))?;
            let rep = validate_regime(&cfg.gas);
            println!("{}", serde_json::to_string_pretty(&rep).unwrap_or_default());
            if rep.pass {
                Ok(())
            } else {
                Err(RunError::Regime(rep.first_violation.unwrap_or_default()))
            }
        }
        Command::Diagnose { patch, config, out } => {
            let (diag, pf, _) = diagnose_file(&patch, config.as_deref())?;
            let file = DiagnosticsFile {
                format_version: FORMAT_VERSION,
                diagnostics: &diag,
                sonic_curve_skipped: &[],
                column_mismatches: &pf.column_mismatches,
                envelope: None,
            };
            match out {
                Some(p) => write_json(&p, &file)?,
                None => println!("{}", serde_json::to_string_pretty(&file).unwrap_or_default()),
            }
            let failed: Vec<String> = diag.certificates.iter().filter(|v| !v.passed).map(|v| v.name.clone()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(RunError::Certificate(failed))
            }
        }
        Command::Shock { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let rep = run_shock(&cfg, &out)?;
            let s = EnvelopeSummary::from(&rep);
            println!(
                "{} lines: {} envelope-first, {} sonic-first, {} no-envelope; oracle mismatch {:?}",
                s.lines, s.envelope_first, s.sonic_first, s.no_envelope, s.max_oracle_mismatch
            );
            if rep.passed {
                Ok(())
            } else {
                Err(RunError::Certificate(vec!["envelope-race".into()]))
            }
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("patchwave-unit-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn empty_config_is_the_default() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate_all().unwrap();
    }

    #[test]
    fn config_errors_map_to_code_two() {
        for text in [
            r#"{"riemann": {"rho1": 1.0, "rho4": 1.0}}"#,
            r#"{"grid": {"n_plus": 4}}"#,
            r#"{"bogus": 1}"#,
            r#"{"deterministic": false}"#,
            "not json",
        ] {
            let e = RunConfig::from_json(text).and_then(|c| c.validate_all().map(|_| ())).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn regime_failure_maps_to_code_three() {
        let cfg = RunConfig::from_json(r#"{"gas": {"K": 1.0, "gamma": 0.5, "a": 3.0, "b": 0.05, "tau_min": 0.3, "tau_max": 2.0}}"#)
            .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.validate_all().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn patch_csv_round_trips() {
        let dir = tmp("roundtrip");
        let cfg = RunConfig { grid: GridConfig { n_plus: 24, n_minus: 24, ..GridConfig::default() }, ..RunConfig::default() };
        let cfg = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        let s = run_pipeline(&cfg, &dir, RunOptions { serial: true, ..RunOptions::default() }).unwrap();
        assert_eq!(s.nodes.accepted + s.nodes.frontier + s.nodes.failed + s.nodes.unreached, s.nodes.lattice);
        let pf = read_patch_csv(&dir.join("patch.csv")).unwrap();
        assert!(pf.column_mismatches.is_empty());
        let again = dir.join("again.csv");
        write_patch_csv(&again, &pf.grid).unwrap();
        assert_eq!(fs::read(dir.join("patch.csv")).unwrap(), fs::read(&again).unwrap());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn malformed_patch_files_are_parse_errors() {
        let dir = tmp("malformed");
        let p = dir.join("patch.csv");
        fs::write(&p, "i,j,xi\n0,0,1.0\n").unwrap();
        assert!(matches!(read_patch_csv(&p), Err(RunError::Parse { row: 1, .. })));
        let mut text = PATCH_HEADER.join(",") + "\n";
        text += "0,0,0,0,1,0,1,0.5,0.5,0,0,0,0,0,boundary,0\n0,1,0,0,1,0,1,0.5,0.5,0,0,0,0,0,bogus,0\n";
        fs::write(&p, &text).unwrap();
        match read_patch_csv(&p) {
            Err(RunError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "status")),
            other => panic!("{other:?}"),
        }
        let _ = fs::remove_dir_all(&dir);
    }
}

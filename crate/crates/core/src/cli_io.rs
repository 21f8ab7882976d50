//! Run configuration, subcommand drivers and output artifacts.
//!
//! A run is described by a TOML document with a `command` key, an optional
//! `seed`, and the sections that command needs:
//!
//! ```toml
//! command = "simulate"          # kernels | simulate | rates | atlas | testfn
//! seed = 7                      # default 0
//!
//! [system]                      # simulate, atlas, optional for testfn
//! n = 2
//! m = 1.0                       # default 1
//! delta1 = 0.0
//! delta2 = 0.0
//! p = 2.0
//! q = 2.0
//!
//! [grid]                        # simulate
//! points = 64
//! half_width = 20.0
//!
//! [data]                        # simulate
//! kind = "gaussian_bump"        # gaussian_bump | slow_decay_profile | small_energy
//! amplitude = 1.2
//! width = 1.0                   # gaussian_bump, default 1
//! eps_tilde = 0.5               # slow_decay_profile
//!
//! [time]                        # simulate
//! t_final = 20.0
//! h = 0.01
//! record_every = 10             # default 1
//! threshold = 1e8               # default 1e8
//!
//! [sweep]                       # atlas
//! p_min = 1.0
//! p_max = 4.0
//! q_min = 1.0
//! q_max = 4.0
//! resolution = 100
//!
//! [kernels]                     # kernels
//! delta = 0.25
//! times = [0.5, 1.0]
//! xis = [0.1, 1.0]
//! ode_steps = 20000             # default 20000
//!
//! [rates]                       # rates
//! n = 3
//! delta = 0.5
//! m = 1.0                       # default 1
//! derivs = [[0, 0]]             # (j, k) pairs, default [[0, 0]]
//! t_min = 100.0                 # default 1e2
//! t_max = 10000.0               # default 1e4
//! samples = 24                  # default 24
//!
//! [testfn]                      # testfn
//! r = 3.0
//! s = 0.25
//! n = 1
//! radius_max = 1000.0           # default 1000
//! scale = 4.0                   # default 4
//! kappa = 1.0                   # default 1
//! points = [0.0, 1.0, 5.0]      # default [0, 1, 5]
//! ```
//!
//! Unknown keys are rejected. Every CSV row ends with the run id, the first
//! 16 hex digits of the SHA-256 of the canonical configuration; floats are
//! written with 17 significant digits. The manifest `manifest.json` is
//! written last and lists every output with its SHA-256.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{branch_margins, sweep};
use crate::exact::ParamPoint;
use crate::kernels::{kernel_values, ode_kernels, radial_norm, Deriv};
use crate::rates::{fit_rate, sharpest_linear, Component};
use crate::solver::{make_data, run_from, CoupledState, DataKind, RunOptions, RunStatus, SystemParams};
use crate::spectral::Grid;
use crate::testfn::{
    blowup_scalings, bracket_decay_check, critical_constants, scaling_identity_check, BracketWeight, FarField,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Kernels,
    Simulate,
    Rates,
    Atlas,
    Testfn,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Kernels => "kernels",
            Command::Simulate => "simulate",
            Command::Rates => "rates",
            Command::Atlas => "atlas",
            Command::Testfn => "testfn",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: u32,
    #[serde(default = "one")]
    pub m: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKindName {
    GaussianBump,
    SlowDecayProfile,
    SmallEnergy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub kind: DataKindName,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_tilde: Option<f64>,
}

fn default_threshold() -> f64 {
    crate::solver::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub h: f64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub resolution: usize,
}

fn default_ode_steps() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub delta: f64,
    pub times: Vec<f64>,
    pub xis: Vec<f64>,
    #[serde(default = "default_ode_steps")]
    pub ode_steps: usize,
}

fn default_derivs() -> Vec<[u32; 2]> {
    vec![[0, 0]]
}
fn default_t_min() -> f64 {
    1e2
}
fn default_t_max() -> f64 {
    1e4
}
fn default_samples() -> usize {
    24
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub n: u32,
    pub delta: f64,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "default_derivs")]
    pub derivs: Vec<[u32; 2]>,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_radius_max() -> f64 {
    1000.0
}
fn default_scale() -> f64 {
    4.0
}
fn default_points() -> Vec<f64> {
    vec![0.0, 1.0, 5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestfnSection {
    pub r: f64,
    pub s: f64,
    pub n: u32,
    #[serde(default = "default_radius_max")]
    pub radius_max: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "default_points")]
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub testfn: Option<TestfnSection>,
}

fn reject(path: &str, reason: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{path}: {reason}"))
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(reject(path, "must be finite"))
    }
}

fn check_delta(path: &str, name: &str, v: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&v) {
        return Err(reject(path, format!("{name} must lie in [0, 0.5]")));
    }
    Ok(())
}

fn check_m(path: &str, m: f64) -> Result<()> {
    if !(1.0..2.0).contains(&m) {
        return Err(reject(path, "m must lie in [1, 2)"));
    }
    Ok(())
}

impl SystemSection {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(reject("system.n", "n must be at least 1"));
        }
        check_m("system.m", self.m)?;
        check_delta("system.delta1", "delta1", self.delta1)?;
        check_delta("system.delta2", "delta2", self.delta2)?;
        for (path, v) in [("system.p", self.p), ("system.q", self.q)] {
            finite(path, v)?;
            if !(v > 1.0) {
                return Err(reject(path, "exponent must exceed 1"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::new(self.n, self.m, self.delta1, self.delta2, self.p, self.q)
    }
}

fn require<'a, T>(sec: &'a Option<T>, name: &str, cmd: Command) -> Result<&'a T> {
    sec.as_ref()
        .ok_or_else(|| reject(name, format!("section [{name}] is required by `{}`", cmd.as_str())))
}

impl RunConfig {
    /// Domain checks, with the offending field path in every message.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.system {
            s.validate()?;
        }
        if let Some(g) = &self.grid {
            if g.points < 8 || g.points % 2 != 0 {
                return Err(reject("grid.points", "points must be even and at least 8"));
            }
            finite("grid.half_width", g.half_width)?;
            if !(g.half_width > 0.0) {
                return Err(reject("grid.half_width", "half_width must be positive"));
            }
        }
        if let Some(d) = &self.data {
            finite("data.amplitude", d.amplitude)?;
            if !(d.amplitude >= 0.0) {
                return Err(reject("data.amplitude", "amplitude must be non-negative"));
            }
            if !(d.width > 0.0) || !d.width.is_finite() {
                return Err(reject("data.width", "width must be positive"));
            }
            if d.kind == DataKindName::SlowDecayProfile {
                match d.eps_tilde {
                    Some(e) if e > 0.0 && e.is_finite() => {}
                    Some(_) => return Err(reject("data.eps_tilde", "eps_tilde must be positive")),
                    None => return Err(reject("data.eps_tilde", "required for slow_decay_profile")),
                }
            }
        }
        if let Some(t) = &self.time {
            finite("time.t_final", t.t_final)?;
            if !(t.t_final >= 0.0) {
                return Err(reject("time.t_final", "t_final must be non-negative"));
            }
            if !(t.h > 0.0) || !t.h.is_finite() {
                return Err(reject("time.h", "h must be positive"));
            }
            if t.record_every == 0 {
                return Err(reject("time.record_every", "record_every must be at least 1"));
            }
            if !(t.threshold > 0.0) {
                return Err(reject("time.threshold", "threshold must be positive"));
            }
        }
        if let Some(s) = &self.sweep {
            for (path, lo, hi) in [("sweep.p", s.p_min, s.p_max), ("sweep.q", s.q_min, s.q_max)] {
                if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
                    return Err(reject(path, "range must satisfy 1 <= min < max < inf"));
                }
            }
            if s.resolution == 0 || s.resolution > 2000 {
                return Err(reject("sweep.resolution", "resolution must lie in 1..=2000"));
            }
        }
        if let Some(k) = &self.kernels {
            check_delta("kernels.delta", "delta", k.delta)?;
            if k.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                return Err(reject("kernels.times", "times must be finite and non-negative"));
            }
            if k.xis.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(reject("kernels.xis", "frequencies must be finite and non-negative"));
            }
            if k.ode_steps == 0 {
                return Err(reject("kernels.ode_steps", "ode_steps must be at least 1"));
            }
        }
        if let Some(r) = &self.rates {
            if r.n == 0 {
                return Err(reject("rates.n", "n must be at least 1"));
            }
            check_delta("rates.delta", "delta", r.delta)?;
            check_m("rates.m", r.m)?;
            if r.derivs.is_empty() || r.derivs.iter().any(|d| d[0] > 1) {
                return Err(reject("rates.derivs", "need at least one (j, k) pair with j in {0, 1}"));
            }
            if !(r.t_min > 0.0 && r.t_max > r.t_min && r.t_max.is_finite()) {
                return Err(reject("rates.t_min", "need 0 < t_min < t_max < inf"));
            }
            if r.samples < 8 {
                return Err(reject("rates.samples", "samples must be at least 8"));
            }
        }
        if let Some(t) = &self.testfn {
            if !(t.r > 0.0) || !t.r.is_finite() {
                return Err(reject("testfn.r", "r must be positive"));
            }
            if !(t.s > 0.0 && t.s < 1.0) {
                return Err(reject("testfn.s", "s must lie in (0, 1)"));
            }
            if !(1..=2).contains(&t.n) {
                return Err(reject("testfn.n", "n must be 1 or 2"));
            }
            if !(t.radius_max > 1.0) || !t.radius_max.is_finite() {
                return Err(reject("testfn.radius_max", "radius_max must exceed 1"));
            }
            if !(t.scale > 0.0) || !(t.kappa > 0.0) {
                return Err(reject("testfn.scale", "scale and kappa must be positive"));
            }
        }
        let cmd = self.command;
        match cmd {
            Command::Kernels => {
                require(&self.kernels, "kernels", cmd)?;
            }
            Command::Simulate => {
                let s = require(&self.system, "system", cmd)?;
                let g = require(&self.grid, "grid", cmd)?;
                require(&self.data, "data", cmd)?;
                require(&self.time, "time", cmd)?;
                if s.n > 3 {
                    return Err(reject("system.n", "grid simulations support n <= 3"));
                }
                let _ = g;
            }
            Command::Rates => {
                require(&self.rates, "rates", cmd)?;
            }
            Command::Atlas => {
                require(&self.system, "system", cmd)?;
                require(&self.sweep, "sweep", cmd)?;
            }
            Command::Testfn => {
                require(&self.testfn, "testfn", cmd)?;
            }
        }
        Ok(())
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical TOML form; parsing it yields the same configuration.
pub fn serialize_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::InvalidInput(format!("config: {e}")))
}

pub fn run_id(cfg: &RunConfig) -> Result<String> {
    let text = serialize_config(cfg)?;
    let digest = Sha256::digest(format!("{text}\nseed={}", cfg.seed).as_bytes());
    Ok(hex(&digest)[..16].to_string())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV table built in memory; every row gets the run id appended.
#[derive(Debug, Clone)]
pub struct CsvTable {
    text: String,
    run_id: String,
}

impl CsvTable {
    pub fn new(columns: &[&str], run_id: &str) -> Self {
        let mut text = columns.join(",");
        text.push_str(",run_id\n");
        Self {
            text,
            run_id: run_id.to_string(),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push(',');
        self.text.push_str(&self.run_id);
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub run_id: String,
    pub seed: u64,
    pub config: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: String,
    pub exit_code: i32,
    pub warnings: Vec<String>,
    pub outputs: Vec<OutputEntry>,
}

/// Files and flags produced by a subcommand.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub status: String,
    /// Set when the command finished but reports a numerical failure.
    pub failure: Option<Error>,
}

fn kernels_cmd(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    let k = cfg.kernels.as_ref().expect("validated");
    let mut t = CsvTable::new(
        &[
            "t", "xi", "delta", "branch", "k0", "k1", "dk0", "dk1", "ode_k0", "ode_k1", "ode_dk0", "ode_dk1", "max_rel_delta",
        ],
        rid,
    );
    for &time in &k.times {
        for &xi in &k.xis {
            let kv = kernel_values(time, xi, k.delta);
            let c = kv.real();
            let o = ode_kernels(time, xi, k.delta, k.ode_steps);
            let scale = c.iter().chain(&o).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let dev = c.iter().zip(&o).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
            let mut row = vec![fmt_f64(time), fmt_f64(xi), fmt_f64(k.delta), kv.branch.as_str().to_string()];
            row.extend(c.iter().chain(&o).map(|v| fmt_f64(*v)));
            row.push(fmt_f64(dev));
            t.row(&row);
        }
    }
    Ok(Artifacts {
        files: vec![("kernels.csv".into(), t.into_string())],
        status: "completed".into(),
        ..Default::default()
    })
}

fn simulate_cmd(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    let sys = cfg.system.as_ref().expect("validated");
    let g = cfg.grid.as_ref().expect("validated");
    let d = cfg.data.as_ref().expect("validated");
    let tm = cfg.time.as_ref().expect("validated");
    let params = sys.params()?;
    let grid = Grid::new(sys.n as usize, g.points, g.half_width)?;
    let kind = match d.kind {
        DataKindName::GaussianBump => DataKind::GaussianBump { width: d.width },
        DataKindName::SlowDecayProfile => DataKind::SlowDecayProfile {
            eps_tilde: d.eps_tilde.expect("validated"),
        },
        DataKindName::SmallEnergy => DataKind::SmallEnergy { seed: cfg.seed },
    };
    let data = make_data(kind, &grid, &params, d.amplitude)?;
    let state = CoupledState::from_data(&data, params)?;
    let mut opts = RunOptions::new(tm.t_final, tm.h, tm.record_every);
    opts.threshold = tm.threshold;
    let out = run_from(state, &opts)?;
    let rec = &out.record;
    let cols = [
        "t", "u_l2", "u_grad", "ut_l2", "v_l2", "v_grad", "vt_l2", "u_sup", "v_sup", "u_lm", "v_lm", "u_max", "u_min",
        "v_max", "v_min", "residue",
    ];
    let mut t = CsvTable::new(&cols, rid);
    for r in &rec.rows {
        t.row(
            &[
                r.t, r.u_l2, r.u_grad, r.ut_l2, r.v_l2, r.v_grad, r.vt_l2, r.u_sup, r.v_sup, r.u_lm, r.v_lm, r.u_max,
                r.u_min, r.v_max, r.v_min, r.residue,
            ]
            .map(fmt_f64),
        );
    }
    let mut warnings = Vec::new();
    if rec.wraparound_warning {
        warnings.push("wraparound: t exceeded half the box width".to_string());
    }
    let blowup_t = match rec.status {
        RunStatus::BlowUpDetected(ts) => ts,
        _ => f64::NAN,
    };
    let mut summary = CsvTable::new(&["status", "blowup_time", "a_norm", "wraparound"], rid);
    summary.row(&[
        rec.status.label(),
        fmt_f64(blowup_t),
        fmt_f64(data.a_norm),
        rec.wraparound_warning.to_string(),
    ]);
    let failure = match &rec.status {
        RunStatus::Aborted(reason) => Some(Error::Numerical(reason.clone())),
        _ => None,
    };
    Ok(Artifacts {
        files: vec![
            ("trajectory.csv".into(), t.into_string()),
            ("summary.csv".into(), summary.into_string()),
        ],
        warnings,
        status: rec.status.label(),
        failure,
    })
}

fn rates_cmd(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    let r = cfg.rates.as_ref().expect("validated");
    let pt = ParamPoint::new(r.n, r.m, r.delta, r.delta, 2.0, 2.0);
    let count = r.samples;
    let (lo, hi) = (r.t_min.ln(), r.t_max.ln());
    let times: Vec<f64> = (0..count).map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()).collect();
    let mut t = CsvTable::new(
        &["n", "m", "delta", "j", "k", "driven", "source", "predicted", "fitted", "stderr"],
        rid,
    );
    for d in &r.derivs {
        let deriv = Deriv { j: d[0], k: d[1] };
        let pred = sharpest_linear(&pt, Component::U, deriv)?;
        for (label, w0) in [("w0", true), ("w1", false)] {
            let gauss = |rho: f64| {
                let g = (-0.5 * rho * rho).exp();
                if w0 {
                    (g, 0.0)
                } else {
                    (0.0, g)
                }
            };
            let vals = times
                .iter()
                .map(|&tt| radial_norm(tt, r.delta, gauss, r.n, deriv))
                .collect::<Result<Vec<f64>>>()?;
            let (slope, se) = fit_rate(&times, &vals, (r.t_min, r.t_max))?;
            let predicted = if w0 { pred.exponent_w0 } else { pred.exponent_w1 };
            t.row(&[
                r.n.to_string(),
                fmt_f64(r.m),
                fmt_f64(r.delta),
                d[0].to_string(),
                d[1].to_string(),
                label.to_string(),
                pred.source.as_str().to_string(),
                fmt_f64(predicted),
                fmt_f64(slope),
                fmt_f64(se),
            ]);
        }
    }
    Ok(Artifacts {
        files: vec![("rates.csv".into(), t.into_string())],
        status: "completed".into(),
        ..Default::default()
    })
}

/// Column names of the region map.
pub const ATLAS_COLUMNS: [&str; 6] = ["p", "q", "verdict", "margin_17", "margin_18", "margin_114"];

fn atlas_cmd(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    let s = cfg.system.as_ref().expect("validated");
    let sw = cfg.sweep.as_ref().expect("validated");
    let template = ParamPoint::new(s.n, s.m, s.delta1, s.delta2, s.p, s.q);
    let cells = sweep(&template, (sw.p_min, sw.p_max), (sw.q_min, sw.q_max), sw.resolution)?;
    let mut t = CsvTable::new(&ATLAS_COLUMNS, rid);
    for c in &cells {
        let pt = ParamPoint { p: c.p, q: c.q, ..template.clone() };
        let (ratio, range, blow) = branch_margins(&c.verdict, &pt);
        t.row(&[
            fmt_f64(c.p),
            fmt_f64(c.q),
            c.verdict.verdict.label(),
            fmt_f64(ratio),
            fmt_f64(range),
            fmt_f64(blow),
        ]);
    }
    Ok(Artifacts {
        files: vec![("atlas.csv".into(), t.into_string())],
        status: "completed".into(),
        ..Default::default()
    })
}

fn testfn_cmd(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    let tf = cfg.testfn.as_ref().expect("validated");
    let rep = bracket_decay_check(tf.r, tf.s, tf.n, tf.radius_max)?;
    let mut decay = CsvTable::new(&["radius", "value", "ratio", "plain_ratio"], rid);
    for i in 0..rep.radii.len() {
        decay.row(&[rep.radii[i], rep.values[i], rep.ratios[i], rep.plain_ratios[i]].map(fmt_f64));
    }
    let w = BracketWeight::new(tf.r)?;
    let phi = |y: &[f64]| w.eval(y);
    let pts: Vec<Vec<f64>> = tf
        .points
        .iter()
        .map(|&x| {
            let mut v = vec![0.0; tf.n as usize];
            v[0] = x;
            v
        })
        .collect();
    let deviation = scaling_identity_check(&phi, tf.scale, tf.kappa, tf.s, &pts, FarField::Decaying)?;
    let mut summary = CsvTable::new(&["key", "value"], rid);
    let mut put = |k: &str, v: String| summary.row(&[k.to_string(), v]);
    put("branch", format!("{:?}", rep.branch).to_lowercase());
    put("max_ratio", fmt_f64(rep.max_ratio));
    put("tail_slope", fmt_f64(rep.tail_slope));
    put("plain_tail_slope", fmt_f64(rep.plain_tail_slope));
    put("flat", rep.flat.to_string());
    put("scaling_deviation", fmt_f64(deviation));
    let mut warnings = Vec::new();
    if let Some(s) = &cfg.system {
        let pt = ParamPoint::new(s.n, s.m, s.delta1, s.delta2, s.p, s.q);
        let exact = pt.to_exact();
        let sc = match &exact {
            Some(e) => blowup_scalings(e)?.to_f64(),
            None => blowup_scalings(&pt)?,
        };
        put("alpha", fmt_f64(sc.alpha));
        put("beta", fmt_f64(sc.beta));
        put("gamma1", fmt_f64(sc.gamma1));
        put("gamma2", fmt_f64(sc.gamma2));
        put("chain_holds", sc.chain_holds().to_string());
        if !sc.chain_holds() {
            warnings.push("scaling comparison chain violated".to_string());
        }
        match critical_constants(&s.params()?) {
            Ok(c) => {
                put("bracket_integral", fmt_f64(c.bracket_integral));
                put("d_p", fmt_f64(c.d_p));
                put("d_q", fmt_f64(c.d_q));
                put("eps2", fmt_f64(c.eps2));
            }
            Err(Error::Inapplicable(msg)) => {
                put("critical_constants", "refused".into());
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Artifacts {
        files: vec![
            ("bracket_decay.csv".into(), decay.into_string()),
            ("testfn_summary.csv".into(), summary.into_string()),
        ],
        warnings,
        status: "completed".into(),
        failure: None,
    })
}

/// Runs the configured subcommand and returns its artifacts.
pub fn dispatch(cfg: &RunConfig, rid: &str) -> Result<Artifacts> {
    match cfg.command {
        Command::Kernels => kernels_cmd(cfg, rid),
        Command::Simulate => simulate_cmd(cfg, rid),
        Command::Rates => rates_cmd(cfg, rid),
        Command::Atlas => atlas_cmd(cfg, rid),
        Command::Testfn => testfn_cmd(cfg, rid),
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn write_outputs(out: &Path, files: &[(String, String)]) -> Result<Vec<OutputEntry>> {
    fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    for (name, text) in files {
        let path: PathBuf = out.join(name);
        fs::write(&path, text.as_bytes())?;
        let bytes = fs::read(&path)?;
        entries.push(OutputEntry {
            file: name.clone(),
            bytes: bytes.len() as u64,
            sha256: hex(&Sha256::digest(&bytes)),
        });
    }
    Ok(entries)
}

/// Name of the manifest file inside the output directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Parses `config_text`, applies the seed override, runs the command, writes
/// the outputs and finally the manifest into `out`. Returns the manifest;
/// its `exit_code` is 0, 2 (validation), 3 (numerical) or 1 (i/o).
pub fn run_cli(config_text: &str, seed: Option<u64>, out: &Path) -> RunManifest {
    let started = now();
    let mut manifest = RunManifest {
        tool: "dampwave".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: String::new(),
        run_id: String::new(),
        seed: 0,
        config: config_text.to_string(),
        started_unix: started,
        finished_unix: started,
        status: String::new(),
        exit_code: 0,
        warnings: Vec::new(),
        outputs: Vec::new(),
    };
    let result = (|| -> Result<Artifacts> {
        let mut cfg = parse_config(config_text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        manifest.command = cfg.command.as_str().into();
        manifest.seed = cfg.seed;
        manifest.config = serialize_config(&cfg)?;
        manifest.run_id = run_id(&cfg)?;
        dispatch(&cfg, &manifest.run_id)
    })();
    match result {
        Ok(art) => {
            manifest.status = art.status.clone();
            manifest.warnings = art.warnings.clone();
            match write_outputs(out, &art.files) {
                Ok(entries) => manifest.outputs = entries,
                Err(e) => {
                    manifest.status = format!("error: {e}");
                    manifest.exit_code = e.exit_code();
                }
            }
            if let Some(f) = &art.failure {
                manifest.exit_code = f.exit_code();
            }
        }
        Err(e) => {
            manifest.status = format!("error: {e}");
            manifest.exit_code = e.exit_code();
        }
    }
    manifest.finished_unix = now();
    if let Err(e) = write_manifest(out, &manifest) {
        manifest.status = format!("error: {e}");
        manifest.exit_code = e.exit_code();
    }
    manifest
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out.join(MANIFEST_NAME), text)?;
    Ok(())
}

/// Recomputes every digest listed in the manifest found in `out`.
pub fn verify_manifest(out: &Path) -> Result<bool> {
    let text = fs::read_to_string(out.join(MANIFEST_NAME))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
    for e in &m.outputs {
        let bytes = fs::read(out.join(&e.file))?;
        if hex(&Sha256::digest(&bytes)) != e.sha256 || bytes.len() as u64 != e.bytes {
            return Ok(false);
        }
    }
    Ok(true)
}

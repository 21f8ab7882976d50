//! Pseudospectral Duhamel integration of the coupled system
//!
//! ```text
//! u_tt − Δu + (−Δ)^δ₁ u_t = |v|^p,    v_tt − Δv + (−Δ)^δ₂ v_t = |u|^q
//! ```
//!
//! on a periodic grid. Over one step of length h the linear part is applied
//! exactly through the propagator symbols and the Duhamel integral
//! ∫₀^h K̂₁(h−τ) F̂(t+τ) dτ is replaced by the trapezoid rule. Since K̂₁(0) = 0
//! the right endpoint drops out of the u-update, so the predicted u(t+h) is
//! already the corrected one, and the right-endpoint source then enters the
//! u_t-update through ∂_tK̂₁(0) = 1:
//!
//! ```text
//! û(t+h)   = K̂₀û + K̂₁û_t + (h/2) K̂₁(h) F̂(t)
//! û_t(t+h) = ∂K̂₀û + ∂K̂₁û_t + (h/2) (∂K̂₁(h) F̂(t) + F̂(t+h))
//! ```
//!
//! Sources are formed pointwise in physical space, transformed and truncated
//! by the 2/3 rule. This only mitigates aliasing, since |v|^p is not a
//! polynomial for general p.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::kernels::PropagatorTable;
use crate::spectral::{forward, inverse_with_residue, Grid, RealField, SpectralField};
use crate::{Error, Result};

/// Default blow-up threshold on ‖u‖_∞ + ‖v‖_∞.
pub const DEFAULT_THRESHOLD: f64 = 1e8;
/// Default number of strictly increasing samples required before a blow-up is declared.
pub const DEFAULT_WINDOW: usize = 5;

/// The parameter tuple (n, m, δ₁, δ₂, p, q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub n: u32,
    pub m: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub p: f64,
    pub q: f64,
}

impl SystemParams {
    pub fn new(n: u32, m: f64, delta1: f64, delta2: f64, p: f64, q: f64) -> Result<Self> {
        let s = Self { n, m, delta1, delta2, p, q };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if !(self.m >= 1.0 && self.m < 2.0) {
            return Err(Error::InvalidInput(format!("m must lie in [1, 2), got {}", self.m)));
        }
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if !(0.0..=0.5).contains(&d) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 0.5], got {d}")));
            }
        }
        for (name, e) in [("p", self.p), ("q", self.q)] {
            if !(e > 1.0) || !e.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be a finite number > 1, got {e}")));
            }
        }
        Ok(())
    }

    /// m₀ = 2m/(2−m).
    pub fn m0(&self) -> f64 {
        2.0 * self.m / (2.0 - self.m)
    }

    /// Exchanges the roles of the two equations.
    pub fn swapped(&self) -> Self {
        Self {
            delta1: self.delta2,
            delta2: self.delta1,
            p: self.q,
            q: self.p,
            ..*self
        }
    }
}

/// Frequency-space state (û, û_t, v̂, v̂_t) at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub u: SpectralField,
    pub ut: SpectralField,
    pub v: SpectralField,
    pub vt: SpectralField,
    pub t: f64,
    pub params: SystemParams,
}

impl CoupledState {
    pub fn new(
        u: SpectralField,
        ut: SpectralField,
        v: SpectralField,
        vt: SpectralField,
        t: f64,
        params: SystemParams,
    ) -> Result<Self> {
        params.validate()?;
        let g = u.grid();
        if ut.grid() != g || v.grid() != g || vt.grid() != g {
            return Err(Error::GridMismatch("state components live on different grids".into()));
        }
        if g.dim() as u32 != params.n {
            return Err(Error::GridMismatch(format!(
                "grid dimension {} differs from n = {}",
                g.dim(),
                params.n
            )));
        }
        Ok(Self { u, ut, v, vt, t, params })
    }

    pub fn from_data(data: &InitialData, params: SystemParams) -> Result<Self> {
        Self::new(
            forward(&data.u0)?,
            forward(&data.u1)?,
            forward(&data.v0)?,
            forward(&data.v1)?,
            0.0,
            params,
        )
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// Largest relative Hermitian defect among the four components.
    pub fn hermitian_defect(&self) -> f64 {
        [&self.u, &self.ut, &self.v, &self.vt]
            .iter()
            .map(|f| f.hermitian_defect())
            .fold(0.0, f64::max)
    }

    /// The state with the two equations exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            u: self.v.clone(),
            ut: self.vt.clone(),
            v: self.u.clone(),
            vt: self.ut.clone(),
            t: self.t,
            params: self.params.swapped(),
        }
    }
}

/// Initial-data families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataKind {
    /// u₁ = v₁ = ε e^{−|x|²/(2w²)}, u₀ = v₀ = 0.
    GaussianBump { width: f64 },
    /// u₁ = v₁ = ε(1+|x|)^{−(n+ε̃)/m}, u₀ = v₀ = 0.
    SlowDecayProfile { eps_tilde: f64 },
    /// Zero-mean smooth data from a seeded family of dipoles, scaled so that
    /// ‖(u₀,u₁)‖_A + ‖(v₀,v₁)‖_A = ε.
    SmallEnergy { seed: u64 },
}

/// Physical-space initial data together with its data norm.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub u0: RealField,
    pub u1: RealField,
    pub v0: RealField,
    pub v1: RealField,
    /// ‖(u₀,u₁)‖_A + ‖(v₀,v₁)‖_A on the grid.
    pub a_norm: f64,
}

impl InitialData {
    pub fn swapped(&self) -> Self {
        Self {
            u0: self.v0.clone(),
            u1: self.v1.clone(),
            v0: self.u0.clone(),
            v1: self.u1.clone(),
            a_norm: self.a_norm,
        }
    }
}

/// ‖f‖_{H¹} = (Σ (1+|ξ|²)|f̂|²)^{1/2} on the grid.
pub fn h1_norm(f: &RealField) -> Result<f64> {
    let fh = forward(f)?;
    let xi = f.grid().frequency_magnitudes();
    let s: f64 = fh
        .coefs()
        .iter()
        .zip(&xi)
        .map(|(c, x)| (1.0 + x * x) * c.norm_sqr())
        .sum();
    Ok((s * f.grid().freq_cell_volume()).sqrt())
}

/// ‖(f₀,f₁)‖_A = ‖f₀‖_{L^m} + ‖f₀‖_{H¹} + ‖f₁‖_{L^m} + ‖f₁‖_{L²}.
pub fn a_norm(f0: &RealField, f1: &RealField, m: f64) -> Result<f64> {
    Ok(f0.lp_norm(m) + h1_norm(f0)? + f1.lp_norm(m) + f1.l2_norm())
}

fn dipole_family(grid: &Grid, rng: &mut ChaCha8Rng, count: usize) -> RealField {
    let n = grid.dim();
    let reach = grid.half_width() / 4.0;
    let terms: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-reach..reach)).collect();
            let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = e.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            e.iter_mut().for_each(|v| *v /= len);
            let w = rng.gen_range(1.0..2.0);
            let a = rng.gen_range(0.5..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (c, e, w, a)
        })
        .collect();
    let mut f = grid.sample(|x| {
        terms
            .iter()
            .map(|(c, e, w, a)| {
                let mut r2 = 0.0;
                let mut proj = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - c[i];
                    r2 += d * d;
                    proj += d * e[i];
                }
                a * proj / w * (-r2 / (2.0 * w * w)).exp()
            })
            .sum()
    });
    // remove the residual discrete mean
    let mean = f.values().iter().sum::<f64>() / grid.len() as f64;
    f.values_mut().iter_mut().for_each(|v| *v -= mean);
    f
}

/// Builds initial data of the requested family with amplitude `amplitude`.
pub fn make_data(kind: DataKind, grid: &Grid, params: &SystemParams, amplitude: f64) -> Result<InitialData> {
    params.validate()?;
    if grid.dim() as u32 != params.n {
        return Err(Error::GridMismatch(format!(
            "grid dimension {} differs from n = {}",
            grid.dim(),
            params.n
        )));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidInput(format!("amplitude must be finite and non-negative, got {amplitude}")));
    }
    let zero = RealField::zeros(*grid);
    let (u0, u1, v0, v1) = match kind {
        DataKind::GaussianBump { width } => {
            if !(width > 0.0) {
                return Err(Error::InvalidInput(format!("bump width must be positive, got {width}")));
            }
            let b = grid.sample(|x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            });
            (zero.clone(), b.clone(), zero, b)
        }
        DataKind::SlowDecayProfile { eps_tilde } => {
            if !(eps_tilde > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "the decay excess must be positive, got {eps_tilde}"
                )));
            }
            let expo = -(params.n as f64 + eps_tilde) / params.m;
            let b = grid.sample(|x| {
                let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                amplitude * (1.0 + r).powf(expo)
            });
            (zero.clone(), b.clone(), zero, b)
        }
        DataKind::SmallEnergy { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fields: Vec<RealField> = (0..4).map(|_| dipole_family(grid, &mut rng, 3)).collect();
            let raw = a_norm(&fields[0], &fields[1], params.m)? + a_norm(&fields[2], &fields[3], params.m)?;
            let c = if raw > 0.0 { amplitude / raw } else { 0.0 };
            let mut it = fields.into_iter().map(|f| f.scaled(c));
            let u0 = it.next().unwrap();
            let u1 = it.next().unwrap();
            let v0 = it.next().unwrap();
            let v1 = it.next().unwrap();
            (u0, u1, v0, v1)
        }
    };
    let a = a_norm(&u0, &u1, params.m)? + a_norm(&v0, &v1, params.m)?;
    Ok(InitialData { u0, u1, v0, v1, a_norm: a })
}

/// |x|^p, evaluated as exp(p ln|x|) with |x| < 1e−300 flushed to 0.
pub fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if a < 1e-300 {
        0.0
    } else {
        (p * a.ln()).exp()
    }
}

/// One row of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub u_l2: f64,
    pub u_grad: f64,
    pub ut_l2: f64,
    pub v_l2: f64,
    pub v_grad: f64,
    pub vt_l2: f64,
    pub u_sup: f64,
    pub v_sup: f64,
    pub u_lm: f64,
    pub v_lm: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub v_max: f64,
    pub v_min: f64,
    /// Largest imaginary residue of the inverse transforms, relative.
    pub residue: f64,
}

impl TrajectoryRow {
    /// The six energy-type norms in the order ‖u‖, ‖∇u‖, ‖u_t‖, ‖v‖, ‖∇v‖, ‖v_t‖.
    pub fn six_norms(&self) -> [f64; 6] {
        [self.u_l2, self.u_grad, self.ut_l2, self.v_l2, self.v_grad, self.vt_l2]
    }

    pub fn sup_sum(&self) -> f64 {
        self.u_sup + self.v_sup
    }

    fn blank(t: f64) -> Self {
        Self {
            t,
            u_l2: f64::NAN,
            u_grad: f64::NAN,
            ut_l2: f64::NAN,
            v_l2: f64::NAN,
            v_grad: f64::NAN,
            vt_l2: f64::NAN,
            u_sup: f64::NAN,
            v_sup: f64::NAN,
            u_lm: f64::NAN,
            v_lm: f64::NAN,
            u_max: f64::NAN,
            u_min: f64::NAN,
            v_max: f64::NAN,
            v_min: f64::NAN,
            residue: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Running,
    Completed,
    BlowUpDetected(f64),
    Aborted(String),
}

impl RunStatus {
    pub fn label(&self) -> String {
        match self {
            RunStatus::Running => "running".into(),
            RunStatus::Completed => "completed".into(),
            RunStatus::BlowUpDetected(t) => format!("blowup_detected@{t}"),
            RunStatus::Aborted(r) => format!("aborted:{r}"),
        }
    }
}

/// Norm history of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub status: RunStatus,
    /// Set once t exceeds half the box width, after which periodic images interact.
    pub wraparound_warning: bool,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column<F: Fn(&TrajectoryRow) -> f64>(&self, f: F) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// First recorded time at which ‖u‖_∞ + ‖v‖_∞ exceeds `threshold` (or is
/// not finite) while the last `window` samples up to it increase strictly.
pub fn detect_blowup(record: &TrajectoryRecord, threshold: f64, window: usize) -> Option<f64> {
    let key = |r: &TrajectoryRow| {
        let s = r.sup_sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    };
    let rows = &record.rows;
    for i in 0..rows.len() {
        let s = key(&rows[i]);
        if s <= threshold {
            continue;
        }
        let lo = (i + 1).saturating_sub(window.max(1));
        let increasing = (lo..i).all(|j| {
            let (a, b) = (key(&rows[j]), key(&rows[j + 1]));
            a < b || (b == f64::INFINITY && a.is_finite())
        });
        if increasing {
            return Some(rows[i].t);
        }
    }
    None
}

/// A physical-space snapshot of (u, v).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: RealField,
    pub v: RealField,
}

/// Integrator with kernel tables frozen for one step size.
pub struct Stepper {
    h: f64,
    params: SystemParams,
    nonlinear: bool,
    tab_u: PropagatorTable,
    tab_v: PropagatorTable,
    mask: Vec<bool>,
    xi: Vec<f64>,
    // sources at the current time: |v|^p feeds u, |u|^q feeds v
    src_u: SpectralField,
    src_v: SpectralField,
    phys_u: RealField,
    phys_v: RealField,
    residue: f64,
}

fn source(field: &RealField, power: f64, mask: &[bool]) -> Result<SpectralField> {
    let mut s = forward(&field.map(|x| abs_pow(x, power)))?;
    s.dealias(mask);
    Ok(s)
}

fn duhamel(
    tab: &PropagatorTable,
    w: &SpectralField,
    wt: &SpectralField,
    src: &SpectralField,
    h: f64,
) -> (SpectralField, SpectralField) {
    let (mut nw, mut nwt) = tab.apply(w, wt);
    let s = src.coefs();
    nw.coefs_mut()
        .par_iter_mut()
        .zip(nwt.coefs_mut().par_iter_mut())
        .enumerate()
        .for_each(|(i, (a, b))| {
            *a += s[i] * (0.5 * h * tab.k1[i]);
            *b += s[i] * (0.5 * h * tab.dk1[i]);
        });
    (nw, nwt)
}

fn add_half(target: &mut SpectralField, src: &SpectralField, h: f64) {
    let s = src.coefs();
    target
        .coefs_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, c)| *c += s[i] * (0.5 * h));
}

impl Stepper {
    pub fn new(state: &CoupledState, h: f64, nonlinear: bool) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("step size must be positive, got {h}")));
        }
        let grid = *state.grid();
        let xi = grid.frequency_magnitudes();
        let params = state.params;
        let mask = grid.dealias_mask();
        let (phys_u, ru) = inverse_with_residue(&state.u)?;
        let (phys_v, rv) = inverse_with_residue(&state.v)?;
        let (src_u, src_v) = if nonlinear {
            (source(&phys_v, params.p, &mask)?, source(&phys_u, params.q, &mask)?)
        } else {
            (SpectralField::zeros(grid), SpectralField::zeros(grid))
        };
        Ok(Self {
            h,
            params,
            nonlinear,
            tab_u: PropagatorTable::new(&xi, params.delta1, h),
            tab_v: PropagatorTable::new(&xi, params.delta2, h),
            mask,
            xi,
            src_u,
            src_v,
            phys_u,
            phys_v,
            residue: ru.max(rv),
        })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Advances `state` by one step in place.
    pub fn advance(&mut self, state: &mut CoupledState) -> Result<()> {
        let h = self.h;
        let (nu, mut nut) = duhamel(&self.tab_u, &state.u, &state.ut, &self.src_u, h);
        let (nv, mut nvt) = duhamel(&self.tab_v, &state.v, &state.vt, &self.src_v, h);
        let (pu, ru) = crate::spectral::inverse_with_residue(&nu)?;
        let (pv, rv) = crate::spectral::inverse_with_residue(&nv)?;
        if pu.values().iter().chain(pv.values()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite values in the solution".into()));
        }
        if self.nonlinear {
            let su = source(&pv, self.params.p, &self.mask)?;
            let sv = source(&pu, self.params.q, &self.mask)?;
            add_half(&mut nut, &su, h);
            add_half(&mut nvt, &sv, h);
            self.src_u = su;
            self.src_v = sv;
        }
        self.phys_u = pu;
        self.phys_v = pv;
        self.residue = ru.max(rv);
        state.u = nu;
        state.ut = nut;
        state.v = nv;
        state.vt = nvt;
        state.t += h;
        Ok(())
    }

    /// ‖u‖_∞ + ‖v‖_∞ at the current time.
    pub fn sup_sum(&self) -> f64 {
        self.phys_u.sup_norm() + self.phys_v.sup_norm()
    }

    pub fn physical(&self) -> (&RealField, &RealField) {
        (&self.phys_u, &self.phys_v)
    }

    /// Norm row of the current state.
    pub fn row(&self, state: &CoupledState) -> TrajectoryRow {
        let m = self.params.m;
        let (u, v) = (&self.phys_u, &self.phys_v);
        TrajectoryRow {
            t: state.t,
            u_l2: state.u.norm_sq().sqrt(),
            u_grad: state.u.weighted_norm(&self.xi, 1.0),
            ut_l2: state.ut.norm_sq().sqrt(),
            v_l2: state.v.norm_sq().sqrt(),
            v_grad: state.v.weighted_norm(&self.xi, 1.0),
            vt_l2: state.vt.norm_sq().sqrt(),
            u_sup: u.sup_norm(),
            v_sup: v.sup_norm(),
            u_lm: u.lp_norm(m),
            v_lm: v.lp_norm(m),
            u_max: u.max_value(),
            u_min: u.min_value(),
            v_max: v.max_value(),
            v_min: v.min_value(),
            residue: self.residue,
        }
    }
}

/// One step of the full nonlinear scheme.
pub fn step(state: &CoupledState, h: f64) -> Result<CoupledState> {
    step_with(state, h, true)
}

/// One step with the nonlinearity optionally disabled.
pub fn step_with(state: &CoupledState, h: f64, nonlinear: bool) -> Result<CoupledState> {
    let mut s = state.clone();
    Stepper::new(state, h, nonlinear)?.advance(&mut s)?;
    Ok(s)
}

/// Time-stepping controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_final: f64,
    /// Largest admissible step; the actual step divides `t_final` evenly.
    pub h_max: f64,
    pub record_every: usize,
    pub threshold: f64,
    pub window: usize,
    pub nonlinear: bool,
    /// Keep physical snapshots every this many steps.
    pub snapshot_every: Option<usize>,
}

impl RunOptions {
    pub fn new(t_final: f64, h_max: f64, record_every: usize) -> Self {
        Self {
            t_final,
            h_max,
            record_every,
            threshold: DEFAULT_THRESHOLD,
            window: DEFAULT_WINDOW,
            nonlinear: true,
            snapshot_every: None,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub final_state: CoupledState,
    pub snapshots: Vec<Snapshot>,
}

/// Integrates from `state` to `opts.t_final`.
pub fn run_from(state: CoupledState, opts: &RunOptions) -> Result<RunOutput> {
    if !(opts.t_final >= 0.0) || !opts.t_final.is_finite() {
        return Err(Error::InvalidInput(format!("final time must be non-negative, got {}", opts.t_final)));
    }
    if !(opts.h_max > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {}", opts.h_max)));
    }
    if opts.record_every == 0 {
        return Err(Error::InvalidInput("record_every must be at least 1".into()));
    }
    if !(opts.threshold > 0.0) {
        return Err(Error::InvalidInput("blow-up threshold must be positive".into()));
    }
    let span = opts.t_final - state.t;
    if span < 0.0 {
        return Err(Error::InvalidInput("final time precedes the state time".into()));
    }
    let steps = if span == 0.0 { 0 } else { ((span / opts.h_max) - 1e-9).ceil().max(1.0) as usize };
    let h = if steps == 0 { opts.h_max } else { span / steps as f64 };
    let half_width = state.grid().half_width();
    let t0 = state.t;

    let mut state = state;
    let mut stepper = Stepper::new(&state, h, opts.nonlinear)?;
    let mut record = TrajectoryRecord {
        rows: vec![stepper.row(&state)],
        status: RunStatus::Running,
        wraparound_warning: state.t > 0.5 * half_width,
    };
    let mut snapshots = Vec::new();
    let snap = |st: &Stepper, t: f64, out: &mut Vec<Snapshot>| {
        let (u, v) = st.physical();
        out.push(Snapshot { t, u: u.clone(), v: v.clone() });
    };
    if opts.snapshot_every.is_some() {
        snap(&stepper, state.t, &mut snapshots);
    }

    for k in 1..=steps {
        let t_next = t0 + k as f64 * h;
        if let Err(e) = stepper.advance(&mut state) {
            match e {
                Error::Numerical(_) | Error::InvalidInput(_) => {
                    record.rows.push(TrajectoryRow::blank(t_next));
                    record.status = match detect_blowup(&record, opts.threshold, opts.window) {
                        Some(ts) => RunStatus::BlowUpDetected(ts),
                        None => RunStatus::Aborted("numerical overflow".into()),
                    };
                    return Ok(RunOutput { record, final_state: state, snapshots });
                }
                other => return Err(other),
            }
        }
        // keep float drift out of the reported times
        state.t = t_next;
        if state.t > 0.5 * half_width {
            record.wraparound_warning = true;
        }
        let hot = !(stepper.sup_sum() <= opts.threshold);
        if k % opts.record_every == 0 || k == steps || hot {
            record.rows.push(stepper.row(&state));
        }
        if let Some(every) = opts.snapshot_every {
            if every > 0 && k % every == 0 {
                snap(&stepper, state.t, &mut snapshots);
            }
        }
        if hot {
            if let Some(ts) = detect_blowup(&record, opts.threshold, opts.window) {
                record.status = RunStatus::BlowUpDetected(ts);
                return Ok(RunOutput { record, final_state: state, snapshots });
            }
        }
    }
    record.status = RunStatus::Completed;
    Ok(RunOutput { record, final_state: state, snapshots })
}

/// Integrates the data to time `t_final` and returns the norm history.
pub fn run(
    params: SystemParams,
    data: &InitialData,
    t_final: f64,
    h: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let state = CoupledState::from_data(data, params)?;
    Ok(run_from(state, &RunOptions::new(t_final, h, record_every))?.record)
}

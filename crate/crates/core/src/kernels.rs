//! Propagator symbols of the linear structurally damped wave equation
//!
//! ```text
//! ŵ_tt + |ξ|^{2δ} ŵ_t + |ξ|² ŵ = 0,
//! ```
//!
//! exact linear evolution on grids, and a grid-free radial evaluator of
//! ‖∂_t^j ∇^k w(t)‖_{L²} for radial data.
//!
//! With b = |ξ|^{2δ}, a = b/2 and discriminant D = b² − 4|ξ|², the roots are
//! λ₁,₂ = −a ± √D/2. The symbols are evaluated in factored form so that no
//! difference of nearly equal exponentials is ever formed:
//!
//! ```text
//! D > 0, s = √D/2:  K̂₁ = t e^{λ₁t} E(st),           E(z) = (1 − e^{−2z})/(2z)
//! D < 0, s = √−D/2: K̂₁ = t e^{−at} sinc(st)
//! ```
//!
//! and K̂₀ = ∂_tK̂₁ + bK̂₁, ∂_tK̂₀ = −|ξ|²K̂₁.
//!
//! The damping symbol follows 0⁰ = 1, so at δ = 0 the zero mode still feels
//! the friction term u_t.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::quadrature::{integrate_breaks, QuadOptions};
use crate::spectral::SpectralField;
use crate::{Error, Result};

/// Relative size of the discriminant below which the double-root formulas are used.
pub const DEGENERATE_THRESHOLD: f64 = 1e-8;

/// Which closed form produced a [`KernelValues`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    RealDistinct,
    ComplexPair,
    Degenerate,
    ZeroFrequency,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::RealDistinct => "real_distinct",
            Branch::ComplexPair => "complex_pair",
            Branch::Degenerate => "degenerate",
            Branch::ZeroFrequency => "zero_frequency",
        }
    }
}

/// K̂₀, K̂₁ and their time derivatives at one (t, |ξ|, δ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub k0: Complex64,
    pub k1: Complex64,
    pub dk0: Complex64,
    pub dk1: Complex64,
    pub branch: Branch,
}

impl KernelValues {
    /// Real parts; the symbols are real for real (t, |ξ|).
    pub fn real(&self) -> [f64; 4] {
        [self.k0.re, self.k1.re, self.dk0.re, self.dk1.re]
    }
}

/// |ξ|^{2δ} with 0⁰ = 1.
pub fn damping_symbol(xi_abs: f64, delta: f64) -> f64 {
    if delta == 0.0 {
        1.0
    } else {
        xi_abs.powf(2.0 * delta)
    }
}

fn discriminant(xi_abs: f64, delta: f64) -> (f64, f64) {
    let b = damping_symbol(xi_abs, delta);
    let d = b * b - 4.0 * xi_abs * xi_abs;
    (b, d)
}

/// Classifies (|ξ|, δ) into the evaluation branch.
pub fn branch_of(xi_abs: f64, delta: f64) -> Branch {
    let (b, d) = discriminant(xi_abs, delta);
    if xi_abs == 0.0 && delta > 0.0 {
        Branch::ZeroFrequency
    } else if d.abs() < DEGENERATE_THRESHOLD * (b * b).max(4.0 * xi_abs * xi_abs) {
        Branch::Degenerate
    } else if d > 0.0 {
        Branch::RealDistinct
    } else {
        Branch::ComplexPair
    }
}

/// Characteristic roots λ₁ (the `+` branch) and λ₂.
pub fn characteristic_roots(xi_abs: f64, delta: f64) -> (Complex64, Complex64) {
    let (b, d) = discriminant(xi_abs, delta);
    let a = 0.5 * b;
    if d >= 0.0 {
        let s = 0.5 * d.sqrt();
        let l2 = -(a + s);
        // λ₁ = −a + s rewritten through λ₁λ₂ = |ξ|²
        let l1 = if a + s > 0.0 { -xi_abs * xi_abs / (a + s) } else { 0.0 };
        (Complex64::new(l1, 0.0), Complex64::new(l2, 0.0))
    } else {
        let s = 0.5 * (-d).sqrt();
        (Complex64::new(-a, s), Complex64::new(-a, -s))
    }
}

/// E(z) = (1 − e^{−2z})/(2z) = e^{−z} sinh(z)/z.
fn scaled_sinhc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z + 2.0 * z * z / 3.0 - z * z * z / 3.0
    } else {
        -(-2.0 * z).exp_m1() / (2.0 * z)
    }
}

fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Exact propagator symbols at time `t`.
pub fn kernel_values(t: f64, xi_abs: f64, delta: f64) -> KernelValues {
    let branch = branch_of(xi_abs, delta);
    let (b, d) = discriminant(xi_abs, delta);
    let a = 0.5 * b;
    let (k1, dk1) = match branch {
        Branch::ZeroFrequency | Branch::Degenerate => {
            let e = (-a * t).exp();
            (t * e, e * (1.0 - a * t))
        }
        Branch::RealDistinct => {
            let s = 0.5 * d.sqrt();
            let l1 = -xi_abs * xi_abs / (a + s);
            let e1 = (l1 * t).exp();
            let st = s * t;
            let big_e = scaled_sinhc(st);
            let k1 = t * e1 * big_e;
            let dk1 = e1 * (0.5 * (1.0 + (-2.0 * st).exp()) - a * t * big_e);
            (k1, dk1)
        }
        Branch::ComplexPair => {
            let s = 0.5 * (-d).sqrt();
            let e = (-a * t).exp();
            let st = s * t;
            let sc = sinc(st);
            (t * e * sc, e * (st.cos() - a * t * sc))
        }
    };
    let k0 = dk1 + b * k1;
    let dk0 = -xi_abs * xi_abs * k1;
    KernelValues {
        k0: Complex64::new(k0, 0.0),
        k1: Complex64::new(k1, 0.0),
        dk0: Complex64::new(dk0, 0.0),
        dk1: Complex64::new(dk1, 0.0),
        branch,
    }
}

/// Symbols evaluated with the distinct-root closed form regardless of the
/// branch threshold (used to probe the collar around the double root).
pub fn kernel_values_distinct(t: f64, xi_abs: f64, delta: f64) -> KernelValues {
    let (b, d) = discriminant(xi_abs, delta);
    let a = 0.5 * b;
    let (k1, dk1) = if d >= 0.0 {
        let s = 0.5 * d.sqrt();
        let l1 = if a + s > 0.0 { -xi_abs * xi_abs / (a + s) } else { 0.0 };
        let e1 = (l1 * t).exp();
        let big_e = scaled_sinhc(s * t);
        (t * e1 * big_e, e1 * (0.5 * (1.0 + (-2.0 * s * t).exp()) - a * t * big_e))
    } else {
        let s = 0.5 * (-d).sqrt();
        let e = (-a * t).exp();
        let sc = sinc(s * t);
        (t * e * sc, e * ((s * t).cos() - a * t * sc))
    };
    KernelValues {
        k0: Complex64::new(dk1 + b * k1, 0.0),
        k1: Complex64::new(k1, 0.0),
        dk0: Complex64::new(-xi_abs * xi_abs * k1, 0.0),
        dk1: Complex64::new(dk1, 0.0),
        branch: branch_of(xi_abs, delta),
    }
}

/// |ξ| at which the two roots collide (|ξ|^{4δ−2} = 4), if any.
pub fn double_root_frequency(delta: f64) -> Option<f64> {
    if delta >= 0.5 {
        None
    } else {
        Some(4f64.powf(1.0 / (4.0 * delta - 2.0)))
    }
}

/// Frequency-space solution (w, w_t) of the linear problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub w: SpectralField,
    pub wt: SpectralField,
    pub t: f64,
    pub delta: f64,
}

impl LinearState {
    pub fn new(w: SpectralField, wt: SpectralField, t: f64, delta: f64) -> Result<Self> {
        if w.grid() != wt.grid() {
            return Err(Error::GridMismatch("w and w_t live on different grids".into()));
        }
        if !(0.0..=0.5).contains(&delta) {
            return Err(Error::InvalidInput(format!("delta must lie in [0, 0.5], got {delta}")));
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!("time must be non-negative, got {t}")));
        }
        Ok(Self { w, wt, t, delta })
    }
}

/// Per-coefficient symbols at a fixed elapsed time, reusable across steps.
#[derive(Debug, Clone)]
pub struct PropagatorTable {
    pub k0: Vec<f64>,
    pub k1: Vec<f64>,
    pub dk0: Vec<f64>,
    pub dk1: Vec<f64>,
}

impl PropagatorTable {
    pub fn new(xi_abs: &[f64], delta: f64, elapsed: f64) -> Self {
        let vals: Vec<[f64; 4]> = xi_abs
            .par_iter()
            .map(|&x| kernel_values(elapsed, x, delta).real())
            .collect();
        Self {
            k0: vals.iter().map(|v| v[0]).collect(),
            k1: vals.iter().map(|v| v[1]).collect(),
            dk0: vals.iter().map(|v| v[2]).collect(),
            dk1: vals.iter().map(|v| v[3]).collect(),
        }
    }

    /// (w, w_t) ↦ (K₀w + K₁w_t, ∂K₀w + ∂K₁w_t).
    pub fn apply(&self, w: &SpectralField, wt: &SpectralField) -> (SpectralField, SpectralField) {
        let mut nw = w.clone();
        let mut nwt = wt.clone();
        let (a, b) = (w.coefs(), wt.coefs());
        nw.coefs_mut()
            .par_iter_mut()
            .zip(nwt.coefs_mut().par_iter_mut())
            .enumerate()
            .for_each(|(i, (x, y))| {
                *x = a[i] * self.k0[i] + b[i] * self.k1[i];
                *y = a[i] * self.dk0[i] + b[i] * self.dk1[i];
            });
        (nw, nwt)
    }
}

/// Advances the linear solution to `t_target` by exact multiplier action.
pub fn evolve_linear(state: &LinearState, t_target: f64) -> Result<LinearState> {
    if !(t_target >= state.t) {
        return Err(Error::InvalidInput(format!(
            "target time {t_target} precedes state time {}",
            state.t
        )));
    }
    let elapsed = t_target - state.t;
    if elapsed == 0.0 {
        return Ok(state.clone());
    }
    let xi = state.w.grid().frequency_magnitudes();
    let table = PropagatorTable::new(&xi, state.delta, elapsed);
    let (w, wt) = table.apply(&state.w, &state.wt);
    Ok(LinearState {
        w,
        wt,
        t: t_target,
        delta: state.delta,
    })
}

/// Surface measure of the unit sphere S^{n−1}: 2π^{n/2}/Γ(n/2).
pub fn sphere_area(n: u32) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / libm::tgamma(h)
}

/// Derivative orders (j, k) in ‖∂_t^j ∇^k w‖.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Deriv {
    pub j: u32,
    pub k: u32,
}

impl Deriv {
    pub const fn new(j: u32, k: u32) -> Self {
        Self { j, k }
    }
}

/// Relative tolerance of [`radial_norm`].
pub const RADIAL_REL_TOL: f64 = 1e-8;

/// ‖∂_t^j ∇^k w(t)‖_{L²(ℝⁿ)} for radial data with transforms
/// `data(|ξ|) = (ŵ₀, ŵ₁)`, via Plancherel in polar coordinates.
pub fn radial_norm<D>(t: f64, delta: f64, data: D, n: u32, deriv: Deriv) -> Result<f64>
where
    D: Fn(f64) -> (f64, f64),
{
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if deriv.j > 1 {
        return Err(Error::InvalidInput("time derivative order must be 0 or 1".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be finite and non-negative, got {t}")));
    }
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::InvalidInput(format!("delta must lie in [0, 0.5], got {delta}")));
    }
    let c_n = sphere_area(n);
    let integrand = |r: f64| {
        if r <= 0.0 && (n > 1 || deriv.k > 0) {
            return 0.0;
        }
        let kv = kernel_values(t, r, delta);
        let (w0, w1) = data(r);
        let amp = if deriv.j == 0 {
            kv.k0.re * w0 + kv.k1.re * w1
        } else {
            kv.dk0.re * w0 + kv.dk1.re * w1
        };
        let weight = r.powi(2 * deriv.k as i32 + n as i32 - 1);
        c_n * weight * amp * amp
    };

    // characteristic radii: parabolic scale, damping scale, double root
    let mut marks = vec![1.0];
    if t > 0.0 {
        marks.push(t.powf(-1.0 / (2.0 - 2.0 * delta)));
        if delta > 0.0 {
            marks.push(t.powf(-1.0 / (2.0 * delta)));
        }
    }
    if let Some(xd) = double_root_frequency(delta) {
        marks.push(xd);
    }
    let lo = marks.iter().cloned().fold(1.0f64, f64::min) * 1e-12;
    let mut breaks = vec![0.0];
    let mut b = lo;
    while b < 1.0 {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(1.0);
    for &m in &marks {
        if m > lo && m < 1.0 {
            breaks.push(m);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    // extend outward until two consecutive octaves are negligible
    let crude: f64 = breaks
        .windows(2)
        .map(|w| crate::quadrature::gk21(&integrand, w[0], w[1]).0)
        .sum();
    let mut total = crude.abs();
    let mut hi = 1.0;
    let mut quiet = 0;
    while hi < 1e6 {
        let (v, _) = crate::quadrature::gk21(&integrand, hi, 2.0 * hi);
        breaks.push(2.0 * hi);
        hi *= 2.0;
        total += v.abs();
        if v.abs() <= 1e-14 * total && hi >= 4.0 {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if total == 0.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions {
        abs_tol: 1e-13 * total,
        rel_tol: 1e-10,
        max_intervals: 20_000,
    };
    let r = integrate_breaks(integrand, &breaks, opts)?;
    if r.error > RADIAL_REL_TOL * r.value.abs() && r.error > 1e-13 * total {
        return Err(Error::Quadrature {
            achieved: r.error,
            requested: RADIAL_REL_TOL * r.value.abs(),
        });
    }
    Ok(r.value.max(0.0).sqrt())
}

/// [K̂₀, K̂₁, ∂ₜK̂₀, ∂ₜK̂₁] by classical RK4 on ŵ'' + |ξ|^{2δ}ŵ' + |ξ|²ŵ = 0
/// with `steps` uniform steps; a cross-check for the closed forms.
pub fn ode_kernels(t: f64, xi_abs: f64, delta: f64, steps: usize) -> [f64; 4] {
    let b = damping_symbol(xi_abs, delta);
    let w2 = xi_abs * xi_abs;
    let rhs = |y: [f64; 2]| [y[1], -b * y[1] - w2 * y[0]];
    let solve = |mut y: [f64; 2]| {
        let h = t / steps.max(1) as f64;
        for _ in 0..steps.max(1) {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        }
        y
    };
    let a = solve([1.0, 0.0]);
    let c = solve([0.0, 1.0]);
    [a[0], c[0], a[1], c[1]]
}

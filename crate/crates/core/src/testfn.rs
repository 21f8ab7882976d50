//! Test-function toolkit: bracket weights ⟨x⟩^{−r}, smooth temporal cutoffs,
//! principal-value quadrature of (−Δ)^s, decay and scaling checks for the
//! fractional Laplacian of bracket weights, the space-time functionals of a
//! solution against η_R(t,x) = φ(R^{−α}t)ψ(R^{−β}x), and the scaling
//! exponents and constants of the nonexistence argument.

use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::beta::{beta_reg, ln_beta};

use crate::exact::{ParamPoint, Scalar};
use crate::kernels::sphere_area;
use crate::quadrature::{integrate, integrate_breaks, integrate_power_tail, QuadOptions};
use crate::solver::{abs_pow, Snapshot, SystemParams};
use crate::spectral::RealField;
use crate::{Error, Result};

/// x ↦ ⟨x⟩^{−r}, ⟨x⟩ = √(1+|x|²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketWeight {
    pub r: f64,
}

impl BracketWeight {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidInput(format!("bracket exponent must be positive, got {r}")));
        }
        Ok(Self { r })
    }

    pub fn at_radius(&self, rho: f64) -> f64 {
        (1.0 + rho * rho).powf(-0.5 * self.r)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.at_radius(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

/// Number of quotient samples used to measure the cutoff bound.
pub const CUTOFF_SAMPLES: usize = 10_000;

/// φ = 1 on [0, ½], 0 on [1, ∞), and on [½, 1] the binomial smoothstep
/// φ(t) = I_{1−τ}(k, k), τ = 2t − 1, which is C^{k−1} at both junctions and
/// vanishes to order k at t = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCutoff {
    pub kappa: f64,
    pub order: u32,
    /// max of φ^{−κ'/κ}(|φ'|^{κ'} + |φ''|^{κ'}) over the samples in [½, 1].
    pub bound: f64,
    ln_b: f64,
}

/// Builds the cutoff for exponent κ > 1, with k = max(3, ⌈2κ'⌉) so that the
/// quotient stays bounded as t → 1.
pub fn cutoff_build(kappa: f64) -> Result<TemporalCutoff> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("kappa must exceed 1, got {kappa}")));
    }
    let conj = kappa / (kappa - 1.0);
    let order = ((2.0 * conj).ceil() as u32).max(3);
    let k = order as f64;
    let mut c = TemporalCutoff {
        kappa,
        order,
        bound: 0.0,
        ln_b: ln_beta(k, k),
    };
    let mut bound: f64 = 0.0;
    for i in 0..CUTOFF_SAMPLES {
        let t = 0.5 + 0.5 * i as f64 / CUTOFF_SAMPLES as f64;
        let qv = c.quotient(t);
        if qv.is_finite() {
            bound = bound.max(qv);
        }
    }
    c.bound = bound;
    Ok(c)
}

impl TemporalCutoff {
    pub fn conjugate(&self) -> f64 {
        self.kappa / (self.kappa - 1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.5 {
            1.0
        } else if t >= 1.0 {
            0.0
        } else {
            let k = self.order as f64;
            beta_reg(k, k, 2.0 - 2.0 * t)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            return 0.0;
        }
        let tau = 2.0 * t - 1.0;
        let k = self.order as f64;
        -2.0 * ((k - 1.0) * (tau * (1.0 - tau)).ln() - self.ln_b).exp()
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        if t <= 0.5 || t >= 1.0 {
            return 0.0;
        }
        let tau = 2.0 * t - 1.0;
        let k = self.order as f64;
        let base = ((k - 2.0) * (tau * (1.0 - tau)).ln() - self.ln_b).exp();
        -4.0 * (k - 1.0) * base * (1.0 - 2.0 * tau)
    }

    /// φ^{−κ'/κ}(|φ'|^{κ'} + |φ''|^{κ'}); NaN where φ underflows.
    pub fn quotient(&self, t: f64) -> f64 {
        let phi = self.value(t);
        if phi <= 0.0 {
            return f64::NAN;
        }
        let c = self.conjugate();
        phi.powf(-c / self.kappa) * (self.derivative(t).abs().powf(c) + self.second_derivative(t).abs().powf(c))
    }
}

/// Far-field behaviour of the function handed to the principal-value
/// quadrature, which picks the treatment of |z| > 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FarField {
    /// φ tends to 0 at infinity; the tail is integrated after the power
    /// substitution.
    Decaying,
    /// φ is periodic with the given period along the line (n = 1 only); the
    /// tail is folded onto one period.
    Periodic { period: f64 },
}

/// C_{n,s} = 4^s Γ(n/2+s) / (π^{n/2} |Γ(−s)|) > 0.
pub fn fractional_constant(n: u32, s: f64) -> f64 {
    let h = n as f64 / 2.0;
    4f64.powf(s) * libm::tgamma(h + s) / (PI.powf(h) * libm::tgamma(-s).abs())
}

fn pv_opts() -> QuadOptions {
    QuadOptions::rel(1e-10).with_abs(1e-13)
}

/// Σ_{k≥0} (c + kP)^{−a}, by direct summation plus an Euler–Maclaurin tail.
fn shifted_power_sum(c: f64, period: f64, a: f64) -> f64 {
    const K: usize = 24;
    let mut sum = 0.0;
    for k in 0..K {
        sum += (c + k as f64 * period).powf(-a);
    }
    let y = c + K as f64 * period;
    let f = y.powf(-a);
    let d1 = -a * period * y.powf(-a - 1.0);
    let d3 = -a * (a + 1.0) * (a + 2.0) * period.powi(3) * y.powf(-a - 3.0);
    let d5 = -a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) * period.powi(5) * y.powf(-a - 5.0);
    sum + y.powf(1.0 - a) / ((a - 1.0) * period) + 0.5 * f - d1 / 12.0 + d3 / 720.0 - d5 / 30240.0
}

/// (−Δ)^s φ(x) = C_{n,s} p.v.∫ (φ(x) − φ(y))/|x−y|^{n+2s} dy for n ∈ {1, 2},
/// written as −C ∫₀^∞ A(ρ) ρ^{−1−2s} dρ with A the symmetrised second
/// difference integrated over the half circle of directions (n = 2).
pub fn pv_fractional_laplacian<F>(phi: &F, x: &[f64], s: f64, far: FarField) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidInput(format!("principal-value quadrature supports n in {{1, 2}}, got {n}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidInput(format!("s must lie in (0, 1), got {s}")));
    }
    let a = 1.0 + 2.0 * s;
    let center = phi(x);
    if !center.is_finite() {
        return Err(Error::InvalidInput("function is not finite at the evaluation point".into()));
    }
    let xr = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let measure = if n == 1 { 1.0 } else { PI };

    // S(ρ) − shift, summing φ(x ± ρe) and integrating over directions e in
    // the half circle when n = 2
    let angular = |rho: f64, shift: f64| -> Result<f64> {
        if n == 1 {
            return Ok(phi(&[x[0] + rho]) + phi(&[x[0] - rho]) - shift);
        }
        let g = |th: f64| {
            let (sn, cs) = th.sin_cos();
            phi(&[x[0] + rho * cs, x[1] + rho * sn]) + phi(&[x[0] - rho * cs, x[1] - rho * sn]) - shift
        };
        let mut breaks = vec![0.0];
        if xr > 0.0 {
            let th0 = x[1].atan2(x[0]).rem_euclid(PI);
            if th0 > 1e-9 && th0 < PI - 1e-9 {
                breaks.push(th0);
            }
        }
        breaks.push(PI);
        Ok(integrate_breaks(g, &breaks, pv_opts())?.value)
    };
    let sym = |rho: f64| angular(rho, 0.0);
    let second_diff = |rho: f64| angular(rho, 2.0 * center);

    // below ρ₀ the second difference is c ρ² to relative order ρ₀²
    let rho0 = 1e-4;
    let c2 = second_diff(rho0)? / (rho0 * rho0);
    let head = c2 * rho0.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let inner = head + integrate_quiet(|r| second_diff(r).map(|v| v * r.powf(-a)), &[rho0, 1e-3, 1e-2, 0.1, 0.5, 1.0])?;

    let outer = match far {
        FarField::Decaying => {
            let cut = 4.0 * xr + 4.0;
            let mut breaks = vec![1.0];
            for b in [xr - 1.0, xr, xr + 1.0, 2.0 * xr] {
                if b > 1.0 && b < cut {
                    breaks.push(b);
                }
            }
            breaks.push(cut);
            breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
            breaks.dedup();
            let near = integrate_quiet(|r| sym(r).map(|v| v * r.powf(-a)), &breaks)?;
            let far_part = power_tail_quiet(&sym, cut, s)?;
            near + far_part
        }
        FarField::Periodic { period } => {
            if n != 1 {
                return Err(Error::Inapplicable("periodic far field is supported for n = 1 only".into()));
            }
            if !(period > 0.0) {
                return Err(Error::InvalidInput("period must be positive".into()));
            }
            let pieces = 8usize;
            let breaks: Vec<f64> = (0..=pieces).map(|i| period * i as f64 / pieces as f64).collect();
            integrate_quiet(
                |tau| sym(1.0 + tau).map(|v| v * shifted_power_sum(1.0 + tau, period, a)),
                &breaks,
            )?
        }
    };
    let value = -fractional_constant(n as u32, s) * (inner + outer - measure * center / s);
    Ok(value)
}

/// Runs a fallible integrand through the quadrature, surfacing the first
/// inner failure instead of a poisoned value.
fn integrate_quiet<G>(g: G, breaks: &[f64]) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let failure = std::cell::RefCell::new(None);
    let f = |r: f64| match g(r) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let out = integrate_breaks(f, breaks, pv_opts());
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out?.value)
}

fn power_tail_quiet<G>(g: &G, start: f64, s: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let failure = std::cell::RefCell::new(None);
    let f = |r: f64| match g(r) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    // ∫_start^∞ S(ρ) ρ^{−1−2s} dρ
    let out = integrate_power_tail(f, start, s, pv_opts());
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out?.value)
}

/// Position of the bracket exponent r relative to the dimension n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayBranch {
    /// r < n: bound ⟨x⟩^{−r−2s}.
    Slow,
    /// r = n: bound ⟨x⟩^{−n−2s} log(e + |x|).
    Borderline,
    /// r > n: bound ⟨x⟩^{−n−2s}.
    Fast,
}

impl DecayBranch {
    pub fn of(r: f64, n: u32) -> Self {
        let n = n as f64;
        if (r - n).abs() <= 1e-12 * n {
            DecayBranch::Borderline
        } else if r < n {
            DecayBranch::Slow
        } else {
            DecayBranch::Fast
        }
    }

    /// Pointwise bound for |(−Δ)^s⟨x⟩^{−r}| at radius ρ, up to a constant.
    pub fn bound(&self, r: f64, s: f64, n: u32, rho: f64) -> f64 {
        let br = (1.0 + rho * rho).sqrt();
        match self {
            DecayBranch::Slow => br.powf(-r - 2.0 * s),
            DecayBranch::Borderline => br.powf(-(n as f64) - 2.0 * s) * (std::f64::consts::E + rho).ln(),
            DecayBranch::Fast => br.powf(-(n as f64) - 2.0 * s),
        }
    }
}

/// Result of comparing |(−Δ)^s⟨x⟩^{−r}| with its decay bound on log-spaced radii.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketDecayReport {
    pub branch: DecayBranch,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// |value| / bound.
    pub ratios: Vec<f64>,
    /// |value| / ⟨x⟩^{−n−2s}, i.e. the borderline bound without the log.
    pub plain_ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Slope of log(ratio) against log⟨x⟩ over the last decade of radii.
    pub tail_slope: f64,
    pub plain_tail_slope: f64,
    pub flat: bool,
}

/// Slope tolerance for a ratio to count as flat.
pub const FLAT_SLOPE: f64 = 0.1;

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / sxx
}

/// Evaluates (−Δ)^s⟨x⟩^{−r} along the first axis at 0 and 48 log-spaced
/// radii in [0.1, radius_max], in parallel.
pub fn bracket_decay_check(r: f64, s: f64, n: u32, radius_max: f64) -> Result<BracketDecayReport> {
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidInput(format!("n must be 1 or 2, got {n}")));
    }
    if !(radius_max > 1.0) {
        return Err(Error::InvalidInput("radius_max must exceed 1".into()));
    }
    let w = BracketWeight::new(r)?;
    let branch = DecayBranch::of(r, n);
    let count = 48;
    let mut radii = vec![0.0];
    let (lo, hi) = (0.1f64.ln(), radius_max.ln());
    radii.extend((0..count).map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()));
    let phi = |y: &[f64]| w.eval(y);
    let values = radii
        .par_iter()
        .map(|&rho| {
            let mut x = vec![0.0; n as usize];
            x[0] = rho;
            pv_fractional_laplacian(&phi, &x, s, FarField::Decaying)
        })
        .collect::<Result<Vec<f64>>>()?;
    let plain = DecayBranch::Fast;
    let ratios: Vec<f64> = radii.iter().zip(&values).map(|(&rho, v)| v.abs() / branch.bound(r, s, n, rho)).collect();
    let plain_ratios: Vec<f64> = radii.iter().zip(&values).map(|(&rho, v)| v.abs() / plain.bound(r, s, n, rho)).collect();
    let tail: Vec<usize> = (0..radii.len()).filter(|&i| radii[i] >= radius_max / 10.0).collect();
    let lx: Vec<f64> = tail.iter().map(|&i| (1.0 + radii[i] * radii[i]).sqrt().ln()).collect();
    let slope_of = |rs: &[f64]| {
        let ly: Vec<f64> = tail.iter().map(|&i| rs[i].ln()).collect();
        ls_slope(&lx, &ly)
    };
    let tail_slope = slope_of(&ratios);
    let plain_tail_slope = slope_of(&plain_ratios);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let flat = max_ratio.is_finite() && tail_slope.abs() <= FLAT_SLOPE;
    Ok(BracketDecayReport {
        branch,
        radii,
        values,
        ratios,
        plain_ratios,
        max_ratio,
        tail_slope,
        plain_tail_slope,
        flat,
    })
}

/// max over the points of |(−Δ)^s(φ_R)(x) − R^{−2κs}((−Δ)^sφ)(R^{−κ}x)| / (|RHS| + 1e−14),
/// with φ_R(x) = φ(R^{−κ}x).
pub fn scaling_identity_check<F>(phi: &F, scale: f64, kappa: f64, s: f64, points: &[Vec<f64>], far: FarField) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(scale > 0.0) {
        return Err(Error::InvalidInput("scale must be positive".into()));
    }
    let shrink = scale.powf(-kappa);
    let far_scaled = match far {
        FarField::Decaying => FarField::Decaying,
        FarField::Periodic { period } => FarField::Periodic { period: period / shrink },
    };
    let scaled = |y: &[f64]| {
        let z: Vec<f64> = y.iter().map(|v| v * shrink).collect();
        phi(&z)
    };
    let devs = points
        .par_iter()
        .map(|x| {
            let lhs = pv_fractional_laplacian(&scaled, x, s, far_scaled)?;
            let xs: Vec<f64> = x.iter().map(|v| v * shrink).collect();
            let rhs = scale.powf(-2.0 * kappa * s) * pv_fractional_laplacian(phi, &xs, s, far)?;
            Ok((lhs - rhs).abs() / (rhs.abs() + 1e-14))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Least-squares slope of log|(−Δ)^s(φ_R)(x)| against log R.
pub fn scaling_exponent<F>(phi: &F, x: &[f64], scales: &[f64], kappa: f64, s: f64, far: FarField) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if scales.len() < 2 {
        return Err(Error::InvalidInput("need at least two scales".into()));
    }
    let mut ly = Vec::with_capacity(scales.len());
    for &r in scales {
        let shrink = r.powf(-kappa);
        let scaled = |y: &[f64]| {
            let z: Vec<f64> = y.iter().map(|v| v * shrink).collect();
            phi(&z)
        };
        let f = match far {
            FarField::Decaying => FarField::Decaying,
            FarField::Periodic { period } => FarField::Periodic { period: period / shrink },
        };
        ly.push(pv_fractional_laplacian(&scaled, x, s, f)?.abs().ln());
    }
    let lx: Vec<f64> = scales.iter().map(|r| r.ln()).collect();
    Ok(ls_slope(&lx, &ly))
}

/// η_R(t, x) = φ(R^{−α}t) ψ(R^{−β}x).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTestFunction {
    pub scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub spatial: BracketWeight,
    pub cutoff: TemporalCutoff,
}

impl ScaledTestFunction {
    pub fn new(scale: f64, alpha: f64, beta: f64, spatial: BracketWeight, cutoff: TemporalCutoff) -> Result<Self> {
        if !(scale > 0.0) || !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidInput("scale, alpha and beta must be positive".into()));
        }
        Ok(Self {
            scale,
            alpha,
            beta,
            spatial,
            cutoff,
        })
    }

    /// R^α, the end of the temporal support.
    pub fn horizon(&self) -> f64 {
        self.scale.powf(self.alpha)
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        self.cutoff.value(t / self.horizon())
    }

    pub fn space_factor(&self, x: &[f64]) -> f64 {
        let k = self.scale.powf(-self.beta);
        self.spatial.at_radius(k * x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.time_factor(t) * self.space_factor(x)
    }

    /// Half-width at which ψ_R drops to 1e−3 of its peak.
    pub fn required_half_width(&self) -> f64 {
        self.scale.powf(self.beta) * (1e3f64.powf(2.0 / self.spatial.r) - 1.0).sqrt()
    }
}

/// One time slice of a solution in physical space.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub t: f64,
    pub u: &'a RealField,
    pub v: &'a RealField,
}

impl<'a> From<&'a Snapshot> for Frame<'a> {
    fn from(s: &'a Snapshot) -> Self {
        Frame { t: s.t, u: &s.u, v: &s.v }
    }
}

/// I_R, J_R over [0, R^α] and I_{R,t}, J_{R,t} over [R^α/2, R^α].
#[derive(Debug, Clone, PartialEq)]
pub struct Functionals {
    pub i_r: f64,
    pub j_r: f64,
    pub i_rt: f64,
    pub j_rt: f64,
    pub domain_warning: Option<String>,
}

/// Minimum number of frames inside [R^α/2, R^α].
pub const MIN_LATE_FRAMES: usize = 4;

/// ∫_a^b of the piecewise-linear interpolant through (ts, ys).
fn trapezoid_window(ts: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..ts.len().saturating_sub(1) {
        let (t0, t1) = (ts[i], ts[i + 1]);
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo || t1 <= t0 {
            continue;
        }
        let at = |t: f64| ys[i] + (ys[i + 1] - ys[i]) * (t - t0) / (t1 - t0);
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    total
}

/// Space-time functionals of |v|^p and |u|^q against η_R. Time integration
/// is trapezoidal over the frames, space a Riemann sum on the frame grid.
pub fn functionals(frames: &[Frame<'_>], params: &SystemParams, test: &ScaledTestFunction) -> Result<Functionals> {
    let Some(first) = frames.first() else {
        return Err(Error::Coverage("no frames supplied".into()));
    };
    let grid = *first.u.grid();
    for f in frames {
        if *f.u.grid() != grid || *f.v.grid() != grid {
            return Err(Error::GridMismatch("frames live on different grids".into()));
        }
    }
    if frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::InvalidInput("frame times must increase strictly".into()));
    }
    let horizon = test.horizon();
    let last = frames.last().unwrap().t;
    if first.t > 1e-12 * horizon.max(1.0) {
        return Err(Error::Coverage(format!("frames start at t = {}, need t = 0", first.t)));
    }
    if last < horizon * (1.0 - 1e-12) {
        return Err(Error::Coverage(format!(
            "frames end at t = {last}, need T >= R^alpha = {horizon}"
        )));
    }
    let late = frames.iter().filter(|f| f.t >= 0.5 * horizon && f.t <= horizon).count();
    if late < MIN_LATE_FRAMES {
        return Err(Error::Coverage(format!(
            "only {late} frames in [R^alpha/2, R^alpha], need {MIN_LATE_FRAMES}; denser snapshots required"
        )));
    }
    let psi = grid.sample(|x| test.space_factor(x));
    let vol = grid.cell_volume();
    let weighted = |field: &RealField, e: f64| -> f64 {
        field
            .values()
            .iter()
            .zip(psi.values())
            .map(|(&w, &k)| abs_pow(w, e) * k)
            .sum::<f64>()
            * vol
    };
    let ts: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let (mut si, mut sj) = (Vec::with_capacity(ts.len()), Vec::with_capacity(ts.len()));
    for f in frames {
        let phi = test.time_factor(f.t);
        si.push(phi * weighted(f.v, params.p));
        sj.push(phi * weighted(f.u, params.q));
    }
    if si.iter().chain(&sj).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite functional integrand".into()));
    }
    let l = grid.half_width();
    let edge = test.spatial.at_radius(l * test.scale.powf(-test.beta));
    let domain_warning = (edge > 1e-3).then(|| {
        format!(
            "psi_R at the domain edge is {edge:.3e} of its peak; half-width L >= {:.4e} needed",
            test.required_half_width()
        )
    });
    Ok(Functionals {
        i_r: trapezoid_window(&ts, &si, 0.0, horizon),
        j_r: trapezoid_window(&ts, &sj, 0.0, horizon),
        i_rt: trapezoid_window(&ts, &si, 0.5 * horizon, horizon),
        j_rt: trapezoid_window(&ts, &sj, 0.5 * horizon, horizon),
        domain_warning,
    })
}

/// ∫ f ψ_R dx on the grid, ψ_R(x) = ⟨R^{−β}x⟩^{−r}.
pub fn weighted_mass(field: &RealField, scale: f64, beta: f64, r: f64) -> Result<f64> {
    let w = BracketWeight::new(r)?;
    let k = scale.powf(-beta);
    let grid = field.grid();
    let psi = grid.sample(|x| w.at_radius(k * x.iter().map(|v| v * v).sum::<f64>().sqrt()));
    Ok(field.values().iter().zip(psi.values()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume())
}

/// Scaling exponents of the nonexistence argument (oriented so δ₁ ≥ δ₂).
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupScalings<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma1: T,
    pub gamma2: T,
    /// −2α ≤ −2β, −α − 2δ₁β ≤ −2β, −α − 2δ₂β ≤ −2β.
    pub chain: [bool; 3],
    /// Whether the point was mirrored to reach δ₁ ≥ δ₂.
    pub swapped: bool,
}

impl<T: Scalar> BlowupScalings<T> {
    pub fn chain_holds(&self) -> bool {
        self.chain.iter().all(|&b| b)
    }

    pub fn to_f64(&self) -> BlowupScalings<f64> {
        BlowupScalings {
            alpha: self.alpha.to_f64(),
            beta: self.beta.to_f64(),
            gamma1: self.gamma1.to_f64(),
            gamma2: self.gamma2.to_f64(),
            chain: self.chain,
            swapped: self.swapped,
        }
    }
}

/// α = 2 − 2δ₁ + c(nq−n−2q)(n−2)/(1+q), β = 1 − c(nq+2−n)/(1+q) with
/// c = (δ₁−δ₂)/(2(1−δ₂)); γ₁, γ₂ are the powers of R bounding
/// I_R^{(pq−1)/(pq)} and J_R^{(pq−1)/(pq)}.
pub fn blowup_scalings<T: Scalar>(pt: &ParamPoint<T>) -> Result<BlowupScalings<T>> {
    let one = T::one();
    if !(pt.p > one) || !(pt.q > one) {
        return Err(Error::InvalidInput("p and q must exceed 1".into()));
    }
    if pt.delta1 < T::zero() || pt.delta2 < T::zero() || pt.delta1 >= one || pt.delta2 >= one {
        return Err(Error::InvalidInput("damping exponents must lie in [0, 1)".into()));
    }
    let swapped = pt.delta1 < pt.delta2;
    let pt = if swapped { pt.swapped() } else { pt.clone() };
    let n = pt.dim();
    let two = T::int(2);
    let c = (pt.delta1.clone() - pt.delta2.clone()) / (two.clone() * (one.clone() - pt.delta2.clone()));
    let q1 = one.clone() + pt.q.clone();
    let alpha = two.clone() - two.clone() * pt.delta1.clone()
        + c.clone() * (n.clone() * pt.q.clone() - n.clone() - two.clone() * pt.q.clone()) * (n.clone() - two.clone()) / q1.clone();
    let beta = one.clone() - c * (n.clone() * pt.q.clone() + two.clone() - n.clone()) / q1;
    let inv_conj = |e: &T| one.clone() - one.clone() / e.clone();
    let vol = alpha.clone() + n * beta.clone();
    let base_p = -two.clone() * beta.clone() + vol.clone() * inv_conj(&pt.p);
    let base_q = -two.clone() * beta.clone() + vol * inv_conj(&pt.q);
    let gamma1 = base_q.clone() + base_p.clone() / pt.q.clone();
    let gamma2 = base_p + base_q / pt.p.clone();
    let rhs = -two.clone() * beta.clone();
    let chain = [
        -two.clone() * alpha.clone() <= rhs,
        -alpha.clone() - two.clone() * pt.delta1.clone() * beta.clone() <= rhs,
        -alpha.clone() - two * pt.delta2.clone() * beta.clone() <= rhs,
    ];
    Ok(BlowupScalings {
        alpha,
        beta,
        gamma1,
        gamma2,
        chain,
        swapped,
    })
}

/// ∫_{ℝⁿ} ⟨x⟩^{−r} dx for r > n by radial quadrature.
pub fn bracket_integral(n: u32, r: f64) -> Result<f64> {
    if n == 0 || !(r > n as f64) {
        return Err(Error::InvalidInput(format!("bracket integral needs r > n, got r = {r}, n = {n}")));
    }
    let nf = n as f64;
    let radial = |rho: f64| rho.powf(nf - 1.0) * (1.0 + rho * rho).powf(-0.5 * r);
    let opts = QuadOptions::rel(1e-12);
    let head = integrate(radial, 0.0, 1.0, opts)?;
    // ρ^{n−1}⟨ρ⟩^{−r} = h(ρ) ρ^{−1−2σ} with 2σ = r − n
    let sigma = 0.5 * (r - nf);
    let h = |rho: f64| rho.powf(r) * (1.0 + rho * rho).powf(-0.5 * r);
    let tail = integrate_power_tail(h, 1.0, sigma, opts)?;
    Ok(sphere_area(n) * (head.value + tail.value))
}

/// Constants of the critical case: D_{p'} = (∫⟨x⟩^{−n−2δ₀})^{1/p'}, D_{q'}
/// likewise, and the data threshold ε₂ = ∫⟨x⟩^{−n−2δ₀}, δ₀ = min(δ₁, δ₂).
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalConstants {
    pub delta0: f64,
    pub bracket_integral: f64,
    pub d_p: f64,
    pub d_q: f64,
    pub eps2: f64,
}

pub fn critical_constants(params: &SystemParams) -> Result<CriticalConstants> {
    if !(1..=3).contains(&params.n) {
        return Err(Error::InvalidInput(format!("n must lie in 1..=3, got {}", params.n)));
    }
    if !(params.p > 1.0) || !(params.q > 1.0) {
        return Err(Error::InvalidInput("p and q must exceed 1".into()));
    }
    let delta0 = params.delta1.min(params.delta2);
    if !(delta0 > 0.0) {
        return Err(Error::Inapplicable(
            "min(delta1, delta2) = 0: the bracket weight <x>^(-n) is not integrable, constants are refused".into(),
        ));
    }
    let integral = bracket_integral(params.n, params.n as f64 + 2.0 * delta0)?;
    let conj = |e: f64| e / (e - 1.0);
    Ok(CriticalConstants {
        delta0,
        bracket_integral: integral,
        d_p: integral.powf(1.0 / conj(params.p)),
        d_q: integral.powf(1.0 / conj(params.q)),
        eps2: integral,
    })
}

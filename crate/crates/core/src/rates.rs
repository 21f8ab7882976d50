//! Decay exponents of the linear and coupled problems, the loss of decay,
//! the weights of the solution space, log-log rate fitting and the fractional
//! Gagliardo–Nirenberg exponent.
//!
//! Every exponent is the power of (1 + t) in an upper bound, so a value −a
//! means decay like (1 + t)^{−a}. With A = n/(2(1−δ))·(1/m − 1/2):
//!
//! ```text
//! any n        w₀: −A − (k+2jδ)/(2(1−δ))      w₁: −A − k/(2(1−δ)) − j + 1
//! n > 2m₀δ     w₀: −A − k/(2(1−δ)) − j         w₁: −A − (k−2δ)/(2(1−δ)) − j
//! ```

use crate::atlas::{check_existence_first, check_existence_second};
use crate::exact::{ParamPoint, Scalar};
use crate::kernels::Deriv;
use crate::spectral::RealField;
use crate::{Error, Result};

/// Default value of the small positive slack added to the loss of decay.
pub const DEFAULT_SLACK: f64 = 1e-3;

/// Which estimate a prediction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    /// (L^m ∩ L²)–L² estimate valid in every dimension.
    AnyDimension,
    /// Improved estimate for n > 2m₀δ.
    HighDimension,
    /// The improved estimate applied to either equation of the system,
    /// valid for n > 2m₀ max{δ₁, δ₂}.
    SystemLinear,
    /// Decay of the small-data solution when δ₁ ≥ δ₂ (loss on u).
    CoupledFirst,
    /// Decay of the small-data solution when δ₂ ≥ δ₁ (loss on v).
    CoupledSecond,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::AnyDimension => "any_dimension",
            Source::HighDimension => "high_dimension",
            Source::SystemLinear => "system_linear",
            Source::CoupledFirst => "coupled_first",
            Source::CoupledSecond => "coupled_second",
        }
    }
}

/// Selects δ₁ (first equation, u) or δ₂ (second equation, v).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    U,
    V,
}

/// A validity constraint and whether the parameters meet it.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub holds: bool,
}

/// Exponents of (1 + t) for the w₀- and w₁-driven parts of a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePrediction<T> {
    pub source: Source,
    pub j: u32,
    pub k: u32,
    pub exponent_w0: T,
    pub exponent_w1: T,
    pub validity: Vec<Constraint>,
}

impl<T: Scalar> RatePrediction<T> {
    pub fn is_valid(&self) -> bool {
        self.validity.iter().all(|c| c.holds)
    }

    pub fn to_f64(&self) -> RatePrediction<f64> {
        RatePrediction {
            source: self.source,
            j: self.j,
            k: self.k,
            exponent_w0: self.exponent_w0.to_f64(),
            exponent_w1: self.exponent_w1.to_f64(),
            validity: self.validity.clone(),
        }
    }
}

fn delta_of<T: Scalar>(pt: &ParamPoint<T>, c: Component) -> T {
    match c {
        Component::U => pt.delta1.clone(),
        Component::V => pt.delta2.clone(),
    }
}

/// n/(2(1−δ))·(1/m − 1/2).
fn lm_gain<T: Scalar>(pt: &ParamPoint<T>, delta: &T) -> T {
    pt.dim() / (T::int(2) * (T::one() - delta.clone())) * (T::one() / pt.m.clone() - T::ratio(1, 2))
}

fn dim_constraint<T: Scalar>(pt: &ParamPoint<T>, delta: &T) -> Constraint {
    Constraint {
        label: format!("n > 2*m0*delta = {}", (T::int(2) * pt.m0() * delta.clone()).to_f64()),
        holds: pt.dim() > T::int(2) * pt.m0() * delta.clone(),
    }
}

/// Decay exponents for ‖∂_t^j ∇^k ·‖_{L²} from the chosen estimate.
///
/// For the coupled sources only (j, k) ∈ {(0,0), (0,1), (1,0)} are defined,
/// both exponents coincide and `slack` is the small positive number added to
/// the loss of decay.
pub fn predicted_exponents<T: Scalar>(
    pt: &ParamPoint<T>,
    component: Component,
    j: u32,
    k: u32,
    source: Source,
    slack: T,
) -> Result<RatePrediction<T>> {
    if j > 1 {
        return Err(Error::InvalidInput(format!("j must be 0 or 1, got {j}")));
    }
    let d = delta_of(pt, component);
    let one = T::one();
    let two = T::int(2);
    let den = two.clone() * (one.clone() - d.clone());
    let a = lm_gain(pt, &d);
    let (kk, jj) = (T::int(k as i64), T::int(j as i64));
    let mut validity = Vec::new();
    let (w0, w1) = match source {
        Source::AnyDimension => (
            -a.clone() - (kk.clone() + two.clone() * jj.clone() * d.clone()) / den.clone(),
            -a - kk / den - jj + one,
        ),
        Source::HighDimension | Source::SystemLinear => {
            if source == Source::HighDimension {
                validity.push(dim_constraint(pt, &d));
            } else {
                let big = T::max_of(pt.delta1.clone(), pt.delta2.clone());
                validity.push(dim_constraint(pt, &big));
            }
            (
                -a.clone() - kk.clone() / den.clone() - jj.clone(),
                -a - (kk - two * d) / den - jj,
            )
        }
        Source::CoupledFirst | Source::CoupledSecond => {
            let first = source == Source::CoupledFirst;
            let w = solution_space_weights(pt, first, slack)?;
            let idx = match (j, k) {
                (0, 0) => 0,
                (0, 1) => 1,
                (1, 0) => 2,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "coupled decay is stated for (j,k) in {{(0,0),(0,1),(1,0)}}, got ({j},{k})"
                    )))
                }
            };
            let e = match component {
                Component::U => w.f[idx].clone(),
                Component::V => w.g[idx].clone(),
            };
            let verdict = if first {
                check_existence_first(pt)?
            } else {
                check_existence_second(pt)?
            };
            validity.push(Constraint {
                label: "small-data existence hypotheses".into(),
                holds: verdict.verdict.is_global(),
            });
            (e.clone(), e)
        }
    };
    Ok(RatePrediction {
        source,
        j,
        k,
        exponent_w0: w0,
        exponent_w1: w1,
        validity,
    })
}

/// Exponents of the L²–L² estimate: w₀: −(k+2jδ)/(2(1−δ)), w₁: −k/(2(1−δ)) − j + 1.
pub fn l2_exponents<T: Scalar>(delta: T, j: u32, k: u32) -> (T, T) {
    let den = T::int(2) * (T::one() - delta.clone());
    let (kk, jj) = (T::int(k as i64), T::int(j as i64));
    (
        -(kk.clone() + T::int(2) * jj.clone() * delta) / den.clone(),
        -kk / den - jj + T::one(),
    )
}

/// Which loss of decay: on u (exponent p, damping δ₂) or on v (q, δ₁).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    PDelta2,
    QDelta1,
}

/// Loss of decay without its slack, the slack, and whether the existence
/// hypotheses guaranteeing non-negativity hold.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOfDecay<T> {
    pub value: T,
    pub slack: f64,
    pub hypotheses_hold: bool,
}

impl<T: Scalar> LossOfDecay<T> {
    pub fn total(&self) -> f64 {
        self.value.to_f64() + self.slack
    }
}

/// 1 − n(e−1)/(2m(1−δ)) + eδ/(1−δ).
pub fn loss_value<T: Scalar>(n: u32, m: &T, e: &T, delta: &T) -> T {
    let one = T::one();
    let omd = one.clone() - delta.clone();
    one.clone() - T::int(n as i64) * (e.clone() - one) / (T::int(2) * m.clone() * omd.clone())
        + e.clone() * delta.clone() / omd
}

/// Loss of decay; errors if it is negative although the hypotheses that
/// make it non-negative hold.
pub fn loss_of_decay<T: Scalar>(pt: &ParamPoint<T>, kind: LossKind, slack: f64) -> Result<LossOfDecay<T>> {
    let (value, verdict) = match kind {
        LossKind::PDelta2 => (loss_value(pt.n, &pt.m, &pt.p, &pt.delta2), check_existence_first(pt)?),
        LossKind::QDelta1 => (loss_value(pt.n, &pt.m, &pt.q, &pt.delta1), check_existence_second(pt)?),
    };
    let (ratio, range) = match kind {
        LossKind::PDelta2 => ("ratio_first", "range_first"),
        LossKind::QDelta1 => ("ratio_second", "range_second"),
    };
    let hold = |id: &str| verdict.check(id).map(|c| c.holds).unwrap_or(false);
    let hypotheses_hold = hold(ratio) && hold(range);
    let out = LossOfDecay {
        value,
        slack,
        hypotheses_hold,
    };
    if hypotheses_hold && out.total() < 0.0 {
        return Err(Error::Numerical(format!(
            "loss of decay {} is negative under its hypotheses",
            out.total()
        )));
    }
    Ok(out)
}

/// Exponents of the weights f₁, f₂, f₃ (for ‖u‖, ‖∇u‖, ‖u_t‖) and g₁, g₂, g₃
/// (for ‖v‖, ‖∇v‖, ‖v_t‖) of the solution space.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionWeights<T> {
    pub f: [T; 3],
    pub g: [T; 3],
}

impl<T: Scalar> SolutionWeights<T> {
    pub fn to_f64(&self) -> SolutionWeights<f64> {
        SolutionWeights {
            f: [self.f[0].to_f64(), self.f[1].to_f64(), self.f[2].to_f64()],
            g: [self.g[0].to_f64(), self.g[1].to_f64(), self.g[2].to_f64()],
        }
    }

    /// All six in the order of [`crate::solver::TrajectoryRow::six_norms`].
    pub fn six(&self) -> [T; 6] {
        [
            self.f[0].clone(),
            self.f[1].clone(),
            self.f[2].clone(),
            self.g[0].clone(),
            self.g[1].clone(),
            self.g[2].clone(),
        ]
    }
}

fn base_weights<T: Scalar>(pt: &ParamPoint<T>, delta: &T, loss: T) -> [T; 3] {
    let one = T::one();
    let omd = one.clone() - delta.clone();
    let a = lm_gain(pt, delta);
    let low = one - T::int(2) * delta.clone();
    [
        -a.clone() + delta.clone() / omd.clone() + loss.clone(),
        -a.clone() - low.clone() / (T::int(2) * omd.clone()) + loss.clone(),
        -a - low / omd + loss,
    ]
}

/// Weights for the δ₁ ≥ δ₂ setting (`first`, loss ε(p,δ₂) on u) or the
/// mirrored δ₂ ≥ δ₁ setting (loss ε(q,δ₁) on v). The weights are formal:
/// the hypotheses are not required.
pub fn solution_space_weights<T: Scalar>(pt: &ParamPoint<T>, first: bool, slack: T) -> Result<SolutionWeights<T>> {
    if pt.n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let zero = T::zero();
    let (lu, lv) = if first {
        (loss_value(pt.n, &pt.m, &pt.p, &pt.delta2) + slack, zero)
    } else {
        (zero, loss_value(pt.n, &pt.m, &pt.q, &pt.delta1) + slack)
    };
    Ok(SolutionWeights {
        f: base_weights(pt, &pt.delta1, lu),
        g: base_weights(pt, &pt.delta2, lv),
    })
}

/// Σᵢ (1+t)^{−eᵢ}‖·‖ᵢ: the instantaneous solution-space norm for the six
/// recorded norms and weight exponents eᵢ.
pub fn weighted_sum(t: f64, norms: &[f64; 6], exponents: &[f64; 6]) -> f64 {
    norms
        .iter()
        .zip(exponents)
        .map(|(v, e)| v * (1.0 + t).powf(-e))
        .sum()
}

/// Least-squares slope of log(value) against log(1 + t) over the window,
/// with its standard error.
pub fn fit_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(f64, f64)> {
    if times.len() != values.len() {
        return Err(Error::InvalidInput("times and values differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "need at least 8 samples in the window, got {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-positive value {v} at t = {t}")));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("window holds a single abscissa".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

/// Sobolev interpolation exponent θ = (1/p₀ − 1/p + s/n)/(1/p₀ − 1/p₁ + σ/n).
#[derive(Debug, Clone, PartialEq)]
pub struct GnTheta<T> {
    pub theta: T,
    pub applicable: bool,
}

pub fn gn_theta<T: Scalar>(s: T, sigma: T, p: T, p0: T, p1: T, n: u32) -> Result<GnTheta<T>> {
    let one = T::one();
    let zero = T::zero();
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    for (name, e) in [("p", &p), ("p0", &p0), ("p1", &p1)] {
        if !(*e > one) {
            return Err(Error::InvalidInput(format!("{name} must exceed 1, got {}", e.to_f64())));
        }
    }
    if !(sigma > zero) || s < zero || s > sigma {
        return Err(Error::InvalidInput("need sigma > 0 and 0 <= s <= sigma".into()));
    }
    let nn = T::int(n as i64);
    let num = one.clone() / p0.clone() - one.clone() / p + s.clone() / nn.clone();
    let den = one.clone() / p0 - one / p1 + sigma.clone() / nn;
    if den.is_zero_value() {
        return Err(Error::Inapplicable("interpolation exponent has a vanishing denominator".into()));
    }
    let theta = num / den;
    let applicable = theta >= s / sigma && theta <= T::one();
    Ok(GnTheta { theta, applicable })
}

/// ‖u‖_{Ḣ^s} / (‖u‖_{L²}^{1−θ} ‖u‖_{Ḣ^σ}^θ) on the grid; only the L²-based
/// case p = p₀ = p₁ = 2 is evaluated.
pub fn gn_check(u: &RealField, s: f64, sigma: f64, p: f64, p0: f64, p1: f64) -> Result<f64> {
    if p != 2.0 || p0 != 2.0 || p1 != 2.0 {
        return Err(Error::Inapplicable("grid evaluation is limited to p = p0 = p1 = 2".into()));
    }
    let th = gn_theta(s, sigma, p, p0, p1, u.grid().dim() as u32)?;
    if !th.applicable {
        return Err(Error::Inapplicable(format!("theta = {} is outside [s/sigma, 1]", th.theta)));
    }
    let uh = crate::spectral::forward(u)?;
    let xi = u.grid().frequency_magnitudes();
    let lhs = uh.weighted_norm(&xi, s);
    let l2 = uh.weighted_norm(&xi, 0.0);
    let top = uh.weighted_norm(&xi, sigma);
    let rhs = l2.powf(1.0 - th.theta) * top.powf(th.theta);
    if rhs == 0.0 {
        return Err(Error::InvalidInput("the field vanishes".into()));
    }
    Ok(lhs / rhs)
}

/// Best valid prediction for a single linear equation with damping δ:
/// the improved estimate when n > 2m₀δ, else the any-dimension one.
pub fn sharpest_linear<T: Scalar>(pt: &ParamPoint<T>, component: Component, d: Deriv) -> Result<RatePrediction<T>> {
    let hi = predicted_exponents(pt, component, d.j, d.k, Source::HighDimension, T::zero())?;
    if hi.is_valid() {
        Ok(hi)
    } else {
        predicted_exponents(pt, component, d.j, d.k, Source::AnyDimension, T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{q, Q};

    fn lin(n: u32, m: Q, d: Q) -> ParamPoint<Q> {
        ParamPoint::new(n, m, d.clone(), d, q(2, 1), q(2, 1))
    }

    #[test]
    fn system_linear_examples() {
        let r = predicted_exponents(&lin(3, q(1, 1), q(1, 2)), Component::U, 0, 0, Source::SystemLinear, q(0, 1)).unwrap();
        assert_eq!(r.exponent_w0, q(-3, 2));
        assert_eq!(r.exponent_w1, q(-1, 2));
        assert!(r.is_valid());
        let r = predicted_exponents(&lin(2, q(1, 1), q(0, 1)), Component::U, 0, 0, Source::SystemLinear, q(0, 1)).unwrap();
        assert_eq!(r.exponent_w0, q(-1, 2));
        assert_eq!(r.exponent_w1, q(-1, 2));
    }

    #[test]
    fn l2_data_term() {
        let (w0, _) = l2_exponents(q(0, 1), 0, 0);
        assert_eq!(w0, q(0, 1));
    }

    #[test]
    fn invalid_prediction_flagged() {
        let r = predicted_exponents(&lin(1, q(1, 1), q(1, 2)), Component::U, 0, 0, Source::HighDimension, q(0, 1)).unwrap();
        assert!(!r.is_valid());
    }

    #[test]
    fn loss_examples() {
        let pt = ParamPoint::new(3, q(1, 1), q(1, 2), q(0, 1), q(5, 3), q(3, 1));
        assert_eq!(loss_value(pt.n, &pt.m, &pt.p, &pt.delta2), q(0, 1));
        assert_eq!(loss_value(2, &q(1, 1), &q(2, 1), &q(1, 4)), q(1, 3));
        for n in 1..8 {
            assert_eq!(loss_value(n, &q(1, 1), &(q(1, 1) + q(2, n as i64)), &q(0, 1)), q(0, 1));
        }
    }

    #[test]
    fn weights_example() {
        let pt = ParamPoint::new(3, q(1, 1), q(1, 2), q(1, 2), q(2, 1), q(3, 1));
        let w = solution_space_weights(&pt, true, q(0, 1)).unwrap();
        assert_eq!(w.f[0], q(-1, 2));
        // g₃ at δ₂ = 0, m = 1, n = 2
        let pt = ParamPoint::new(2, q(1, 1), q(0, 1), q(0, 1), q(2, 1), q(3, 1));
        let w = solution_space_weights(&pt, true, q(0, 1)).unwrap();
        assert_eq!(w.g[2], q(-3, 2));
    }

    #[test]
    fn fit_exact_power() {
        let ts: Vec<f64> = (0..50).map(|i| 10.0 * 100f64.powf(i as f64 / 49.0)).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 5.0 * (1.0 + t).powf(-1.5)).collect();
        let (s, _) = fit_rate(&ts, &vs, (10.0, 1000.0)).unwrap();
        assert!((s + 1.5).abs() < 1e-12);
        let c = vec![3.0; 50];
        assert!(fit_rate(&ts, &c, (10.0, 1000.0)).unwrap().0.abs() < 1e-12);
        let mut bad = vs.clone();
        bad[10] = 0.0;
        assert!(fit_rate(&ts, &bad, (10.0, 1000.0)).is_err());
        assert!(fit_rate(&ts[..5], &vs[..5], (10.0, 1000.0)).is_err());
    }

    #[test]
    fn theta_examples() {
        assert_eq!(gn_theta(q(0, 1), q(1, 1), q(2, 1), q(2, 1), q(2, 1), 2).unwrap().theta, q(0, 1));
        let t = gn_theta(q(0, 1), q(1, 1), q(4, 1), q(2, 1), q(2, 1), 2).unwrap();
        assert_eq!(t.theta, q(1, 2));
        assert!(t.applicable);
        assert_eq!(gn_theta(q(1, 1), q(1, 1), q(3, 1), q(2, 1), q(3, 1), 3).unwrap().theta, q(1, 1));
    }
}

//! Classification of parameter points (n, m, δ₁, δ₂, p, q) against the
//! global existence conditions (δ₁ ≥ δ₂ branch and its mirror) and the two
//! nonexistence results (L¹ data and slowly decaying data).
//!
//! Every condition is a rational inequality, so the checks are written once
//! over [`Scalar`] and run both in `f64` and in exact rationals. Margins are
//! signed: a condition holds iff its margin is positive (strict conditions)
//! or non-negative (non-strict ones).

use rayon::prelude::*;

use crate::exact::{ParamPoint, Scalar, Q};
use crate::{Error, Result};

/// Margins this close to zero in floating point are re-decided exactly.
pub const REFINE_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statement {
    ExistenceFirst,
    ExistenceSecond,
    BlowUpIntegrable,
    BlowUpSlowDecay,
}

impl Statement {
    pub fn as_str(&self) -> &'static str {
        match self {
            Statement::ExistenceFirst => "first_dominant",
            Statement::ExistenceSecond => "second_dominant",
            Statement::BlowUpIntegrable => "l1_data",
            Statement::BlowUpSlowDecay => "slow_decay_data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    GlobalExistence(Statement),
    BlowUp(Statement),
    Undetermined,
}

impl Verdict {
    pub fn label(&self) -> String {
        match self {
            Verdict::GlobalExistence(t) => format!("global_existence_{}", t.as_str()),
            Verdict::BlowUp(t) => format!("blowup_{}", t.as_str()),
            Verdict::Undetermined => "undetermined".into(),
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(self, Verdict::GlobalExistence(_))
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self, Verdict::BlowUp(_))
    }
}

/// One evaluated condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub holds: bool,
    pub margin: f64,
    pub strict: bool,
}

fn lt<T: Scalar>(id: &str, a: T, b: T) -> Check {
    Check {
        id: id.into(),
        holds: a < b,
        margin: (b - a).to_f64(),
        strict: true,
    }
}

fn le<T: Scalar>(id: &str, a: T, b: T) -> Check {
    Check {
        id: id.into(),
        holds: a <= b,
        margin: (b - a).to_f64(),
        strict: false,
    }
}

fn failed(id: &str, strict: bool) -> Check {
    Check {
        id: id.into(),
        holds: false,
        margin: f64::NAN,
        strict,
    }
}

/// Several sub-conditions folded into one check: holds iff all hold, margin
/// is the smallest one.
fn all_of(id: &str, parts: Vec<Check>) -> Check {
    Check {
        id: id.into(),
        holds: parts.iter().all(|c| c.holds),
        margin: parts.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min),
        strict: parts.iter().any(|c| c.strict),
    }
}

/// Verdict with the checks that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionVerdict {
    pub verdict: Verdict,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl RegionVerdict {
    pub fn check(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn margin(&self, id: &str) -> f64 {
        self.check(id).map(|c| c.margin).unwrap_or(f64::NAN)
    }

    fn near_boundary(&self) -> bool {
        self.checks.iter().any(|c| c.margin.abs() <= REFINE_BAND)
    }
}

pub fn validate<T: Scalar>(pt: &ParamPoint<T>) -> Result<()> {
    if pt.n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let (zero, half, one, two) = (T::zero(), T::ratio(1, 2), T::one(), T::int(2));
    if !(pt.m >= one && pt.m < two) {
        return Err(Error::InvalidInput(format!("m must lie in [1, 2), got {}", pt.m.to_f64())));
    }
    for (name, d) in [("delta1", &pt.delta1), ("delta2", &pt.delta2)] {
        if !(*d >= zero && *d <= half) {
            return Err(Error::InvalidInput(format!("{name} must lie in [0, 0.5], got {}", d.to_f64())));
        }
    }
    for (name, e) in [("p", &pt.p), ("q", &pt.q)] {
        if !(*e > one) {
            return Err(Error::InvalidInput(format!("{name} must exceed 1, got {}", e.to_f64())));
        }
    }
    Ok(())
}

/// [1 + q(1−δ₂)/(1−δ₁) + (pq−1)δ₂] / [(q−1)(δ₁−δ₂)/(1−δ₂) + pq − 1];
/// `None` when the denominator vanishes.
pub fn critical_ratio<T: Scalar>(pt: &ParamPoint<T>) -> Option<T> {
    let one = T::one();
    let pq1 = pt.p.clone() * pt.q.clone() - one.clone();
    let num = one.clone()
        + pt.q.clone() * (one.clone() - pt.delta2.clone()) / (one.clone() - pt.delta1.clone())
        + pq1.clone() * pt.delta2.clone();
    let den = (pt.q.clone() - one.clone()) * (pt.delta1.clone() - pt.delta2.clone())
        / (one - pt.delta2.clone())
        + pq1;
    if den.is_zero_value() {
        None
    } else {
        Some(num / den)
    }
}

/// 1 + 2m/(n − 2mδ); `None` when n ≤ 2mδ.
pub fn threshold_exponent<T: Scalar>(n: u32, m: &T, delta: &T) -> Option<T> {
    let den = T::int(n as i64) - T::int(2) * m.clone() * delta.clone();
    if den <= T::zero() {
        None
    } else {
        Some(T::one() + T::int(2) * m.clone() / den)
    }
}

/// Admissible exponent range for the Gagliardo–Nirenberg step: 2/m ≤ p, q for
/// n ≤ 2, additionally p, q ≤ n/(n−2) for 2 < n ≤ 4/(2−m); fails beyond.
fn gn_conditions<T: Scalar>(pt: &ParamPoint<T>) -> Check {
    let n = pt.dim();
    let two = T::int(2);
    let lower = two.clone() / pt.m.clone();
    let mut parts = vec![le("p_lower", lower.clone(), pt.p.clone()), le("q_lower", lower, pt.q.clone())];
    if n <= two {
        return all_of("gn_low_dim", parts);
    }
    let cap = T::int(4) / (two.clone() - pt.m.clone());
    if n > cap {
        let mut c = le("gn_mid_dim", n, cap);
        c.holds = false;
        return c;
    }
    let upper = pt.dim() / (pt.dim() - two);
    parts.push(le("p_upper", pt.p.clone(), upper.clone()));
    parts.push(le("q_upper", pt.q.clone(), upper));
    all_of("gn_mid_dim", parts)
}

fn dim_gate<T: Scalar>(id: &str, pt: &ParamPoint<T>, delta: &T) -> Check {
    lt(id, T::int(2) * pt.m0() * delta.clone(), pt.dim())
}

/// Existence conditions for the δ₁ ≥ δ₂ branch.
pub fn check_existence_first<T: Scalar>(pt: &ParamPoint<T>) -> Result<RegionVerdict> {
    validate(pt)?;
    Ok(existence_checks(pt, Statement::ExistenceFirst))
}

/// Existence conditions for the δ₂ ≥ δ₁ branch (the mirror of [`check_existence_first`]).
pub fn check_existence_second<T: Scalar>(pt: &ParamPoint<T>) -> Result<RegionVerdict> {
    validate(pt)?;
    Ok(existence_checks(&pt.swapped(), Statement::ExistenceSecond))
}

fn existence_checks<T: Scalar>(pt: &ParamPoint<T>, which: Statement) -> RegionVerdict {
    // pt is already oriented so that the first equation carries the larger δ
    let (order_id, gate_id, ratio_id, range_id) = match which {
        Statement::ExistenceFirst => ("delta1>=delta2", "n>2m0*delta1", "ratio_first", "range_first"),
        _ => ("delta2>=delta1", "n>2m0*delta2", "ratio_second", "range_second"),
    };
    let mut checks = vec![
        le(order_id, pt.delta2.clone(), pt.delta1.clone()),
        dim_gate(gate_id, pt, &pt.delta1),
        gn_conditions(pt),
    ];
    let half_n_m = pt.dim() / (T::int(2) * pt.m.clone());
    checks.push(match critical_ratio(pt) {
        Some(r) => lt(ratio_id, r, half_n_m),
        None => failed(ratio_id, true),
    });
    let lower = threshold_exponent(pt.n, &pt.m, &pt.delta2);
    let upper = threshold_exponent(pt.n, &pt.m, &pt.delta1);
    checks.push(match (lower, upper) {
        (Some(a), Some(b)) => all_of(
            range_id,
            vec![
                le("p<=thr2", pt.p.clone(), a.clone()),
                le("thr2<=thr1", a, b.clone()),
                lt("thr1<q", b, pt.q.clone()),
            ],
        ),
        _ => failed(range_id, true),
    });
    let verdict = if checks.iter().all(|c| c.holds) {
        Verdict::GlobalExistence(which)
    } else {
        Verdict::Undetermined
    };
    RegionVerdict {
        verdict,
        checks,
        notes: Vec::new(),
    }
}

/// Nonexistence conditions: the L¹-data result on the branch(es) selected by
/// the order of δ₁, δ₂, and the slowly-decaying-data result when δ₁ = δ₂ and
/// 1 < m < 2. For m > 1 the latter is preferred when it applies, since it is
/// the statement formulated for L^m data.
pub fn check_blowup<T: Scalar>(pt: &ParamPoint<T>) -> Result<RegionVerdict> {
    validate(pt)?;
    let half_n = pt.dim() / T::int(2);
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    let mut integrable = false;
    if pt.delta1 >= pt.delta2 {
        let c = match critical_ratio(pt) {
            Some(r) => le("blowup_ratio_first", half_n.clone(), r),
            None => failed("blowup_ratio_first", false),
        };
        if c.margin == 0.0 && c.holds {
            notes.push("critical boundary of blowup_ratio_first".to_string());
        }
        integrable |= c.holds;
        checks.push(c);
    }
    if pt.delta2 >= pt.delta1 {
        let c = match critical_ratio(&pt.swapped()) {
            Some(r) => le("blowup_ratio_second", half_n, r),
            None => failed("blowup_ratio_second", false),
        };
        if c.margin == 0.0 && c.holds {
            notes.push("critical boundary of blowup_ratio_second".to_string());
        }
        integrable |= c.holds;
        checks.push(c);
    }
    let gate = pt.delta1 == pt.delta2 && pt.m > T::one() && pt.m < T::int(2);
    let mut slow_decay = false;
    if gate {
        let lhs = (pt.dim() - T::int(2) * pt.m.clone() * pt.delta1.clone()) / (T::int(2) * pt.m.clone());
        let big = if pt.p >= pt.q { pt.p.clone() } else { pt.q.clone() };
        let rhs = (T::one() + big) / (pt.p.clone() * pt.q.clone() - T::one());
        let boundary = (lhs.clone() - rhs.clone()).is_zero_value();
        let c = lt("blowup_slow_decay", lhs, rhs);
        if boundary {
            notes.push("critical boundary of blowup_slow_decay: open, left undetermined".to_string());
        }
        slow_decay = c.holds;
        checks.push(c);
    }
    let verdict = if slow_decay {
        Verdict::BlowUp(Statement::BlowUpSlowDecay)
    } else if integrable {
        Verdict::BlowUp(Statement::BlowUpIntegrable)
    } else {
        Verdict::Undetermined
    };
    Ok(RegionVerdict { verdict, checks, notes })
}

/// Full classification: existence first (δ₁ ≥ δ₂ branch, then its mirror),
/// then nonexistence, otherwise undetermined.
pub fn classify<T: Scalar>(pt: &ParamPoint<T>) -> Result<RegionVerdict> {
    let a = check_existence_first(pt)?;
    let b = check_existence_second(pt)?;
    let c = check_blowup(pt)?;
    let verdict = if a.verdict.is_global() {
        a.verdict
    } else if b.verdict.is_global() {
        b.verdict
    } else {
        c.verdict
    };
    let mut checks: Vec<Check> = Vec::new();
    for ch in a.checks.into_iter().chain(b.checks).chain(c.checks) {
        if !checks.iter().any(|x| x.id == ch.id) {
            checks.push(ch);
        }
    }
    Ok(RegionVerdict {
        verdict,
        checks,
        notes: c.notes,
    })
}

/// Floating classification, re-decided in exact arithmetic on the dyadic
/// value of the inputs when some margin falls within [`REFINE_BAND`].
pub fn classify_refined(pt: &ParamPoint<f64>) -> Result<RegionVerdict> {
    let v = classify(pt)?;
    if !v.near_boundary() {
        return Ok(v);
    }
    let exact = pt
        .to_exact()
        .ok_or_else(|| Error::InvalidInput("parameters must be finite".into()))?;
    let mut r = classify(&exact)?;
    r.notes.push("re-resolved in exact arithmetic".to_string());
    Ok(r)
}

/// The margins reported per sweep cell, oriented along the branch with the
/// larger damping exponent: critical ratio, exponent range, blow-up ratio.
pub fn branch_margins(v: &RegionVerdict, pt: &ParamPoint<f64>) -> (f64, f64, f64) {
    if pt.delta1 >= pt.delta2 {
        (v.margin("ratio_first"), v.margin("range_first"), v.margin("blowup_ratio_first"))
    } else {
        (v.margin("ratio_second"), v.margin("range_second"), v.margin("blowup_ratio_second"))
    }
}

/// Outcome of the equal-damping reduction checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// Margin of the existence condition on the branch picked by max{p, q}.
    pub existence_margin: Q,
    /// Margin of (n − 2mδ)/(2m) > (1 + max{p,q})/(pq − 1); for m = 1 this is
    /// the (n−1)/2 form at δ = ½ and the n/2 form at δ = 0.
    pub reduced_margin: Q,
    /// Margin of the nonexistence condition on the same branch.
    pub blowup_margin: Q,
    /// The existence condition and the reduced form agree.
    pub equivalence_holds: bool,
    /// At m = 1 the nonexistence margin is exactly minus the existence margin.
    pub complement_holds: Option<bool>,
}

/// Checks, in exact arithmetic, that at δ₁ = δ₂ the existence condition
/// collapses to its classical single-exponent form and that the blow-up
/// condition is its closure-complement when m = 1.
pub fn reduction_identities(pt: &ParamPoint<Q>) -> Result<ReductionReport> {
    validate(pt)?;
    if pt.delta1 != pt.delta2 {
        return Err(Error::InvalidInput("reduction identities need delta1 = delta2".into()));
    }
    // orient so that the larger exponent is q, as in the δ₁ ≥ δ₂ branch
    let o = if pt.q >= pt.p { pt.clone() } else { pt.swapped() };
    let two = Q::int(2);
    let ratio = critical_ratio(&o).ok_or_else(|| Error::Numerical("vanishing denominator".into()))?;
    let existence_margin = o.dim() / (two.clone() * o.m.clone()) - ratio.clone();
    let blowup_margin = ratio - o.dim() / two.clone();
    let pq1 = o.p.clone() * o.q.clone() - Q::one();
    let reduced_margin = (o.dim() - two.clone() * o.m.clone() * o.delta1.clone()) / (two * o.m.clone())
        - (Q::one() + o.q.clone()) / pq1;
    let equivalence_holds = existence_margin == reduced_margin;
    let complement_holds = if o.m == Q::one() {
        Some(blowup_margin == -existence_margin.clone())
    } else {
        None
    };
    Ok(ReductionReport {
        existence_margin,
        reduced_margin,
        blowup_margin,
        equivalence_holds,
        complement_holds,
    })
}

/// One classified sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub p: f64,
    pub q: f64,
    pub verdict: RegionVerdict,
}

/// Classifies a `resolution × resolution` lattice over (p_lo, p_hi] × (q_lo, q_hi],
/// row-major with p varying slowest. Cell values are lo + (hi−lo)(i+1)/resolution.
pub fn sweep(
    template: &ParamPoint<f64>,
    p_range: (f64, f64),
    q_range: (f64, f64),
    resolution: usize,
) -> Result<Vec<SweepCell>> {
    if resolution == 0 || resolution > 2000 {
        return Err(Error::InvalidInput(format!(
            "resolution must lie in 1..=2000, got {resolution}"
        )));
    }
    for (name, (lo, hi)) in [("p_range", p_range), ("q_range", q_range)] {
        if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} must satisfy 1 <= lo < hi < inf, got ({lo}, {hi}]"
            )));
        }
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution)
            .map(|i| lo + (hi - lo) * (i + 1) as f64 / resolution as f64)
            .collect()
    };
    let ps = axis(p_range);
    let qs = axis(q_range);
    let rows: Vec<Result<Vec<SweepCell>>> = ps
        .par_iter()
        .map(|&p| {
            qs.iter()
                .map(|&q| {
                    let pt = ParamPoint { p, q, ..template.clone() };
                    Ok(SweepCell {
                        p,
                        q,
                        verdict: classify_refined(&pt)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(resolution * resolution);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::q;

    fn pt(n: u32, m: Q, d1: Q, d2: Q, p: Q, qq: Q) -> ParamPoint<Q> {
        ParamPoint::new(n, m, d1, d2, p, qq)
    }

    #[test]
    fn supercritical_point_is_global() {
        let x = pt(3, q(1, 1), q(1, 2), q(1, 2), q(2, 1), q(3, 1));
        let v = check_existence_first(&x).unwrap();
        assert_eq!(v.verdict, Verdict::GlobalExistence(Statement::ExistenceFirst));
        // ratio 1.3 against 1.5
        assert!((v.margin("ratio_first") - 0.2).abs() < 1e-15);
        assert_eq!(classify(&x).unwrap().verdict, Verdict::GlobalExistence(Statement::ExistenceFirst));
    }

    #[test]
    fn range_condition_fails() {
        let x = pt(3, q(1, 1), q(1, 2), q(1, 2), q(3, 1), q(3, 1));
        let v = check_existence_first(&x).unwrap();
        assert!(!v.check("range_first").unwrap().holds);
        assert_eq!(v.verdict, Verdict::Undetermined);
    }

    #[test]
    fn order_gate() {
        let x = pt(3, q(1, 1), q(1, 4), q(1, 2), q(3, 1), q(2, 1));
        let v = check_existence_first(&x).unwrap();
        assert!(!v.check("delta1>=delta2").unwrap().holds);
        assert!(!v.verdict.is_global());
    }

    #[test]
    fn fujita_boundary_blows_up() {
        let x = pt(2, q(1, 1), q(0, 1), q(0, 1), q(2, 1), q(2, 1));
        let v = check_blowup(&x).unwrap();
        assert_eq!(v.verdict, Verdict::BlowUp(Statement::BlowUpIntegrable));
        assert_eq!(v.margin("blowup_ratio_first"), 0.0);
        assert!(v.notes.iter().any(|n| n.contains("blowup_ratio_first")));
    }

    #[test]
    fn slow_decay_blowup() {
        let x = pt(2, q(3, 2), q(1, 4), q(1, 4), q(2, 1), q(2, 1));
        let v = check_blowup(&x).unwrap();
        assert_eq!(v.verdict, Verdict::BlowUp(Statement::BlowUpSlowDecay));
        assert!((v.margin("blowup_slow_decay") - (1.0 - 5.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn large_exponents_escape_blowup() {
        let x = pt(10, q(1, 1), q(1, 4), q(1, 4), q(10, 1), q(10, 1));
        assert!(!check_blowup(&x).unwrap().verdict.is_blowup());
    }

    #[test]
    fn open_boundary_is_undetermined() {
        // (n − 2mδ)/(2m) = 1 = (1 + max)/(pq − 1)
        let x = pt(3, q(3, 2), q(0, 1), q(0, 1), q(2, 1), q(2, 1));
        let v = check_blowup(&x).unwrap();
        assert_eq!(v.margin("blowup_slow_decay"), 0.0);
        assert_eq!(v.verdict, Verdict::Undetermined);
        assert!(v.notes.iter().any(|n| n.contains("open")));
    }

    #[test]
    fn reductions() {
        let r = reduction_identities(&pt(3, q(1, 1), q(1, 2), q(1, 2), q(2, 1), q(3, 1))).unwrap();
        assert!(r.equivalence_holds);
        assert_eq!(r.complement_holds, Some(true));
        let r = reduction_identities(&pt(2, q(1, 1), q(0, 1), q(0, 1), q(2, 1), q(2, 1))).unwrap();
        assert_eq!(r.existence_margin, q(0, 1));
        assert_eq!(r.reduced_margin, q(0, 1));
        assert!(reduction_identities(&pt(2, q(1, 1), q(1, 4), q(0, 1), q(2, 1), q(2, 1))).is_err());
    }

    #[test]
    fn single_cell_sweep_matches_point() {
        let t = ParamPoint::new(3, 1.0, 0.5, 0.5, 0.0, 0.0);
        let cells = sweep(&t, (1.0, 2.0), (2.0, 3.0), 1).unwrap();
        assert_eq!(cells.len(), 1);
        let direct = classify_refined(&ParamPoint::new(3, 1.0, 0.5, 0.5, 2.0, 3.0)).unwrap();
        assert_eq!(cells[0].verdict, direct);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(classify(&ParamPoint::new(0, 1.0, 0.1, 0.1, 2.0, 2.0)).is_err());
        assert!(classify(&ParamPoint::new(2, 1.0, 0.7, 0.1, 2.0, 2.0)).is_err());
        assert!(sweep(&ParamPoint::new(2, 1.0, 0.1, 0.1, 2.0, 2.0), (1.0, 2.0), (1.0, 2.0), 2001).is_err());
    }
}

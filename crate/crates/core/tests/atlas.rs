use dampwave::atlas::*;
use dampwave::exact::{q, ParamPoint, Scalar, Q};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rational(rng: &mut ChaCha8Rng) -> ParamPoint<Q> {
    let n = rng.gen_range(1..=6u32);
    let m = q(rng.gen_range(100..200), 100);
    let d1 = q(rng.gen_range(0..=60), 120);
    let d2 = q(rng.gen_range(0..=60), 120);
    let p = q(rng.gen_range(101..800), 100);
    let qq = q(rng.gen_range(101..800), 100);
    ParamPoint::new(n, m, d1, d2, p, qq)
}

fn random_float(rng: &mut ChaCha8Rng) -> ParamPoint<f64> {
    ParamPoint::new(
        rng.gen_range(1..=6),
        rng.gen_range(1.0..2.0),
        rng.gen_range(0.0..=0.5),
        rng.gen_range(0.0..=0.5),
        rng.gen_range(1.0001..8.0),
        rng.gen_range(1.0001..8.0),
    )
}

fn contradicts<T: Scalar>(pt: &ParamPoint<T>) -> bool {
    let global = check_existence_first(pt).unwrap().verdict.is_global() || check_existence_second(pt).unwrap().verdict.is_global();
    global && check_blowup(pt).unwrap().verdict.is_blowup()
}

#[test]
fn no_contradiction_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100_000 {
        let pt = random_float(&mut rng);
        assert!(!contradicts(&pt), "{pt:?}");
    }
    for _ in 0..20_000 {
        let pt = random_rational(&mut rng);
        assert!(!contradicts(&pt), "{pt:?}");
    }
}

/// A rational point drawn inside the m = 1 gates: δ₁ ≥ δ₂, n > 4δ₁,
/// 2 ≤ p ≤ 1 + 2/(n−2δ₂), q > 1 + 2/(n−2δ₁) (and q ≤ 3 when n = 3).
fn gated_point(rng: &mut ChaCha8Rng) -> ParamPoint<Q> {
    let n = rng.gen_range(1..=3u32);
    let (d1, d2) = if n == 3 {
        (q(1, 2), q(1, 2))
    } else {
        let top = if n == 1 { 59 } else { 120 };
        let a = rng.gen_range(0..=top);
        let b = rng.gen_range(0..=a);
        (q(a, 240), q(b, 240))
    };
    let thr = |d: &Q| Q::int(1) + Q::int(2) / (Q::int(n as i64) - Q::int(2) * d.clone());
    let p = if n == 3 {
        q(2, 1)
    } else {
        q(2, 1) + (thr(&d2) - q(2, 1)) * q(rng.gen_range(0..=1000), 1000)
    };
    let lo = thr(&d1).max(q(2, 1));
    let span = if n == 3 { q(3, 1) - lo.clone() } else { q(6, 1) };
    let qq = lo + span * q(rng.gen_range(1..=1000), 1000);
    ParamPoint::new(n, q(1, 1), d1, d2, p, qq)
}

#[test]
fn criticality_partition_at_m_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = 0;
    let mut exist_count = 0;
    while seen < 100_000 {
        let pt = gated_point(&mut rng);
        let e = check_existence_first(&pt).unwrap();
        let gate = ["delta1>=delta2", "n>2m0*delta1", "range_first"].iter().all(|id| e.check(id).unwrap().holds);
        let gn = e.checks.iter().find(|c| c.id.starts_with("gn_")).unwrap().holds;
        if !(gate && gn) {
            continue;
        }
        seen += 1;
        let exist = e.check("ratio_first").unwrap().holds;
        let blow = check_blowup(&pt).unwrap().check("blowup_ratio_first").unwrap().holds;
        assert!(exist ^ blow, "{pt:?}");
        exist_count += exist as usize;
    }
    // both sides of the partition are exercised
    assert!(exist_count > 1000 && exist_count < 99_000, "{exist_count}");
}

fn lattice() -> Vec<(Q, Q)> {
    let mut out = Vec::new();
    for i in 1..=20 {
        for j in 1..=20 {
            out.push((q(100 + 15 * i, 100), q(100 + 15 * j, 100)));
        }
    }
    out
}

#[test]
fn half_damping_reduces_to_single_exponent_form() {
    for n in 1..=6u32 {
        for (p, qq) in lattice() {
            let pt = ParamPoint::new(n, q(1, 1), q(1, 2), q(1, 2), p.clone(), qq.clone());
            let r = reduction_identities(&pt).unwrap();
            let big = if p >= qq { p.clone() } else { qq.clone() };
            let direct = q(n as i64 - 1, 2) - (Q::int(1) + big) / (p * qq - Q::int(1));
            assert_eq!(r.existence_margin, direct);
            assert!(r.equivalence_holds);
            assert_eq!(r.complement_holds, Some(true));
        }
    }
}

#[test]
fn zero_damping_reduces_to_half_dimension() {
    for n in 1..=6u32 {
        for (p, qq) in lattice() {
            let pt = ParamPoint::new(n, q(1, 1), q(0, 1), q(0, 1), p.clone(), qq.clone());
            let r = reduction_identities(&pt).unwrap();
            let big = if p >= qq { p.clone() } else { qq.clone() };
            let direct = q(n as i64, 2) - (Q::int(1) + big) / (p * qq - Q::int(1));
            assert_eq!(r.existence_margin, direct);
            assert!(r.equivalence_holds);
            assert_eq!(r.complement_holds, Some(true));
        }
    }
}

#[test]
fn exact_and_float_verdicts_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut compared = 0;
    for _ in 0..20_000 {
        let e = random_rational(&mut rng);
        let f = e.to_f64();
        let fv = classify(&f).unwrap();
        if fv.checks.iter().any(|c| c.margin.abs() <= 1e-9) {
            continue;
        }
        assert_eq!(classify(&e).unwrap().verdict, fv.verdict, "{e:?}");
        compared += 1;
    }
    assert!(compared > 15_000);
}

#[test]
fn refinement_resolves_exact_boundaries() {
    // (1+q)/(pq−1) = 1 at p = q = 2 for (3,1,½,½): closed blow-up condition holds
    let pt = ParamPoint::new(3, 1.0, 0.5, 0.5, 2.0, 2.0);
    let v = classify_refined(&pt).unwrap();
    assert!(v.verdict.is_blowup());
    assert_eq!(v.margin("blowup_ratio_first"), 0.0);
}

#[test]
fn single_cell_sweep_is_single_point() {
    let t = ParamPoint::new(3, 1.0, 0.5, 0.25, 1.0, 1.0);
    let cells = sweep(&t, (1.0, 2.5), (2.0, 4.0), 1).unwrap();
    assert_eq!(cells.len(), 1);
    let pt = ParamPoint { p: 2.5, q: 4.0, ..t };
    assert_eq!(cells[0].verdict, classify_refined(&pt).unwrap());
}

#[test]
fn sweep_boundary_follows_curve() {
    let t = ParamPoint::new(3, 1.0, 0.5, 0.5, 2.0, 2.0);
    let res = 100;
    let cells = sweep(&t, (1.0, 4.0), (1.0, 4.0), res).unwrap();
    let curve = |p: f64, qq: f64| (1.0 + p.max(qq)) / (p * qq - 1.0);
    for (i, c) in cells.iter().enumerate() {
        let f = curve(c.p, c.q);
        if (f - 1.0).abs() > 1e-12 {
            assert_eq!(c.verdict.verdict.is_blowup(), f > 1.0, "cell {i} at ({}, {})", c.p, c.q);
        }
        // any verdict change to a neighbour happens across the curve
        let (r, col) = (i / res, i % res);
        for (nr, nc) in [(r + 1, col), (r, col + 1)] {
            if nr < res && nc < res {
                let o = &cells[nr * res + nc];
                if o.verdict.verdict.is_blowup() != c.verdict.verdict.is_blowup() {
                    assert!((f - 1.0) * (curve(o.p, o.q) - 1.0) <= 0.0);
                }
            }
        }
    }
    assert!(cells.iter().any(|c| c.verdict.verdict.is_blowup()));
    // existence needs p = 2 exactly here, which is not a lattice value
    assert!(!cells.iter().any(|c| c.verdict.verdict.is_global()));
}

#[test]
fn blowup_margin_decreases_in_p() {
    for (d1, d2) in [(0.5, 0.5), (0.5, 0.25), (0.3, 0.0), (0.0, 0.0)] {
        let t = ParamPoint::new(3, 1.0, d1, d2, 2.0, 2.0);
        let res = 60;
        let cells = sweep(&t, (1.0, 6.0), (1.0, 6.0), res).unwrap();
        // cells are p-major; fix q (column) and walk p
        for col in 0..res {
            let margins: Vec<f64> = (0..res)
                .map(|row| {
                    let c = &cells[row * res + col];
                    branch_margins(&c.verdict, &ParamPoint { p: c.p, q: c.q, ..t }).2
                })
                .collect();
            for w in margins.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "d=({d1},{d2}) column {col}: {w:?}");
            }
        }
    }
}

#[test]
fn sweep_rejects_bad_ranges() {
    let t = ParamPoint::new(2, 1.0, 0.0, 0.0, 2.0, 2.0);
    assert!(sweep(&t, (0.5, 2.0), (1.0, 2.0), 4).is_err());
    assert!(sweep(&t, (1.0, 2.0), (1.0, 2.0), 0).is_err());
    assert!(classify(&ParamPoint::new(2, 1.0, 0.7, 0.0, 2.0, 2.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn margins_are_signed_distances(n in 1u32..6, d1 in 0.0f64..=0.5, d2 in 0.0f64..=0.5, p in 1.01f64..8.0, qq in 1.01f64..8.0) {
        let pt = ParamPoint::new(n, 1.0, d1, d2, p, qq);
        let v = classify(&pt).unwrap();
        for c in &v.checks {
            if c.margin.is_finite() && c.margin.abs() > 1e-12 {
                prop_assert_eq!(c.holds, c.margin > 0.0, "{}", c.id);
            }
        }
        if v.verdict.is_global() {
            let e = if d1 >= d2 { check_existence_first(&pt) } else { check_existence_second(&pt) }.unwrap();
            prop_assert!(e.checks.iter().all(|c| c.holds) || check_existence_second(&pt).unwrap().checks.iter().all(|c| c.holds));
        }
    }
}

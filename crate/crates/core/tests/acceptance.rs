//! One PASS/FAIL line per acceptance criterion. Criteria listed in
//! `EXPECTED_FAIL` are known to be unattainable as stated; the run only
//! fails when an outcome differs from its expectation.

use dampwave::atlas::{check_blowup, check_existence_first, check_existence_second, reduction_identities};
use dampwave::cli_io::run_cli;
use dampwave::exact::{q, ParamPoint, Scalar, Q};
use dampwave::kernels::{kernel_values, radial_norm, Deriv};
use dampwave::rates::*;
use dampwave::solver::*;
use dampwave::spectral::{plancherel_pairing, plancherel_pairing_spectral, Grid, RealField};
use dampwave::testfn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Criteria whose statement does not hold; see the detail line for why.
const EXPECTED_FAIL: &[u32] = &[8];

// ---------------------------------------------------------------- 1

fn rk4_oracle(t: f64, xi: f64, delta: f64) -> [f64; 4] {
    let b = if delta == 0.0 { 1.0 } else { xi.powf(2.0 * delta) };
    let w2 = xi * xi;
    let solve = |y0: [f64; 2], steps: usize| {
        let h = t / steps as f64;
        let f = |y: [f64; 2]| [y[1], -b * y[1] - w2 * y[0]];
        let mut y = y0;
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    };
    let run = |steps| {
        let a = solve([1.0, 0.0], steps);
        let c = solve([0.0, 1.0], steps);
        [a[0], c[0], a[1], c[1]]
    };
    let mut steps = 64;
    let mut prev = run(steps);
    loop {
        steps *= 2;
        let next = run(steps);
        let scale = next.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let diff = next.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff <= 1e-11 * scale || steps > 1 << 22 {
            return next;
        }
        prev = next;
    }
}

fn kernel_err(t: f64, xi: f64, d: f64) -> f64 {
    let a = kernel_values(t, xi, d).real();
    let b = rk4_oracle(t, xi, d);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for &t in &[0.1, 1.0, 10.0] {
        for &xi in &[0.0, 0.01, 0.25, 1.0, 10.0] {
            for &d in &[0.0, 0.1, 0.25, 0.4, 0.5] {
                worst = worst.max(kernel_err(t, xi, d));
            }
        }
    }
    let mut sweep: f64 = 0.0;
    for i in 0..200 {
        let xi = 0.2499 + 0.0002 * i as f64 / 199.0;
        sweep = sweep.max(kernel_err(1.0, xi, 0.25));
    }
    ensure!(worst <= 1e-6 && sweep <= 1e-6, "lattice {worst:.2e}, sweep {sweep:.2e}");
    Ok(format!("lattice max rel err {worst:.2e}, discriminant sweep {sweep:.2e}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let times: Vec<f64> = (0..24).map(|i| 100.0 * 100f64.powf(i as f64 / 23.0)).collect();
    let mut lines = Vec::new();
    for n in 1..=3u32 {
        for d in [0.0, 0.25, 0.5] {
            let pt = ParamPoint::new(n, 1.0, d, d, 2.0, 2.0);
            let pred = sharpest_linear(&pt, Component::U, Deriv::new(0, 0)).map_err(|e| e.to_string())?;
            for w0 in [true, false] {
                let data = |r: f64| {
                    let g = (-0.5 * r * r).exp();
                    if w0 {
                        (g, 0.0)
                    } else {
                        (0.0, g)
                    }
                };
                let vals: Vec<f64> = times
                    .iter()
                    .map(|&t| radial_norm(t, d, data, n, Deriv::new(0, 0)))
                    .collect::<Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                let (slope, _) = fit_rate(&times, &vals, (1e2, 1e4)).map_err(|e| e.to_string())?;
                let p = if w0 { pred.exponent_w0 } else { pred.exponent_w1 };
                let tag = format!("n={n} d={d} {}", if w0 { "w0" } else { "w1" });
                ensure!(slope <= p + 0.05, "{tag}: slope {slope:.4} above predicted {p:.4}");
                // the lower bound is only meaningful for the sharp (gated) estimate
                if pred.source != Source::AnyDimension {
                    ensure!(slope >= p - 0.1, "{tag}: slope {slope:.4} far below predicted {p:.4}");
                }
                lines.push(format!("{tag}:{slope:.3}/{p:.3}"));
            }
        }
    }
    let pt = ParamPoint::new(3, q(1, 1), q(1, 2), q(1, 2), q(2, 1), q(2, 1));
    let r = predicted_exponents(&pt, Component::U, 0, 0, Source::SystemLinear, q(0, 1)).map_err(|e| e.to_string())?;
    ensure!(r.exponent_w1 == q(-1, 2), "(3,1/2,0,0) w1 exponent {}", r.exponent_w1);
    Ok(lines.join(" "))
}

// ---------------------------------------------------------------- 3

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

fn criterion_3() -> Outcome {
    let mut identities = 0;
    for n in 1..=6u32 {
        for i in 1..=20 {
            for j in 1..=20 {
                let (p, qq) = (q(100 + 15 * i, 100), q(100 + 15 * j, 100));
                let big = if p >= qq { p.clone() } else { qq.clone() };
                let ratio = (Q::int(1) + big) / (p.clone() * qq.clone() - Q::int(1));
                for (d, half) in [(q(1, 2), q(n as i64 - 1, 2)), (q(0, 1), q(n as i64, 2))] {
                    let pt = ParamPoint::new(n, q(1, 1), d.clone(), d, p.clone(), qq.clone());
                    let r = reduction_identities(&pt).map_err(|e| e.to_string())?;
                    ensure!(r.existence_margin == half - ratio.clone(), "reduction at {pt:?}");
                    ensure!(r.equivalence_holds && r.complement_holds == Some(true), "identities at {pt:?}");
                    identities += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100_000 {
        let pt = ParamPoint::new(
            rng.gen_range(1..=6),
            rng.gen_range(1.0..2.0),
            rng.gen_range(0.0..=0.5),
            rng.gen_range(0.0..=0.5),
            rng.gen_range(1.0001..8.0),
            rng.gen_range(1.0001..8.0),
        );
        let global = check_existence_first(&pt).unwrap().verdict.is_global() || check_existence_second(&pt).unwrap().verdict.is_global();
        ensure!(!(global && check_blowup(&pt).unwrap().verdict.is_blowup()), "contradiction at {pt:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut seen, mut exist) = (0, 0);
    while seen < 100_000 {
        let pt = gated_point(&mut rng);
        let e = check_existence_first(&pt).unwrap();
        let gated = ["delta1>=delta2", "n>2m0*delta1", "range_first"].iter().all(|id| e.check(id).unwrap().holds)
            && e.checks.iter().find(|c| c.id.starts_with("gn_")).unwrap().holds;
        if !gated {
            continue;
        }
        seen += 1;
        let a = e.check("ratio_first").unwrap().holds;
        let b = check_blowup(&pt).unwrap().check("blowup_ratio_first").unwrap().holds;
        ensure!(a ^ b, "partition fails at {pt:?}");
        exist += a as usize;
    }
    Ok(format!("{identities} exact reductions; 1e5 points without contradiction; partition on 1e5 gated points ({exist} existence)"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut feasible, mut worst) = (0, f64::INFINITY);
    while feasible < 10_000 {
        let d1: f64 = rng.gen_range(0.0..=0.5);
        let pt = ParamPoint::new(
            rng.gen_range(1..=4),
            rng.gen_range(1.0..2.0),
            d1,
            rng.gen_range(0.0..=d1),
            rng.gen_range(1.0..6.0),
            rng.gen_range(1.0..12.0),
        );
        if !check_existence_first(&pt).unwrap().verdict.is_global() {
            continue;
        }
        let l = loss_of_decay(&pt, LossKind::PDelta2, DEFAULT_SLACK).map_err(|e| e.to_string())?;
        ensure!(l.total() >= 0.0, "negative loss {} at {pt:?}", l.total());
        worst = worst.min(l.total());
        feasible += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = 0;
    while exact < 100 {
        let n = rng.gen_range(1..=6u32);
        let m = q(rng.gen_range(10..20), 10);
        let d = q(rng.gen_range(0..=50), 100);
        let den = Q::int(n as i64) - Q::int(2) * m.clone() * d.clone();
        if den <= Q::int(0) {
            continue;
        }
        let p = Q::int(1) + Q::int(2) * m.clone() / den;
        let pt = ParamPoint::new(n, m, d.clone(), d, p, q(100, 1));
        let l = loss_of_decay(&pt, LossKind::PDelta2, DEFAULT_SLACK).map_err(|e| e.to_string())?;
        ensure!(l.total() == DEFAULT_SLACK, "threshold identity at {pt:?}: {}", l.total());
        exact += 1;
    }
    Ok(format!("min loss+slack {worst:.3e} over 1e4 feasible points; {exact} exact threshold identities"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let p = SystemParams::new(3, 1.0, 0.5, 0.5, 2.0, 3.0).map_err(|e| e.to_string())?;
    let pt = ParamPoint::from(&p);
    ensure!(check_existence_first(&pt).unwrap().verdict.is_global(), "fixture is not in the existence region");
    let w = solution_space_weights(&pt, true, 1e-3).map_err(|e| e.to_string())?.six();
    let grid = Grid::new(3, 48, 12.0).map_err(|e| e.to_string())?;
    let d = make_data(DataKind::SmallEnergy { seed: 7 }, &grid, &p, 1e-3).map_err(|e| e.to_string())?;
    let rec = run(p, &d, 50.0, 0.05, 20).map_err(|e| e.to_string())?;
    ensure!(rec.status == RunStatus::Completed, "status {:?}", rec.status);
    let x = |r: &TrajectoryRow| weighted_sum(r.t, &r.six_norms(), &w);
    let x0 = x(&rec.rows[0]);
    let ratio = rec.rows.iter().map(|r| x(r) / x0).fold(0.0, f64::max);
    ensure!(ratio <= 10.0, "weighted norm grew {ratio:.3}x");
    Ok(format!("n=3 N=48 T=50: max weighted ratio {ratio:.3}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let blow = SystemParams::new(2, 1.0, 0.0, 0.0, 2.0, 2.0).map_err(|e| e.to_string())?;
    let t_star = |points: usize| -> Result<f64, String> {
        let g = Grid::new(2, points, 20.0).map_err(|e| e.to_string())?;
        let d = make_data(DataKind::GaussianBump { width: 1.0 }, &g, &blow, 1.2).map_err(|e| e.to_string())?;
        match run(blow, &d, 20.0, 0.01, 1).map_err(|e| e.to_string())?.status {
            RunStatus::BlowUpDetected(t) => Ok(t),
            s => Err(format!("N={points}: no blow-up ({s:?})")),
        }
    };
    let (a, b) = (t_star(128)?, t_star(256)?);
    let shift = (a - b).abs() / a.min(b);
    ensure!(shift <= 0.1, "t* {a} vs {b}");
    let feasible = SystemParams::new(2, 1.0, 0.0, 0.0, 2.0, 3.0).map_err(|e| e.to_string())?;
    ensure!(check_existence_first(&ParamPoint::from(&feasible)).unwrap().verdict.is_global(), "(2,3) not feasible");
    let g = Grid::new(2, 128, 20.0).map_err(|e| e.to_string())?;
    let d = make_data(DataKind::GaussianBump { width: 1.0 }, &g, &feasible, 1.2).map_err(|e| e.to_string())?;
    let st = run(feasible, &d, 20.0, 0.01, 10).map_err(|e| e.to_string())?.status;
    ensure!(st == RunStatus::Completed, "(p,q)=(2,3): {st:?}");
    Ok(format!("t* {a:.3} (N=128), {b:.3} (N=256), shift {:.2}%; (2,3) completes", 100.0 * shift))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut parts = Vec::new();
    for (r, s, n) in [(0.5, 0.1, 1), (1.0, 0.25, 1), (3.0, 0.25, 1)] {
        let rep = bracket_decay_check(r, s, n, 1000.0).map_err(|e| e.to_string())?;
        ensure!(rep.flat && rep.tail_slope.abs() <= 0.1, "r={r}: tail slope {}", rep.tail_slope);
        parts.push(format!("r={r}:{:.3}", rep.tail_slope));
    }
    let w = BracketWeight::new(2.0).map_err(|e| e.to_string())?;
    let pts: Vec<Vec<f64>> = [0.0, 1.0, 5.0].iter().map(|&x| vec![x]).collect();
    let dev = scaling_identity_check(&|y: &[f64]| w.eval(y), 4.0, 1.0, 0.25, &pts, FarField::Decaying).map_err(|e| e.to_string())?;
    ensure!(dev <= 1e-5, "scaling deviation {dev:.2e}");
    let g = Grid::new(2, 32, 4.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut random = || RealField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (a, b) = (random(), random());
    let x = plancherel_pairing(&a, &b).map_err(|e| e.to_string())?;
    let y = plancherel_pairing_spectral(&a, &b).map_err(|e| e.to_string())?;
    let rel = (x - y).abs() / (a.l2_norm() * b.l2_norm());
    ensure!(rel <= 1e-10, "pairing deviation {rel:.2e}");
    Ok(format!("tail slopes {}; scaling {dev:.1e}; pairing {rel:.1e}", parts.join(" ")))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let pt = ParamPoint::new(3, q(1, 1), q(1, 2), q(1, 4), q(2, 1), q(4, 1));
    let s = blowup_scalings(&pt).map_err(|e| e.to_string())?;
    ensure!(s.alpha == q(31, 30) && s.beta == q(19, 30), "alpha {} beta {}", s.alpha, s.beta);
    let ds = [q(0, 1), q(1, 4), q(1, 2)];
    let (mut equal, mut unequal, mut bad) = (0, 0, Vec::new());
    for n in 1..=4u32 {
        for (i, d1) in ds.iter().enumerate() {
            for d2 in &ds[..=i] {
                for a in 1..=12 {
                    for b in 1..=12 {
                        let pt = ParamPoint::new(n, q(1, 1), d1.clone(), d2.clone(), q(2 + a, 2), q(2 + b, 2));
                        let g = blowup_scalings(&pt).map_err(|e| e.to_string())?;
                        let cond = check_blowup(&pt).unwrap().check("blowup_ratio_first").unwrap().holds;
                        let agree = (g.gamma2 <= Q::zero()) == cond;
                        if d1 == d2 {
                            equal += 1;
                            ensure!(agree, "equivalence fails at equal damping {pt:?}");
                        } else {
                            unequal += 1;
                            if !agree {
                                bad.push(pt);
                            }
                        }
                    }
                }
            }
        }
    }
    ensure!(
        bad.is_empty(),
        "alpha=31/30 beta=19/30 exact; gamma2<=0 matches the blow-up condition on all {equal} equal-damping points but not on {}/{unequal} unequal ones, e.g. n={} d1={} d2={} p={} q={}",
        bad.len(),
        bad[0].n,
        bad[0].delta1,
        bad[0].delta2,
        bad[0].p,
        bad[0].q
    );
    Ok(format!("alpha, beta exact; equivalence on {} lattice points", equal + unequal))
}

// ---------------------------------------------------------------- 9

const SIMULATE: &str = r#"
command = "simulate"
seed = 11
[system]
n = 1
delta1 = 0.25
delta2 = 0.1
p = 2.0
q = 3.0
[grid]
points = 128
half_width = 15.0
[data]
kind = "small_energy"
amplitude = 0.05
[time]
t_final = 5.0
h = 0.02
record_every = 5
"#;

const ATLAS: &str = r#"
command = "atlas"
seed = 3
[system]
n = 3
delta1 = 0.5
delta2 = 0.25
p = 2.0
q = 2.0
[sweep]
p_min = 1.0
p_max = 5.0
q_min = 1.0
q_max = 5.0
resolution = 40
"#;

fn criterion_9() -> Outcome {
    let root = std::env::temp_dir().join(format!("dampwave-acceptance-{}", std::process::id()));
    let mut summary = Vec::new();
    for (name, cfg, csv) in [("simulate", SIMULATE, "trajectory.csv"), ("atlas", ATLAS, "atlas.csv")] {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let dir = root.join(format!("{name}-{rep}"));
            let m = run_cli(cfg, None, &dir);
            ensure!(m.exit_code == 0, "{name}: exit {} ({})", m.exit_code, m.status);
            let file = m.outputs.iter().find(|o| o.file == csv).map(|o| o.file.clone());
            let file = file.ok_or_else(|| format!("{name}: no {csv} in {:?}", m.outputs.iter().map(|o| &o.file).collect::<Vec<_>>()))?;
            bytes.push(std::fs::read(dir.join(file)).map_err(|e| e.to_string())?);
        }
        ensure!(bytes[0] == bytes[1], "{name}: CSVs differ");
        summary.push(format!("{name} {} bytes identical", bytes[0].len()));
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(summary.join("; "))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "kernel fidelity", criterion_1),
        (2, "linear decay exponents", criterion_2),
        (3, "atlas correctness", criterion_3),
        (4, "loss of decay", criterion_4),
        (5, "nonlinear boundedness", criterion_5),
        (6, "blow-up evidence", criterion_6),
        (7, "test-function identities", criterion_7),
        (8, "scaling exponents", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let expected_fail = EXPECTED_FAIL.contains(&id);
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let note = if expected_fail { " [expected]" } else { "" };
        println!("criterion {id} ({name}): {tag}{note} [{secs:.1}s] {detail}");
        if outcome.is_ok() == expected_fail {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria differ from their expected outcome");
        ExitCode::FAILURE
    }
}

//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polar_arcs::arc_engine::{model_arc, model_arc_gamma1, model_arc_h2, smooth_product};
use polar_arcs::arc_planner::{euclid_decompose, plan, realize};
use polar_arcs::bifurcation_lab::*;
use polar_arcs::linalg::{self, Eigen2};
use polar_arcs::model_maps_1d::*;
use polar_arcs::torus_dynamics::*;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<String, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {:.1?}, limit {:.0?}", took, limit);
    Ok(format!("{took:.2?}"))
}

fn phi0_closed(x: f64) -> f64 {
    x - (2.0 * PI * (x - 0.25)).sin() / (4.0 * PI)
}

fn phi1_closed(x: f64) -> f64 {
    x - (6.0 * PI * (x - 0.25)).sin() / (12.0 * PI)
}

/// Zeros of `sin(k pi (x - 1/4))` in `[lo, hi]` with multiplier
/// `1 - cos(k pi (x - 1/4)) / 2`.
fn sine_zeros(k: f64, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    (-12..=12)
        .map(|m| 0.25 + m as f64 / k)
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| (x, 1.0 - 0.5 * (k * PI * (x - 0.25)).cos()))
        .collect()
}

fn census_matches(name: &str, want: &[(f64, f64)]) -> Result<(), String> {
    let got = fixed_points_1d(&LiftMap::by_name(name).unwrap(), &RootConfig::default());
    ensure!(got.len() == want.len(), "{name}: {} roots, want {}", got.len(), want.len());
    for (p, &(x, m)) in got.iter().zip(want) {
        ensure!((p.x - x).abs() <= 1e-9, "{name}: root {} vs {x}", p.x);
        ensure!((p.multiplier - m).abs() <= 1e-6, "{name}: multiplier {} vs {m}", p.multiplier);
        let kind = if m < 1.0 { Kind1D::Sink } else { Kind1D::Source };
        ensure!(p.kind == kind, "{name}: {:?} at {x}", p.kind);
    }
    Ok(())
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let phi0 = sine_zeros(2.0, 0.0, 0.999);
    // Glue pieces of g1: phi0 on [0, 0.26] and [0.77, 1], phi1 on [0.27, 0.76].
    let mut g1 = sine_zeros(2.0, 0.0, 0.26);
    g1.extend(sine_zeros(6.0, 0.27, 0.76));
    g1.extend(sine_zeros(2.0, 0.77, 0.999));
    // g2 keeps the g1 pieces below 0.42; the rest lies above the diagonal.
    let g2: Vec<_> = g1.iter().copied().filter(|p| p.0 < 0.42).collect();
    let g2f = LiftMap::g2();
    ensure!(
        (0..=5500).all(|i| {
            let x = 0.43 + i as f64 * 1e-4;
            g2f.value(x) > x
        }),
        "g2 meets the diagonal on [0.43, 0.98]"
    );
    census_matches("phi0", &phi0)?;
    census_matches("g1", &g1)?;
    census_matches("g2", &g2)?;
    within(Duration::from_secs(1), start)
}

fn criterion_2() -> Result<String, String> {
    let start = Instant::now();
    // 3(1-t) sin u + t sin 3u = sin u (3 - 4t sin^2 u): the second factor
    // first vanishes at u = pi/2 when t = 3/4.
    for i in 0..100 {
        let (u, t) = (i as f64 * 0.0631, (i % 11) as f64 / 10.0);
        let lhs = 3.0 * (1.0 - t) * u.sin() + t * (3.0 * u).sin();
        let rhs = u.sin() * (3.0 - 4.0 * t * u.sin().powi(2));
        ensure!((lhs - rhs).abs() < 1e-12, "factorization at u = {u}");
    }
    let (t, x) = (0.75, 0.5);
    let second = (1.0 - t) * PI * (2.0 * PI * (x - 0.25)).sin() + 3.0 * t * PI * (6.0 * PI * (x - 0.25)).sin();
    let speed = phi1_closed(x) - phi0_closed(x);
    ensure!((second + 2.0 * PI).abs() < 1e-12 && (speed - 1.0 / (3.0 * PI)).abs() < 1e-15, "oracle");

    let cfg = LabConfig::default();
    let (scan, events) = find_events(&model_arc_gamma1(), &uniform_grid(512), &cfg).map_err(|e| e.to_string())?;
    ensure!(scan.jumps.len() == 1 && events.len() == 1, "{} jumps", scan.jumps.len());
    let e = &events[0];
    ensure!((e.t - 0.75).abs() <= 1e-8, "t* = {}", e.t);
    ensure!(torus_distance(e.location, [0.25, 0.5]) <= 1e-8, "location {:?}", e.location);
    ensure!((e.multipliers[0] - 1.0).abs() <= 1e-6, "center multiplier {}", e.multipliers[0]);
    ensure!((e.multipliers[1] - 0.5).abs() <= 1e-6, "hyperbolic multiplier {}", e.multipliers[1]);
    ensure!((2.0 * e.a - second).abs() <= 1e-6, "second derivative {}", 2.0 * e.a);
    ensure!((e.b - speed).abs() <= 1e-9, "speed {}", e.b);
    ensure!(e.generic, "not generic");
    within(Duration::from_secs(10), start)
}

/// Largest `t` with four sign changes of `t g2 + (1 - t) g1 - x` on a
/// `1e5`-point grid, by bisection on the count.
fn merge_oracle() -> f64 {
    let (g1, g2) = (LiftMap::g1(), LiftMap::g2());
    let n = 100_000;
    let g1v: Vec<f64> = (0..=n).map(|i| g1.value(i as f64 / n as f64)).collect();
    let g2v: Vec<f64> = (0..=n).map(|i| g2.value(i as f64 / n as f64)).collect();
    let count = |t: f64| {
        let d = |i: usize| t * g2v[i] + (1.0 - t) * g1v[i] - i as f64 / n as f64;
        (1..=n).filter(|&i| (d(i) > 0.0) != (d(i - 1) > 0.0)).count()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    assert!(count(lo) == 4 && count(hi) == 2);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if count(mid) == 4 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_3() -> Result<String, String> {
    let start = Instant::now();
    let oracle = merge_oracle();
    let arc = model_arc_h2();
    let cfg = LabConfig::default();
    let (scan, events) = find_events(&arc, &uniform_grid(256), &cfg).map_err(|e| e.to_string())?;
    ensure!(scan.jumps.len() == 1 && events.len() == 1, "{} jumps", scan.jumps.len());
    let j = scan.jumps[0];
    ensure!((j.count_lo, j.count_hi) == (6, 4), "census {} -> {}", j.count_lo, j.count_hi);
    let e = &events[0];
    ensure!(e.t > 0.0 && e.t < 1.0 && e.generic, "event {e:?}");
    ensure!((e.t - oracle).abs() <= 1e-8, "t* = {}, root count gives {oracle}", e.t);

    let (fine, fine_events) = find_events(&arc, &uniform_grid(512), &cfg).map_err(|e| e.to_string())?;
    ensure!(fine.jumps.len() == 1, "{} jumps at dt = 1/512", fine.jumps.len());
    ensure!((fine_events[0].t - e.t).abs() <= 1e-8, "halved dt moves t* to {}", fine_events[0].t);

    let halved = LabConfig {
        fd_step: cfg.fd_step / 2.0,
        h_a: cfg.h_a / 2.0,
        h_b: cfg.h_b / 2.0,
        ..cfg
    };
    let h = locate_saddle_node(&arc, &j, None, &halved).map_err(|e| e.to_string())?;
    ensure!((h.t - e.t).abs() <= 1e-8 && h.generic, "halved steps move t* to {}", h.t);
    let took = within(Duration::from_secs(10), start)?;
    Ok(format!("t* = {:.10}, {took}", e.t))
}

fn criterion_4() -> Result<String, String> {
    let start = Instant::now();
    let cases = [
        UnimodularMatrix::IDENTITY,
        UnimodularMatrix::j(1),
        UnimodularMatrix::j(5),
        UnimodularMatrix::j(-2),
        UnimodularMatrix::new(2, 1, 1, 1).unwrap(),
        UnimodularMatrix::new(3, 2, 1, 1).unwrap(),
    ];
    for j in cases {
        let r = invariant_matrix(f_j(j).as_ref(), &FixedPointConfig::default(), &TraceConfig::default())
            .map_err(|e| format!("{j}: {e}"))?;
        let want = canonicalize(&j).unwrap();
        ensure!(r.matrix == want, "{j}: measured {}, want {want}", r.matrix);
        ensure!(r.matrix.det().abs() == 1, "{j}: det {}", r.matrix.det());
    }
    within(Duration::from_secs(30), start)
}

fn criterion_5() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    while done < 50 {
        let e: [i64; 4] = std::array::from_fn(|_| rng.gen_range(-20..=20));
        let Ok(m) = UnimodularMatrix::new(e[0], e[1], e[2], e[3]) else { continue };
        let j = canonicalize(&m).unwrap();
        if j.det() != 1 {
            continue;
        }
        let p = plan(&j).map_err(|e| format!("{j}: {e}"))?;
        let mut state = j;
        for s in &p.segments {
            ensure!(s.start == state, "{j}: chain breaks");
            state = state.mul(&s.transition().unwrap()).unwrap();
        }
        ensure!(state == UnimodularMatrix::IDENTITY, "{j}: chain ends at {state}");
        ensure!(p.total_sn == p.segments.iter().map(|s| s.sn_count).sum::<usize>(), "{j}: total");
        if j.b > 0 && j.a > j.b {
            // Re-derive k_{i+1} = n k_i - k_{i-1}, n = ceil(k_{i-1} / k_i), in i128.
            let (mut k, mut l, mut n) = (vec![j.a as i128, j.b as i128], vec![j.c as i128, j.d as i128], vec![]);
            while *k.last().unwrap() != 0 {
                let (kp, kc) = (k[k.len() - 2], k[k.len() - 1]);
                let step = (kp + kc - 1) / kc;
                n.push(step);
                k.push(step * kc - kp);
                l.push(step * l[l.len() - 1] - l[l.len() - 2]);
            }
            let ours = euclid_decompose(&j).map_err(|e| e.to_string())?;
            ensure!(ours.n.iter().map(|&v| v as i128).eq(n.iter().copied()), "{j}: steps");
            for i in 0..k.len() - 1 {
                ensure!(k[i] * l[i + 1] - k[i + 1] * l[i] == 1, "{j}: L_{i} not unimodular");
            }
            // L_m = (1 0; l_{m-1} 1) = J_{l_{m-1}}
            ensure!(k[k.len() - 2] == 1 && l[l.len() - 1] == 1, "{j}: terminal ladder");
            let total = 2 * (n.iter().sum::<i128>() + l[l.len() - 2].abs());
            ensure!(p.total_sn as i128 == total, "{j}: total {} vs {total}", p.total_sn);
        }
        done += 1;
    }
    let p = plan(&UnimodularMatrix::new(3, 2, 1, 1).unwrap()).unwrap();
    ensure!(p.steps == [2, 2] && p.total_sn == 10, "(3 2; 1 1): n = {:?}, total {}", p.steps, p.total_sn);
    for n in -10..=10i64 {
        let p = plan(&UnimodularMatrix::j(n)).unwrap();
        ensure!(p.total_sn == 2 * n.unsigned_abs() as usize, "J_{n}: total {}", p.total_sn);
    }
    within(Duration::from_secs(1), start)
}

fn criterion_6() -> Result<String, String> {
    let start = Instant::now();
    let (fp, tr) = (FixedPointConfig::default(), TraceConfig::default());
    let j1 = UnimodularMatrix::j(1);
    let r = realize(&plan(&j1).unwrap(), &fp, &tr).map_err(|e| e.to_string())?;
    let m0 = invariant_matrix(r.arc.slice(0.0).as_ref(), &fp, &tr).map_err(|e| e.to_string())?.matrix;
    let m1 = invariant_matrix(r.arc.slice(1.0).as_ref(), &fp, &tr).map_err(|e| e.to_string())?.matrix;
    ensure!(m0 == j1, "matrix {m0} at t = 0");
    ensure!(m1 == UnimodularMatrix::IDENTITY, "matrix {m1} at t = 1");
    let (scan, events) = find_events(&r.arc, &uniform_grid(512), &LabConfig::default()).map_err(|e| e.to_string())?;
    ensure!(scan.jumps.len() == 2, "{} census jumps", scan.jumps.len());
    ensure!(events.iter().all(|e| e.generic), "non-generic event");
    let flagged: Vec<String> = events
        .iter()
        .filter(|e| !e.noncritical.is_noncritical())
        .map(|e| format!("t = {:.6}: {:?}", e.t, e.noncritical))
        .collect();
    ensure!(flagged.is_empty(), "probe flags {} of 2 events: {}", flagged.len(), flagged.join("; "));
    within(Duration::from_secs(300), start)
}

fn sorted_eigen(e: Eigen2) -> [f64; 2] {
    match e {
        Eigen2::Real([a, b]) => [a.min(b), a.max(b)],
        Eigen2::Complex { re, im } => [re - im.abs(), re + im.abs()],
    }
}

fn random_unimodular(rng: &mut ChaCha8Rng, bound: i64) -> UnimodularMatrix {
    loop {
        let e: [i64; 4] = std::array::from_fn(|_| rng.gen_range(-bound..=bound));
        if let Ok(m) = UnimodularMatrix::new(e[0], e[1], e[2], e[3]) {
            return m;
        }
    }
}

fn criterion_7() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let mut lifts: Vec<LiftMap> = ["phi0", "phi1", "g1", "g2"].iter().map(|n| LiftMap::by_name(n).unwrap()).collect();
    for fam in [Family1D::eta1(), Family1D::eta2()] {
        lifts.extend((0..=10).map(|i| fam.slice(i as f64 / 10.0)));
    }
    for f in &lifts {
        for i in 0..4096 {
            let x = i as f64 / 4096.0;
            ensure!((f.value(x + 1.0) - f.value(x) - 1.0).abs() < 1e-12, "{} not degree one", f.name());
            ensure!(f.derivative(x) > 0.0, "{} not increasing at {x}", f.name());
        }
    }

    let base = f0();
    let nodes = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];
    for _ in 0..100 {
        let j = random_unimodular(&mut rng, 5);
        let g = f_j(j);
        for p in nodes {
            let want = sorted_eigen(linalg::eigenvalues(&base.jacobian(p)));
            let got = sorted_eigen(linalg::eigenvalues(&g.jacobian(j.apply(p))));
            ensure!((0..2).all(|i| (want[i] - got[i]).abs() <= 1e-8), "{j}: {got:?} vs {want:?}");
        }
    }

    let tr = TraceConfig::default();
    let mut pairs = Vec::new();
    for (saddle, stab, node) in [
        ([0.25, 0.75], Stability::Unstable, [0.25, 0.25]),
        ([0.25, 0.75], Stability::Stable, [0.75, 0.75]),
        ([0.75, 0.25], Stability::Unstable, [0.25, 0.25]),
        ([0.75, 0.25], Stability::Stable, [0.75, 0.75]),
    ] {
        let b = |br| trace_separatrix(base.as_ref(), saddle, stab, br, &[node], &tr).map_err(|e| e.to_string());
        pairs.push((b(Branch::Plus)?, b(Branch::Minus)?));
    }
    for _ in 0..50 {
        let j = random_unimodular(&mut rng, 5);
        let moved = |c: &SeparatrixCurve| SeparatrixCurve {
            saddle: j.apply(c.saddle),
            points: c.points.iter().map(|p| j.apply(*p)).collect(),
            end: j.apply(c.end),
            ..c.clone()
        };
        let m = j.entries();
        for (b1, b2) in &pairs {
            let t = homotopy_type(b1, b2).unwrap();
            let want = normalize_type([m[0] * t[0] + m[1] * t[1], m[2] * t[0] + m[3] * t[1]]);
            let got = homotopy_type(&moved(b1), &moved(b2)).map_err(|e| e.to_string())?;
            ensure!(got == want, "{j}: type {got:?}, want {want:?}");
        }
    }

    // Slices whose report carries warnings (an unresolved pair) are not
    // trusted as censuses and are counted separately.
    let (mut checked, mut skipped) = (0, 0);
    let cfg = LabConfig::default();
    for id in ["h1", "h2", "gamma1", "gamma2", "h01"] {
        let scan = census_scan(&model_arc(id).unwrap(), &uniform_grid(256), &cfg);
        for row in &scan.rows {
            if !row.census.all_hyperbolic() {
                continue;
            }
            if row.warnings > 0 {
                skipped += 1;
                continue;
            }
            ensure!(row.census.euler() == 0, "{id} at t = {}: {:?}", row.t, row.census);
            checked += 1;
        }
    }

    let p = smooth_product(&model_arc("gamma1").unwrap(), &model_arc("gamma2").unwrap()).map_err(|e| e.to_string())?;
    for i in 0..=20 {
        let t = i as f64 / 120.0;
        let q = [rng.gen::<f64>(), rng.gen::<f64>()];
        ensure!(p.slice(t).lift(q) == p.slice(0.0).lift(q), "left plateau at {t}");
        ensure!(p.slice(1.0 - t).lift(q) == p.slice(1.0).lift(q), "right plateau at {}", 1.0 - t);
    }
    let took = within(Duration::from_secs(600), start)?;
    Ok(format!("{checked} slices with zero Euler sum, {skipped} unresolved, {took}"))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("model-map census", criterion_1),
        ("first saddle-node golden event", criterion_2),
        ("second event", criterion_3),
        ("invariant-matrix round trip", criterion_4),
        ("planner correctness", criterion_5),
        ("realized arc endpoints", criterion_6),
        ("invariant suites", criterion_7),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(note) => println!("criterion {} ({name}): PASS ({note})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

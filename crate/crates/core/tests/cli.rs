use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polar-arc"))
        .args(args)
        .env("POLAR_ARC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn fixed_points_of_f0() {
    let out = run(&["fixed-points", "f0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let c = &v["census"];
    assert_eq!((c["sinks"].as_u64(), c["sources"].as_u64(), c["saddles"].as_u64()), (Some(1), Some(1), Some(2)));

    let out = run(&["fixed-points", "f0", "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["x", "z", "kind", "ev1_re", "ev1_im", "ev2_re", "ev2_im", "residual"]);
    let mut kinds: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
    kinds.sort();
    assert_eq!(kinds, ["saddle", "saddle", "sink", "source"]);
}

#[test]
fn conjugate_fixed_points_move_with_the_matrix() {
    // f_J = J f0 J^-1, so fixed points of f0 are carried by J mod 1.
    let out = run(&["fixed-points", "fJ:1,0,1,1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let mut got: Vec<(String, [f64; 2])> = csv_rows(&out)[1..]
        .iter()
        .map(|r| (r[2].clone(), [r[0].parse().unwrap(), r[1].parse().unwrap()]))
        .collect();
    got.sort_by(|a, b| a.0.cmp(&b.0).then(a.1[0].total_cmp(&b.1[0])));
    let carry = |x: f64, z: f64| [x.rem_euclid(1.0), (x + z).rem_euclid(1.0)];
    let want = [
        ("saddle", carry(0.25, 0.75)),
        ("saddle", carry(0.75, 0.25)),
        ("sink", carry(0.25, 0.25)),
        ("source", carry(0.75, 0.75)),
    ];
    for ((kind, p), (wk, wp)) in got.iter().zip(want) {
        assert_eq!(kind, wk);
        for k in 0..2 {
            let d = (p[k] - wp[k]).rem_euclid(1.0);
            assert!(d.min(1.0 - d) < 1e-9, "{kind} {p:?} vs {wp:?}");
        }
    }
}

#[test]
fn non_unimodular_matrix_is_a_usage_error() {
    let out = run(&["fixed-points", "fJ:2,0,0,2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unimodular"));
    assert_eq!(run(&["plan", "1,0,1"]).status.code(), Some(2));
    assert_eq!(run(&["scan", "no-such-arc"]).status.code(), Some(2));
    assert_eq!(run(&["fixed-points", "f0", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn invariant_matrix_reports_raw_types() {
    for (spec, want) in [("f0", [1, 0, 0, 1]), ("fJ:2,1,1,1", [2, 1, 1, 1]), ("fJ:1,0,5,1", [1, 0, 5, 1])] {
        let out = run(&["invariant-matrix", spec]);
        assert_eq!(out.status.code(), Some(0), "{spec}");
        let v = json_of(&out);
        let m: Vec<i64> = v["matrix"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).collect();
        assert_eq!(m, want, "{spec}");
        assert!(v["raw"].is_array());
    }
}

#[test]
fn numerical_failure_exits_three_with_json() {
    // Past the birth the first arc has six fixed points.
    let out = run(&["invariant-matrix", "arc:gamma1@0.9"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json_of(&out);
    assert_eq!(v["error"], "NotInClassG");
    assert!(v["message"].as_str().unwrap().contains("census"));
}

#[test]
fn trace_csv_layout() {
    let out = run(&["trace", "f0", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# homotopy: 0,1"));
    assert_eq!(lines.next(), Some("t_step,x_lift,z_lift,x_mod1,z_mod1"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.len() > 10);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0].parse::<usize>().unwrap(), i);
        // 17 significant digits: one leading digit and 16 after the point.
        let mantissa = r[1].split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{}", r[1]);
        assert_eq!(r[1].parse::<f64>().unwrap(), 0.25);
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.25);
    }

    let out = run(&["trace", "f0", "--stability", "stable", "--format", "csv"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.starts_with("# homotopy: 1,0\n"));
    for l in text.lines().skip(2) {
        assert_eq!(l.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.75);
    }
}

#[test]
fn trace_types_are_carried_by_the_matrix() {
    // Saddle 0 of f_J1 is the image of (1/4, 3/4); J1 sends (0,1) to (0,1)
    // and (1,0) to (1,1).
    let header = |stab: &str| {
        let out = run(&["trace", "fJ:1,0,1,1", "--saddle", "0", "--stability", stab, "--format", "csv"]);
        assert_eq!(out.status.code(), Some(0));
        String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_owned()
    };
    assert_eq!(header("unstable"), "# homotopy: 0,1");
    assert_eq!(header("stable"), "# homotopy: 1,1");
}

#[test]
fn trace_out_of_range_and_nonconvergent() {
    assert_eq!(run(&["trace", "f0", "--saddle", "7"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "max_iter = 3\n").unwrap();
    let out = run(&["trace", "f0", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_of(&out)["error"], "NonConvergence");
}

#[test]
fn config_file_is_strict() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "grid_n_2d = 64\nmystery = 1\n").unwrap();
    let out = run(&["plan", "1,0,1,1", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    let neg = dir.path().join("neg.toml");
    std::fs::write(&neg, "tol_sn = -1e-6\n").unwrap();
    assert_eq!(run(&["fixed-points", "f0", "--config", neg.to_str().unwrap()]).status.code(), Some(2));

    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&["fixed-points", "f0", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["fixed-points", "f0", "--grid", "2"]).status.code(), Some(2));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "grid_n_2d = 64\nh_sep = 0.005\n").unwrap();
    let out = run(&["fixed-points", "f0", "--config", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn plan_output_and_out_flag() {
    let out = run(&["plan", "3,2,1,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["total_sn"], 10);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let out = run(&["plan", "3,2,1,1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    let v2: Value = serde_json::from_str(&written).unwrap();
    assert_eq!(v, v2);
    // Byte-identical on a rerun.
    let again = run(&["plan", "3,2,1,1"]);
    assert_eq!(again.stdout, written.as_bytes());
}

#[test]
fn scan_finds_the_first_birth() {
    let out = run(&["scan", "gamma1", "--t-grid", "64"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let events = v["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert!((events[0]["t"].as_f64().unwrap() - 0.75).abs() < 1e-8);
    assert_eq!(events[0]["generic"], true);

    let out = run(&["scan", "gamma1", "--t-grid", "8", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&out);
    assert!(rows[0].iter().any(|h| h == "t"));
}

#[test]
fn eval_reports_image_and_jacobian() {
    let out = run(&["eval", "f0", "--point", "0.25,-0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    // (1/4, -1/4) is the saddle (1/4, 3/4) shifted down by one.
    let lift: Vec<f64> = v["lift"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((lift[0] - 0.25).abs() < 1e-12 && (lift[1] + 0.25).abs() < 1e-12, "{lift:?}");
    assert_eq!(run(&["eval", "f0", "--point", "0.25"]).status.code(), Some(2));
}

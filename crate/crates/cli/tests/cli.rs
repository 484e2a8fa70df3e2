use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn eprb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprb"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = eprb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &["--events", "50000", "--tau", "0.01", "--emit-spacing", "30"];

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let mut args = vec!["simulate", "--format", "json", "--out", p(out)];
        args.extend(SMALL);
        ok(&args);
    }
    let (ra, rb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ra, rb);
    let v = json(&ra);
    assert_eq!(v["entries"].as_array().unwrap().len(), 4);
    assert_eq!(v["summary"]["seed"], 1);
    assert_eq!(v["summary"]["tau"], 0.01);
}

#[test]
fn thread_count_does_not_change_output() {
    let mut one = vec!["simulate", "--threads", "1"];
    one.extend(SMALL);
    let mut three = vec!["simulate", "--threads", "3"];
    three.extend(SMALL);
    assert_eq!(ok(&one), ok(&three));
}

#[test]
fn case1_curve_tracks_the_singlet() {
    let out = ok(&[
        "simulate", "--curve", "8", "--events", "200000", "--tau", "0.01", "--format", "json",
    ]);
    let v = json(&out);
    for e in v["entries"].as_array().unwrap() {
        let theta = e["beta"].as_f64().unwrap() - e["alpha"].as_f64().unwrap();
        let want = -(2.0 * theta).cos();
        assert!((e["e"].as_f64().unwrap() - want).abs() < 0.1, "{e}");
    }
    assert!(v["summary"]["s_max"].as_f64().unwrap() > 2.6);
}

#[test]
fn case2_curve_matches_the_malus_product() {
    let eta2 = format!("{}", PI / 6.0 + PI / 2.0);
    let out = ok(&[
        "simulate", "--case", "2", "--eta1", "pi/6", "--eta2", &eta2, "--curve", "8", "--events", "100000", "--tau",
        "0.01", "--format", "json",
    ]);
    let v = json(&out);
    for e in v["entries"].as_array().unwrap() {
        let theta = e["alpha"].as_f64().unwrap();
        let want = -0.5 * (4.0 * (PI / 6.0 - theta)).sin();
        assert!((e["e"].as_f64().unwrap() - want).abs() < 0.06, "{e}");
    }
}

#[test]
fn exported_logs_agree_under_all_procedures() {
    let dir = tempfile::tempdir().unwrap();
    let (l1, l2) = (dir.path().join("one.tt"), dir.path().join("two.tt"));
    let mut args = vec!["simulate", "--log1", p(&l1), "--log2", p(&l2)];
    args.extend(SMALL);
    let direct = ok(&args);
    let mut tallies = Vec::new();
    for proc_ in ["binned", "relative", "shifted"] {
        tallies.push(ok(&[
            "analyze",
            "--input1",
            p(&l1),
            "--input2",
            p(&l2),
            "--procedure",
            proc_,
            "--window",
            "0.01",
            "--bin-size",
            "0.01",
            "--shift-resolution",
            "0.25",
        ]));
    }
    assert_eq!(tallies[0], tallies[1]);
    assert_eq!(tallies[1], tallies[2]);
    // the direct report also carries Γ; the count columns must agree
    let counts = |b: &[u8]| -> Vec<String> {
        String::from_utf8(b.to_vec())
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(counts(&direct), counts(&tallies[0]));
    let header = String::from_utf8(tallies[0].clone()).unwrap();
    assert!(header.starts_with("alpha,beta,c_pp,c_pm,c_mp,c_mm,e1,e2,e,gamma\n"));
}

fn write_ttag(path: &Path, station: u8, ticks: &[(i64, u32, i32)]) {
    let mut s =
        format!("#TTAG/1\n#station={station}\n#tick_resolution=0.5\n#setting.1=0\n#setting.2=0.7853981633974483\n");
    for (i, (t, m, x)) in ticks.iter().enumerate() {
        let _ = writeln!(s, "{i},{t},{m},{x}");
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn shifted_procedure_recovers_a_built_in_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tt"), dir.path().join("b.tt"));
    // pairs every 40 ticks (20 units); station 2 reads 8 ticks (4 units) late
    let s1: Vec<(i64, u32, i32)> = (0..500)
        .map(|n| (40 * n, 1 + (n % 2) as u32, if n % 3 == 0 { 1 } else { -1 }))
        .collect();
    let s2: Vec<(i64, u32, i32)> = (0..500)
        .map(|n| (40 * n + 8, 1 + (n % 2) as u32, if n % 3 == 0 { -1 } else { 1 }))
        .collect();
    write_ttag(&a, 1, &s1);
    write_ttag(&b, 2, &s2);
    let common = [
        "analyze",
        "--input1",
        p(&a),
        "--input2",
        p(&b),
        "--window",
        "1",
        "--format",
        "json",
    ];
    let mut shifted = common.to_vec();
    shifted.extend(["--procedure", "shifted", "--shift-resolution", "0.5"]);
    let mut relative = common.to_vec();
    relative.extend(["--procedure", "relative"]);
    let (s, r) = (json(&ok(&shifted)), json(&ok(&relative)));
    assert_eq!(s["summary"]["delta"], 4.0);
    assert_eq!(s["summary"]["coincidence_frequency"], 1.0);
    assert_eq!(r["summary"]["coincidence_frequency"], 0.0);
    assert_eq!(s["summary"]["procedure"], "shifted");
}

#[test]
fn empty_second_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tt"), dir.path().join("b.tt"));
    write_ttag(&a, 1, &[(0, 1, 1), (5, 2, -1)]);
    write_ttag(&b, 2, &[]);
    let out = eprb(&[
        "analyze",
        "--input1",
        p(&a),
        "--input2",
        p(&b),
        "--procedure",
        "relative",
        "--window",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b.tt"));
}

#[test]
fn parse_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tt"), dir.path().join("bad.tt"));
    write_ttag(&a, 1, &[(0, 1, 1)]);
    std::fs::write(
        &b,
        "#TTAG/1\n#station=2\n#tick_resolution=1\n#setting.1=0\n0,3,1,1\n1,4,1,0\n",
    )
    .unwrap();
    let out = eprb(&[
        "analyze",
        "--input1",
        p(&a),
        "--input2",
        p(&b),
        "--procedure",
        "relative",
        "--window",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.tt") && err.contains("line 6"), "{err}");

    let missing = dir.path().join("missing.tt");
    let out = eprb(&[
        "analyze",
        "--input1",
        p(&a),
        "--input2",
        p(&missing),
        "--procedure",
        "relative",
        "--window",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_1() {
    for args in [
        vec!["simulate", "--events", "0"],
        vec!["simulate", "--tau", "0.01", "--window", "0.001"],
        vec!["simulate", "--case", "3"],
        vec!["simulate", "--case", "2"],
        vec!["simulate", "--angles1", "0", "--angles2", "0,1"],
        vec!["simulate", "--bogus"],
        vec!["sweep", "--sweep", "d", "--grid", "2,4", "--curve-points", "12"],
        vec!["nonsense"],
    ] {
        let out = eprb(&args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numerical_failures_exit_3() {
    let out = eprb(&["oracle", "--d", "-2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small run\nevents=20000\ntau=0.01\nseed=7\nformat=json\n").unwrap();
    let from_file = json(&ok(&["simulate", "--config", p(&cfg)]));
    assert_eq!(from_file["summary"]["seed"], 7);
    assert_eq!(from_file["summary"]["total_events_1"], 20000);
    let overridden = json(&ok(&["simulate", "--config", p(&cfg), "--seed", "8"]));
    assert_eq!(overridden["summary"]["seed"], 8);

    std::fs::write(&cfg, "events 10\n").unwrap();
    assert_eq!(eprb(&["simulate", "--config", p(&cfg)]).status.code(), Some(1));
    assert_eq!(
        eprb(&["simulate", "--config", p(&dir.path().join("none.cfg"))])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn exponent_sweep_orders_s_max() {
    let out = ok(&[
        "sweep",
        "--sweep",
        "d",
        "--grid",
        "0,4",
        "--events",
        "100000",
        "--tau",
        "0.01",
        "--curve-points",
        "8",
        "--format",
        "json",
    ]);
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let s0 = rows[0]["s_max"].as_f64().unwrap();
    let s4 = rows[1]["s_max"].as_f64().unwrap();
    assert!((s0 - 2f64.sqrt()).abs() < 0.1, "{s0}");
    assert!(s4 > 2.6, "{s4}");
    assert_eq!(rows[1]["gamma_samples"].as_array().unwrap().len(), 5);
}

#[test]
fn theta_sweep_csv() {
    let out = ok(&[
        "sweep",
        "--sweep",
        "theta",
        "--grid",
        "0,pi/8,pi/4",
        "--events",
        "20000",
        "--tau",
        "0.01",
    ]);
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("axis,value,s_max"));
    assert!(lines[1].starts_with("theta,0,"));
}

#[test]
fn oracle_table() {
    let text = String::from_utf8(ok(&["oracle", "--points", "4", "--window", "0.001"])).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[3], "-1");
    assert_eq!(first.last(), Some(&"true"));
    let v = json(&ok(&["oracle", "--grid", "pi/8", "--format", "json"]));
    let s = v[0]["s_singlet"].as_f64().unwrap();
    assert!((s - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!(v[0]["e_finite"].is_null());
}

#[test]
fn help_exits_zero() {
    let out = eprb(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

use std::path::PathBuf;
use std::process::Command;

use gibbsgate::cli::{run, EXIT_INPUT, EXIT_NOT_ADMISSIBLE, EXIT_OK};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn gate(args: &[&str]) -> (String, u8) {
    let mut out = Vec::new();
    let mut argv = vec!["gibbsgate"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out);
    (String::from_utf8(out).unwrap(), code)
}

#[test]
fn check_reports_single_atom() {
    let (out, code) = gate(&["check", &fixture("fixture_a.json")]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "admissible: true, atoms: 1\n");
}

#[test]
fn check_witness_and_strict() {
    let (out, code) = gate(&["check", &fixture("fixture_b.json"), "--witness"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("admissible: false, atoms: 2"));
    assert!(out.contains("witness: U = [x1], V = [y0]"));
    let (_, code) = gate(&["check", &fixture("fixture_b.json"), "--strict"]);
    assert_eq!(code, EXIT_NOT_ADMISSIBLE);
    let (_, code) = gate(&["check", &fixture("fixture_a.json"), "--strict", "--oracle"]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn check_json_and_atoms_alias() {
    let (out, _) = gate(&[
        "check",
        &fixture("fixture_b.json"),
        "--witness",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["admissible"], false);
    assert_eq!(v["witness"]["u"], serde_json::json!(["x1"]));
    assert_eq!(v["witness"]["v"], serde_json::json!(["y0"]));
    let (alias, _) = gate(&["atoms", &fixture("fixture_b.json")]);
    let (long, _) = gate(&["check", &fixture("fixture_b.json"), "--atoms"]);
    assert_eq!(alias, long);
    assert!(alias.contains("atom 1 (mass 0.5): (x1, y1)"));
}

#[test]
fn input_errors_exit_one() {
    assert_eq!(gate(&["check", &fixture("malformed.json")]).1, EXIT_INPUT);
    assert_eq!(gate(&["check", "/nonexistent/joint.json"]).1, EXIT_INPUT);
    assert_eq!(
        gate(&["kcheck", &fixture("cube_mismatch.json")]).1,
        EXIT_INPUT
    );
    assert_eq!(gate(&["frobnicate"]).1, EXIT_INPUT);
    let (_, code) = gate(&[
        "iterate",
        &fixture("triangle.json"),
        "--phi",
        &fixture("phi_corner.json"),
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn parse_errors_carry_position() {
    let out = Command::new(env!("CARGO_BIN_EXE_gibbsgate"))
        .args(["check", &fixture("malformed.json")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn iterate_trace() {
    let (out, code) = gate(&[
        "iterate",
        &fixture("fixture_a.json"),
        "--phi",
        &fixture("phi_corner.json"),
        "--steps",
        "4",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("phi_2 | X: [[0.5, 0.5], [0, 0]]"));
    assert!(out.contains("phi_4 | X: [[0.375, 0.375], [0.25, 0.25]]"));
    assert!(out.contains("kernel identity: max discrepancy 0"));

    let (out, _) = gate(&[
        "iterate",
        &fixture("fixture_a.json"),
        "--phi",
        &fixture("phi_const.json"),
        "--steps",
        "5",
    ]);
    let grids: Vec<&str> = out
        .lines()
        .filter(|l| l.starts_with("phi_"))
        .map(|l| l.split(": ").nth(1).unwrap())
        .collect();
    assert_eq!(grids.len(), 6);
    assert!(grids.iter().all(|g| *g == grids[0]));
}

#[test]
fn iterate_csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let (_, code) = gate(&[
        "iterate",
        &fixture("fixture_a.json"),
        "--phi",
        &fixture("phi_corner.json"),
        "--steps",
        "2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,given,x,y,value");
    assert_eq!(lines.len(), 1 + 3 * 4);
    assert!(lines.contains(&"2,X,x0,y1,0.5"));
}

#[test]
fn ergodic_reports() {
    let (out, code) = gate(&[
        "ergodic",
        &fixture("triangle.json"),
        "--doeblin",
        "--max-steps",
        "30",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("verdict: ergodic"));
    assert!(out.contains("epsilon = 0.3333333333333333"));
    assert!(out.contains("rate_bound = 0.6666666666666667"));
    let curve: Vec<f64> = out
        .lines()
        .skip_while(|l| *l != "n,sup_tv")
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(curve.len(), 31);
    for (n, v) in curve.iter().enumerate() {
        assert!(*v <= (2.0f64 / 3.0).powi(n as i32) + 1e-12);
    }

    let (out, _) = gate(&["ergodic", &fixture("fixture_b.json")]);
    assert!(out.contains("verdict: not ergodic: 2 atoms"));

    let (out, _) = gate(&[
        "ergodic",
        &fixture("product.json"),
        "--max-steps",
        "5",
        "--spectral",
    ]);
    let tail: Vec<f64> = out
        .lines()
        .skip_while(|l| *l != "n,sup_tv")
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(tail.iter().all(|v| *v < 1e-15));
    assert!(out.contains("spectral rate:"));
}

#[test]
fn simulate_reports() {
    let (out, code) = gate(&[
        "simulate",
        &fixture("fixture_b.json"),
        "--phi",
        &fixture("phi_corner.json"),
        "--start",
        "x0,y0",
        "--steps",
        "5000",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("chain 0: final mean 1, abs error 0.5"));
    assert!(out.contains("verdict: fail"));

    let args = [
        "simulate",
        &fixture("fixture_a.json"),
        "--phi",
        &fixture("phi_corner.json"),
        "--seed",
        "7",
        "--steps",
        "1000000",
    ];
    let (first, _) = gate(&args);
    let (second, _) = gate(&args);
    assert_eq!(first, second);
    assert!(first.contains("verdict: pass"));

    let (_, code) = gate(&[
        "simulate",
        &fixture("fixture_a.json"),
        "--phi",
        &fixture("phi_corner.json"),
        "--start",
        "x7,y0",
    ]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn simulate_csv_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for p in &paths {
        gate(&[
            "simulate",
            &fixture("fixture_a.json"),
            "--phi",
            &fixture("phi_corner.json"),
            "--steps",
            "3000",
            "--chains",
            "3",
            "--seed",
            "5",
            "--record-every",
            "10",
            "--csv",
            p.to_str().unwrap(),
        ]);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("n,m_0,m_1,m_2\n10,"));
    assert_eq!(text.lines().count(), 301);
}

#[test]
fn kcheck_reports() {
    let (out, code) = gate(&["kcheck", &fixture("cube_diagonal.json"), "--oracle"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("admissible: false, atoms: 2\n"));
    assert!(out.contains("oracle: agrees"));
    let (out, _) = gate(&["kcheck", &fixture("cube_staircase.json"), "--atoms"]);
    assert!(out.starts_with("admissible: true"));
    assert!(out.contains("atom 0: (0, 0, 0) (0, 0, 1) (0, 1, 1) (1, 1, 1)"));
    let (_, code) = gate(&["kcheck", &fixture("cube_diagonal.json"), "--strict"]);
    assert_eq!(code, EXIT_NOT_ADMISSIBLE);
}

#[test]
fn tip_reports() {
    let (out, code) = gate(&[
        "tip",
        &fixture("bands.json"),
        "--sets",
        &fixture("sets_bands.json"),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("chain valid, union TIP"));

    let (out, _) = gate(&[
        "tip",
        &fixture("fixture_b.json"),
        "--sets",
        &fixture("sets_diagonal.json"),
    ]);
    assert!(out.contains("step 1: no communication"));
    assert!(out.contains("no communication at step 1"));

    let (out, _) = gate(&[
        "tip",
        &fixture("fixture_b.json"),
        "--sets",
        &fixture("sets_single.json"),
    ]);
    assert_eq!(out, "set 1: TIP, components: 1\n");
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_gibbsgate"))
        .args(["check", &fixture("fixture_a.json")])
        .env("GIBBSGATE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_gibbsgate"))
        .args(["check", &fixture("fixture_a.json")])
        .env("GIBBSGATE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "admissible: true, atoms: 1\n"
    );
}

#[test]
fn joint_file_round_trip() {
    let text = std::fs::read_to_string(fixture("fixture_a.json")).unwrap();
    let spec: gibbsgate::JointSpec = serde_json::from_str(&text).unwrap();
    let j = spec.build().unwrap();
    let emitted = serde_json::to_string(&j.to_spec()).unwrap();
    let again: gibbsgate::JointSpec = serde_json::from_str(&emitted).unwrap();
    assert_eq!(again.build().unwrap(), j);
}

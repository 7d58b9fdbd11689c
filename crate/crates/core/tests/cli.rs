use std::path::Path;

use clusterdual::cli::{main_with, read_states, read_summary};
use clusterdual::layout::Layout;
use clusterdual::scenario::Scenario;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("clusterdual").chain(args.iter().copied());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_writes_summary_report_and_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("outA");
    let (code, stdout, stderr) = run(&[
        "run", "--scenario", "simA.json", "--seed", "42", "--out", p(&out), "--max-iters", "300", "--log-stride", "50",
        "--state",
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("x (oracle)   = [3.330000, 0.000000, 1.670000]"), "{stdout}");

    let header = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(header.lines().next(), Some("t,H,H_erg,Znorm,Znorm_erg,eps"));
    let rows = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0, 50, 100, 150, 200, 250, 300]);
    assert!(rows.iter().all(|r| r.eps.is_finite() && r.znorm >= 0.0));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 42);
    assert_eq!(report["qmax"], 10);
    assert_eq!(report["run"]["iterations"], 300);
    assert_eq!(report["run"]["certificate"]["certified"], true);
    assert!(report["run"]["certificate"]["c_max"].as_f64().unwrap() > 0.0);

    let sc = Scenario::bundled("simA").unwrap().unwrap();
    let problem = sc.problem().unwrap();
    let layout = Layout::new(&problem.network, problem.dim, problem.rows());
    let states = read_states(&out.join("state.csv"), &layout).unwrap();
    assert_eq!(states.len(), rows.len());
    assert_eq!(states[0].alpha, vec![0.0; layout.alpha_len]);
    assert_eq!(states.last().unwrap().omega.len(), layout.omega_len);
    let text = std::fs::read_to_string(out.join("state.csv")).unwrap();
    assert!(text.starts_with("t,mu_1_1_1,gamma_1_1_1,gamma_1_1_2,gamma_1_1_3,gamma_1_1_4,theta_1_1_1,mu_1_2_1"));
}

#[test]
fn certify_and_oracle_print() {
    let (code, stdout, _) = run(&["certify", "--scenario", "simA.json"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("c_max"));
    assert!(stdout.contains("certified                 = true"));

    let (code, stdout, _) = run(&["oracle", "--scenario", "simA.json"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("x*      = [3.330000, 0.000000, 1.670000]"), "{stdout}");

    let (code, stdout, _) = run(&["oracle", "--scenario", "simB", "--method", "pg"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("x*      = [1.716455, 1.711084, 1.572461]"), "{stdout}");
}

#[test]
fn exit_codes() {
    let (code, _, err) = run(&["run", "--scenario", "simA.json", "--bogus"]);
    assert_eq!(code, 1);
    assert!(err.contains("--bogus"));

    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 1);

    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("certify"));

    let (code, _, err) = run(&["certify", "--scenario", "/nonexistent/dir/x.json"]);
    assert_eq!(code, 1, "{err}");

    let (code, _, err) = run(&["oracle", "--scenario", "simA", "--method", "newton"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "));

    let (code, _, _) = run(&["run", "--scenario", "simA", "--delay-mode", "bursty", "--max-iters", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn schema_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(clusterdual::scenario::SIM_A).unwrap();
    v["coupling"].as_object_mut().unwrap().remove("b");
    let path = dir.path().join("broken.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let (code, _, err) = run(&["certify", "--scenario", p(&path)]);
    assert_eq!(code, 1);
    assert!(err.contains("coupling.b"), "{err}");
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(clusterdual::scenario::MICRO).unwrap();
    v["solver"]["step"] = serde_json::json!(1e6);
    v["dual_boxes"] = serde_json::json!({"rho_Y": 1e12, "rho_J": 1e12});
    v["clusters"][0]["agents"][0]["g"] = serde_json::json!({"kind": "zero"});
    v["coupling"]["sense"] = serde_json::json!("eq");
    let path = dir.path().join("wild.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = dir.path().join("o");

    let (code, _, err) = run(&["run", "--scenario", p(&path), "--out", p(&out)]);
    assert_eq!(code, 1, "uncertified steps are a validation error: {err}");
    assert!(err.contains("min-eig"));

    let (code, _, err) = run(&["run", "--scenario", p(&path), "--out", p(&out), "--allow-uncertified"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("diverged") || err.contains("iteration"), "{err}");
}

#[test]
fn diagnose_merges_into_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let (code, _, err) = run(&["run", "--scenario", "micro", "--out", p(&out), "--state"]);
    assert_eq!(code, 0, "{err}");
    let (code, stdout, err) = run(&["diagnose", "--scenario", "micro", "--out", p(&out)]);
    assert_eq!(code, 0, "{err}");
    let flags: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    for key in ["gap_ratio", "gap_slope", "z_ratio", "lemma2", "theorem1", "strong_duality"] {
        assert_eq!(flags[key], true, "{key}: {stdout}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["run"].is_object());
    assert!(report["diagnostics"]["rates"]["gap_slope"].as_f64().unwrap() <= -0.8);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kqrk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kqrk")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kqrk(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen(dir: &Path, seed: &str) -> String {
    let p = dir.join("problem").to_string_lossy().into_owned();
    ok(&["gen", "--m", "100", "--n", "10", "--beta", "0.05", "--seed", seed, "--out", &p]);
    p
}

#[test]
fn version_names_the_build() {
    let out = ok(&["--version"]);
    let text = stdout(&out);
    assert!(text.starts_with("kqrk 0.1.0 ("), "{text}");
}

#[test]
fn gen_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "4");
    for f in ["matrix.kqrk", "x_star.csv", "b.csv", "xi.csv", "manifest.json", "run_manifest.json"] {
        assert!(Path::new(&p).join(f).exists(), "{f} missing");
    }
    ok(&["verify", "--problem", &p]);
    ok(&["verify", "--manifest", &p]);
}

#[test]
fn gen_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = gen(a.path(), "9");
    let pb = gen(b.path(), "9");
    for f in ["matrix.kqrk", "b.csv", "manifest.json"] {
        assert_eq!(fs::read(Path::new(&pa).join(f)).unwrap(), fs::read(Path::new(&pb).join(f)).unwrap());
    }
}

#[test]
fn tampered_bundle_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "1");
    let b = Path::new(&p).join("b.csv");
    let mut text = fs::read_to_string(&b).unwrap();
    text.push_str("0\n");
    fs::write(&b, text).unwrap();
    let out = kqrk(&["verify", "--problem", &p]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));
}

#[test]
fn solve_writes_trace_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "2");
    let trace = tmp.path().join("run/trace.csv");
    let t = trace.to_string_lossy();
    let out = ok(&["solve", "--problem", &p, "--method", "dqrk", "--iters", "500", "--diagnostics", "--trace", &t]);
    let text = stdout(&out);
    assert!(text.contains("method dqrk"), "{text}");
    let csv = fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "k,sq_error,residual_norm,chosen_index,Q0,Q");
    assert_eq!(lines.count(), 501);
    ok(&["verify", "--manifest", &tmp.path().join("run/run_manifest.json").to_string_lossy()]);
}

#[test]
fn infeasible_level_is_snapped_with_a_note() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "3");
    let t = tmp.path().join("trace.csv");
    let out = ok(&["solve", "--problem", &p, "--q", "0.812", "--iters", "10", "--trace", &t.to_string_lossy()]);
    let err = stderr(&out);
    assert!(err.contains("nearest feasible q = 0.8100 (81/100)"), "{err}");
    let manifest = fs::read_to_string(tmp.path().join("run_manifest.json")).unwrap();
    assert!(manifest.contains("81/100"), "{manifest}");
}

#[test]
fn bad_input_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "5");
    let t = tmp.path().join("trace.csv");
    let out = kqrk(&["solve", "--problem", &p, "--q", "1.5", "--trace", &t.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
    let out = kqrk(&["solve", "--problem", &p, "--method", "sgd", "--trace", &t.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
    let out = kqrk(&["gen", "--m", "3", "--n", "5", "--out", &tmp.path().join("x").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_problem_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = kqrk(&["verify", "--problem", &missing.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_report_with_sampled_sigma() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "6");
    let r = tmp.path().join("bounds/report.json");
    ok(&["bounds", "--problem", &p, "--q", "0.8", "--sigma-mode", "sampled:200", "--out", &r.to_string_lossy()]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&r).unwrap()).unwrap();
    assert_eq!(json["method"], "qrk");
    assert_eq!(json["sigma_mode"], "sampled");
    // A sampled subset value can never certify a condition.
    assert_ne!(json["rate_original"]["condition"]["satisfied"], "holds");
}

#[test]
fn exact_bounds_on_large_problem_suggest_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let p = gen(tmp.path(), "7");
    let r = tmp.path().join("report.json");
    let out = kqrk(&["bounds", "--problem", &p, "--out", &r.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--sigma-mode sampled"), "{}", stderr(&out));
}

#[test]
fn experiment_round_trips_through_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("fig3");
    let o = out_dir.to_string_lossy();
    let args = [
        "experiment", "fig3", "--m", "100", "--n", "10", "--iters", "500", "--trials", "2", "--scales", "1,10", "--out", &o,
    ];
    let out = ok(&args);
    assert!(stdout(&out).contains("spearman"), "{}", stdout(&out));
    for f in ["data.csv", "plot.svg", "manifest.json", "run_manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let data = fs::read_to_string(out_dir.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 1 + 2 * 2 * 2);
    ok(&["verify", "--manifest", &o]);

    let svg = out_dir.join("plot.svg");
    fs::write(&svg, "<svg/>").unwrap();
    assert_eq!(kqrk(&["verify", "--manifest", &o]).status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    let out_dir = tmp.path().join("fig1");
    fs::write(
        &cfg,
        format!(
            "# small fig1\nm = 60\nn = 5\niters = 200\nmethods = rk,qrk\nout = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();
    ok(&["experiment", "fig1", "--config", &cfg.to_string_lossy(), "--iters", "300"]);
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(result["spec"]["m"], 60);
    assert_eq!(result["spec"]["iterations"], 300);
    let curves = fs::read_to_string(out_dir.join("curves_gaussian.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "k,rk,qrk");
    assert_eq!(curves.lines().count(), 302);
}

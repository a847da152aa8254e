use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn cogmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogmesh"))
        .args(args)
        .env_remove("COGMESH_LOG")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn single_error_line(out: &Output, kind: &str) {
    let err = text(&out.stderr);
    assert!(err.starts_with(&format!("error[{kind}]: ")), "{err}");
    if kind != "usage" {
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}

#[test]
fn validate_accepts_good_config_silently() {
    let cfg = data("single_channel.json");
    let out = cogmesh(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(out.stderr.is_empty());
}

#[test]
fn validate_reports_every_violation_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text_cfg = std::fs::read_to_string(data("single_channel.json"))
        .unwrap()
        .replace("\"coop_prob\":0.5", "\"coop_prob\":7")
        .replace("\"duration\":3600", "\"duration\":-1");
    std::fs::write(&bad, text_cfg).unwrap();
    let out = cogmesh(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    single_error_line(&out, "validation");
    let err = text(&out.stderr);
    assert!(
        err.contains("coop_prob") && err.contains("duration"),
        "{err}"
    );
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let cfg = std::fs::read_to_string(data("single_channel.json"))
        .unwrap()
        .replacen('{', "{\"extra\": true,", 1);
    std::fs::write(&bad, cfg).unwrap();
    let out = cogmesh(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    single_error_line(&out, "validation");
}

#[test]
fn analyze_prints_nine_digit_report() {
    let cfg = data("single_channel.json");
    let out = cogmesh(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        text(&out.stdout),
        "blocking=0.666666667\nnoncompletion=0.500000000\n"
    );
}

#[test]
fn analyze_without_model_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("nomodel.json");
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data("single_channel.json")).unwrap())
            .unwrap();
    cfg.as_object_mut().unwrap().remove("markov");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = cogmesh(&["analyze", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    single_error_line(&out, "validation");
}

#[test]
fn run_writes_outputs_and_repeats_exactly() {
    let cfg = data("single_channel.json");
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let kb = dir.path().join(format!("{name}.kb.json"));
        let out = cogmesh(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "11",
            "--duration",
            "1800",
            "--out",
            out_dir.to_str().unwrap(),
            "--dump-kb",
            kb.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        assert!(out.stdout.is_empty());
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("metrics.json")).unwrap())
                .unwrap();
        assert_eq!(metrics["duration"], 1800.0);
        let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(std::fs::read_to_string(&kb)
            .unwrap()
            .contains("cogmesh-kb/1"));
        traces.push(std::fs::read(out_dir.join("trace.jsonl")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn run_resumes_from_saved_knowledge() {
    let cfg = data("single_channel.json");
    let dir = tempfile::tempdir().unwrap();
    let kb = dir.path().join("kb.json");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let c = cfg.to_str().unwrap();
    let out = cogmesh(&[
        "run",
        "--config",
        c,
        "--out",
        first.to_str().unwrap(),
        "--dump-kb",
        kb.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = cogmesh(&[
        "run",
        "--config",
        c,
        "--out",
        second.to_str().unwrap(),
        "--load-kb",
        kb.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));

    std::fs::write(&kb, "{}").unwrap();
    let out = cogmesh(&[
        "run",
        "--config",
        c,
        "--out",
        second.to_str().unwrap(),
        "--load-kb",
        kb.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    single_error_line(&out, "validation");
}

#[test]
fn l2sim_writes_discovery_map() {
    let topo = data("mesh.json");
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("map.json");
    let out = cogmesh(&[
        "l2sim",
        "--topology",
        topo.to_str().unwrap(),
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let map: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dest).unwrap()).unwrap();
    assert_eq!(map["collisions"], 0);
    assert_eq!(map["discovered"]["2"]["0"], serde_json::json!([1]));
}

#[test]
fn compare_learning_emits_json() {
    let cfg = data("single_channel.json");
    let out = cogmesh(&[
        "compare-learning",
        "--config",
        cfg.to_str().unwrap(),
        "--seeds",
        "1,2,3",
        "--duration",
        "900",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([1, 2, 3]));
}

#[test]
fn missing_file_is_a_runtime_error() {
    let out = cogmesh(&["validate", "--config", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    single_error_line(&out, "runtime");
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        &["frobnicate"][..],
        &["run", "--config", "x", "--out", "y", "--bogus"],
        &["analyze"],
        &[],
    ] {
        let out = cogmesh(args);
        assert_eq!(out.status.code(), Some(64), "{args:?}");
        assert!(out.stdout.is_empty());
        single_error_line(&out, "usage");
        assert!(text(&out.stderr).contains("Usage:"));
    }
}

#[test]
fn log_output_stays_on_stderr() {
    let cfg = data("single_channel.json");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cogmesh"))
        .args(["analyze", "--config", cfg.to_str().unwrap()])
        .env("COGMESH_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(
        text(&out.stdout),
        "blocking=0.666666667\nnoncompletion=0.500000000\n"
    );
    let run_dir = dir.path().join("r");
    let out = Command::new(env!("CARGO_BIN_EXE_cogmesh"))
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ])
        .env("COGMESH_LOG", "info")
        .output()
        .unwrap();
    assert!(out.stdout.is_empty());
    assert!(text(&out.stderr).contains("wrote"));
}

#[test]
fn help_matches_snapshots() {
    let snapshots = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let cases: [(&[&str], &str); 6] = [
        (&[], "help.txt"),
        (&["run"], "help-run.txt"),
        (&["analyze"], "help-analyze.txt"),
        (&["l2sim"], "help-l2sim.txt"),
        (&["compare-learning"], "help-compare-learning.txt"),
        (&["validate"], "help-validate.txt"),
    ];
    for (sub, file) in cases {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = cogmesh(&args);
        assert_eq!(out.status.code(), Some(0));
        let expected = std::fs::read_to_string(snapshots.join(file)).unwrap();
        assert_eq!(text(&out.stdout), expected, "{file}");
    }
}

#[test]
fn help_documents_every_flag() {
    let flags: [(&str, &[&str]); 5] = [
        (
            "run",
            &[
                "--config",
                "--seed",
                "--duration",
                "--out",
                "--load-kb",
                "--dump-kb",
            ],
        ),
        ("analyze", &["--config", "--monte-carlo", "--seed"]),
        ("l2sim", &["--topology", "--out"]),
        (
            "compare-learning",
            &["--config", "--seeds", "--duration", "--sequential", "--out"],
        ),
        ("validate", &["--config"]),
    ];
    for (sub, names) in flags {
        let help = text(&cogmesh(&[sub, "--help"]).stdout);
        for f in names {
            let line = help
                .lines()
                .find(|l| l.trim_start().starts_with(f))
                .unwrap_or_else(|| panic!("{sub} {f}"));
            assert!(
                line.split_whitespace().count() > 2,
                "{sub} {f} lacks a description"
            );
        }
    }
}

#[test]
fn library_entry_point_matches_binary() {
    let cfg = data("single_channel.json");
    assert_eq!(
        cogmesh::cli::run(["cogmesh", "validate", "--config", cfg.to_str().unwrap()]),
        0
    );
    assert_eq!(cogmesh::cli::run(["cogmesh", "nope"]), 64);
}

#[test]
fn bundled_scenarios_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["two_owners.json", "markov_single_channel.json"] {
        let p = dir.join(name);
        let out = cogmesh(&["validate", "--config", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", text(&out.stderr));
    }
    let mesh = dir.join("mesh.json");
    let out = cogmesh(&["l2sim", "--topology", mesh.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

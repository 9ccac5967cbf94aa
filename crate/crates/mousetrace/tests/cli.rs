//! Binary-level tests: drive the `mousetrace` executable through the whole
//! subcommand surface and check exit codes, stdout contracts, and artifacts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mousetrace"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = run_in(
        root,
        &[
            "synth", "--seed", "5", "--out", "data", "--users", "4", "--sessions", "2",
            "--duration", "45",
        ],
    );
    assert_ok(&out, "synth");
    assert!(root.join("data/manifest.json").exists());
    assert!(root.join("data/run_manifest.json").exists());

    let out = run_in(root, &["ingest", "--manifest", "data/manifest.json"]);
    assert_ok(&out, "ingest");
    let stats = stdout_json(&out);
    assert_eq!(stats["users"], 4);
    assert_eq!(stats["sessions"], 8);
    assert_eq!(stats["malformed_lines"], 0);

    let out = run_in(
        root,
        &[
            "preprocess", "--seed", "5", "--manifest", "data/manifest.json", "--out", "store",
        ],
    );
    assert_ok(&out, "preprocess");
    assert!(root.join("store/manifest.json").exists());
    assert!(root.join("store/samples.bin").exists());
    let summary = stdout_json(&out);
    assert!(summary["stats"]["samples"].as_u64().unwrap() > 0);
    let hash = summary["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64, "config hash is a sha-256 hex digest");

    let out = run_in(
        root,
        &[
            "pairs", "--seed", "5", "--store", "store", "--out", "work/instances.jsonl",
            "--protocol", "identity_kfold", "--k", "2",
        ],
    );
    assert_ok(&out, "pairs");
    assert!(root.join("work/instances.jsonl").exists());
    assert!(root.join("work/instances.splits.json").exists());
    let first_line = fs::read_to_string(root.join("work/instances.jsonl")).unwrap();
    let inst: serde_json::Value = serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
    assert_eq!(inst["label"], "same", "instances interleave starting positive");

    let out = run_in(
        root,
        &[
            "train", "--seed", "5", "--store", "store", "--instances", "work/instances.jsonl",
            "--out", "work/model.bin", "--set", "model.epochs=2",
            "--set", "model.learning_rate=1e-4",
        ],
    );
    assert_ok(&out, "train");
    assert!(root.join("work/model.bin").exists());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("trained 2 epochs"), "stdout: {text}");

    let out = run_in(
        root,
        &[
            "select-bases", "--seed", "5", "--store", "store", "--model", "work/model.bin",
            "--out", "work/bases.json",
        ],
    );
    assert_ok(&out, "select-bases");
    let bases: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("work/bases.json")).unwrap()).unwrap();
    assert_eq!(bases.as_object().unwrap().len(), 4, "one ranking per user");

    // Genuine-looking query: the user's own second session. The barely
    // trained model may accept or reject; the contract is the exit code
    // pairing (0 accept / 2 reject) and a verdict on stdout.
    let out = run_in(
        root,
        &[
            "authenticate", "--seed", "5", "--store", "store", "--model", "work/model.bin",
            "--bases", "work/bases.json", "--user", "user00", "--query",
            "data/users/user00/session_01.csv",
        ],
    );
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "authenticate exit code {code}");
    let verdict = stdout_json(&out);
    assert_eq!(verdict["accepted"], (code == 0));
    assert!(verdict["score"].as_f64().unwrap() > 0.0);

    // A query too short to produce any sample: insufficient data, exit 3.
    fs::write(
        root.join("tiny.csv"),
        "t,x,y,button,action\n0.0,10,10,none,move\n0.01,11,11,none,move\n",
    )
    .unwrap();
    let out = run_in(
        root,
        &[
            "authenticate", "--seed", "5", "--store", "store", "--model", "work/model.bin",
            "--bases", "work/bases.json", "--user", "user00", "--query", "tiny.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));

    let out = run_in(
        root,
        &[
            "detect", "--seed", "5", "--model", "work/model.bin", "--a",
            "data/users/user00/session_00.csv", "--b", "data/users/user00/session_01.csv",
        ],
    );
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 2, "detect exit code {code}");
    let verdict = stdout_json(&out);
    assert_eq!(verdict["accepted"], (code == 0));

    let out = run_in(
        root,
        &[
            "detect", "--seed", "5", "--model", "work/model.bin", "--a", "tiny.csv", "--b",
            "data/users/user01/session_00.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "too little data to decide");

    let out = run_in(
        root,
        &[
            "experiment", "--seed", "5", "--store", "store", "--out", "reports", "--protocol",
            "identity_kfold", "--k", "2", "--set", "model.epochs=2",
            "--set", "model.learning_rate=1e-4",
        ],
    );
    assert_ok(&out, "experiment");
    for name in ["splits.json", "report_fold0.json", "report_mean.json", "run_manifest.json"] {
        assert!(root.join("reports").join(name).exists(), "missing {name}");
    }
    // Every artifact embeds the same config hash as the run manifest.
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("reports/run_manifest.json")).unwrap())
            .unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("reports/report_mean.json")).unwrap())
            .unwrap();
    assert_eq!(run["config_hash"], report["config_hash"]);

    let out = run_in(
        root,
        &[
            "report", "--report", "reports/report_mean.json", "--csv", "mean.csv", "--svg",
            "mean.svg",
        ],
    );
    assert_ok(&out, "report");
    assert!(String::from_utf8_lossy(&out.stdout).contains("auc"));
    assert!(root.join("mean.csv").exists());
    assert!(root.join("mean.svg").exists());
}

#[test]
fn usage_errors_exit_with_code_1_and_explain() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = run_in(root, &["synth", "--seed", "1", "--out", "d", "--users", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: usage:"), "stderr: {err}");

    let out = run_in(
        root,
        &["pairs", "--seed", "1", "--store", "nowhere", "--protocol", "sideways"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown protocol"));

    let out = run_in(root, &["detect", "--a", "x.csv", "--b", "y.csv", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn clap_rejects_missing_required_arguments() {
    let dir = tempfile::tempdir().unwrap();
    // `experiment` builds on randomness everywhere: the seed is mandatory.
    let out = run_in(dir.path(), &["experiment", "--store", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn set_overrides_flow_into_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_ok(
        &run_in(
            root,
            &["synth", "--seed", "2", "--out", "data", "--users", "2", "--duration", "30"],
        ),
        "synth",
    );
    assert_ok(
        &run_in(
            root,
            &[
                "preprocess", "--seed", "2", "--manifest", "data/manifest.json", "--out", "store",
                "--set", "preprocess.max_rows=128",
            ],
        ),
        "preprocess",
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("store/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["max_rows"], 128);
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("store/run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(run["config"]["preprocess"]["max_rows"], 128);
    assert_eq!(run["command"], "preprocess");
    assert!(run["inputs"]["dataset"].is_string());
}

#[test]
fn config_file_drives_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("run.toml"),
        "seed = 9\n[preprocess]\nmax_rows = 64\n",
    )
    .unwrap();
    assert_ok(
        &run_in(
            root,
            &["synth", "--config", "run.toml", "--out", "data", "--users", "2", "--duration", "30"],
        ),
        "synth",
    );
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("data/run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(run["root_seed"], 9);
    assert_eq!(run["config"]["preprocess"]["max_rows"], 64);

    // --seed beats the file.
    assert_ok(
        &run_in(
            root,
            &[
                "synth", "--config", "run.toml", "--seed", "10", "--out", "data2", "--users", "2",
                "--duration", "30",
            ],
        ),
        "synth with override",
    );
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("data2/run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(run["root_seed"], 10);
}

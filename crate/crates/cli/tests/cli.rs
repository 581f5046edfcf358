use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use steermine_cli::RowSpec;

fn steermine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steermine")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = steermine(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a small dataset and mines it; returns (dataset, tactics).
fn mined(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data.json");
    let tactics = dir.join("tactics.json");
    ok(&["gen", "--sequences", "60", "--length", "8", "--tactics", "4", "--values", "5", "--seed", "2", "--out", s(&data)]);
    ok(&["mine", "--dataset", s(&data), "--seed", "2", "--max-iterations", "40", "--out", s(&tactics)]);
    (data, tactics)
}

#[test]
fn score_reproduces_the_mined_score() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tactics) = mined(dir.path());
    let file = json(&tactics);
    assert!(!file["tactics"].as_array().unwrap().is_empty());

    let report = dir.path().join("score.json");
    ok(&["score", "--dataset", s(&data), "--tactics", s(&tactics), "--out", s(&report)]);
    let report = json(&report);
    assert_eq!(report["score"], file["score"]);
    assert_eq!(report["description_length"], file["description_length"]);
    assert_eq!(report["tactics"].as_array().unwrap().len(), file["tactics"].as_array().unwrap().len());

    let stdout = ok(&["score", "--dataset", s(&data), "--tactics", s(&tactics), "--beta", "2"]);
    let weighted: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(weighted["params"]["beta"], 2.0);
    assert_ne!(weighted["description_length"], file["description_length"]);
}

#[test]
fn gen_writes_ground_truth_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, truth) = (dir.path().join("a.json"), dir.path().join("b.json"), dir.path().join("t.json"));
    let args = |out: &Path| {
        vec!["gen", "--sequences", "30", "--length", "6", "--tactics", "2", "--seed", "5", "--out"]
            .into_iter()
            .map(String::from)
            .chain([s(out).to_string()])
            .collect::<Vec<_>>()
    };
    let a_args = args(&a);
    let mut with_truth: Vec<&str> = a_args.iter().map(String::as_str).collect();
    with_truth.extend(["--truth", s(&truth)]);
    ok(&with_truth);
    ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(json(&truth)["tactics"].as_array().unwrap().len(), 2);
}

#[test]
fn suggest_runs_a_constraint_script() {
    let dir = tempfile::tempdir().unwrap();
    let (data, tactics) = mined(dir.path());
    let first = json(&tactics)["tactics"][0]["id"].as_u64().unwrap();
    let script = dir.path().join("script.jsonl");
    fs::write(
        &script,
        format!(
            "# steering script\n{{\"type\":\"DeleteTactic\",\"tactics\":[{first}]}}\n\n{{\"type\":\"LengthRange\",\"min\":2}}\n"
        ),
    )
    .unwrap();
    let (out, report) = (dir.path().join("out.json"), dir.path().join("log.json"));
    let run = |out: &Path| {
        ok(&[
            "suggest", "--dataset", s(&data), "--tactics", s(&tactics), "--constraints", s(&script), "--seed", "1",
            "--max-iterations", "40", "--out", s(out), "--report", s(&report),
        ])
    };
    run(&out);
    let log = json(&report);
    assert_eq!(log.as_array().unwrap().len(), 2);
    assert_eq!(log[0]["line"], 2);
    assert_eq!(log[0]["removed"], serde_json::json!([first]));
    assert_eq!(log[1]["line"], 4);
    let adjusted = json(&out);
    assert_eq!(adjusted["params"]["length_range"]["min"], 2);
    assert_eq!(adjusted["score"], log[1]["new_score"]);

    let again = dir.path().join("again.json");
    run(&again);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());

    fs::write(&script, "{\"type\":\"DeleteTactic\"}\n").unwrap();
    let bad = steermine(&["suggest", "--dataset", s(&data), "--tactics", s(&tactics), "--constraints", s(&script), "--out", s(&out)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains(":1: bad constraint"));
}

#[test]
fn masked_bench_report_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let run = |path: &Path| {
        ok(&[
            "bench", "--row", "40/8/3/3/5", "--row", "20/6/2/0/4", "--seed", "0", "--seed", "1", "--no-warmup",
            "--mask-timings", "--report", s(path),
        ])
    };
    let table = run(&a);
    run(&b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("# "));
    for col in ["|S|", "|s_i|", "k", "|T|", "|V|", "t_i(s)", "avg.t_g(s)", "avg.t_l(s)"] {
        assert!(lines[1].split_whitespace().any(|h| h == col), "missing {col}");
    }
    assert_eq!(lines.len(), 6);
    assert!(lines[4].ends_with("n/a"));
    let report = json(&a);
    assert_eq!(report["rows"][0]["t_initial"], 0.0);
    assert!(report["rows"][2]["recovery"].is_null());
}

#[test]
fn bench_reads_a_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "seeds = [3]\nwarmup = false\n[miner]\nmax_iterations = 20\n[[rows]]\nn_sequences = 30\nsequence_length = 6\nn_features = 3\nn_tactics = 2\nvalues_per_feature = 4\n",
    )
    .unwrap();
    let report = dir.path().join("r.json");
    ok(&["bench", "--config", s(&cfg), "--report", s(&report)]);
    let r = json(&report);
    assert_eq!(r["rows"][0]["seed"], 3);
    assert_eq!(r["rows"][0]["n_sequences"], 30);

    let clash = steermine(&["bench", "--config", s(&cfg), "--seed", "1"]);
    assert!(!clash.status.success());
    fs::write(&cfg, "seeds = []\n[[rows]]\nn_sequences = 30\nsequence_length = 6\nn_features = 3\nn_tactics = 2\nvalues_per_feature = 4\n").unwrap();
    assert!(!steermine(&["bench", "--config", s(&cfg)]).status.success());
}

#[test]
fn row_specs_parse() {
    assert_eq!("500/10/3/25/10".parse::<RowSpec>(), Ok(RowSpec([500, 10, 3, 25, 10])));
    assert!("500/10/3".parse::<RowSpec>().is_err());
    assert!("a/b/c/d/e".parse::<RowSpec>().is_err());
}

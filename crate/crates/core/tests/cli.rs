use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ldpfo");

const SMALL: &str = r#"
mechanisms = ["GRR"]
eps = [1.0]
n = [2000]
k = [5]
distributions = ["uniform"]
runs = 20
base_seed = 7
"#;

fn ldpfo(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("LDPFO_OUTPUT_DIR")
        .env_remove("LDPFO_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

#[test]
fn run_writes_one_row_per_run_and_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = ldpfo(&[
        "run",
        "--config",
        &cfg,
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 40);
    assert!(text.lines().any(|l| l.starts_with("# design: ")));
    assert!(!out.join("results.partial.jsonl").exists());
}

#[test]
fn repeated_runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL
            .replace(r#"["GRR"]"#, r#"["GRR", "OLH", "L-OSUE"]"#)
            .replace("eps = [1.0]", "eps = [1.0]\neps_inf = [2.0]"),
    );
    let mut outputs = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dir.path().join(tag);
        let o = ldpfo(&[
            "run",
            "--config",
            &cfg,
            "--output-dir",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn json_format_and_recorded_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SMALL}record_estimates = true\n[output]\nformat = \"json\"\n"),
    );
    let out = dir.path().join("out");
    let o = ldpfo(&[
        "run",
        "--config",
        &cfg,
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 40);
    assert!(v["metadata"].is_object());
    let est: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("estimates.json")).unwrap()).unwrap();
    assert_eq!(est["estimates"].as_array().unwrap().len(), 40);
}

#[test]
fn summarize_writes_gains_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    assert!(ldpfo(&[
        "run",
        "--config",
        &cfg,
        "--output-dir",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let sum = dir.path().join("sum");
    for metric in ["mse", "mae"] {
        let o = ldpfo(&[
            "summarize",
            "--input",
            out.to_str().unwrap(),
            "--metric",
            metric,
            "--output",
            sum.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let gains = fs::read_to_string(sum.join("gains.csv")).unwrap();
    assert_eq!(gains.lines().count(), 2);
    assert!(sum.join("gains.json").exists());
    assert!(fs::read_dir(&sum).unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with("table_")));
}

#[test]
fn summarize_without_results_fails() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    for input in [empty.clone(), dir.path().join("missing")] {
        let o = ldpfo(&["summarize", "--input", input.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(3),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn summarize_requires_both_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("estimators = \"ibu\"\n{SMALL}"));
    let out = dir.path().join("out");
    assert!(ldpfo(&[
        "run",
        "--config",
        &cfg,
        "--output-dir",
        out.to_str().unwrap()
    ])
    .status
    .success());
    let o = ldpfo(&["summarize", "--input", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        SMALL.replace("GRR", "NOPE"),
        SMALL.replace("k = [5]", "k = [1]"),
        SMALL.replace("eps = [1.0]", "eps = [-1.0]"),
        format!("{SMALL}unknown_key = 1\n"),
        "not toml at all [".to_owned(),
    ] {
        let cfg = write_config(dir.path(), &body);
        let o = ldpfo(&[
            "run",
            "--config",
            &cfg,
            "--output-dir",
            dir.path().join("o").to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{body}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    let o = ldpfo(&[
        "run",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn list_mechanisms_names_all_fourteen() {
    let o = ldpfo(&["list-mechanisms"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ldpfo::MechanismId::all() {
        assert!(
            text.lines()
                .any(|l| l.split_whitespace().next() == Some(id.as_str())),
            "{id}"
        );
    }
    assert_eq!(text.lines().count(), 15);
}

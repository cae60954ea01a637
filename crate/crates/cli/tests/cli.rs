use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tradeoff-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TRADEOFF_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json"))).unwrap()).unwrap()
}

const SMALL_TRAIN: [&str; 6] = [
    "--set",
    "train.training.iterations=50",
    "--set",
    "train.eval_n=2000",
    "--set",
    "train.training.n=200",
];

#[test]
fn malformed_key_exits_one_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for args in [
        vec!["train", "--set", "train.no_such_key=1"],
        vec!["train", "--set", "no_such_block.n=1"],
        vec!["train", "--set", "train.eps"],
        vec!["frontier", "--set", "frontier.eps_grid=[]"],
        vec!["audit-cor3", "--set", "audit_cor3.norms=[\"half\"]"],
        vec!["train", "--threads", "0"],
        vec!["no-such-command"],
    ] {
        let o = lab(&args, &out);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{args:?} wrote output");
    }
}

#[test]
fn config_file_is_merged_and_unknown_keys_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "train": {"eps": 0.25, "eval_n": 2000, "training": {"iterations": 30, "n": 100}}}"#).unwrap();
    let out = tmp.path().join("a");
    let o = lab(&["train", "--config", cfg.to_str().unwrap(), "--set", "train.norm=inf"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "train");
    assert_eq!(r["seed"], 11);
    assert_eq!(r["config"]["train"]["eps"], 0.25);
    assert_eq!(r["config"]["train"]["norm"], "inf");
    assert_eq!(r["config"]["train"]["training"]["step_size"], 0.1);

    fs::write(&cfg, r#"{"train": {"epsilon": 0.25}}"#).unwrap();
    let bad = tmp.path().join("b");
    let o = lab(&["train", "--config", cfg.to_str().unwrap()], &bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(!bad.exists());

    fs::write(&cfg, "{not json").unwrap();
    assert_eq!(lab(&["train", "--config", cfg.to_str().unwrap()], &bad).status.code(), Some(1));
}

#[test]
fn tables_carry_schema_and_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let o = lab(&SMALL_TRAIN, &out);
    let mut args = vec!["train"];
    args.extend(SMALL_TRAIN);
    let o2 = lab(&args, &out);
    assert_eq!(o.status.code(), Some(1), "missing command is a usage error");
    assert_eq!(o2.status.code(), Some(0), "{}", String::from_utf8_lossy(&o2.stderr));

    let table = fs::read_to_string(out.join("train.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "schema_version");
    for col in ["config_hash", "eps", "seed", "train_n", "standard", "standard_se", "standard_n", "theta_hat"] {
        assert!(header.contains(&col), "missing {col}");
    }
    assert!(table.lines().skip(1).all(|l| l.starts_with("1,")));

    let long = fs::read_to_string(out.join("train_long.csv")).unwrap();
    assert_eq!(long.lines().next().unwrap(), "schema_version,config_hash,eps,metric,value,se");
    assert!(long.lines().any(|l| l.contains(",standard_risk,")));
}

#[test]
fn thread_count_does_not_change_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut args = vec!["train"];
    args.extend(SMALL_TRAIN);
    assert_eq!(lab(&[&args[..], &["--threads", "1"]].concat(), &a).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_tradeoff-lab"))
        .args(&args)
        .arg("--out")
        .arg(&b)
        .env("TRADEOFF_LAB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    for f in ["train.csv", "train_long.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_audit_exits_two_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = lab(
        &[
            "oracle",
            "--set",
            "oracle.worst_case_instances=5",
            "--set",
            "oracle.worst_case_probes=50",
            "--set",
            "oracle.core_points=5",
            "--set",
            "oracle.core_probes=50",
            "--set",
            "oracle.danskin_instances=50",
            "--set",
            "oracle.danskin_rel_tol=1e-13",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&out, "oracle")["exit_code"], 2);
    assert!(out.join("oracle.csv").exists());
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(lab(&["--version"], tmp.path()).status.code(), Some(0));
}

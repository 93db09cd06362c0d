//! Exit codes, config precedence and run records of the `dcf` binary.

use std::path::Path;
use std::process::{Command, Output};

fn dcf(out: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcf"));
    cmd.arg("--out").arg(out).args(["--threads", "1"]).args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn summary(out: &Path, command: &str) -> serde_json::Value {
    serde_json::from_str(&read(&out.join(format!("summary_{command}.json")))).unwrap()
}

#[test]
fn synth_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = dcf(out, &["--seed", "7", "synth", "--pairs", "30"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(out, "synth")["details"]["pairs"], 90);
    let o = dcf(out, &["analyze"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig1 = read(&out.join("fig1_speed_variability.csv"));
    assert!(fig1.starts_with("class,bin,n,mean,std,skewness,kurtosis\n"));
    assert_eq!(fig1.lines().count(), 1 + 3 * 4);
    let anova = read(&out.join("table1_anova.csv"));
    assert!(anova.lines().skip(1).any(|l| l.contains("speed") && !l.ends_with(",,,,")));
}

#[test]
fn missing_dependency_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dcf(dir.path(), &["distill"], &[]);
    assert_eq!(o.status.code(), Some(3));
    let s = summary(dir.path(), "distill");
    assert_eq!(s["status"], "error");
    assert!(s["message"].as_str().unwrap().contains("teacher.dcfn"));
    let o = dcf(dir.path(), &["ingest"], &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pairs.csv"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "synth.pairs = 3\nsynth.colour = red\n").unwrap();
    let o = dcf(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("synth.colour"));
    let o = dcf(dir.path(), &["synth"], &[("DCF_SYNTH__PAIRS", "many")]);
    assert_eq!(o.status.code(), Some(2));
    let o = dcf(dir.path(), &["--set", "gipps.tau=-1", "synth"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(dcf(out, &["synth", "--pairs", "4"], &[]).status.success());
    assert!(dcf(out, &["ingest"], &[]).status.success());
    let o = dcf(out, &["--set", "student.learning_rate=1e300", "train", "--model", "student"], &[]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(summary(out, "train")["exit_code"], 4);
}

#[test]
fn precedence_is_file_env_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("run.conf");
    std::fs::write(&cfg, "synth.pairs = 2\nsynth.duration = 5\nrun.seed = 1\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let env = [("DCF_SYNTH__PAIRS", "3"), ("DCF_RUN__SEED", "2")];
    assert!(dcf(out, &["--config", cfg, "--seed", "9", "synth"], &env).status.success());
    let manifest = read(&out.join("manifest_synth.txt"));
    assert!(manifest.contains("synth.pairs = 3\n"), "{manifest}");
    assert!(manifest.contains("synth.duration = 5\n"));
    assert!(manifest.contains("run.seed = 9\n"));
    assert!(manifest.contains("root = 9\n"));
    assert!(manifest.contains("input = pairs.csv\n"));
    assert!(dcf(out, &["--config", cfg, "synth", "--pairs", "1"], &env).status.success());
    assert_eq!(summary(out, "synth")["details"]["pairs"], 3);
}

#[test]
fn changed_input_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let small = ["--set", "synth.duration=5"];
    assert!(dcf(out, &[&small[..], &["synth", "--pairs", "4"]].concat(), &[]).status.success());
    let o = dcf(out, &["ingest"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dataset = read(&out.join("dataset.txt"));
    assert!(dataset.starts_with("input = pairs.csv\nsha256 = "));
    assert!(dcf(out, &[&small[..], &["--seed", "5", "synth", "--pairs", "4"]].concat(), &[]).status.success());
    let o = dcf(out, &["--set", "teacher.layers=4,2", "--set", "teacher.epochs=1", "train"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dcf(out, &["evaluate"], &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("changed since ingest"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sensorcast::evaluation::{PLOT_AGING, PLOT_K, PLOT_PTHR};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sensorcast"));
    for (k, _) in std::env::vars() {
        if k.starts_with("SENSORCAST_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn ok(mut cmd: Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let mut cmd = bin();
    cmd.args(["synth", "--steps", "1200", "--numeric", "--quiet-steps", "60", "--out"]).arg(&data);
    ok(cmd);
    data
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

const PARAMS: [&str; 8] = ["--m", "2", "--l", "2", "--detector", "cusum", "--snapshot-every", "400"];

#[test]
fn staged_invocation_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let run = tmp.path().join("run");
    let staged = tmp.path().join("staged");

    let mut cmd = bin();
    cmd.arg("run").args(PARAMS).arg("--input").arg(data.join("numeric.csv")).arg("--out").arg(&run);
    ok(cmd);

    let events = staged.join("events.csv");
    let mut cmd = bin();
    cmd.arg("detect").args(PARAMS).arg("--input").arg(data.join("numeric.csv")).arg("--out").arg(&events);
    ok(cmd);
    let mut cmd = bin();
    cmd.arg("correlate").args(PARAMS).arg("--events").arg(&events).arg("--out").arg(staged.join("forest.txt"));
    ok(cmd);
    let mut cmd = bin();
    cmd.arg("predict").args(PARAMS).arg("--events").arg(&events).arg("--out").arg(&staged);
    ok(cmd);
    let mut cmd = bin();
    cmd.args(["eval", "score"])
        .args(PARAMS)
        .arg("--events")
        .arg(&events)
        .arg("--rules")
        .arg(staged.join("rules.jsonl"))
        .arg("--out")
        .arg(staged.join("report.csv"));
    ok(cmd);

    let a = files(&run);
    assert!(a.iter().any(|(n, _)| n == "pool_00000399.jsonl"));
    assert_eq!(a, files(&staged));
}

#[test]
fn event_input_behaves_like_detected_numeric_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let numeric = tmp.path().join("numeric");
    let events = tmp.path().join("events");
    let mut cmd = bin();
    cmd.arg("run").arg("--input").arg(data.join("numeric.csv")).arg("--out").arg(&numeric);
    ok(cmd);
    let mut cmd = bin();
    cmd.args(["run", "--events", "--input"]).arg(numeric.join("events.csv")).arg("--out").arg(&events);
    ok(cmd);
    assert_eq!(files(&numeric), files(&events));
}

#[test]
fn silent_events_yield_only_empty_symbol_rules() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("zeros.csv");
    let mut text = String::from("t,A,B\n");
    for t in 0..100 {
        text.push_str(&format!("{t},0,0\n"));
    }
    fs::write(&input, text).unwrap();
    let out = tmp.path().join("out");
    let mut cmd = bin();
    cmd.args(["run", "--events", "--m", "2", "--input"]).arg(&input).arg("--out").arg(&out);
    ok(cmd);
    let rules = fs::read_to_string(out.join("rules.jsonl")).unwrap();
    assert!(!rules.is_empty());
    for line in rules.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["head"]["events"], serde_json::json!([]));
        assert!(v["body"].as_array().unwrap().iter().all(|c| c["events"] == serde_json::json!([])));
    }
}

#[test]
fn stage_errors_exit_nonzero_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "t,A,B\n0,1.0,2.0\n1,1.5,2.5\n2,oops,1.0\n").unwrap();
    let out = bin()
        .args(["run", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ingest failed at step 2"), "{err}");

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "mm = 3\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--input")
        .arg(&input)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `mm`"));
}

#[test]
fn flags_beat_env_beat_config() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("ev.csv");
    fs::write(&input, "t,A\n0,1\n1,0\n2,1\n3,0\n").unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "m = 3\nkmax = 1\n").unwrap();
    let header = |extra: &[&str], env: Option<&str>| {
        let out = tmp.path().join("forest.txt");
        let mut cmd = bin();
        cmd.args(["correlate", "--config"]).arg(&cfg).args(extra).arg("--events").arg(&input).arg("--out").arg(&out);
        if let Some(m) = env {
            cmd.env("SENSORCAST_M", m);
        }
        ok(cmd);
        fs::read_to_string(out).unwrap().lines().next().unwrap().to_string()
    };
    assert!(header(&[], None).contains(" m=3 "));
    assert!(header(&[], Some("2")).contains(" m=2 "));
    assert!(header(&["--m", "1"], Some("2")).contains(" m=1 "));
}

#[test]
fn sweep_and_plotdata() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let table = tmp.path().join("table.csv");
    let mut cmd = bin();
    cmd.args(["eval", "sweep", "--events", "--pthr-grid", "0.2,0.5,0.8", "--aging-grid", "none,exp:0.5", "--input"])
        .arg(data.join("events.csv"))
        .arg("--out")
        .arg(&table);
    ok(cmd);
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 7);
    let plots = tmp.path().join("plots");
    let mut cmd = bin();
    cmd.arg("plotdata").arg("--table").arg(&table).arg("--out").arg(&plots);
    ok(cmd);
    for name in [PLOT_PTHR, PLOT_K, PLOT_AGING] {
        assert!(plots.join(name).is_file(), "{name}");
    }
}

#[test]
fn default_run_detects_synthetic_events() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let mut cmd = bin();
    cmd.args(["synth", "--steps", "2000", "--numeric", "--out"]).arg(&data);
    ok(cmd);
    let out = tmp.path().join("run");
    let mut cmd = bin();
    cmd.arg("run").arg("--input").arg(data.join("numeric.csv")).arg("--out").arg(&out);
    ok(cmd);
    let flags = |p: PathBuf| -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().skip(1).map(|l| l.split_once(',').unwrap().1.to_string()).collect()
    };
    let truth = flags(data.join("events.csv"));
    let got = flags(out.join("events.csv"));
    let agree = truth.iter().zip(&got).filter(|(a, b)| a == b).count();
    assert!(agree as f64 >= 0.95 * truth.len() as f64, "{agree}/{}", truth.len());
}

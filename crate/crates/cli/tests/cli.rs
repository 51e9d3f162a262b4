// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = "\
devices = 12
rounds = 6
cohort = 4
unlearn_rate = 0.25
cadence = 2
kappa_paillier = 128
kappa_group = 64
scale_bits = 16

[workload]
kind = \"frozen\"
dim = 4
amplitude = 0.5
";

fn verfu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verfu")).args(args).env_remove("VERFU_SEED").output().expect("spawn verfu")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), CONFIG).unwrap();
    dir
}

fn sub(dir: &TempDir, name: &str) -> String {
    let p = dir.path().join(name);
    fs::create_dir_all(&p).unwrap();
    p.to_str().unwrap().to_string()
}

fn cfg(dir: &TempDir) -> String {
    dir.path().join("c.toml").to_str().unwrap().to_string()
}

fn run(dir: &TempDir, out: &str, extra: &[&str]) -> Output {
    let c = cfg(dir);
    let o = sub(dir, out);
    let mut args = vec!["run", "--config", &c, "--seed", "7", "--out", &o];
    args.extend_from_slice(extra);
    verfu(&args)
}

#[test]
fn keygen_is_deterministic_and_withholds_the_trapdoor() {
    let dir = workspace();
    let (a, b) = (sub(&dir, "a"), sub(&dir, "b"));
    let c = cfg(&dir);
    assert_eq!(code(&verfu(&["keygen", "--config", &c, "--seed", "1", "--out", &a])), 0);
    assert_eq!(code(&verfu(&["keygen", "--config", &c, "--seed", "1", "--out", &b, "--emit-trapdoor"])), 0);
    for f in ["paillier_pk.json", "paillier_sk.json", "lhh_params.json", "com_params.json"] {
        assert_eq!(fs::read(Path::new(&a).join(f)).unwrap(), fs::read(Path::new(&b).join(f)).unwrap(), "{f}");
    }
    assert!(!Path::new(&a).join("trapdoor.json").exists());
    assert!(Path::new(&b).join("trapdoor.json").exists());
}

#[test]
fn keygen_into_missing_directory_fails() {
    let dir = workspace();
    let missing = dir.path().join("absent");
    let o = verfu(&["keygen", "--config", &cfg(&dir), "--out", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn honest_run_writes_artifacts_and_reruns_identically() {
    let dir = workspace();
    let o = run(&dir, "one", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["transcript.jsonl", "metrics.csv", "summary.csv", "utility.csv"] {
        assert!(dir.path().join("one").join(f).exists(), "{f}");
    }
    assert_eq!(code(&run(&dir, "two", &[])), 0);
    let t1 = fs::read(dir.path().join("one/transcript.jsonl")).unwrap();
    let t2 = fs::read(dir.path().join("two/transcript.jsonl")).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(
        fs::read(dir.path().join("one/utility.csv")).unwrap(),
        fs::read(dir.path().join("two/utility.csv")).unwrap()
    );
    // summary has six rows after the header
    let summary = fs::read_to_string(dir.path().join("one/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
}

#[test]
fn env_seed_is_used_and_flag_overrides_it() {
    let dir = workspace();
    let c = cfg(&dir);
    let run_with = |out: &str, env: Option<&str>, flag: Option<&str>| {
        let o = sub(&dir, out);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_verfu"));
        cmd.args(["run", "--config", &c, "--out", &o]).env_remove("VERFU_SEED");
        if let Some(s) = env {
            cmd.env("VERFU_SEED", s);
        }
        if let Some(s) = flag {
            cmd.args(["--seed", s]);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        fs::read(Path::new(&o).join("transcript.jsonl")).unwrap()
    };
    let env7 = run_with("e7", Some("7"), None);
    let flag7 = run_with("f7", None, Some("7"));
    let env9 = run_with("e9", Some("9"), None);
    let both = run_with("b", Some("9"), Some("7"));
    assert_eq!(env7, flag7);
    assert_ne!(env7, env9);
    assert_eq!(both, flag7);
}

#[test]
fn skipped_unlearning_exits_one_with_a_summary() {
    let dir = workspace();
    let o = run(&dir, "skip", &["--behavior", "skip_unlearn"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("verification failed"), "{}", stderr(&o));
    let o = run(&dir, "strict", &["--behavior", "skip_unlearn", "--strict"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("round 2"), "{}", stderr(&o));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = workspace();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "cohort = 4\ndevices = 12\nunlearn_rate = 3.0\n").unwrap();
    let out = sub(&dir, "o");
    let o = verfu(&["run", "--config", bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unlearn_rate"), "{}", stderr(&o));
    let o = run(&dir, "o", &["--behavior", "sideways"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("behavior"), "{}", stderr(&o));
}

#[test]
fn keys_must_match_the_configuration() {
    let dir = workspace();
    let keys = sub(&dir, "k");
    let c = cfg(&dir);
    assert_eq!(code(&verfu(&["keygen", "--config", &c, "--out", &keys])), 0);
    let other = dir.path().join("wide.toml");
    fs::write(&other, CONFIG.replace("dim = 4", "dim = 5")).unwrap();
    let out = sub(&dir, "o");
    let o = verfu(&["run", "--config", other.to_str().unwrap(), "--out", &out, "--keys", &keys]);
    assert_eq!(code(&o), 2);
    let o = verfu(&["run", "--config", &c, "--out", &out, "--keys", &keys, "--behavior", "equivocate:consistent"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trapdoor"), "{}", stderr(&o));
}

#[test]
fn run_with_stored_keys_matches_derived_keys() {
    let dir = workspace();
    let keys = sub(&dir, "k");
    let c = cfg(&dir);
    assert_eq!(code(&verfu(&["keygen", "--config", &c, "--seed", "7", "--out", &keys, "--emit-trapdoor"])), 0);
    assert_eq!(code(&run(&dir, "stored", &["--keys", &keys])), 0);
    assert_eq!(code(&run(&dir, "derived", &[])), 0);
    assert_eq!(
        fs::read(dir.path().join("stored/transcript.jsonl")).unwrap(),
        fs::read(dir.path().join("derived/transcript.jsonl")).unwrap()
    );
}

fn audit(dir: &TempDir, transcript: &Path) -> Output {
    verfu(&["audit", "--config", &cfg(dir), "--seed", "7", "--transcript", transcript.to_str().unwrap()])
}

#[test]
fn audit_passes_honest_transcripts_and_flags_skips() {
    let dir = workspace();
    assert_eq!(code(&run(&dir, "h", &[])), 0);
    let o = audit(&dir, &dir.path().join("h/transcript.jsonl"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(code(&run(&dir, "s", &["--behavior", "skip_unlearn"])), 1);
    let o = audit(&dir, &dir.path().join("s/transcript.jsonl"));
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("round 2: FAIL"), "{stdout}");
    assert!(!stdout.contains("recorded verdicts differ"), "{stdout}");
}

#[test]
fn flipped_payload_byte_is_localized() {
    let dir = workspace();
    assert_eq!(code(&run(&dir, "h", &[])), 0);
    let path = dir.path().join("h/transcript.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let i = lines.iter().position(|r| r["round"] == 4 && r["type"] == "aggregate").expect("round 4 aggregate");
    let hex = lines[i]["payload_hex"].as_str().unwrap().to_string();
    let mut bytes: Vec<char> = hex.chars().collect();
    let k = bytes.len() / 2;
    bytes[k] = if bytes[k] == '0' { '1' } else { '0' };
    lines[i]["payload_hex"] = serde_json::Value::String(bytes.into_iter().collect());
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, lines.iter().map(|v| v.to_string() + "\n").collect::<String>()).unwrap();

    let report = dir.path().join("report.json");
    let o = verfu(&[
        "audit",
        "--config",
        &cfg(&dir),
        "--seed",
        "7",
        "--transcript",
        tampered.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("mismatched rounds: [4]"), "{stdout}");
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(rep["rounds"].as_array().unwrap().len(), 6);
}

#[test]
fn malformed_transcript_is_a_usage_error() {
    let dir = workspace();
    let p = dir.path().join("junk.jsonl");
    fs::write(&p, "{not json\n").unwrap();
    assert_eq!(code(&audit(&dir, &p)), 2);
}

#[test]
fn bench_emits_one_summary_per_cell() {
    let dir = workspace();
    let out = sub(&dir, "b");
    let c = cfg(&dir);
    let o = verfu(&[
        "bench", "--config", &c, "--seed", "7", "--out", &out, "--rates", "0,0.25", "--dims", "2,4,8", "--kappas", "128",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rdr = csv_rows(&Path::new(&out).join("bench.csv"));
    assert_eq!(rdr.len(), 2 * 3 * 6);
    // verification bytes per device do not depend on the dimension
    rdr.retain(|r| r["role"] == "device" && r["phase"] == "verification" && r["unlearn_rate"] == "0.25");
    assert_eq!(rdr.len(), 3);
    assert!(rdr.iter().all(|r| r["total_bytes"] == rdr[0]["total_bytes"] && r["total_bytes"] != "0"));
}

#[test]
fn single_cell_bench_matches_run_summary() {
    let dir = workspace();
    fs::write(dir.path().join("c.toml"), CONFIG.replace("kappa_group = 64", "kappa_group = 128")).unwrap();
    assert_eq!(code(&run(&dir, "r", &[])), 0);
    let out = sub(&dir, "b");
    let c = cfg(&dir);
    let o = verfu(&["bench", "--config", &c, "--seed", "7", "--out", &out, "--rates", "0.25", "--dims", "4", "--kappas", "128"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bench = csv_rows(&Path::new(&out).join("bench.csv"));
    let summary = csv_rows(&dir.path().join("r/summary.csv"));
    assert_eq!(bench.len(), summary.len());
    for (b, s) in bench.iter().zip(&summary) {
        for k in ["role", "phase", "total_bytes", "unlearn_rate"] {
            assert_eq!(b[k], s[k], "{k}");
        }
    }
}

fn csv_rows(p: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines.map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(str::to_string)).collect()).collect()
}

use std::path::Path;
use std::process::{Command, Output};

fn flexid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexid")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: &str = r#"{
  "name": "tiny",
  "arch": {"d_model": 8, "heads": 1, "blocks": 1, "ffn_mult": 2, "time_features": 4},
  "train": {"steps": 10, "batch_size": 8, "eval_samples": 8},
  "sampler": {"steps": 5},
  "seeds": [0, 1, 2]
}"#;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(flexid(&["--help"]).status.code(), Some(0));
    assert_eq!(flexid(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(flexid(&[]).status.code(), Some(1));
    assert_eq!(flexid(&["schedule", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        flexid(&["generate", "--ckpt", "x", "--prompt", "p", "--trace", "t", "--ref", "nobody"]).status.code(),
        Some(1)
    );
}

#[test]
fn schedule_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = flexid(&["schedule", "--prompt", "A person LAUGHING out loud", "--steps", "25", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert!(text.lines().nth(1).unwrap().starts_with("0,1,1,1.5,0.5,"));
}

#[test]
fn bad_dictionary_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("d.txt");
    std::fs::write(&dict, "expression: smile*\nmood: happy\n").unwrap();
    let o = flexid(&["dict-check", "--dict", p(&dict), "smiling"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("d.txt:2:"));
    let missing = dir.path().join("none.txt");
    assert_eq!(flexid(&["dict-check", "--dict", p(&missing)]).status.code(), Some(2));
}

#[test]
fn dict_check_reports_intent() {
    let o = flexid(&["dict-check", "a man running", "a calm portrait"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[1].starts_with("1\ta man running\trun*"));
    assert!(lines[2].starts_with("0\ta calm portrait"));
}

#[test]
fn missing_checkpoint_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = flexid(&[
        "generate",
        "--ckpt",
        p(&dir.path().join("no.json")),
        "--prompt",
        "x",
        "--trace",
        p(&dir.path().join("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"nmae": "typo"}"#).unwrap();
    let o = flexid(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("k.json"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nmae"));
}

#[test]
fn train_generate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, TINY).unwrap();
    let ckpt = dir.path().join("k.json");
    assert!(flexid(&["train", "--config", p(&cfg), "--out", p(&ckpt)]).status.success());

    let trace = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec![
            "generate",
            "--ckpt",
            p(&ckpt),
            "--prompt",
            "a person laughing",
            "--ref",
            "novel:4",
            "--seed",
            "7",
            "--steps",
            "5",
            "--trace",
            p(&path),
        ];
        args.extend_from_slice(extra);
        let o = flexid(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&path).unwrap()
    };
    let a = trace("a.csv", &[]);
    assert_eq!(a, trace("b.csv", &[]));
    assert_ne!(a, trace("c.csv", &["--no-sip", "--no-cag"]));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);

    let out = dir.path().join("r.csv");
    let summary = dir.path().join("s.csv");
    let o = flexid(&["eval", "--ckpt", p(&ckpt), "--config", p(&cfg), "--out", p(&out), "--summary", p(&summary)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);
    assert!(std::fs::read_to_string(&summary).unwrap().lines().nth(1).unwrap().starts_with("0,tiny,3,0,"));

    let other = dir.path().join("other.json");
    std::fs::write(&other, TINY.replace("\"steps\": 10", "\"steps\": 11")).unwrap();
    assert_eq!(flexid(&["eval", "--ckpt", p(&ckpt), "--config", p(&other), "--out", p(&out)]).status.code(), Some(1));
}

#[test]
fn sweep_records_failures_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.json");
    let bad = TINY
        .replace("\"tiny\"", "\"bad\"")
        .replace("\"steps\": 10,", "\"steps\": 10, \"lr\": 1e300,")
        .replace("[0, 1, 2]", "[0, 1]");
    std::fs::write(&grid, format!("[{TINY}, {bad}]")).unwrap();
    let out = dir.path().join("r.csv");
    let cache = dir.path().join("cache");
    let o = flexid(&["sweep", "--grid", p(&grid), "--out", p(&out), "--cache-dir", p(&cache)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[4].starts_with("1,bad,") && rows[4].contains(",,,divergence,"), "{}", rows[4]);
    assert!(std::fs::read_dir(&cache).unwrap().count() == 1);
    let again = dir.path().join("r2.csv");
    assert!(flexid(&["sweep", "--grid", p(&grid), "--out", p(&again), "--cache-dir", p(&cache)]).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

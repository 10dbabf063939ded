use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const MINIMAL: &str = r#"
[network]
links = 2
area_side = 200.0

[run]
blocks = 50
seeds = 1

[[scheduler]]
kind = "no_scheduling"
"#;

const TWO_SCHEDULERS: &str = r#"
[network]
links = 3
area_side = 200.0

[run]
blocks = 40
seeds = 2

[[scheduler]]
kind = "no_scheduling"

[[scheduler]]
kind = "banditlinq"
clustering = "random"
max_cluster_size = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_d2dsched"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn d2dsched")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn checksums(m: &Value) -> Vec<(String, String)> {
    m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn minimal_run_writes_one_row_per_block() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(out.join("traces/no_scheduling/seed-1.csv")).unwrap();
    let rows = trace.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 50);
    for f in ["summary.csv", "aggregate.csv", "config.toml", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{MINIMAL}\n[channel]\nbogus_key = 1\n"));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_override_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--set", "network.nonsense=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonsense"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_one() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["run", "--config", s(&tmp.path().join("absent.toml")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());
}

#[test]
fn bad_arguments_exit_one() {
    let o = run(&["run", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());
}

#[test]
fn seed_flag_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["seeds"], serde_json::json!([7]));
    assert!(m["config"].as_str().unwrap().contains("seed = 7"));
    assert!(out.join("traces/no_scheduling/seed-7.csv").is_file());
}

#[test]
fn existing_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("keep.txt").is_file());
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out), "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.join("keep.txt").exists());
}

#[test]
fn failed_run_leaves_no_partial_output() {
    let tmp = TempDir::new().unwrap();
    // both labels map to the same trace directory; caught while writing
    let cfg = write_config(
        tmp.path(),
        "[network]\nlinks = 2\n[run]\nblocks = 5\n[[scheduler]]\nkind = \"random\"\nlabel = \"a/b\"\n[[scheduler]]\nkind = \"random\"\nlabel = \"a_b\"\n",
    );
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn rerun_from_manifest_reproduces_checksums() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TWO_SCHEDULERS);
    let first = tmp.path().join("first");
    let o = run(&["run", "--config", s(&cfg), "--out", s(&first), "--set", "run.seed=11", "--workers", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m1 = manifest(&first);
    let snapshot = tmp.path().join("snapshot.toml");
    fs::write(&snapshot, m1["config"].as_str().unwrap()).unwrap();
    let second = tmp.path().join("second");
    let o = run(&["run", "--config", s(&snapshot), "--out", s(&second), "--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traces = |m: &Value| -> Vec<(String, String)> {
        checksums(m).into_iter().filter(|(p, _)| p.ends_with(".csv")).collect()
    };
    let (a, b) = (traces(&m1), traces(&manifest(&second)));
    assert!(a.len() >= 6);
    assert_eq!(a, b);
}

#[test]
fn sweep_writes_one_group_per_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&out), "--sweep", "network.links=2,3,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for k in [2, 3, 4] {
        assert!(out.join(format!("network.links={k}/traces/no_scheduling/seed-1.csv")).is_file());
    }
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let mut lines = agg.lines().filter(|l| !l.starts_with('#'));
    assert!(lines.next().unwrap().starts_with("network.links,scheduler"));
    let groups: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(groups, ["2", "3", "4"]);
    let m = manifest(&out);
    assert_eq!(m["sweep"]["key"], "network.links");
    assert_eq!(m["sweep"]["values"].as_array().unwrap().len(), 3);
}

#[test]
fn non_sweepable_key_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), MINIMAL);
    let out = tmp.path().join("out");
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&out), "--sweep", "run.workers=1,2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.workers"));
    assert!(!out.exists());
}

#[test]
fn fast_validation_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("val");
    let o = run(&["validate", "--level", "fast", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS"));
    assert!(out.join("validation.csv").is_file());
}

#[test]
fn tampered_quadrature_fails_validation() {
    let o = run(&["validate", "--level", "fast", "--tamper-quadrature"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unknown_validation_level_exits_one() {
    let o = run(&["validate", "--level", "thorough"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_is_idempotent_and_labels_schedulers() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TWO_SCHEDULERS);
    let out = tmp.path().join("out");
    let o = run(&["sweep", "--config", s(&cfg), "--out", s(&out), "--sweep", "network.links=2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = tmp.path().join("export");
    let o = run(&["export", "--input", s(&out), "--out", s(&e), "--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(e.join("long.csv")).unwrap();
    let svg = fs::read(e.join("ravg.svg")).unwrap();
    let o = run(&["export", "--input", s(&out), "--out", s(&e), "--svg", "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read(e.join("long.csv")).unwrap());
    assert_eq!(svg, fs::read(e.join("ravg.svg")).unwrap());

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# long-schema: 1"));
    assert_eq!(lines.next(), Some("group,scheduler,seed,x_name,x,metric,value"));
    let body: Vec<&str> = lines.collect();
    assert!(body.iter().any(|l| l.contains(",banditlinq,") && l.contains(",r_avg,")));
    assert!(body.iter().any(|l| l.contains(",no_scheduling,") && l.contains(",t,")));
    assert!(String::from_utf8(svg).unwrap().contains("banditlinq"));
}

#[test]
fn export_of_empty_directory_fails_cleanly() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("empty");
    fs::create_dir(&input).unwrap();
    let e = tmp.path().join("export");
    let o = run(&["export", "--input", s(&input), "--out", s(&e)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("no traces"));
    assert!(!e.exists());
}

#[test]
fn shipped_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = TempDir::new().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let out = tmp.path().join(path.file_stem().unwrap());
        let o = run(&[
            "run", "--config", s(&path), "--out", s(&out), "--set", "run.blocks=30", "--set", "run.seeds=1",
        ]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
        seen += 1;
    }
    assert!(seen >= 4);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use autoct_core::pipeline::{run, RunConfig, RunOptions};
use autoct_core::testing::{PlantedScenario, ScenarioFiles};

fn autoct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoct"))
        .args(args)
        .env("AUTOCT_LOG", "error")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Scenario {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    files: ScenarioFiles,
    index: PathBuf,
}

fn scenario() -> Scenario {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let files = ScenarioFiles::write(&root.join("data"), 30, 5).unwrap();
    let index = root.join("index");
    let o = autoct(&["ingest", "--corpus", s(&files.corpus), "--out", s(&index)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    Scenario {
        _tmp: tmp,
        root,
        files,
        index,
    }
}

impl Scenario {
    /// A small config with 20 trials per split.
    fn config_text(&self, out: &str) -> String {
        self.files
            .config_toml(&self.index, &self.root.join(out), 1, "record")
            .replace("train = 100", "train = 20")
            .replace("valid = 100", "valid = 20")
            .replace("test = 100", "test = 20")
    }

    fn write_config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.root.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    /// A finished run recorded against the synthetic backend.
    fn finished_run(&self) -> PathBuf {
        let cfg = RunConfig::parse(&self.config_text("run"), &self.root).unwrap();
        let backend = Arc::new(PlantedScenario::new(&self.files.trials));
        let options = RunOptions {
            upstream: Some(backend),
            ..Default::default()
        };
        run(&cfg, None, options).unwrap().run_dir
    }
}

#[test]
fn ingest_of_missing_corpus_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("index");
    let o = autoct(&[
        "ingest",
        "--corpus",
        s(&tmp.path().join("none.jsonl")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two_without_a_run_dir() {
    let sc = scenario();
    let bad_key = sc.config_text("run").replace("[search]\n", "[search]\nrolouts = 3\n");
    let o = autoct(&["run", "--config", s(&sc.write_config("bad.toml", &bad_key))]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let no_index = sc.config_text("run").replace(s(&sc.index), s(&sc.root.join("missing")));
    let o = autoct(&["run", "--config", s(&sc.write_config("noindex.toml", &no_index))]);
    assert_eq!(o.status.code(), Some(2));

    let o = autoct(&["run", "--config", s(&sc.root.join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!sc.root.join("run").exists());
}

#[test]
fn report_is_stable_and_explains_trials() {
    let sc = scenario();
    let dir = sc.finished_run();
    let first = autoct(&["report", "--run", s(&dir)]);
    let second = autoct(&["report", "--run", s(&dir)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("LLM requests"), "{text}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report/report.json")).unwrap()).unwrap();
    let id = report["shap"][0]["nct_id"].as_str().unwrap().to_string();
    let svg = dir.join(format!("report/shap/{id}.svg"));
    std::fs::remove_file(&svg).unwrap();
    let o = autoct(&["report", "--run", s(&dir), "--trial", &id]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(&id) && text.contains("odds of success"), "{text}");
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let o = autoct(&["report", "--run", s(&dir), "--trial", "NCT99999999"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cache_verify_flags_tampered_entries() {
    let sc = scenario();
    let dir = sc.finished_run();
    let o = autoct(&["cache", "verify", s(&dir)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(" 0 corrupt"));

    let cache = dir.join("llm-cache");
    let shard = std::fs::read_dir(&cache).unwrap().next().unwrap().unwrap().path();
    let entry = std::fs::read_dir(&shard).unwrap().next().unwrap().unwrap().path();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&entry).unwrap()).unwrap();
    v["request"]["system"] = serde_json::Value::String("tampered".into());
    std::fs::write(&entry, v.to_string()).unwrap();
    let o = autoct(&["cache", "verify", s(&cache)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("corrupt: "));
}

#[test]
fn newer_run_format_is_rejected() {
    let sc = scenario();
    let dir = sc.finished_run();
    std::fs::write(
        dir.join("manifest.json"),
        r#"{"format_version": 99, "created_unix": 0}"#,
    )
    .unwrap();
    let o = autoct(&["report", "--run", s(&dir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("newer"));
}

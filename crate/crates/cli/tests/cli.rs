use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eegauth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|path| (path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()))
        .collect();
    files.sort();
    files
}

fn data_rows(csv: &Path) -> usize {
    std::fs::read_to_string(csv).unwrap().lines().count() - 1
}

#[test]
fn synth_defaults_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["synth-cohort", "--seed", "42", "--out", p(&a)]);
    ok(&["synth-cohort", "--seed", "42", "--out", p(&b)]);
    let ta = tree(&a);
    assert_eq!(ta.len(), 15 * 2 + 1);
    assert_eq!(ta, tree(&b));

    // Full-size extraction: 15 subjects x 500 segments.
    let f = t.path().join("f.csv");
    ok(&["extract-features", "--in", p(&a), "--out", p(&f)]);
    assert_eq!(data_rows(&f), 7500);
    let f1 = t.path().join("f1.csv");
    ok(&["extract-features", "--in", p(&a), "--segments", "1", "--out", p(&f1)]);
    assert_eq!(data_rows(&f1), 15);
}

#[test]
fn one_subject_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&["synth-cohort", "--subjects", "1", "--out", p(t.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--subjects"));
}

#[test]
fn zero_separability_manifest_has_identical_signatures() {
    let t = tempfile::tempdir().unwrap();
    ok(&["synth-cohort", "--subjects", "3", "--duration", "8", "--separability", "0", "--out", p(t.path())]);
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(t.path().join("cohort_manifest.json")).unwrap()).unwrap();
    let subjects = m["subjects"].as_array().unwrap();
    assert_eq!(subjects.len(), 3);
    assert!(subjects.iter().all(|s| s["targets"] == subjects[0]["targets"]));
}

#[test]
fn missing_sidecar_names_the_path() {
    let t = tempfile::tempdir().unwrap();
    let rec = t.path().join("rec");
    ok(&["synth-cohort", "--subjects", "2", "--duration", "8", "--out", p(&rec)]);
    std::fs::remove_file(rec.join("SS02.json")).unwrap();
    let out = run(&["extract-features", "--in", p(&rec), "--out", p(&t.path().join("f.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SS02.json"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["evaluate-cohort"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn small_features(dir: &Path) -> (PathBuf, PathBuf) {
    let rec = dir.join("rec");
    ok(&["synth-cohort", "--subjects", "4", "--duration", "20", "--seed", "7", "--out", p(&rec)]);
    let f = dir.join("f.csv");
    ok(&["extract-features", "--in", p(&rec), "--segments", "100", "--seed", "1", "--out", p(&f)]);
    let fresh = dir.join("fresh.csv");
    ok(&["extract-features", "--in", p(&rec), "--segments", "60", "--seed", "2", "--out", p(&fresh)]);
    (f, fresh)
}

#[test]
fn serial_evaluation_is_reproducible_and_config_file_applies() {
    let t = tempfile::tempdir().unwrap();
    let (f, _) = small_features(t.path());
    let cfg = t.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"budget": 60, "folds": 10, "max_evals": 2, "seed": 4}"#).unwrap();
    let (a, b) = (t.path().join("ra"), t.path().join("rb"));
    for out in [&a, &b] {
        ok(&["--serial", "evaluate-cohort", "--config", p(&cfg), "--folds", "5", "--features", p(&f), "--out", p(out)]);
    }
    for file in ["cohort_report.csv", "stats.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("run.json")).unwrap()).unwrap();
    assert!(summary["outcomes"].as_array().unwrap().iter().all(|o| o["evaluations"] == 2));
    let report = std::fs::read_to_string(a.join("cohort_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4 + 2);

    std::fs::write(&cfg, r#"{"no_such_flag": 1}"#).unwrap();
    let out = run(&["evaluate-cohort", "--config", p(&cfg), "--features", p(&f), "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-flag"));
}

#[test]
fn exhausted_budget_exits_distinctly() {
    let t = tempfile::tempdir().unwrap();
    let (f, _) = small_features(t.path());
    let out = run(&["evaluate-cohort", "--budget", "0.000001", "--features", p(&f), "--out", p(&t.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
    let csv = std::fs::read_to_string(t.path().join("r/cohort_report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",failed")));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server(store: &Path, import: &Path) -> (Server, String) {
    let mut child = bin()
        .args(["serve", "--port", "0", "--class-size", "100", "--budget", "5", "--import", p(import)])
        .env("EEGAUTH_STORE", store)
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let server = Server(child);
    let url = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some(u) = line.strip_prefix("listening on ") {
            break u.to_string();
        }
    };
    (server, url)
}

#[test]
fn enroll_then_authenticate_by_exit_code() {
    let t = tempfile::tempdir().unwrap();
    let (f, fresh) = small_features(t.path());
    let text = std::fs::read_to_string(&f).unwrap();
    let others: String = text.lines().filter(|l| !l.starts_with("SS04,")).map(|l| format!("{l}\n")).collect();
    let others_path = t.path().join("others.csv");
    std::fs::write(&others_path, others).unwrap();

    let store = t.path().join("store");
    let (_server, url) = start_server(&store, &others_path);
    let model = t.path().join("m.json");
    let out = ok(&["enroll", "--server", &url, "--user", "SS04", "--features", p(&f), "--out", p(&model)]);
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["impostor_instances"], 100);
    assert!(store.join("SS04").join("features.csv").is_file());
    assert!(store.join("manifest.json").is_file());

    let auth = |subject: &str| run(&["authenticate", "--model", p(&model), "--features", p(&fresh), "--subject", subject]);
    let grant = auth("SS04");
    assert_eq!(grant.status.code(), Some(0), "{}", String::from_utf8_lossy(&grant.stdout));
    let decision: serde_json::Value = serde_json::from_slice(&grant.stdout).unwrap();
    assert_eq!(decision["outcome"], "grant");
    assert_eq!(decision["n_instances"], 50);
    assert_eq!(auth("SS02").status.code(), Some(2));

    let empty = t.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(run(&["authenticate", "--model", p(&model), "--features", p(&empty)]).status.code(), Some(1));
    let header_only = t.path().join("header.csv");
    std::fs::write(&header_only, text.lines().next().unwrap()).unwrap();
    assert_eq!(run(&["authenticate", "--model", p(&model), "--features", p(&header_only)]).status.code(), Some(1));

    // Unreachable server.
    let out = run(&["enroll", "--server", "http://127.0.0.1:9", "--user", "SS04", "--features", p(&f), "--out", p(&model)]);
    assert_eq!(out.status.code(), Some(1));
}

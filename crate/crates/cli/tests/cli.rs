use std::path::Path;
use std::process::{Command, Output};

fn rotmerge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotmerge"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("rotmerge runs")
}

fn generate(dir: &Path, scenes: &str) {
    let out = rotmerge(&["generate", "--seed", "7", "--scenes", scenes, "--p-horizontal", "0.3", "--out", "corpus"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_mock_reads_every_instance() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "10");
    let out = rotmerge(&["run", "--scenes-dir", "corpus", "--rotation-step", "15", "--backend", "mock", "--out", "rot"], dir.path());
    assert!(out.status.success());
    let dets = std::fs::read_to_string(dir.path().join("rot/detections.jsonl")).unwrap();
    assert_eq!(dets.lines().count(), 30);
    assert!(dir.path().join("rot/manifest.json").exists());
    assert!(dir.path().join("rot/timings.json").exists());
}

#[test]
fn baseline_run_and_bad_step() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "10");
    let out = rotmerge(&["run", "--scenes-dir", "corpus", "--rotation-step", "360", "--backend", "mock", "--out", "base"], dir.path());
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("base/manifest.json")).unwrap()).unwrap();
    for img in manifest["detections"].as_array().unwrap() {
        for d in img["detections"].as_array().unwrap() {
            assert_eq!(d["source_angle"], 0.0);
        }
    }

    let out = rotmerge(&["run", "--scenes-dir", "corpus", "--rotation-step", "7", "--out", "bad"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("bad/detections.jsonl").exists());
}

#[test]
fn run_failure_removes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "2");
    let ok = rotmerge(&["run", "--scenes-dir", "corpus", "--out", "o"], dir.path());
    assert!(ok.status.success());
    let out = rotmerge(&["run", "--scenes-dir", "corpus", "--backend", "cmd:/bin/false", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o/detections.jsonl").exists());
    std::fs::write(dir.path().join("img.png"), b"not a png").unwrap();
    let out = rotmerge(&["run", "--image", "img.png", "--backend", "cmd:/bin/false", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o/detections.jsonl").exists());
    assert!(!dir.path().join("o/manifest.json").exists());
}

#[test]
fn rerun_from_manifest_reproduces_detections() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "5");
    assert!(rotmerge(&["run", "--scenes-dir", "corpus", "--mock-corrupt", "--out", "a"], dir.path()).status.success());
    assert!(rotmerge(&["run", "--from-manifest", "a/manifest.json", "--out", "b"], dir.path()).status.success());
    for f in ["detections.jsonl", "manifest.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_perfect_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "5");
    assert!(rotmerge(&["run", "--scenes-dir", "corpus", "--out", "rot"], dir.path()).status.success());
    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    let out = rotmerge(
        &["eval", "--annotations", "corpus/annotations.jsonl", "--detections", "rot/detections.jsonl", "--detections", "none=empty.jsonl", "--out", "rep"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,accuracy,avg_ed,norm_ed,n");
    assert_eq!(rows[1], "rot,1.000000,0.000000,0.000000,15");
    assert!(rows[2].starts_with("none,0.000000,"), "{}", rows[2]);
    assert!(rows[2].contains(",1.000000,15"), "{}", rows[2]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("1.000") && table.contains("0.00"));
}

#[test]
fn eval_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "1");
    std::fs::write(dir.path().join("bad.jsonl"), "{\"image\":\"x\"}\n").unwrap();
    let out = rotmerge(&["eval", "--annotations", "corpus/annotations.jsonl", "--detections", "bad.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

fn ann_line(id: &str, workers: [&str; 5], orientation: f64) -> String {
    serde_json::json!({
        "id": id, "image": "img", "polygon": [0, 0, 10, 0, 10, 5, 0, 5],
        "orientation": orientation, "workers": workers, "consensus": null
    })
    .to_string()
}

#[test]
fn consensus_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ann.jsonl");
    let lines = [
        ann_line("a", ["salt", "salt", "salt", "sa1t", "salt"], 0.0),
        ann_line("b", ["Salt", "Salt", "Salt", "x", "y"], 90.0),
        ann_line("c", ["olive oil"; 5], 350.0),
    ];
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let out = rotmerge(&["stats", "ann.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));

    let out = rotmerge(&["consensus", "ann.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let filled = std::fs::read_to_string(&path).unwrap();
    assert!(filled.contains("\"consensus\":\"olive oil\""));

    let out = rotmerge(&["stats", "ann.jsonl", "--csv", "stats.csv"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("crops: 3"));
    assert!(text.contains("distinct words: 2"));
    assert!(text.contains("0.667"));
    let csv = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(csv.contains("horizontal_fraction,0.666667"));
}

#[test]
fn consensus_lists_unresolved() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ann.jsonl");
    std::fs::write(&path, ann_line("tie", ["a", "a", "b", "b", "c"], 0.0) + "\n").unwrap();
    let out = rotmerge(&["consensus", "ann.jsonl", "--out", "filled.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("unresolved\ttie"));
    assert!(dir.path().join("filled.jsonl").exists());
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = rotmerge(&["generate", "--seed", "7", "--scenes", "20", "--p-horizontal", "0.3", "--out", out], dir.path());
        assert!(o.status.success());
    }
    for f in ["scene_00000.json", "scene_00019.json", "annotations.jsonl"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let bad = rotmerge(&["generate", "--p-horizontal", "1.5", "--out", "c"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

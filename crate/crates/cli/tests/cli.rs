use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nqa_core::model::ModelConfig;
use nqa_core::pipeline::{LoadedManifest, SceneFeatures};
use nqa_core::pnsg::DUMP_MAGIC;

fn nqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nqa"))
        .args(args)
        .env("NQA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nqa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str]) -> String {
    let out = nqa(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "stderr not single-line: {err}");
    assert!(err.starts_with("error: "));
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, id: &str, label: f64) -> PathBuf {
    let out = dir.join(id);
    ok(&["synth", "--out", s(&out), "--scene-id", id, "--label", &label.to_string()]);
    out.join("manifest.json")
}

#[test]
fn synth_default_scene_is_valid_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", -1.0);
    let m = LoadedManifest::load(&a).unwrap();
    assert_eq!(m.manifest.views.len(), 8);
    assert_eq!(m.manifest.label, Some(-1.0));
    let bundle = m.bundle().unwrap();
    assert_eq!(bundle.views.len(), 8);
    assert!(!bundle.points.is_empty());

    let b = dir.path().join("b");
    ok(&["synth", "--out", s(&b), "--scene-id", "a", "--label", "-1"]);
    for rel in ["manifest.json", "sparse/cameras.bin", "sparse/images.bin", "sparse/points3D.bin", "images/view_003.ppm"] {
        let x = std::fs::read(dir.path().join("a").join(rel)).unwrap();
        let y = std::fs::read(b.join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs");
    }
}

#[test]
fn extract_writes_one_dump_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "s", 0.0);
    let one = dir.path().join("one");
    ok(&["extract", "--manifest", s(&m), "--out", s(&one), "--rounds", "1", "--points", "5", "--bins", "2", "--resample", "4"]);
    assert!(one.join("round_00.pnsg").is_file());
    assert!(!one.join("round_01.pnsg").exists());

    let two = dir.path().join("two");
    ok(&["extract", "--manifest", s(&m), "--out", s(&two), "--rounds", "2", "--points", "5", "--bins", "2", "--resample", "4"]);
    let bytes = std::fs::read(two.join("round_01.pnsg")).unwrap();
    assert_eq!(&bytes[..8], DUMP_MAGIC);
    let f = SceneFeatures::read_dir(&two).unwrap();
    assert_eq!(f.rounds.len(), 2);
    assert_ne!(f.rounds[0], f.rounds[1]);
}

#[test]
fn extract_reports_missing_model() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "s", 0.0);
    std::fs::remove_dir_all(dir.path().join("s/sparse")).unwrap();
    let err = fail(&["extract", "--manifest", s(&m), "--out", s(&dir.path().join("f"))]);
    assert!(err.contains("colmap_dir"), "{err}");
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    std::fs::write(&p, serde_json::to_string(&ModelConfig::tiny()).unwrap()).unwrap();
    p
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifests: Vec<PathBuf> = (0..3).map(|k| synth(dir.path(), &format!("s{k}"), -(k as f64))).collect();
    let ms: Vec<&str> = manifests.iter().map(|p| s(p)).collect();
    let cfg = tiny_config(dir.path());
    let model = dir.path().join("m.nqa");
    let log = dir.path().join("log.csv");
    let mut args = vec![
        "train", "--out", s(&model), "--log", s(&log), "--model-config", s(&cfg), "--epochs", "3", "--batch", "2",
        "--points", "4", "--rounds", "2", "--no-validation",
    ];
    args.extend(&ms);
    ok(&args);
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().count(), 4, "{log_text}");
    assert!(log_text.starts_with("epoch,train_loss,val_loss"));

    let pred = dir.path().join("pred.csv");
    let mut p_args = vec!["predict", "--model", s(&model), "--out", s(&pred), "--points", "4", "--rounds", "2"];
    p_args.extend(&ms);
    ok(&p_args);
    let first = std::fs::read_to_string(&pred).unwrap();
    ok(&p_args);
    assert_eq!(std::fs::read_to_string(&pred).unwrap(), first, "prediction is not deterministic");
    assert_eq!(first.lines().count(), 4);

    let truth = dir.path().join("truth.csv");
    let mut l_args = vec!["labels", "--out", s(&truth)];
    l_args.extend(&ms);
    ok(&l_args);
    let json = dir.path().join("report.json");
    // three rows are too few for quartiles, so duplicate scenes under new method ids
    // the synthetic scenes differ only in label, so shift the copied scores
    // to keep the correlations defined
    let extend = |p: &Path, shift: f64| {
        let text = std::fs::read_to_string(p).unwrap();
        let extra: String = text
            .lines()
            .skip(1)
            .map(|l| {
                let (key, v) = l.rsplit_once(',').unwrap();
                let v: f64 = v.parse().unwrap();
                format!("{},{}\n", key.replacen(",default", ",copy", 1), v + shift)
            })
            .collect();
        std::fs::write(p, text + &extra).unwrap();
    };
    extend(&pred, 1.0);
    extend(&truth, 0.5);
    let table = ok(&["evaluate", "--pred", s(&pred), "--truth", s(&truth), "--json", s(&json)]);
    assert!(table.contains("SRCC"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["n"], 6);
}

#[test]
fn ablated_model_ignores_point_samples() {
    let dir = tempfile::tempdir().unwrap();
    let manifests: Vec<PathBuf> = (0..2).map(|k| synth(dir.path(), &format!("s{k}"), k as f64)).collect();
    let ms: Vec<&str> = manifests.iter().map(|p| s(p)).collect();
    let cfg = tiny_config(dir.path());
    let model = dir.path().join("m.nqa");
    let mut args = vec![
        "train", "--out", s(&model), "--model-config", s(&cfg), "--epochs", "1", "--batch", "2", "--points", "4",
        "--rounds", "1", "--ablate-pointwise", "--no-validation",
    ];
    args.extend(&ms);
    ok(&args);
    let run = |seed: &str, points: &str| {
        let mut a = vec!["predict", "--model", s(&model), "--seed", seed, "--points", points];
        a.extend(&ms);
        ok(&a)
    };
    assert_eq!(run("0", "4"), run("9", "2"));
}

#[test]
fn train_requires_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&["synth", "--out", s(&out)]);
    let m = out.join("manifest.json");
    let err = fail(&["train", "--out", s(&dir.path().join("m.nqa")), s(&m)]);
    assert!(err.contains("no label"), "{err}");
}

#[test]
fn evaluate_perfect_and_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.csv");
    let pred = dir.path().join("p.csv");
    let rows = "scene_id,method_id,score\na,x,-1.0\nb,x,-2.0\nc,x,-0.5\nd,x,-3.0\n";
    std::fs::write(&truth, rows).unwrap();
    std::fs::write(&pred, rows).unwrap();
    let out = ok(&["evaluate", "--pred", s(&pred), "--truth", s(&truth), "--format", "json"]);
    let r: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["rmse"], 0.0);
    assert_eq!(r["outlier_ratio"], 0.0);
    assert!((r["srcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["plcc"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    std::fs::write(&pred, "scene_id,method_id,pred\na,x,-1.0\nb,x,-2.0\nc,x,-0.5\n").unwrap();
    let err = fail(&["evaluate", "--pred", s(&pred), "--truth", s(&truth)]);
    assert!(err.contains("scene_id=d") && err.contains("method_id=x"), "{err}");
}

#[test]
fn corpus_synth_writes_labelled_scenes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--corpus", "2", "--seed", "3", "--out", s(dir.path())]);
    for id in ["scene_000", "scene_001"] {
        let m = LoadedManifest::load(&dir.path().join(id).join("manifest.json")).unwrap();
        assert!(m.manifest.label.is_some());
        assert_eq!(m.manifest.views.len(), 24);
    }
}

#[test]
fn bad_thread_count_is_a_single_line_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_nqa"))
        .args(["labels", "x.json"])
        .env("NQA_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(err.contains("NQA_THREADS"));
}

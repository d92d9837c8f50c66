use std::path::Path;
use std::process::{Command, Output};

fn fgvc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgvc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fgvc(args);
    assert!(
        out.status.success(),
        "fgvc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_from_synthetic_data_to_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let small = ["--classes", "4", "--per-class-train", "3", "--per-class-test", "2", "--resolution", "32"];

    ok(&[&["synth-gen", "--out", p(&d("target"))][..], &small[..]].concat());
    ok(&[&["synth-gen", "--out", p(&d("near")), "--shift", "0.1", "--seed", "3"][..], &small[..]].concat());
    ok(&[&["synth-gen", "--out", p(&d("far")), "--shift", "1.0", "--seed", "4"][..], &small[..]].concat());
    let labels = std::fs::read_to_string(d("target").join("labels.csv")).unwrap();
    assert!(labels.starts_with("filename,class_name,split\n"));
    assert_eq!(labels.lines().count(), 1 + 4 * 5);

    for name in ["target", "near", "far"] {
        ok(&["profile", "--data", p(&d(name)), "--out", p(&d(&format!("p_{name}")))]);
    }
    let sim = ok(&["similarity", "--source", p(&d("p_near")), "--target", p(&d("p_target"))]);
    let mut lines = sim.lines();
    assert_eq!(lines.next(), Some("cost,sim"));
    let vals: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((vals[1] - (-0.01 * vals[0]).exp()).abs() < 1e-15);

    let ranked = ok(&[
        "rank-sources",
        "--target",
        p(&d("p_target")),
        "--sources",
        p(&d("p_far")),
        p(&d("p_near")),
    ]);
    let order: Vec<&str> = ranked.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(order, vec!["p_near", "p_far"]);

    let top = ok(&["top-k", "--source", p(&d("p_near")), "--target", p(&d("p_target")), "--k", "2"]);
    assert_eq!(top.lines().count(), 3);

    let metrics = ok(&["train", "--data", p(&d("target")), "--epochs", "2", "--out", p(&d("ckpt"))]);
    assert!(metrics.starts_with("epoch,lr,"));
    assert_eq!(metrics.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(d("ckpt").join("metrics.csv")).unwrap(), metrics);
    // same seed, same bytes
    let again = ok(&["train", "--data", p(&d("target")), "--epochs", "2", "--threads", "1"]);
    assert_eq!(again, metrics);

    let eval = ok(&["eval", "--checkpoint", p(&d("ckpt")), "--data", p(&d("target"))]);
    assert!(eval.starts_with("split,images,acc_1pass,acc_2pass\ntest,8,"));

    ok(&["profile", "--data", p(&d("near")), "--out", p(&d("p_model")), "--features", "model", "--checkpoint", p(&d("ckpt"))]);
    ok(&["augment-preview", "--data", p(&d("target")), "--out", p(&d("preview")), "--count", "2", "--checkpoint", p(&d("ckpt"))]);
    let files = std::fs::read_dir(d("preview")).unwrap().count();
    assert_eq!(files, 2 * 5);

    // fine-tune from the checkpoint with a frozen backbone
    ok(&["train", "--data", p(&d("near")), "--epochs", "1", "--init", p(&d("ckpt")), "--freeze-backbone", "--no-augment"]);
}

#[test]
fn gradcheck_exit_codes() {
    let out = fgvc(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(!text.contains("FAIL"));

    let out = fgvc(&["gradcheck", "--corrupt", "conv2_w"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conv2_w"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("conv2_w,"));
}

#[test]
fn usage_and_ingestion_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fgvc(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(fgvc(&["similarity", "--source", "x"]).status.code(), Some(2));
    let missing = dir.path().join("missing");
    let out = fgvc(&["similarity", "--source", p(&missing), "--target", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));

    std::fs::write(dir.path().join("labels.csv"), "wrong,header\n").unwrap();
    let out = fgvc(&["train", "--data", p(dir.path()), "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fgvc(&["synth-gen", "--out", p(&missing), "--shift", "2"]).status.code(), Some(2));
    assert_eq!(fgvc(&["gradcheck", "--corrupt", "nope"]).status.code(), Some(2));
    assert_eq!(fgvc(&["--help"]).status.code(), Some(0));
}

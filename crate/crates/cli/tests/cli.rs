use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn segdec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segdec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path) -> String {
    let data = dir.join("data");
    let s = data.to_str().unwrap().to_string();
    ok(&segdec(&[
        "synth", "--pos", "6", "--neg", "6", "--size", "64", "--seed", "2", "--out", &s,
    ]));
    s
}

#[test]
fn synth_prints_manifest_path() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let out = ok(&segdec(&[
        "synth",
        "--pos",
        "2",
        "--neg",
        "1",
        "--size",
        "64",
        "--out",
        data.to_str().unwrap(),
    ]));
    let manifest = data.join("manifest.jsonl");
    assert_eq!(out.trim(), manifest.to_str().unwrap());
    assert_eq!(fs::read_to_string(manifest).unwrap().lines().count(), 3);
}

#[test]
fn train_then_eval_writes_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = dir.path().join("run");
    let run_s = run.to_str().unwrap();
    ok(&segdec(&[
        "train",
        "--data",
        &data,
        "--arch",
        "compact",
        "--steps",
        "4",
        "--steps-decision",
        "4",
        "--jobs",
        "2",
        "--out",
        run_s,
    ]));
    for f in [
        "run_config.toml",
        "folds.json",
        "fold0.ksdd",
        "fold2.ksdd",
        "fold1_seg_loss.csv",
        "baseline_fold2.json",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let snapshot = fs::read_to_string(run.join("run_config.toml")).unwrap();
    assert!(snapshot.contains("steps = 4"), "{snapshot}");
    assert_eq!(
        fs::read_to_string(run.join("fold0_seg_loss.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let report = ok(&segdec(&["eval", "--run", run_s]));
    assert!(report.contains("AP"), "{report}");
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.contains("baseline-dilate5"));
    // every image is scored exactly once across the held-out folds
    assert_eq!(fs::read_to_string(run.join("scores.csv")).unwrap().lines().count(), 13);

    // infer: JSON on stdout, map at 1/8 resolution
    let map = dir.path().join("map.png");
    let img = Path::new(&data).join("prod000/img00.png");
    let out = ok(&segdec(&[
        "infer",
        "--weights",
        &format!("{run_s}/fold0.ksdd"),
        "--image",
        img.to_str().unwrap(),
        "--map",
        map.to_str().unwrap(),
    ]));
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let score = v["score"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));
    let (w, h) = png_size(&map);
    assert_eq!((w, h), (8, 8));
}

fn png_size(path: &Path) -> (u32, u32) {
    image::image_dimensions(path).unwrap()
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        format!("dataset_root = {data:?}\nloss = \"mse\"\nsteps = 3\nsteps_decision = 2\narch = \"compact\"\n"),
    )
    .unwrap();
    let run = dir.path().join("run");
    ok(&segdec(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "2",
        "--out",
        run.to_str().unwrap(),
    ]));
    let snapshot = fs::read_to_string(run.join("run_config.toml")).unwrap();
    assert!(snapshot.contains("loss = \"mse\""));
    assert!(snapshot.contains("steps = 2"));
    assert!(snapshot.contains("lr_segmentation = 0.005"), "{snapshot}");
}

#[test]
fn subsample_positives_limits_each_training_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&segdec(&[
        "synth",
        "--pos",
        "9",
        "--neg",
        "3",
        "--size",
        "64",
        "--out",
        data.to_str().unwrap(),
    ]));
    let run = dir.path().join("run");
    ok(&segdec(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--arch",
        "compact",
        "--steps",
        "1",
        "--steps-decision",
        "1",
        "--subsample-positives",
        "5",
        "--out",
        run.to_str().unwrap(),
    ]));
    for fold in 0..3 {
        let list: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join(format!("fold{fold}_train.json"))).unwrap()).unwrap();
        let pos = list
            .as_array()
            .unwrap()
            .iter()
            .filter(|v| v["defective"].as_bool().unwrap())
            .count();
        assert_eq!(pos, 5, "fold {fold}");
    }
}

#[test]
fn synth_rerun_is_byte_identical_and_size_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        ok(&segdec(&[
            "synth",
            "--pos",
            "2",
            "--neg",
            "2",
            "--size",
            "64",
            "--seed",
            "7",
            "--out",
            d.to_str().unwrap(),
        ]));
        d
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["manifest.jsonl", "prod000/img00.png", "prod001/img00_label.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = segdec(&[
        "synth",
        "--size",
        "100",
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_scores_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("mine.csv");
    fs::write(&f, "image_id,score,defective\na,0.9,1\nb,0.8,0\nc,0.7,1\n").unwrap();
    let out = ok(&segdec(&["eval", "--scores", f.to_str().unwrap()]));
    // ranks D N D: AP = (1/1 + 2/3) / 2
    assert!(out.contains("AP 0.8333"), "{out}");
    assert!(dir.path().join("pr_curve.csv").is_file());

    let perfect = dir.path().join("perfect.csv");
    fs::write(&perfect, "image_id,score,defective\na,0.9,1\nb,0.1,0\nc,0.7,1\n").unwrap();
    let out_dir = dir.path().join("p");
    ok(&segdec(&[
        "eval",
        "--scores",
        perfect.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report[0]["ap"].as_f64(), Some(1.0));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| segdec(args).status.code().unwrap();
    // configuration
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&["train", "--config", bad.to_str().unwrap()]), 2);
    assert_eq!(code(&["train", "--jobs", "0"]), 2);
    assert_eq!(code(&["eval"]), 2);
    // data
    let missing = dir.path().join("missing");
    assert_eq!(code(&["train", "--data", missing.to_str().unwrap()]), 3);
    // weights
    let junk = dir.path().join("junk.ksdd");
    fs::write(&junk, b"nope").unwrap();
    assert_eq!(
        code(&["infer", "--weights", junk.to_str().unwrap(), "--image", "x.png"]),
        5
    );
}

#[test]
fn infer_rejects_sizes_not_multiple_of_64() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = dir.path().join("run");
    ok(&segdec(&[
        "train",
        "--data",
        &data,
        "--arch",
        "compact",
        "--steps",
        "1",
        "--steps-decision",
        "1",
        "--out",
        run.to_str().unwrap(),
    ]));
    let weights = run.join("fold0.ksdd");
    let odd = dir.path().join("odd.png");
    image::GrayImage::new(64, 72).save(&odd).unwrap();
    let out = segdec(&[
        "infer",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        odd.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = segdec(&[
        "infer",
        "--weights",
        weights.to_str().unwrap(),
        "--image",
        "/definitely/not/here.png",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

use std::path::Path;
use std::process::{Command, Output};

fn evmod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evmod"))
        .args(args)
        .output()
        .expect("spawn evmod")
}

fn synth(scene: &str, dir: &Path) {
    let out = evmod(&["synth", "--scene", scene, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn detect(dir: &Path, out: &Path, extra: &[&str]) -> Output {
    let p = |f: &str| dir.join(f).to_str().unwrap().to_string();
    let (events, imu, k, gt) = (p("events.txt"), p("imu.txt"), p("intrinsics.txt"), p("gt.txt"));
    let mut args = vec![
        "detect",
        "--events",
        &events,
        "--imu",
        &imu,
        "--intrinsics",
        &k,
        "--gt",
        &gt,
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    evmod(&args)
}

fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in metrics"))
        .parse()
        .unwrap()
}

#[test]
fn rotation_scene_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("out");
    synth("rotation", &scene);
    let run = detect(
        &scene,
        &out,
        &["--debug-dir", tmp.path().join("debug").to_str().unwrap()],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let metrics = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert_eq!(metrics.lines().next(), Some("method=joint"));
    assert!(metric(&metrics, "mean_iou") >= 0.7, "{metrics}");
    let detections = std::fs::read_to_string(out.join("detections.txt")).unwrap();
    assert!(detections.lines().skip(1).count() >= metric(&metrics, "windows") as usize);
    assert!(tmp.path().join("debug/w0000_filtered.pbm").exists());
}

#[test]
fn spatial_method_labels_every_detection() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out = tmp.path().join("out");
    synth("static", &scene);
    let run = detect(&scene, &out, &["--method", "spatial"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let detections = std::fs::read_to_string(out.join("detections.txt")).unwrap();
    let sources: Vec<&str> = detections
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .filter(|s| *s != "none")
        .collect();
    assert!(!sources.is_empty());
    assert!(sources.iter().all(|s| *s == "spatial"), "{sources:?}");
}

#[test]
fn missing_imu_file_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("static", &scene);
    std::fs::remove_file(scene.join("imu.txt")).unwrap();
    let run = detect(&scene, &tmp.path().join("out"), &[]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("imu.txt"), "{err}");
    assert!(err.contains("loading IMU"), "{err}");
}

#[test]
fn malformed_event_line_names_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth("static", &scene);
    let path = scene.join("events.txt");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("12,oops,0.5,1\n");
    std::fs::write(&path, text).unwrap();
    let run = detect(&scene, &tmp.path().join("out"), &[]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("events.txt:"), "{err}");
}

#[test]
fn unknown_scene_and_method_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let run = evmod(&["synth", "--scene", "nope", "--out", tmp.path().to_str().unwrap()]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("nope"));
    let run = evmod(&[
        "detect",
        "--events",
        "a",
        "--imu",
        "b",
        "--intrinsics",
        "c",
        "--method",
        "magic",
    ]);
    assert!(!run.status.success());
}

#[test]
fn suite_reports_four_methods_per_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let run = evmod(&["suite", "--out", tmp.path().to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report = std::fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&run.stdout), report);
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8 * 4);
    for chunk in rows.chunks(4) {
        let methods: Vec<&str> = chunk.iter().map(|r| r[1]).collect();
        assert_eq!(methods, ["frame-diff", "spatial", "temporal", "joint"]);
        assert!(chunk.iter().all(|r| r[0] == chunk[0][0]));
    }
}

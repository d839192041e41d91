//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any gating check fails.

use std::path::PathBuf;
use std::time::Instant;

use evmod_core::compensation::{compensate_window, CompensatedEvent, CompensationConfig};
use evmod_core::event::{load_events, load_imu, slice_windows, CameraIntrinsics, Polarity};
use evmod_core::fusion::load_ground_truth;
use evmod_core::pipeline::{detect, detections_to_text, run_scenes, run_suite, Method, PipelineConfig, SuiteReport};
use evmod_core::spatial::{adaptive_threshold, normalize_confidence, rasterize_count, segment, time_image};
use evmod_core::synth::{generate, standard_suite};
use evmod_core::temporal::{
    axis_from_sample, inlier_indices, radius_from_sample, ransac_cylinder, residual, CloudPoint, CylinderModel,
    RansacConfig,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Ledger {
    failed: Vec<String>,
    known: Vec<String>,
}

impl Ledger {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("criterion {id} [{}] {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }

    /// Evaluated and reported, but a failure does not fail the run.
    fn report_only(&mut self, id: &str, ok: bool, detail: String) {
        println!(
            "criterion {id} [{}] {detail} (non-gating)",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.known.push(id.to_string());
        }
    }

    fn skip(&mut self, id: &str, detail: &str) {
        println!("criterion {id} [SKIP] {detail}");
    }
}

fn scene(name: &str) -> evmod_core::synth::SceneSpec {
    standard_suite()
        .into_iter()
        .find(|s| s.name == name)
        .expect("standard scene")
}

fn criterion_1(l: &mut Ledger) {
    let spec = scene("rotation");
    let out = generate(&spec, 0.02).unwrap();
    let k = spec.geometry;
    let windows = slice_windows(&out.events, &out.imu, 0.02).unwrap();
    let cfg = CompensationConfig {
        margin: f64::INFINITY,
        ..Default::default()
    };
    let (mut near, mut total) = (0usize, 0usize);
    let (mut var_before, mut var_after, mut decreased) = (0.0, 0.0, 0);
    let mut offset = 0;
    for (w, imu) in &windows {
        let cw = compensate_window(w, imu, &k, &cfg);
        assert_eq!(cw.events.len(), w.events.len());
        for (i, ce) in cw.events.iter().enumerate() {
            if let Some(src) = out.source_position(offset + i, w.t0) {
                total += 1;
                if (src.x - ce.x).hypot(src.y - ce.y) <= 1.0 {
                    near += 1;
                }
            }
        }
        offset += w.events.len();
        let raw: Vec<CompensatedEvent> = w.events.iter().map(CompensatedEvent::from).collect();
        let (before, after) = (
            rasterize_count(&raw, &k).active_variance(),
            rasterize_count(&cw.events, &k).active_variance(),
        );
        var_before += before;
        var_after += after;
        decreased += (after < before) as usize;
    }
    let frac = near as f64 / total as f64;
    l.check(
        "1a",
        frac >= 0.95,
        format!(
            "background events within 1 px of source after compensation: {:.2}% (>= 95%)",
            100.0 * frac
        ),
    );
    let n = windows.len() as f64;
    l.report_only(
        "1b",
        decreased == windows.len(),
        format!(
            "per-active-pixel count variance strictly decreases: {decreased}/{} windows, mean {:.3} -> {:.3}",
            windows.len(),
            var_before / n,
            var_after / n
        ),
    );

    let mut big = spec.clone();
    big.object = None;
    big.background.rate = 4000.0;
    let out = generate(&big, 0.02).unwrap();
    let windows = slice_windows(&out.events, &out.imu, 0.02).unwrap();
    let start = Instant::now();
    let mut kept = 0;
    for (w, imu) in &windows {
        kept += compensate_window(w, imu, &k, &CompensationConfig::default())
            .events
            .len();
    }
    let per_million = start.elapsed().as_secs_f64() * 1e6 / out.events.len() as f64;
    l.check(
        "1c",
        out.events.len() >= 1_000_000 && per_million < 5.0,
        format!(
            "compensation runtime {per_million:.3} s per 1e6 events ({} events, {kept} kept; < 5 s)",
            out.events.len()
        ),
    );
}

fn unit(v: Vector3<f64>) -> Vector3<f64> {
    v / v.norm()
}

fn criterion_2(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let axis = Vector3::z();
    let anchor = Vector3::new(50.0, 50.0, 0.0);
    let u = unit(axis.cross(&Vector3::x()));
    let v = axis.cross(&u);
    let radius = 5.0;
    let mut cloud: Vec<CloudPoint> = (0..500)
        .map(|_| {
            let h = rng.random_range(0.0..100.0);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            anchor + axis * h + (u * a.cos() + v * a.sin()) * radius
        })
        .collect();
    cloud.extend((0..200).map(|_| {
        Vector3::new(
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
        )
    }));
    let cfg = RansacConfig {
        theta: 0.5,
        iterations: 500,
        seed: 7,
        ..Default::default()
    };
    let start = Instant::now();
    let fit = ransac_cylinder(&cloud, &cfg);
    let elapsed = start.elapsed().as_secs_f64();
    match fit {
        Ok(fit) => {
            let angle = fit.model.axis.dot(&axis).abs().min(1.0).acos().to_degrees();
            let dr = (fit.model.radius - radius).abs();
            let n = fit.inliers.len();
            l.check(
                "2",
                angle <= 2.0 && dr <= 0.5 && n >= 480 && elapsed < 1.0,
                format!(
                    "cylinder recovery: axis error {angle:.3} deg (<= 2), radius error {dr:.3} (<= 0.5), \
                     inliers {n} (>= 480), {elapsed:.3} s (< 1 s)"
                ),
            );
        }
        Err(e) => l.check("2", false, format!("cylinder recovery: no model ({e})")),
    }
}

/// Scalar reference implementations, written independently of the library.
mod oracle {
    pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn norm(a: [f64; 3]) -> f64 {
        (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
    }

    pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    /// Distance from `p` to the line through `a` with unit direction `n`.
    pub fn line_distance(p: [f64; 3], a: [f64; 3], n: [f64; 3]) -> f64 {
        norm(cross(sub(p, a), n))
    }
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn criterion_3(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = CameraIntrinsics::new(50.0, 50.0, 16.0, 12.0, 32, 24).unwrap();

    // time image, confidence, threshold and segmentation
    let mut worst_spatial: f64 = 0.0;
    let mut seg_mismatch = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..300);
        let t0 = rng.random_range(0.0..10.0);
        let dt = rng.random_range(0.005..0.05);
        let events: Vec<CompensatedEvent> = (0..n)
            .map(|_| CompensatedEvent {
                x: rng.random_range(-0.49..31.49),
                y: rng.random_range(-0.49..23.49),
                t: t0 + rng.random_range(0.0..dt),
                p: Polarity::Positive,
            })
            .collect();
        let count = rasterize_count(&events, &k);
        let time = time_image(&events, &count);
        let rho = normalize_confidence(&time, dt).unwrap();
        let omega = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let (a, b) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
        let tau = adaptive_threshold(&omega, a, b);
        let tau_ref = a * (omega.x * omega.x + omega.y * omega.y + omega.z * omega.z).sqrt() + b;
        worst_spatial = worst_spatial.max((tau - tau_ref).abs());
        let mask = segment(&rho, tau.clamp(0.0, 1.0));

        // brute force: scan every pixel over every event
        let mut sum_t = vec![0.0; 32 * 24];
        let mut cnt = vec![0u32; 32 * 24];
        for e in &events {
            let (px, py) = ((e.x + 0.5).floor() as usize, (e.y + 0.5).floor() as usize);
            sum_t[py * 32 + px] += e.t;
            cnt[py * 32 + px] += 1;
        }
        let means: Vec<Option<f64>> = (0..32 * 24)
            .map(|i| (cnt[i] > 0).then(|| sum_t[i] / cnt[i] as f64))
            .collect();
        let active: Vec<f64> = means.iter().flatten().copied().collect();
        let phi = active.iter().sum::<f64>() / active.len() as f64;
        for y in 0..24 {
            for x in 0..32 {
                let i = y * 32 + x;
                assert_eq!(count.get(x, y), cnt[i]);
                match (means[i], time.get(x, y), rho.get(x, y)) {
                    (None, None, None) => {
                        if mask.get(x, y) {
                            seg_mismatch += 1;
                        }
                    }
                    (Some(m), Some(t), Some(r)) => {
                        let r_ref = ((m - phi) / dt).clamp(-1.0, 1.0);
                        worst_spatial = worst_spatial.max((m - t).abs()).max((r - r_ref).abs());
                        if mask.get(x, y) != (r_ref >= tau.clamp(0.0, 1.0)) && (r_ref - tau).abs() > 1e-9 {
                            seg_mismatch += 1;
                        }
                    }
                    _ => seg_mismatch += 1,
                }
            }
        }
    }
    l.check(
        "3a",
        worst_spatial < 1e-9 && seg_mismatch == 0,
        format!(
            "time image / confidence / threshold vs brute force on 100 instances: max |d| = {worst_spatial:.2e}, \
             {seg_mismatch} mask mismatches"
        ),
    );

    // axis, radius, residual and inlier count
    let mut worst_temporal: f64 = 0.0;
    let mut count_mismatch = 0;
    let rand_point = |rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        )
    };
    for _ in 0..100 {
        let (p1, p2, p3, p4) = (
            rand_point(&mut rng),
            rand_point(&mut rng),
            rand_point(&mut rng),
            rand_point(&mut rng),
        );
        let Some(axis) = axis_from_sample(&p1, &p2, &p3) else {
            continue;
        };
        let c = oracle::cross(oracle::sub(arr(&p2), arr(&p1)), oracle::sub(arr(&p3), arr(&p1)));
        let cn = oracle::norm(c);
        let n_ref = [c[0] / cn, c[1] / cn, c[2] / cn];
        // either orientation is a valid normal
        let sign = if axis.dot(&Vector3::from(n_ref)) < 0.0 {
            -1.0
        } else {
            1.0
        };
        for i in 0..3 {
            worst_temporal = worst_temporal.max((axis[i] * sign - n_ref[i]).abs());
        }
        let r = radius_from_sample(&p1, &p4, &axis);
        let r_ref = oracle::line_distance(arr(&p4), arr(&p1), n_ref);
        worst_temporal = worst_temporal.max((r - r_ref).abs());

        let model = CylinderModel {
            anchor: p1,
            axis,
            radius: r,
        };
        let theta = rng.random_range(0.5..20.0);
        let cloud: Vec<CloudPoint> = (0..200).map(|_| rand_point(&mut rng)).collect();
        let mut brute = 0;
        for p in &cloud {
            let d_ref = (oracle::line_distance(arr(p), arr(&p1), n_ref) - r_ref).abs();
            worst_temporal = worst_temporal.max((residual(&model, p) - d_ref).abs());
            if d_ref <= theta {
                brute += 1;
            }
        }
        let got = inlier_indices(&cloud, &model, theta).len();
        // points within rounding distance of the band edge may legitimately flip
        let borderline = cloud
            .iter()
            .filter(|p| ((oracle::line_distance(arr(p), arr(&p1), n_ref) - r_ref).abs() - theta).abs() < 1e-9)
            .count();
        if got.abs_diff(brute) > borderline {
            count_mismatch += 1;
        }
    }
    l.check(
        "3b",
        worst_temporal < 1e-9 && count_mismatch == 0,
        format!(
            "axis / radius / residual / inlier count vs scalar recomputation on 100 instances: max |d| = \
             {worst_temporal:.2e}, {count_mismatch} count mismatches"
        ),
    );
}

fn row(r: &SuiteReport, scene: &str, m: Method) -> (f64, f64) {
    let row = r.get(scene, m).expect("suite row");
    (row.mean_iou, row.accuracy)
}

fn criterion_4(l: &mut Ledger, r: &SuiteReport) {
    let (j, s, t, f) = (
        row(r, "tailing", Method::Joint).0,
        row(r, "tailing", Method::Spatial).0,
        row(r, "tailing", Method::Temporal).0,
        row(r, "tailing", Method::FrameDifference).0,
    );
    l.check(
        "4",
        j >= s && s > f && j >= t && j >= 0.7,
        format!(
            "tailing scene mean_iou: joint {j:.3} >= spatial {s:.3} > frame-diff {f:.3}; joint >= temporal {t:.3}; \
             joint >= 0.7"
        ),
    );
}

fn criterion_5(l: &mut Ledger, r: &SuiteReport) {
    let acc = |scene: &str, m: Method| row(r, scene, m).1;
    let (rot, tr, both) = (
        acc("rotation", Method::Joint),
        acc("translation", Method::Joint),
        acc("rotation_translation", Method::Joint),
    );
    let beats_spatial = ["translation", "rotation_translation"]
        .iter()
        .all(|s| acc(s, Method::Joint) >= acc(s, Method::Spatial));
    l.check(
        "5",
        rot >= tr && tr >= both && beats_spatial,
        format!(
            "joint accuracy rotation {rot:.3} >= translation {tr:.3} >= rotation+translation {both:.3}; \
             joint >= spatial on translation scenes: {beats_spatial}"
        ),
    );
}

fn criterion_6(l: &mut Ledger, r: &SuiteReport) {
    let clean = row(r, "rotation", Method::Joint).0;
    let noisy = row(r, "noise_high", Method::Joint).0;
    let drop = (clean - noisy) / clean;
    l.check(
        "6",
        drop <= 0.2,
        format!(
            "joint mean_iou {clean:.3} without noise -> {noisy:.3} at the highest noise rate: {:.1}% drop (<= 20%)",
            100.0 * drop
        ),
    );
}

fn criterion_7(l: &mut Ledger, first: &SuiteReport) {
    let again = run_suite(&PipelineConfig::default(), None).unwrap();
    let single = run_suite(
        &PipelineConfig {
            workers: 1,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let three = run_scenes(
        &[scene("tailing")],
        &PipelineConfig {
            workers: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let same_reports = first.to_text() == again.to_text() && first.to_text() == single.to_text();
    let tail_rows: Vec<_> = first.rows.iter().filter(|r| r.scene == "tailing").cloned().collect();
    let same_three = three.rows == tail_rows;

    // detections, not just summary numbers
    let spec = scene("rotation_translation");
    let out = generate(&spec, 0.02).unwrap();
    let run = |workers| {
        let cfg = evmod_core::pipeline::scene_config(
            &PipelineConfig {
                workers,
                ..Default::default()
            },
            &spec,
        );
        detections_to_text(&detect(&out.events, &out.imu, &spec.geometry, None, &cfg, false).unwrap())
    };
    let same_detections = run(1) == run(4);
    l.check(
        "7",
        same_reports && same_three && same_detections,
        format!(
            "repeat runs identical: {same_reports}; 1/3/default workers identical: {same_three}; \
             detections 1 vs 4 workers identical: {same_detections}"
        ),
    );
}

fn criterion_8(l: &mut Ledger) {
    let Some(dir) = std::env::var_os("EVMOD_EVIMO2_DIR").map(PathBuf::from) else {
        l.skip(
            "8",
            "real-data hook: set EVMOD_EVIMO2_DIR to a directory with events.txt, imu.txt, intrinsics.txt [, gt.txt]",
        );
        return;
    };
    let result = (|| -> evmod_core::Result<String> {
        let k = CameraIntrinsics::load(dir.join("intrinsics.txt"))?;
        let events = load_events(dir.join("events.txt"), &k)?;
        let imu = load_imu(dir.join("imu.txt"))?;
        let gt_path = dir.join("gt.txt");
        let gt = if gt_path.exists() {
            Some(load_ground_truth(&gt_path)?)
        } else {
            None
        };
        let out = detect(&events, &imu, &k, gt.as_deref(), &PipelineConfig::default(), false)?;
        Ok(match out.score {
            Some(s) => format!(
                "{} windows, mean_iou {:.3}, accuracy {:.3}",
                out.windows.len(),
                s.mean_iou,
                s.accuracy
            ),
            None => format!("{} windows, no ground truth", out.windows.len()),
        })
    })();
    match result {
        Ok(msg) => l.report_only("8", true, format!("real-data run completed: {msg}")),
        Err(e) => l.report_only("8", false, format!("real-data run failed: {e}")),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // a name filter that does not match this target skips it
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let mut l = Ledger::default();
    criterion_1(&mut l);
    criterion_2(&mut l);
    criterion_3(&mut l);
    let report = run_suite(&PipelineConfig::default(), None).unwrap();
    print!("{}", report.to_text());
    criterion_4(&mut l, &report);
    criterion_5(&mut l, &report);
    criterion_6(&mut l, &report);
    criterion_7(&mut l, &report);
    criterion_8(&mut l);

    if !l.known.is_empty() {
        println!("non-gating failures: {}", l.known.join(", "));
    }
    if l.failed.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: FAILED {}", l.failed.join(", "));
        std::process::exit(1);
    }
}

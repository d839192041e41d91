//! End-to-end detection over a recorded stream, and the synthetic method
//! comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::compensation::{
    compensate_window_from, integrate_velocity, CompensationConfig, ReferenceTime, TranslationConfig,
};
use crate::error::{Error, Result};
use crate::event::{load_events, load_imu, slice_windows, CameraIntrinsics, Event, EventWindow, ImuSample};
use crate::fusion::{
    backproject_inliers, frame_difference_baseline, fuse, load_ground_truth, score, spatial_detections,
    temporal_detections, Detection, GroundTruthBox, Score,
};
use crate::spatial::{
    adaptive_threshold, connected_components, morphological_filter, normalize_confidence, pnm, rasterize_count,
    segment_with, sobel_contours, time_image, BinaryMask, SegmentMode,
};
use crate::synth::{generate, standard_suite, SceneSpec};
use crate::temporal::{build_cloud, extract_models, AnchorMode, CloudPoint, RansacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FrameDifference,
    Spatial,
    Temporal,
    Joint,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::FrameDifference,
        Method::Spatial,
        Method::Temporal,
        Method::Joint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::FrameDifference => "frame-diff",
            Method::Spatial => "spatial",
            Method::Temporal => "temporal",
            Method::Joint => "joint",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame-diff" => Ok(Method::FrameDifference),
            "spatial" => Ok(Method::Spatial),
            "temporal" => Ok(Method::Temporal),
            "joint" => Ok(Method::Joint),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected frame-diff, spatial, temporal or joint)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub imu: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dt: f64,
    pub threshold_a: f64,
    pub threshold_b: f64,
    pub segment_mode: SegmentMode,
    pub filter_k: usize,
    pub filter_dmin: f64,
    pub ransac: RansacConfig,
    /// Cloud time scale in px/s; `None` uses `width / dt`.
    pub time_scale: Option<f64>,
    pub iou_min: f64,
    /// Padding around each spatial component when cutting the joint method's
    /// point cloud, pixels.
    pub roi_margin: f64,
    pub diff_threshold: u32,
    pub margin: f64,
    pub reference: ReferenceTime,
    /// Planar scene depth for translation compensation; `None` disables it.
    pub depth: Option<f64>,
    pub method: Method,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            threshold_a: 0.3,
            threshold_b: 0.25,
            segment_mode: SegmentMode::Late,
            filter_k: 5,
            filter_dmin: 0.2,
            ransac: RansacConfig::default(),
            time_scale: None,
            iou_min: 0.5,
            roi_margin: 40.0,
            diff_threshold: 2,
            margin: 2.0,
            reference: ReferenceTime::WindowStart,
            depth: None,
            method: Method::Joint,
            workers: 0,
            paths: Paths::default(),
        }
    }
}

fn bad(key: &str, v: &str) -> Error {
    Error::InvalidArgument(format!("config {key}: bad value {v:?}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return fail("window.dt must be positive");
        }
        if !self.threshold_a.is_finite() || !self.threshold_b.is_finite() {
            return fail("spatial.a and spatial.b must be finite");
        }
        if self.filter_k < 3 || self.filter_k.is_multiple_of(2) {
            return fail("filter.k must be odd and >= 3");
        }
        if !(0.0..=1.0).contains(&self.filter_dmin) {
            return fail("filter.dmin must lie in [0, 1]");
        }
        self.ransac.validate()?;
        if let Some(s) = self.time_scale {
            if !(s > 0.0) || !s.is_finite() {
                return fail("cloud.time_scale must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.iou_min) {
            return fail("fusion.iou_min must lie in [0, 1]");
        }
        if !(self.roi_margin >= 0.0) || !self.roi_margin.is_finite() {
            return fail("fusion.roi_margin must be finite and >= 0");
        }
        if !(self.margin >= 0.0) {
            return fail("compensation.margin must be >= 0");
        }
        if let Some(d) = self.depth {
            if !(d > 0.0) || !d.is_finite() {
                return fail("compensation.depth must be positive");
            }
        }
        Ok(())
    }

    pub fn time_scale_for(&self, geometry: &CameraIntrinsics) -> f64 {
        self.time_scale.unwrap_or(geometry.width as f64 / self.dt)
    }

    /// Flat `section.key=value` lines; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key=value", i + 1)))?;
            let (key, v) = (key.trim(), v.trim());
            match key {
                "window.dt" => c.dt = num(key, v)?,
                "spatial.a" => c.threshold_a = num(key, v)?,
                "spatial.b" => c.threshold_b = num(key, v)?,
                "spatial.mode" => {
                    c.segment_mode = match v {
                        "late" => SegmentMode::Late,
                        "two-sided" => SegmentMode::TwoSided,
                        _ => return Err(bad(key, v)),
                    }
                }
                "filter.k" => c.filter_k = num(key, v)?,
                "filter.dmin" => c.filter_dmin = num(key, v)?,
                "ransac.iterations" => c.ransac.iterations = num(key, v)?,
                "ransac.theta" => c.ransac.theta = num(key, v)?,
                "ransac.min_inliers" => c.ransac.min_inliers = num(key, v)?,
                "ransac.min_inlier_fraction" => c.ransac.min_inlier_fraction = num(key, v)?,
                "ransac.seed" => c.ransac.seed = num(key, v)?,
                "ransac.max_models" => c.ransac.max_models = num(key, v)?,
                "ransac.anchor" => {
                    c.ransac.anchor = match v {
                        "circumcenter" => AnchorMode::Circumcenter,
                        "first-sample" => AnchorMode::FirstSample,
                        _ => return Err(bad(key, v)),
                    }
                }
                "ransac.neighbors" => c.ransac.neighbors = num(key, v)?,
                "ransac.neighbor_radius" => c.ransac.neighbor_radius = num(key, v)?,
                "ransac.verify_sample" => c.ransac.verify_sample = num(key, v)?,
                "ransac.attempt_factor" => c.ransac.attempt_factor = num(key, v)?,
                "cloud.time_scale" => c.time_scale = if v == "auto" { None } else { Some(num(key, v)?) },
                "fusion.iou_min" => c.iou_min = num(key, v)?,
                "fusion.roi_margin" => c.roi_margin = num(key, v)?,
                "baseline.diff_threshold" => c.diff_threshold = num(key, v)?,
                "compensation.margin" => c.margin = num(key, v)?,
                "compensation.reference" => {
                    c.reference = match v {
                        "start" => ReferenceTime::WindowStart,
                        "end" => ReferenceTime::WindowEnd,
                        _ => return Err(bad(key, v)),
                    }
                }
                "compensation.depth" => c.depth = if v == "none" { None } else { Some(num(key, v)?) },
                "pipeline.method" => c.method = v.parse()?,
                "pipeline.workers" => c.workers = num(key, v)?,
                "paths.events" => c.paths.events = opt_path(v),
                "paths.imu" => c.paths.imu = opt_path(v),
                "paths.intrinsics" => c.paths.intrinsics = opt_path(v),
                "paths.gt" => c.paths.ground_truth = opt_path(v),
                "paths.out" => c.paths.out = opt_path(v),
                "paths.debug_dir" => c.paths.debug_dir = opt_path(v),
                other => return Err(Error::InvalidArgument(format!("unknown config key {other}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_stage("config"))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let r = &self.ransac;
        kv("window.dt", self.dt.to_string());
        kv("spatial.a", self.threshold_a.to_string());
        kv("spatial.b", self.threshold_b.to_string());
        kv(
            "spatial.mode",
            match self.segment_mode {
                SegmentMode::Late => "late",
                SegmentMode::TwoSided => "two-sided",
            }
            .into(),
        );
        kv("filter.k", self.filter_k.to_string());
        kv("filter.dmin", self.filter_dmin.to_string());
        kv("ransac.iterations", r.iterations.to_string());
        kv("ransac.theta", r.theta.to_string());
        kv("ransac.min_inliers", r.min_inliers.to_string());
        kv("ransac.min_inlier_fraction", r.min_inlier_fraction.to_string());
        kv("ransac.seed", r.seed.to_string());
        kv("ransac.max_models", r.max_models.to_string());
        kv(
            "ransac.anchor",
            match r.anchor {
                AnchorMode::Circumcenter => "circumcenter",
                AnchorMode::FirstSample => "first-sample",
            }
            .into(),
        );
        kv("ransac.neighbors", r.neighbors.to_string());
        kv("ransac.neighbor_radius", r.neighbor_radius.to_string());
        kv("ransac.verify_sample", r.verify_sample.to_string());
        kv("ransac.attempt_factor", r.attempt_factor.to_string());
        kv(
            "cloud.time_scale",
            self.time_scale.map_or("auto".into(), |s| s.to_string()),
        );
        kv("fusion.iou_min", self.iou_min.to_string());
        kv("fusion.roi_margin", self.roi_margin.to_string());
        kv("baseline.diff_threshold", self.diff_threshold.to_string());
        kv("compensation.margin", self.margin.to_string());
        kv(
            "compensation.reference",
            match self.reference {
                ReferenceTime::WindowStart => "start",
                ReferenceTime::WindowEnd => "end",
            }
            .into(),
        );
        kv(
            "compensation.depth",
            self.depth.map_or("none".into(), |d| d.to_string()),
        );
        kv("pipeline.method", self.method.as_str().into());
        kv("pipeline.workers", self.workers.to_string());
        let p = |v: &Option<PathBuf>| v.as_ref().map_or(String::new(), |p| p.display().to_string());
        kv("paths.events", p(&self.paths.events));
        kv("paths.imu", p(&self.paths.imu));
        kv("paths.intrinsics", p(&self.paths.intrinsics));
        kv("paths.gt", p(&self.paths.ground_truth));
        kv("paths.out", p(&self.paths.out));
        kv("paths.debug_dir", p(&self.paths.debug_dir));
        out
    }

    fn compensation(&self) -> CompensationConfig {
        CompensationConfig {
            margin: self.margin,
            reference: self.reference,
            translation: self.depth.map(|depth| TranslationConfig { depth }),
            ..CompensationConfig::default()
        }
    }
}

/// Intermediate images of one window, encoded as PGM/PBM.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugImages {
    pub files: Vec<(&'static str, Vec<u8>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub index: usize,
    pub t0: f64,
    pub events: usize,
    pub dropped: usize,
    pub detections: Vec<Detection>,
    pub debug: Option<DebugImages>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub method: Method,
    pub windows: Vec<WindowResult>,
    pub score: Option<Score>,
}

impl DetectOutcome {
    pub fn detections(&self) -> Vec<Detection> {
        self.windows.iter().flat_map(|w| w.detections.iter().cloned()).collect()
    }
}

struct Spatial {
    filtered: BinaryMask,
    images: Vec<(&'static str, Vec<u8>)>,
}

fn spatial_stage(
    events: &[crate::compensation::CompensatedEvent],
    omega: &Vector3<f64>,
    window: &EventWindow,
    k: &CameraIntrinsics,
    cfg: &PipelineConfig,
    debug: bool,
) -> Result<Spatial> {
    let (w, h) = (k.width as usize, k.height as usize);
    let count = rasterize_count(events, k);
    let time = time_image(events, &count);
    let rho = match normalize_confidence(&time, window.dt) {
        Ok(r) => r,
        Err(Error::EmptyWindow) => {
            return Ok(Spatial {
                filtered: BinaryMask::new(w, h),
                images: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let tau = adaptive_threshold(omega, cfg.threshold_a, cfg.threshold_b);
    let mask = segment_with(&rho, tau, cfg.segment_mode);
    let contours = sobel_contours(&mask);
    let filtered = morphological_filter(&contours, &mask, cfg.filter_k, cfg.filter_dmin)?;
    let images = if debug {
        vec![
            ("count.pgm", pnm::count_pgm(&count)),
            ("time.pgm", pnm::time_pgm(&time, window.t0, window.dt)),
            ("confidence.pgm", pnm::confidence_pgm(&rho)),
            ("segment.pbm", pnm::mask_pbm(&mask)),
            ("contours.pbm", pnm::mask_pbm(&contours.image)),
            ("filtered.pbm", pnm::mask_pbm(&filtered)),
        ]
    } else {
        Vec::new()
    };
    Ok(Spatial { filtered, images })
}

/// Deterministic per-window, per-region seed, independent of scheduling.
fn derive_seed(base: u64, window: usize, region: usize) -> u64 {
    let mut z = base
        ^ (window as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (region as u64).wrapping_mul(0xd1b5_4a32_d192_ed03);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn temporal_mask(cloud: &[CloudPoint], cfg: &RansacConfig, k: &CameraIntrinsics) -> BinaryMask {
    let fits = extract_models(cloud, cfg);
    let inliers: Vec<CloudPoint> = fits.iter().flat_map(|f| f.inliers.iter().map(|&i| cloud[i])).collect();
    backproject_inliers(&inliers, k)
}

struct Context<'a> {
    windows: &'a [(EventWindow, Vec<ImuSample>)],
    imu: &'a [ImuSample],
    k: &'a CameraIntrinsics,
    cfg: &'a PipelineConfig,
    debug: bool,
}

fn process_window(ctx: &Context<'_>, index: usize) -> Result<WindowResult> {
    let (window, imu) = &ctx.windows[index];
    let (cfg, k) = (ctx.cfg, ctx.k);
    let mut debug_files = Vec::new();

    if cfg.method == Method::FrameDifference {
        let other = if index + 1 < ctx.windows.len() {
            Some(&ctx.windows[index + 1].0)
        } else if index > 0 {
            Some(&ctx.windows[index - 1].0)
        } else {
            None
        };
        let detections = match other {
            Some(o) => frame_difference_baseline(&window.events, &o.events, k, cfg.diff_threshold, window.t0),
            None => Vec::new(),
        };
        return Ok(WindowResult {
            index,
            t0: window.t0,
            events: window.events.len(),
            dropped: 0,
            detections,
            debug: None,
        });
    }

    let comp_cfg = cfg.compensation();
    let t_ref = match cfg.reference {
        ReferenceTime::WindowStart => window.t0,
        ReferenceTime::WindowEnd => window.t0 + window.dt,
    };
    let v_ref = if comp_cfg.translation.is_some() {
        integrate_velocity(ctx.imu, t_ref, &comp_cfg.alignment)
    } else {
        Vector3::zeros()
    };
    let cw = compensate_window_from(window, imu, k, &comp_cfg, &v_ref);
    let events = &cw.events;

    let spatial = spatial_stage(events, &cw.angular_velocity, window, k, cfg, ctx.debug)
        .map_err(|e| e.in_stage("spatial reasoning"))?;
    debug_files.extend(spatial.images);

    let scale = cfg.time_scale_for(k);
    let detections = match cfg.method {
        Method::Spatial => spatial_detections(&spatial.filtered, window.t0),
        Method::Temporal => {
            let cloud = build_cloud(events, window.t0, scale).map_err(|e| e.in_stage("temporal reasoning"))?;
            let rcfg = RansacConfig {
                seed: derive_seed(cfg.ransac.seed, index, 0),
                ..cfg.ransac.clone()
            };
            let tmask = temporal_mask(&cloud, &rcfg, k);
            if ctx.debug {
                debug_files.push(("temporal.pbm", pnm::mask_pbm(&tmask)));
            }
            temporal_detections(&tmask, window.t0)
        }
        Method::Joint => {
            // the spatial cue localises the object; the column is searched
            // for in the events around each spatial component
            let mut tmask = BinaryMask::new(k.width as usize, k.height as usize);
            let regions = connected_components(&spatial.filtered).components;
            for (ri, region) in regions.iter().enumerate() {
                let m = cfg.roi_margin;
                let b = region.bbox;
                let (x0, y0) = (b.x_min as f64 - m, b.y_min as f64 - m);
                let (x1, y1) = (b.x_max as f64 + m, b.y_max as f64 + m);
                let roi: Vec<_> = events
                    .iter()
                    .filter(|e| e.x >= x0 && e.x <= x1 && e.y >= y0 && e.y <= y1)
                    .copied()
                    .collect();
                let cloud = build_cloud(&roi, window.t0, scale).map_err(|e| e.in_stage("temporal reasoning"))?;
                let rcfg = RansacConfig {
                    seed: derive_seed(cfg.ransac.seed, index, ri + 1),
                    ..cfg.ransac.clone()
                };
                tmask = tmask.union(&temporal_mask(&cloud, &rcfg, k));
            }
            if ctx.debug {
                debug_files.push(("temporal.pbm", pnm::mask_pbm(&tmask)));
            }
            fuse(&spatial.filtered, &tmask, window.t0).map_err(|e| e.in_stage("fusion"))?
        }
        Method::FrameDifference => unreachable!("handled above"),
    };

    Ok(WindowResult {
        index,
        t0: window.t0,
        events: window.events.len(),
        dropped: cw.dropped,
        detections,
        debug: ctx.debug.then_some(DebugImages { files: debug_files }),
    })
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Run the configured method over an in-memory stream.
pub fn detect(
    events: &[Event],
    imu: &[ImuSample],
    k: &CameraIntrinsics,
    ground_truth: Option<&[GroundTruthBox]>,
    cfg: &PipelineConfig,
    debug: bool,
) -> Result<DetectOutcome> {
    cfg.validate()?;
    let windows = slice_windows(events, imu, cfg.dt).map_err(|e| e.in_stage("windowing"))?;
    let ctx = Context {
        windows: &windows,
        imu,
        k,
        cfg,
        debug,
    };
    let results: Vec<Result<WindowResult>> = with_workers(cfg.workers, || {
        (0..windows.len())
            .into_par_iter()
            .map(|i| process_window(&ctx, i))
            .collect()
    })?;
    let windows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let score = match ground_truth {
        Some(gt) => {
            let dets: Vec<Detection> = windows.iter().flat_map(|w| w.detections.iter().cloned()).collect();
            Some(score(&dets, gt, cfg.iou_min).map_err(|e| e.in_stage("scoring"))?)
        }
        None => None,
    };
    Ok(DetectOutcome {
        method: cfg.method,
        windows,
        score,
    })
}

pub fn detections_to_text(outcome: &DetectOutcome) -> String {
    let mut out = String::from("# t0,x_min,y_min,x_max,y_max,pixels,source\n");
    for w in &outcome.windows {
        if w.detections.is_empty() {
            let _ = writeln!(out, "{},,,,,0,none", w.t0);
        }
        for d in &w.detections {
            let b = d.bbox;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                w.t0,
                b.x_min,
                b.y_min,
                b.x_max,
                b.y_max,
                d.pixel_count(),
                d.source.as_str()
            );
        }
    }
    out
}

pub fn metrics_to_text(method: Method, s: &Score, iou_min: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method={}", method.as_str());
    let _ = writeln!(out, "iou_min={iou_min}");
    let _ = writeln!(out, "mean_iou={:.6}", s.mean_iou);
    let _ = writeln!(out, "accuracy={:.6}", s.accuracy);
    let _ = writeln!(out, "windows={}", s.per_window.len());
    let _ = writeln!(out, "# t0,iou,truth_x_min,truth_y_min,truth_x_max,truth_y_max,matched");
    for w in &s.per_window {
        let t = w.truth;
        let m = w.matched.map_or("none".to_string(), |b| {
            format!("{}:{}:{}:{}", b.x_min, b.y_min, b.x_max, b.y_max)
        });
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{},{},{}",
            w.window_t0, w.iou, t.x_min, t.y_min, t.x_max, t.y_max, m
        );
    }
    out
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Load the configured input files, run detection and write
/// `detections.txt`, `metrics.txt` (with ground truth) and debug images.
pub fn run_detect(cfg: &PipelineConfig) -> Result<DetectOutcome> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Error::InvalidArgument(format!("no {what} file given")))
    };
    let paths = &cfg.paths;
    let k =
        CameraIntrinsics::load(need(&paths.intrinsics, "intrinsics")?).map_err(|e| e.in_stage("loading intrinsics"))?;
    let events = load_events(need(&paths.events, "events")?, &k).map_err(|e| e.in_stage("loading events"))?;
    let imu = load_imu(need(&paths.imu, "IMU")?).map_err(|e| e.in_stage("loading IMU"))?;
    let gt = match &paths.ground_truth {
        Some(p) => Some(load_ground_truth(p).map_err(|e| e.in_stage("loading ground truth"))?),
        None => None,
    };
    let outcome = detect(&events, &imu, &k, gt.as_deref(), cfg, paths.debug_dir.is_some())?;

    let out_dir = paths.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_file(&out_dir.join("detections.txt"), detections_to_text(&outcome))?;
    if let Some(s) = &outcome.score {
        write_file(
            &out_dir.join("metrics.txt"),
            metrics_to_text(outcome.method, s, cfg.iou_min),
        )?;
    }
    if let Some(dir) = &paths.debug_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for w in &outcome.windows {
            if let Some(dbg) = &w.debug {
                for (name, bytes) in &dbg.files {
                    write_file(&dir.join(format!("w{:04}_{name}", w.index)), bytes)?;
                }
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub scene: String,
    pub method: Method,
    pub mean_iou: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn get(&self, scene: &str, method: Method) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.scene == scene && r.method == method)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("scene,method,mean_iou,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6}",
                r.scene,
                r.method.as_str(),
                r.mean_iou,
                r.accuracy
            );
        }
        out
    }
}

/// Configuration used for one scene: translation compensation is switched on
/// at the scene's depth when the camera translates and no depth is set.
pub fn scene_config(base: &PipelineConfig, scene: &SceneSpec) -> PipelineConfig {
    let mut cfg = base.clone();
    if cfg.depth.is_none() && scene.ego.has_translation() {
        cfg.depth = Some(scene.ego.depth);
    }
    cfg
}

/// Run every method on the given scenes.
pub fn run_scenes(scenes: &[SceneSpec], base: &PipelineConfig) -> Result<SuiteReport> {
    let mut rows = Vec::new();
    for scene in scenes {
        let synth = generate(scene, base.dt).map_err(|e| e.in_stage("synthesis"))?;
        let cfg = scene_config(base, scene);
        for method in Method::ALL {
            let mcfg = PipelineConfig { method, ..cfg.clone() };
            let outcome = detect(
                &synth.events,
                &synth.imu,
                &scene.geometry,
                Some(&synth.ground_truth),
                &mcfg,
                false,
            )?;
            let s = outcome.score.expect("ground truth supplied");
            log::info!(
                "{} {}: mean_iou={:.3} accuracy={:.3}",
                scene.name,
                method.as_str(),
                s.mean_iou,
                s.accuracy
            );
            rows.push(SuiteRow {
                scene: scene.name.clone(),
                method,
                mean_iou: s.mean_iou,
                accuracy: s.accuracy,
            });
        }
    }
    Ok(SuiteReport { rows })
}

/// Run the standard synthetic suite; with an output directory, also write
/// `report.csv`.
pub fn run_suite(base: &PipelineConfig, out_dir: Option<&Path>) -> Result<SuiteReport> {
    let report = run_scenes(&standard_suite(), base)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("report.csv"), report.to_text())?;
    }
    Ok(report)
}

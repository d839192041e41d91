//! Contour-based fusion of the spatial and temporal masks, plus detection
//! scoring and the frame-difference baseline.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{CameraIntrinsics, Event};
use crate::spatial::{connected_components, fill_convex_hull, pixel_of, BBox, BinaryMask};
use crate::temporal::CloudPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectionSource {
    Spatial,
    Temporal,
    Fused,
    FrameDifference,
}

impl DetectionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionSource::Spatial => "spatial",
            DetectionSource::Temporal => "temporal",
            DetectionSource::Fused => "fused",
            DetectionSource::FrameDifference => "frame-diff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub mask: BinaryMask,
    pub bbox: BBox,
    pub window_t0: f64,
    pub source: DetectionSource,
}

impl Detection {
    /// `None` for an empty mask.
    pub fn from_mask(mask: BinaryMask, window_t0: f64, source: DetectionSource) -> Option<Self> {
        let bbox = mask.bbox()?;
        Some(Self {
            mask,
            bbox,
            window_t0,
            source,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub window_t0: f64,
}

pub fn backproject_inliers(points: &[CloudPoint], geometry: &CameraIntrinsics) -> BinaryMask {
    let (w, h) = (geometry.width as usize, geometry.height as usize);
    let mut mask = BinaryMask::new(w, h);
    for p in points {
        if let Some((x, y)) = pixel_of(p.x, p.y, w, h) {
            mask.set(x, y, true);
        }
    }
    mask
}

/// Filled convex hull of each 8-connected piece of the temporal mask.
pub fn temporal_regions(temporal: &BinaryMask) -> Vec<BinaryMask> {
    connected_components(temporal)
        .components
        .iter()
        .map(|c| fill_convex_hull(&c.pixels, temporal.width(), temporal.height()))
        .collect()
}

pub fn temporal_detections(temporal: &BinaryMask, window_t0: f64) -> Vec<Detection> {
    temporal_regions(temporal)
        .into_iter()
        .filter_map(|b| Detection::from_mask(b, window_t0, DetectionSource::Temporal))
        .collect()
}

pub fn spatial_detections(spatial: &BinaryMask, window_t0: f64) -> Vec<Detection> {
    let (w, h) = (spatial.width(), spatial.height());
    connected_components(spatial)
        .components
        .iter()
        .filter_map(|c| Detection::from_mask(c.to_mask(w, h), window_t0, DetectionSource::Spatial))
        .collect()
}

/// Grow the seed pixels through `foreground` (8-connected). Returns the grown
/// region, or `None` as soon as it reaches a pixel outside `limit`.
fn grow_within(seeds: &[(usize, usize)], foreground: &BinaryMask, limit: &BinaryMask) -> Option<BinaryMask> {
    let (w, h) = (foreground.width(), foreground.height());
    let mut region = BinaryMask::new(w, h);
    let mut queue = VecDeque::new();
    for &(x, y) in seeds {
        if !limit.get(x, y) {
            return None;
        }
        if !region.get(x, y) {
            region.set(x, y, true);
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if !foreground.get_signed(nx, ny) {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if region.get(nx, ny) {
                    continue;
                }
                if !limit.get(nx, ny) {
                    return None;
                }
                region.set(nx, ny, true);
                queue.push_back((nx, ny));
            }
        }
    }
    Some(region)
}

/// Fuse the two masks of one window.
///
/// Each temporal piece defines a boundary region `B` (its filled convex hull).
/// The spatial components touching `B` are grown through the union of both
/// masks; if the growth would leave `B` the detection is `B`, otherwise it is
/// the grown region. Spatial components touching no `B` pass through and
/// temporal regions touching no spatial component are dropped.
pub fn fuse(spatial: &BinaryMask, temporal: &BinaryMask, window_t0: f64) -> Result<Vec<Detection>> {
    if !spatial.same_shape(temporal) {
        return Err(Error::InvalidArgument(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            spatial.width(),
            spatial.height(),
            temporal.width(),
            temporal.height()
        )));
    }
    let (w, h) = (spatial.width(), spatial.height());
    let spatial_cc = connected_components(spatial);
    let foreground = spatial.union(temporal);
    let mut used = vec![false; spatial_cc.components.len()];
    let mut out = Vec::new();

    for region in temporal_regions(temporal) {
        let mut seeds = Vec::new();
        for (ci, comp) in spatial_cc.components.iter().enumerate() {
            if comp.pixels.iter().any(|&(x, y)| region.get(x, y)) {
                used[ci] = true;
                seeds.extend_from_slice(&comp.pixels);
            }
        }
        if seeds.is_empty() {
            continue;
        }
        let mask = grow_within(&seeds, &foreground, &region).unwrap_or(region);
        out.extend(Detection::from_mask(mask, window_t0, DetectionSource::Fused));
    }
    for (ci, comp) in spatial_cc.components.iter().enumerate() {
        if !used[ci] {
            out.extend(Detection::from_mask(
                comp.to_mask(w, h),
                window_t0,
                DetectionSource::Spatial,
            ));
        }
    }
    Ok(out)
}

/// Box intersection over union; zero-area boxes score 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if !a.is_valid() || !b.is_valid() {
        return 0.0;
    }
    let Some(inter) = a.intersection(b) else {
        return 0.0;
    };
    let i = inter.area() as f64;
    i / (a.area() as f64 + b.area() as f64 - i)
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowScore {
    pub window_t0: f64,
    pub truth: BBox,
    pub matched: Option<BBox>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub mean_iou: f64,
    /// Fraction in `[0, 1]` of ground-truth boxes matched at `iou >= iou_min`.
    pub accuracy: f64,
    pub per_window: Vec<WindowScore>,
}

/// Windows match when their reference times agree to this many seconds.
pub const WINDOW_T0_TOLERANCE: f64 = 1e-6;

/// Score detections against ground truth. Inside a window, boxes are paired
/// greedily by descending IoU; unmatched truth scores 0.
pub fn score(detections: &[Detection], ground_truth: &[GroundTruthBox], iou_min: f64) -> Result<Score> {
    if ground_truth.is_empty() {
        return Err(Error::InvalidArgument("no ground truth to score against".into()));
    }
    let mut windows: Vec<f64> = Vec::new();
    for g in ground_truth {
        if !windows.iter().any(|&t| (t - g.window_t0).abs() <= WINDOW_T0_TOLERANCE) {
            windows.push(g.window_t0);
        }
    }
    let mut per_window = Vec::with_capacity(ground_truth.len());
    for &t0 in &windows {
        let truths: Vec<&GroundTruthBox> = ground_truth
            .iter()
            .filter(|g| (g.window_t0 - t0).abs() <= WINDOW_T0_TOLERANCE)
            .collect();
        let dets: Vec<&Detection> = detections
            .iter()
            .filter(|d| (d.window_t0 - t0).abs() <= WINDOW_T0_TOLERANCE)
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (gi, g) in truths.iter().enumerate() {
            for (di, d) in dets.iter().enumerate() {
                let v = iou(&g.bbox, &d.bbox);
                if v > 0.0 {
                    pairs.push((v, gi, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = vec![None; truths.len()];
        let mut d_used = vec![false; dets.len()];
        for (v, gi, di) in pairs {
            if g_used[gi].is_none() && !d_used[di] {
                g_used[gi] = Some((v, di));
                d_used[di] = true;
            }
        }
        for (gi, g) in truths.iter().enumerate() {
            let (v, matched) = match g_used[gi] {
                Some((v, di)) => (v, Some(dets[di].bbox)),
                None => (0.0, None),
            };
            per_window.push(WindowScore {
                window_t0: g.window_t0,
                truth: g.bbox,
                matched,
                iou: v,
            });
        }
    }
    let ious: Vec<f64> = per_window.iter().map(|w| w.iou).collect();
    let hits: Vec<f64> = ious.iter().map(|&v| if v >= iou_min { 1.0 } else { 0.0 }).collect();
    let n = ious.len() as f64;
    Ok(Score {
        mean_iou: pairwise_sum(&ious) / n,
        accuracy: pairwise_sum(&hits) / n,
        per_window,
    })
}

fn raw_counts(events: &[Event], w: usize, h: usize) -> Vec<i64> {
    let mut c = vec![0i64; w * h];
    for e in events {
        let (x, y) = (e.x as usize, e.y as usize);
        if x < w && y < h {
            c[y * w + x] += 1;
        }
    }
    c
}

/// Uncompensated baseline: threshold the absolute difference of two count
/// images and report each connected blob. Detections carry `window_t0`.
pub fn frame_difference_baseline(
    window_a: &[Event],
    window_b: &[Event],
    geometry: &CameraIntrinsics,
    diff_threshold: u32,
    window_t0: f64,
) -> Vec<Detection> {
    let (w, h) = (geometry.width as usize, geometry.height as usize);
    let a = raw_counts(window_a, w, h);
    let b = raw_counts(window_b, w, h);
    let thr = diff_threshold.max(1) as i64;
    let mask = BinaryMask::from_fn(w, h, |x, y| (a[y * w + x] - b[y * w + x]).abs() >= thr);
    connected_components(&mask)
        .components
        .iter()
        .filter_map(|c| Detection::from_mask(c.to_mask(w, h), window_t0, DetectionSource::FrameDifference))
        .collect()
}

pub fn parse_ground_truth(text: &str, origin: &Path) -> Result<Vec<GroundTruthBox>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::parse(origin, i + 1, "expected t0,x_min,y_min,x_max,y_max"));
        }
        let t0: f64 = cols[0].parse().map_err(|_| Error::parse(origin, i + 1, "bad t0"))?;
        let mut v = [0i64; 4];
        for k in 0..4 {
            v[k] = cols[k + 1]
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "bad box coordinate"))?;
        }
        let bbox = BBox::new(v[0], v[1], v[2], v[3]);
        if !bbox.is_valid() {
            return Err(Error::Validation(format!(
                "{}:{}: empty ground-truth box",
                origin.display(),
                i + 1
            )));
        }
        out.push(GroundTruthBox { bbox, window_t0: t0 });
    }
    Ok(out)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthBox>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text, path)
}

pub fn ground_truth_to_text(boxes: &[GroundTruthBox]) -> String {
    let mut out = String::new();
    for g in boxes {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            g.window_t0, g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max
        );
    }
    out
}

//! Structure-based temporal reasoning.
//!
//! Compensated events become points `(x, y, (t - t0) * s)`. A linearly moving
//! object traces a column in that cloud while compensated background collapses
//! onto scattered vertical lines, so a cylinder found by random sample
//! consensus isolates the object's events.
//!
//! Each hypothesis uses four points: the plane through `p1, p2, p3` gives the
//! axis direction (its normal), their circumcentre anchors the axis, and the
//! distance from `p4` to the axis gives the radius. The plane normal is only
//! the column axis when the three points lie on one cross-section, so `p2` and
//! `p3` are drawn from the nearest-in-time neighbours of `p1`.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compensation::CompensatedEvent;
use crate::error::{Error, Result};

/// `(x, y, scaled time)`.
pub type CloudPoint = Vector3<f64>;

pub fn build_cloud(events: &[CompensatedEvent], t0: f64, scale: f64) -> Result<Vec<CloudPoint>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time scale must be positive, got {scale}"
        )));
    }
    Ok(events
        .iter()
        .map(|e| Vector3::new(e.x, e.y, (e.t - t0) * scale))
        .collect())
}

const DEGENERATE_NORM: f64 = 1e-9;

/// Unit normal of the plane through three points, or `None` when two points
/// coincide or all three are collinear.
pub fn axis_from_sample(p1: &CloudPoint, p2: &CloudPoint, p3: &CloudPoint) -> Option<Vector3<f64>> {
    let d2 = p2 - p1;
    let d3 = p3 - p1;
    let (l2, l3) = (d2.norm(), d3.norm());
    if l2 < DEGENERATE_NORM || l3 < DEGENERATE_NORM {
        return None;
    }
    let n = (d2 / l2).cross(&(d3 / l3));
    let len = n.norm();
    if len < DEGENERATE_NORM {
        return None;
    }
    Some(n / len)
}

/// Distance from `p` to the line through `anchor` along the unit `axis`.
pub fn radius_from_sample(anchor: &CloudPoint, p: &CloudPoint, axis: &Vector3<f64>) -> f64 {
    (p - anchor).cross(axis).norm()
}

/// Centre of the circle through three non-collinear points.
pub fn circumcenter(p1: &CloudPoint, p2: &CloudPoint, p3: &CloudPoint) -> Option<CloudPoint> {
    let a = p2 - p1;
    let b = p3 - p1;
    let axb = a.cross(&b);
    let den = 2.0 * axb.norm_squared();
    if den < DEGENERATE_NORM * DEGENERATE_NORM {
        return None;
    }
    Some(p1 + (axb.cross(&a) * b.norm_squared() + b.cross(&axb) * a.norm_squared()) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderModel {
    pub anchor: CloudPoint,
    /// Unit direction.
    pub axis: Vector3<f64>,
    pub radius: f64,
}

impl CylinderModel {
    pub fn to_record(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.anchor.x, self.anchor.y, self.anchor.z, self.axis.x, self.axis.y, self.axis.z, self.radius
        )
    }
}

/// `| dist(p, axis line) - radius |`.
pub fn residual(model: &CylinderModel, p: &CloudPoint) -> f64 {
    (radius_from_sample(&model.anchor, p, &model.axis) - model.radius).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorMode {
    /// Circumcentre of the three axis-defining points.
    #[default]
    Circumcenter,
    /// The first sampled point itself.
    FirstSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    /// Accepted hypotheses to evaluate.
    pub iterations: usize,
    /// Inlier band half-width, cloud units.
    pub theta: f64,
    pub min_inliers: usize,
    /// The effective minimum is `max(min_inliers, ceil(fraction * n))`.
    pub min_inlier_fraction: f64,
    pub seed: u64,
    pub max_models: usize,
    pub anchor: AnchorMode,
    /// Candidate pool size for `p2` and `p3`: the nearest points to `p1` in
    /// scaled time that also lie within `neighbor_radius` of it in x-y.
    pub neighbors: usize,
    pub neighbor_radius: f64,
    /// Reject hypotheses whose radius from `p4` disagrees with the
    /// circumradius of `p1..p3` by more than `theta`.
    pub verify_sample: bool,
    /// Give up after `iterations * attempt_factor` draws.
    pub attempt_factor: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            theta: 2.0,
            min_inliers: 50,
            min_inlier_fraction: 0.01,
            seed: 0x5eed,
            max_models: 1,
            anchor: AnchorMode::Circumcenter,
            neighbors: 4,
            neighbor_radius: 40.0,
            verify_sample: true,
            attempt_factor: 100,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("ransac.iterations must be >= 1".into()));
        }
        if !(self.theta > 0.0) {
            return Err(Error::InvalidArgument("ransac.theta must be positive".into()));
        }
        if self.max_models == 0 {
            return Err(Error::InvalidArgument("ransac.max_models must be >= 1".into()));
        }
        if self.neighbors < 2 {
            return Err(Error::InvalidArgument("ransac.neighbors must be >= 2".into()));
        }
        if !(self.neighbor_radius > 0.0) {
            return Err(Error::InvalidArgument("ransac.neighbor_radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::InvalidArgument(
                "ransac.min_inlier_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn required_inliers(&self, n: usize) -> usize {
        self.min_inliers
            .max((self.min_inlier_fraction * n as f64).ceil() as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFit {
    pub model: CylinderModel,
    /// Indices into the cloud passed in, ascending.
    pub inliers: Vec<usize>,
    /// Hypotheses evaluated.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoModel {
    TooFewPoints(usize),
    BelowMinInliers { best: usize, required: usize },
    NoValidSample,
}

impl std::fmt::Display for NoModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoModel::TooFewPoints(n) => write!(f, "cloud has {n} points, need at least 4"),
            NoModel::BelowMinInliers { best, required } => {
                write!(f, "best consensus {best} below required {required}")
            }
            NoModel::NoValidSample => write!(f, "no non-degenerate sample found"),
        }
    }
}

fn count_inliers(cloud: &[CloudPoint], model: &CylinderModel, theta: f64) -> usize {
    cloud
        .par_iter()
        .with_min_len(4096)
        .filter(|p| residual(model, p) <= theta)
        .count()
}

pub fn inlier_indices(cloud: &[CloudPoint], model: &CylinderModel, theta: f64) -> Vec<usize> {
    cloud
        .par_iter()
        .enumerate()
        .with_min_len(4096)
        .filter(|(_, p)| residual(model, p) <= theta)
        .map(|(i, _)| i)
        .collect()
}

struct Sampler<'a> {
    cloud: &'a [CloudPoint],
    /// Indices sorted by z, then by index.
    order: Vec<usize>,
    cfg: &'a RansacConfig,
    candidates: Vec<usize>,
}

const SCAN_LIMIT: usize = 512;

impl<'a> Sampler<'a> {
    fn new(cloud: &'a [CloudPoint], cfg: &'a RansacConfig) -> Self {
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        order.sort_by(|&a, &b| cloud[a].z.total_cmp(&cloud[b].z).then(a.cmp(&b)));
        Self {
            cloud,
            order,
            cfg,
            candidates: Vec::with_capacity(cfg.neighbors),
        }
    }

    /// Draw one four-point hypothesis; `None` if the draw is unusable.
    fn draw(&mut self, rng: &mut ChaCha8Rng) -> Option<CylinderModel> {
        let n = self.order.len();
        let pos = rng.random_range(0..n);
        let i1 = self.order[pos];
        let p1 = self.cloud[i1];
        let r2 = self.cfg.neighbor_radius * self.cfg.neighbor_radius;

        self.candidates.clear();
        let (mut down, mut up) = (pos, pos + 1);
        let mut scanned = 0;
        while self.candidates.len() < self.cfg.neighbors && scanned < SCAN_LIMIT {
            let dz_down = (down > 0).then(|| p1.z - self.cloud[self.order[down - 1]].z);
            let dz_up = (up < n).then(|| self.cloud[self.order[up]].z - p1.z);
            let next = match (dz_down, dz_up) {
                (None, None) => break,
                (Some(_), None) => {
                    down -= 1;
                    self.order[down]
                }
                (None, Some(_)) => {
                    up += 1;
                    self.order[up - 1]
                }
                (Some(d), Some(u)) => {
                    if d <= u {
                        down -= 1;
                        self.order[down]
                    } else {
                        up += 1;
                        self.order[up - 1]
                    }
                }
            };
            scanned += 1;
            let q = self.cloud[next];
            let (dx, dy) = (q.x - p1.x, q.y - p1.y);
            if dx * dx + dy * dy <= r2 {
                self.candidates.push(next);
            }
        }
        if self.candidates.len() < 2 {
            return None;
        }
        let picked: Vec<usize> = self.candidates.choose_multiple(rng, 2).copied().collect();
        let (i2, i3) = (picked[0], picked[1]);
        let i4 = rng.random_range(0..n);
        if i4 == i1 || i4 == i2 || i4 == i3 {
            return None;
        }
        let (p2, p3, p4) = (self.cloud[i2], self.cloud[i3], self.cloud[i4]);

        let axis = axis_from_sample(&p1, &p2, &p3)?;
        let anchor = match self.cfg.anchor {
            AnchorMode::Circumcenter => circumcenter(&p1, &p2, &p3)?,
            AnchorMode::FirstSample => p1,
        };
        let radius = radius_from_sample(&anchor, &p4, &axis);
        if self.cfg.verify_sample && self.cfg.anchor == AnchorMode::Circumcenter {
            let circumradius = (p1 - anchor).norm();
            if (radius - circumradius).abs() > self.cfg.theta {
                return None;
            }
        }
        Some(CylinderModel { anchor, axis, radius })
    }
}

/// Best single cylinder by inlier count. Hypotheses are generated serially
/// from the seeded source; ties keep the earliest.
pub fn ransac_cylinder(cloud: &[CloudPoint], cfg: &RansacConfig) -> Result<CylinderFit, NoModel> {
    if cloud.len() < 4 {
        return Err(NoModel::TooFewPoints(cloud.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = Sampler::new(cloud, cfg);
    let max_attempts = cfg.iterations.saturating_mul(cfg.attempt_factor.max(1));

    let mut best: Option<(usize, CylinderModel)> = None;
    let mut evaluated = 0;
    let mut attempts = 0;
    while evaluated < cfg.iterations && attempts < max_attempts {
        attempts += 1;
        let Some(model) = sampler.draw(&mut rng) else {
            continue;
        };
        evaluated += 1;
        let count = count_inliers(cloud, &model, cfg.theta);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
        }
    }
    let Some((count, model)) = best else {
        return Err(NoModel::NoValidSample);
    };
    let required = cfg.required_inliers(cloud.len());
    if count < required {
        return Err(NoModel::BelowMinInliers { best: count, required });
    }
    Ok(CylinderFit {
        model,
        inliers: inlier_indices(cloud, &model, cfg.theta),
        iterations: evaluated,
    })
}

/// Repeated consensus with inlier removal. Inlier indices refer to the input
/// cloud. The minimum-inlier rule is evaluated against the full cloud size.
pub fn extract_models(cloud: &[CloudPoint], cfg: &RansacConfig) -> Vec<CylinderFit> {
    let mut fits = Vec::new();
    let mut remaining: Vec<usize> = (0..cloud.len()).collect();
    let round_cfg = RansacConfig {
        min_inliers: cfg.required_inliers(cloud.len()),
        min_inlier_fraction: 0.0,
        ..cfg.clone()
    };
    for round in 0..cfg.max_models {
        let sub: Vec<CloudPoint> = remaining.iter().map(|&i| cloud[i]).collect();
        let round_cfg = RansacConfig {
            seed: cfg.seed.wrapping_add(round as u64),
            ..round_cfg.clone()
        };
        match ransac_cylinder(&sub, &round_cfg) {
            Ok(mut fit) => {
                let taken: Vec<usize> = fit.inliers.iter().map(|&j| remaining[j]).collect();
                let mut keep = vec![true; sub.len()];
                for &j in &fit.inliers {
                    keep[j] = false;
                }
                remaining = remaining
                    .iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(&i, _)| i)
                    .collect();
                fit.inliers = taken;
                fits.push(fit);
            }
            Err(reason) => {
                log::debug!("model extraction stopped after {round} model(s): {reason}");
                break;
            }
        }
    }
    fits
}

pub fn cloud_to_text(points: &[CloudPoint]) -> String {
    let mut out = String::with_capacity(points.len() * 24);
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
    }
    out
}

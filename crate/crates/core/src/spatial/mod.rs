//! Confidence-based spatial reasoning: count and time images of the
//! compensated events, the normalized motion-confidence map, IMU-adaptive
//! thresholding and the contour density filter.

mod contour;
mod mask;
pub mod pnm;

pub use contour::{morphological_filter, sobel_contours, Contours};
pub use mask::{connected_components, convex_hull, fill_convex_hull, BBox, BinaryMask, Component, Labeling};

use nalgebra::Vector3;

use crate::compensation::CompensatedEvent;
use crate::error::{Error, Result};
use crate::event::CameraIntrinsics;

/// Nearest pixel with halves rounded up; `None` outside the sensor.
pub fn pixel_of(x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let px = (x + 0.5).floor();
    let py = (y + 0.5).floor();
    if px < 0.0 || py < 0.0 || px >= width as f64 || py >= height as f64 {
        return None;
    }
    Some((px as usize, py as usize))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountImage {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
}

impl CountImage {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.counts[y * self.width + x]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn active_pixels(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Variance of the counts over pixels with at least one event.
    pub fn active_variance(&self) -> f64 {
        let active: Vec<f64> = self.counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
        if active.is_empty() {
            return 0.0;
        }
        let n = active.len() as f64;
        let mean = active.iter().sum::<f64>() / n;
        active.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n
    }
}

pub fn rasterize_count(events: &[CompensatedEvent], geometry: &CameraIntrinsics) -> CountImage {
    let (w, h) = (geometry.width as usize, geometry.height as usize);
    let mut counts = vec![0u32; w * h];
    for e in events {
        if let Some((x, y)) = pixel_of(e.x, e.y, w, h) {
            counts[y * w + x] += 1;
        }
    }
    CountImage {
        width: w,
        height: h,
        counts,
    }
}

/// Per-pixel mean timestamp; `None` where no event landed.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

impl TimeImage {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[y * self.width + x]
    }
}

pub fn time_image(events: &[CompensatedEvent], count: &CountImage) -> TimeImage {
    let (w, h) = (count.width, count.height);
    let mut sums = vec![0.0f64; w * h];
    for e in events {
        if let Some((x, y)) = pixel_of(e.x, e.y, w, h) {
            sums[y * w + x] += e.t;
        }
    }
    let values = sums
        .iter()
        .zip(&count.counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    TimeImage {
        width: w,
        height: h,
        values,
    }
}

/// Mean-centred, window-normalized time image in `[-1, 1]`; empty pixels stay
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
    /// Mean timestamp over non-empty pixels.
    pub mean_time: f64,
}

impl ConfidenceMap {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.values[y * self.width + x]
    }
}

pub fn normalize_confidence(time: &TimeImage, dt: f64) -> Result<ConfidenceMap> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let (mut sum, mut n) = (0.0f64, 0usize);
    for v in time.values.iter().flatten() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyWindow);
    }
    let mean = sum / n as f64;
    let values = time
        .values
        .iter()
        .map(|v| v.map(|t| ((t - mean) / dt).clamp(-1.0, 1.0)))
        .collect();
    Ok(ConfidenceMap {
        width: time.width,
        height: time.height,
        values,
        mean_time: mean,
    })
}

/// `tau = a * |omega| + b`.
pub fn adaptive_threshold(omega: &Vector3<f64>, a: f64, b: f64) -> f64 {
    a * omega.norm() + b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmentMode {
    /// Keep late-biased pixels, `rho >= tau`.
    #[default]
    Late,
    /// Keep `|rho| >= tau`.
    TwoSided,
}

pub fn segment(rho: &ConfidenceMap, tau: f64) -> BinaryMask {
    segment_with(rho, tau, SegmentMode::Late)
}

pub fn segment_with(rho: &ConfidenceMap, tau: f64, mode: SegmentMode) -> BinaryMask {
    let tau = tau.clamp(0.0, 1.0);
    BinaryMask::from_fn(rho.width, rho.height, |x, y| match rho.get(x, y) {
        None => false,
        Some(r) => match mode {
            SegmentMode::Late => r >= tau,
            SegmentMode::TwoSided => r.abs() >= tau,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Polarity;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ce(x: f64, y: f64, t: f64) -> CompensatedEvent {
        CompensatedEvent {
            x,
            y,
            t,
            p: Polarity::Positive,
        }
    }

    fn geom() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 8.0, 6.0, 16, 12).unwrap()
    }

    #[test]
    fn counting_examples() {
        let img = rasterize_count(&[ce(3.0, 4.0, 0.0), ce(3.2, 3.9, 0.1), ce(2.6, 4.4, 0.2)], &geom());
        assert_eq!(img.get(3, 4), 3);
        assert_eq!(img.total(), 3);
        assert_eq!(rasterize_count(&[], &geom()).total(), 0);
        let img = rasterize_count(&[ce(10.6, 2.0, 0.0), ce(10.5, 3.0, 0.0)], &geom());
        assert_eq!(img.get(11, 2), 1);
        assert_eq!(img.get(11, 3), 1, "halves round up");
        let img = rasterize_count(&[ce(-0.6, 0.0, 0.0), ce(15.5, 0.0, 0.0), ce(-0.4, 0.0, 0.0)], &geom());
        assert_eq!(img.total(), 1);
    }

    #[test]
    fn time_image_examples() {
        let ev = [
            ce(1.0, 1.0, 0.1),
            ce(1.0, 1.0, 0.2),
            ce(1.0, 1.0, 0.3),
            ce(5.0, 5.0, 0.05),
        ];
        let c = rasterize_count(&ev, &geom());
        let t = time_image(&ev, &c);
        assert!((t.get(1, 1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(t.get(5, 5), Some(0.05));
        assert_eq!(t.get(0, 0), None);
    }

    #[test]
    fn confidence_examples() {
        let ev = [ce(1.0, 1.0, 0.3), ce(2.0, 1.0, 0.3), ce(3.0, 3.0, 0.3)];
        let c = rasterize_count(&ev, &geom());
        let rho = normalize_confidence(&time_image(&ev, &c), 0.02).unwrap();
        assert!(rho.values.iter().flatten().all(|&r| r == 0.0));

        let (t0, dt) = (1.5, 0.02);
        let ev = [ce(1.0, 1.0, t0), ce(2.0, 1.0, t0 + dt)];
        let c = rasterize_count(&ev, &geom());
        let rho = normalize_confidence(&time_image(&ev, &c), dt).unwrap();
        assert!((rho.get(1, 1).unwrap() + 0.5).abs() < 1e-12);
        assert!((rho.get(2, 1).unwrap() - 0.5).abs() < 1e-12);

        let empty = time_image(&[], &rasterize_count(&[], &geom()));
        assert!(matches!(normalize_confidence(&empty, 0.02), Err(Error::EmptyWindow)));
    }

    #[test]
    fn confidence_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h, dt) = (16usize, 12usize, 0.02);
        let values: Vec<Option<f64>> = (0..w * h)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(3.0..3.0 + dt)))
            .collect();
        let t = TimeImage {
            width: w,
            height: h,
            values: values.clone(),
        };
        let rho = normalize_confidence(&t, dt).unwrap();
        // scalar recomputation
        let mut s = 0.0;
        let mut n = 0.0;
        for v in values.iter().flatten() {
            s += *v;
            n += 1.0;
        }
        let phi = s / n;
        for (v, got) in values.iter().zip(&rho.values) {
            match v {
                None => assert_eq!(*got, None),
                Some(v) => {
                    let r = (v - phi) / dt;
                    let want = r.signum() * r.abs().min(1.0);
                    assert!((got.unwrap() - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn threshold_examples() {
        let w = Vector3::new(0.3, -4.0, 1.0);
        assert_eq!(adaptive_threshold(&w, 0.0, 0.25), 0.25);
        assert!((adaptive_threshold(&Vector3::new(0.0, 0.0, 2.0), 0.5, 0.1) - 1.1).abs() < 1e-15);
        assert_eq!(adaptive_threshold(&Vector3::zeros(), 0.3, 0.25), 0.25);
    }

    fn map(values: Vec<Option<f64>>, w: usize, h: usize) -> ConfidenceMap {
        ConfidenceMap {
            width: w,
            height: h,
            values,
            mean_time: 0.0,
        }
    }

    #[test]
    fn segment_examples() {
        let m = map(vec![Some(1.0), Some(0.999), None, Some(-1.0)], 2, 2);
        let s = segment(&m, 1.0 + 1e-9);
        assert_eq!(s.bits(), &[true, false, false, false]);
        let zeros = map(vec![Some(0.0); 4], 2, 2);
        assert!(segment(&zeros, 0.3).is_empty());
        let two = segment_with(&m, 0.9, SegmentMode::TwoSided);
        assert_eq!(two.bits(), &[true, true, false, true]);
    }

    proptest! {
        #[test]
        fn confidence_is_shift_invariant(
            pts in proptest::collection::vec((0.0f64..16.0, 0.0f64..12.0, 0.0f64..0.02), 1..200),
            c in -5.0f64..5.0,
        ) {
            let ev: Vec<_> = pts.iter().map(|&(x, y, t)| ce(x, y, 1.0 + t)).collect();
            let shifted: Vec<_> = pts.iter().map(|&(x, y, t)| ce(x, y, 1.0 + t + c)).collect();
            let cnt = rasterize_count(&ev, &geom());
            let a = normalize_confidence(&time_image(&ev, &cnt), 0.02).unwrap();
            let b = normalize_confidence(&time_image(&shifted, &cnt), 0.02).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn conservation_and_support(pts in proptest::collection::vec((-2.0f64..18.0, -2.0f64..14.0, 0.0f64..1.0), 0..300)) {
            let ev: Vec<_> = pts.iter().map(|&(x, y, t)| ce(x, y, t)).collect();
            let cnt = rasterize_count(&ev, &geom());
            let in_bounds = ev.iter().filter(|e| pixel_of(e.x, e.y, 16, 12).is_some()).count();
            prop_assert_eq!(cnt.total() as usize, in_bounds);
            let t = time_image(&ev, &cnt);
            for (v, c) in t.values.iter().zip(&cnt.counts) {
                prop_assert_eq!(v.is_some(), *c > 0);
            }
        }

        #[test]
        fn segment_is_monotone(vals in proptest::collection::vec(proptest::option::of(-1.0f64..1.0), 64), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let m = map(vals, 8, 8);
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(segment(&m, hi).is_subset_of(&segment(&m, lo)));
        }
    }
}

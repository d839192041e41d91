//! IMU-driven ego-motion compensation.
//!
//! Every event is warped to the window's reference timestamp with its own
//! rotation, built from the window-mean angular velocity and the event's
//! offset from the reference. Optionally a planar-scene translation shift is
//! applied afterwards.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{CameraIntrinsics, Event, EventWindow, ImuSample, Polarity};

/// Proper rotation (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// `R = Rz(gamma) * Ry(beta) * Rx(alpha)`, right-handed elementary
    /// rotations acting on column vectors.
    pub fn from_euler(alpha: f64, beta: f64, gamma: f64) -> Self {
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let (sg, cg) = gamma.sin_cos();
        // Expanded product; see the unit tests for the factor-by-factor check.
        Self(Matrix3::new(
            cg * cb,
            cg * sb * sa - sg * ca,
            cg * sb * ca + sg * sa,
            sg * cb,
            sg * sb * sa + cg * ca,
            sg * sb * ca - cg * sa,
            -sb,
            cb * sa,
            cb * ca,
        ))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let ortho = (self.0 * self.0.transpose() - Matrix3::identity()).abs().max();
        ortho <= tol && (self.0.determinant() - 1.0).abs() <= tol
    }
}

/// Event after warping. `x`, `y` are fractional pixels in the reference
/// frame; `t` is the original timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatedEvent {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub p: Polarity,
}

impl From<&Event> for CompensatedEvent {
    fn from(e: &Event) -> Self {
        Self {
            x: e.x as f64,
            y: e.y as f64,
            t: e.t,
            p: e.p,
        }
    }
}

pub fn mean_angular_velocity(imu: &[ImuSample]) -> Result<Vector3<f64>> {
    if imu.is_empty() {
        return Err(Error::InvalidArgument(
            "mean angular velocity of an empty IMU slice".into(),
        ));
    }
    let sum = imu.iter().fold(Vector3::zeros(), |acc, s| acc + s.w);
    Ok(sum / imu.len() as f64)
}

pub fn mean_acceleration(imu: &[ImuSample]) -> Result<Vector3<f64>> {
    if imu.is_empty() {
        return Err(Error::InvalidArgument("mean acceleration of an empty IMU slice".into()));
    }
    let sum = imu.iter().fold(Vector3::zeros(), |acc, s| acc + s.a);
    Ok(sum / imu.len() as f64)
}

/// `(alpha, beta, gamma) = wbar * (t - t0)`.
pub fn euler_angles(wbar: &Vector3<f64>, t: f64, t0: f64) -> (f64, f64, f64) {
    let dt = t - t0;
    (wbar.x * dt, wbar.y * dt, wbar.z * dt)
}

pub fn rotation_from_euler(alpha: f64, beta: f64, gamma: f64) -> RotationMatrix {
    RotationMatrix::from_euler(alpha, beta, gamma)
}

/// `K R K^-1`.
pub fn projection_homography(r: &RotationMatrix, k: &CameraIntrinsics) -> Matrix3<f64> {
    k.matrix() * r.matrix() * k.inverse_matrix()
}

pub fn warp_point(h: &Matrix3<f64>, x: f64, y: f64) -> Result<(f64, f64)> {
    let v = h * Vector3::new(x, y, 1.0);
    if v.z <= 1e-12 {
        return Err(Error::DegenerateProjection(v.z));
    }
    Ok((v.x / v.z, v.y / v.z))
}

pub fn warp_event(e: &Event, r: &RotationMatrix, k: &CameraIntrinsics) -> Result<CompensatedEvent> {
    warp_compensated(&CompensatedEvent::from(e), r, k)
}

pub fn warp_compensated(e: &CompensatedEvent, r: &RotationMatrix, k: &CameraIntrinsics) -> Result<CompensatedEvent> {
    let (x, y) = warp_point(&projection_homography(r, k), e.x, e.y)?;
    Ok(CompensatedEvent { x, y, ..*e })
}

/// Planar-scene translation shift. `displacement` is the scene's motion
/// relative to the camera since the reference time; only its x and y
/// components are used.
pub fn warp_translation(
    e: &Event,
    displacement: &Vector3<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<CompensatedEvent> {
    shift_translation(&CompensatedEvent::from(e), displacement, depth, k)
}

pub fn shift_translation(
    e: &CompensatedEvent,
    displacement: &Vector3<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<CompensatedEvent> {
    if !(depth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scene depth must be positive, got {depth}"
        )));
    }
    Ok(CompensatedEvent {
        x: e.x - k.fx * displacement.x / depth,
        y: e.y - k.fy * displacement.y / depth,
        ..*e
    })
}

/// Integrate accelerometer readings (trapezoid rule) from the first sample up
/// to `until`, assuming the platform is at rest at the first sample.
pub fn integrate_velocity(imu: &[ImuSample], until: f64, alignment: &Matrix3<f64>) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for pair in imu.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.t >= until {
            break;
        }
        let t_end = b.t.min(until);
        let span = t_end - a.t;
        if span <= 0.0 {
            continue;
        }
        let frac = span / (b.t - a.t);
        let acc_end = a.a + (b.a - a.a) * frac;
        v += alignment * (a.a + acc_end) * (0.5 * span);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceTime {
    #[default]
    WindowStart,
    WindowEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationConfig {
    /// Single global scene depth, metres.
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationConfig {
    /// Events warped further than this outside the sensor are dropped.
    pub margin: f64,
    pub reference: ReferenceTime,
    /// IMU-to-camera axis alignment.
    pub alignment: Matrix3<f64>,
    pub translation: Option<TranslationConfig>,
}

impl Default for CompensationConfig {
    fn default() -> Self {
        Self {
            margin: 2.0,
            reference: ReferenceTime::WindowStart,
            alignment: Matrix3::identity(),
            translation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedWindow {
    pub events: Vec<CompensatedEvent>,
    /// Events discarded for leaving the sensor margin or degenerate projection.
    pub dropped: usize,
    pub degenerate: usize,
    /// No IMU sample covered the window; zero rotation was used.
    pub imu_missing: bool,
    pub t_ref: f64,
    /// Camera-frame mean angular velocity used for the window.
    pub angular_velocity: Vector3<f64>,
}

pub fn compensate_window(
    window: &EventWindow,
    imu: &[ImuSample],
    k: &CameraIntrinsics,
    cfg: &CompensationConfig,
) -> CompensatedWindow {
    compensate_window_from(window, imu, k, cfg, &Vector3::zeros())
}

/// Like [`compensate_window`], with the camera velocity at the reference time
/// supplied for translation compensation.
pub fn compensate_window_from(
    window: &EventWindow,
    imu: &[ImuSample],
    k: &CameraIntrinsics,
    cfg: &CompensationConfig,
    velocity_at_ref: &Vector3<f64>,
) -> CompensatedWindow {
    let t_ref = match cfg.reference {
        ReferenceTime::WindowStart => window.t0,
        ReferenceTime::WindowEnd => window.t0 + window.dt,
    };
    let imu_missing = imu.is_empty();
    let (wbar, abar) = if imu_missing {
        log::warn!("window at t0={} has no IMU coverage", window.t0);
        (Vector3::zeros(), Vector3::zeros())
    } else {
        (
            cfg.alignment * mean_angular_velocity(imu).expect("non-empty"),
            cfg.alignment * mean_acceleration(imu).expect("non-empty"),
        )
    };

    let kinv = k.inverse_matrix();
    let kmat = k.matrix();
    let lo_x = -cfg.margin;
    let hi_x = k.width as f64 + cfg.margin;
    let lo_y = -cfg.margin;
    let hi_y = k.height as f64 + cfg.margin;

    let warped: Vec<Result<CompensatedEvent>> = window
        .events
        .par_iter()
        .map(|e| {
            let (a, b, g) = euler_angles(&wbar, e.t, t_ref);
            let r = RotationMatrix::from_euler(a, b, g);
            let h = kmat * r.matrix() * kinv;
            let (x, y) = warp_point(&h, e.x as f64, e.y as f64)?;
            let mut out = CompensatedEvent { x, y, t: e.t, p: e.p };
            if let Some(tc) = cfg.translation {
                let tau = e.t - t_ref;
                let camera = velocity_at_ref * tau + abar * (0.5 * tau * tau);
                // a camera moving +x sees the scene move -x
                out = shift_translation(&out, &-camera, tc.depth, k)?;
            }
            Ok(out)
        })
        .collect();

    let mut events = Vec::with_capacity(warped.len());
    let mut dropped = 0;
    let mut degenerate = 0;
    for w in warped {
        match w {
            Ok(ce) if ce.x >= lo_x && ce.x <= hi_x && ce.y >= lo_y && ce.y <= hi_y => events.push(ce),
            Ok(_) => dropped += 1,
            Err(_) => {
                dropped += 1;
                degenerate += 1;
            }
        }
    }
    CompensatedWindow {
        events,
        dropped,
        degenerate,
        imu_missing,
        t_ref,
        angular_velocity: wbar,
    }
}

pub fn compensated_to_text(events: &[CompensatedEvent]) -> String {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(events.len() * 32);
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.x, e.y, e.t, e.p.as_i8());
    }
    out
}

//! Events, IMU samples, camera intrinsics, and their text formats.
//!
//! Timestamps are `f64` seconds relative to the start of the recording.
//! Event and IMU files are plain comma-separated text with one record per
//! line; lines starting with `#` and blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "1" | "+1" => Some(Polarity::Positive),
            "-1" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// A single brightness-change sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: f64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, p: Polarity) -> Self {
        Self { x, y, t, p }
    }
}

/// Gyro and accelerometer reading in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Angular velocity, rad/s.
    pub w: Vector3<f64>,
    /// Linear acceleration, m/s².
    pub a: Vector3<f64>,
}

/// Pinhole intrinsics plus sensor size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// DAVIS346 geometry (346×260) with a 300 px focal length.
    pub fn davis346() -> Self {
        Self {
            fx: 300.0,
            fy: 300.0,
            cx: 173.0,
            cy: 130.0,
            width: 346,
            height: 260,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("sensor size must be non-zero".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::Validation(format!("cx={} outside (0, {})", self.cx, self.width)));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::Validation(format!(
                "cy={} outside (0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form inverse of [`matrix`](Self::matrix).
    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let (mut fx, mut fy, mut cx, mut cy, mut width, mut height) = (None, None, None, None, None, None);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, idx + 1, "expected key=value"))?;
            let value = value.trim();
            let bad = || Error::parse(origin, idx + 1, format!("bad value for {}", key.trim()));
            match key.trim() {
                "fx" => fx = Some(value.parse::<f64>().map_err(|_| bad())?),
                "fy" => fy = Some(value.parse::<f64>().map_err(|_| bad())?),
                "cx" => cx = Some(value.parse::<f64>().map_err(|_| bad())?),
                "cy" => cy = Some(value.parse::<f64>().map_err(|_| bad())?),
                "width" => width = Some(value.parse::<u32>().map_err(|_| bad())?),
                "height" => height = Some(value.parse::<u32>().map_err(|_| bad())?),
                other => return Err(Error::parse(origin, idx + 1, format!("unknown key {other}"))),
            }
        }
        let missing = |name: &str| Error::Validation(format!("intrinsics missing {name}"));
        Self::new(
            fx.ok_or_else(|| missing("fx"))?,
            fy.ok_or_else(|| missing("fy"))?,
            cx.ok_or_else(|| missing("cx"))?,
            cy.ok_or_else(|| missing("cy"))?,
            width.ok_or_else(|| missing("width"))?,
            height.ok_or_else(|| missing("height"))?,
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nwidth={}\nheight={}\n",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height
        )
    }
}

/// A fixed-duration slice of the stream. `t0` is the reference timestamp
/// that events get warped to.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    pub events: Vec<Event>,
    pub t0: f64,
    pub dt: f64,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, name: &str, path: &Path, line: usize) -> Result<T> {
    let raw = cols
        .get(i)
        .ok_or_else(|| Error::parse(path, line, format!("missing column {name}")))?;
    raw.trim()
        .parse::<T>()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {name} from {raw:?}")))
}

pub fn parse_events(text: &str, geometry: &CameraIntrinsics, origin: &Path) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (line, l) in data_lines(text) {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 4 columns x,y,t,p, found {}", cols.len()),
            ));
        }
        let x: i64 = field(&cols, 0, "x", origin, line)?;
        let y: i64 = field(&cols, 1, "y", origin, line)?;
        let t: f64 = field(&cols, 2, "t", origin, line)?;
        if !t.is_finite() {
            return Err(Error::parse(origin, line, "non-finite timestamp"));
        }
        let p =
            Polarity::parse(cols[3].trim()).ok_or_else(|| Error::parse(origin, line, "polarity must be 1 or -1"))?;
        if !geometry.contains(x, y) {
            return Err(Error::Validation(format!(
                "{}:{line}: pixel ({x}, {y}) outside {}x{} sensor",
                origin.display(),
                geometry.width,
                geometry.height
            )));
        }
        events.push(Event::new(x as u16, y as u16, t, p));
    }
    if let Some(i) = first_unsorted(events.iter().map(|e| e.t)) {
        return Err(Error::Validation(format!(
            "{}: timestamps decrease at event index {i}",
            origin.display()
        )));
    }
    Ok(events)
}

pub fn load_events(path: impl AsRef<Path>, geometry: &CameraIntrinsics) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text, geometry, path)
}

pub fn parse_imu(text: &str, origin: &Path) -> Result<Vec<ImuSample>> {
    let mut samples = Vec::new();
    for (line, l) in data_lines(text) {
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 7 columns t,wx,wy,wz,ax,ay,az, found {}", cols.len()),
            ));
        }
        let mut v = [0.0f64; 7];
        const NAMES: [&str; 7] = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
        for (i, name) in NAMES.iter().enumerate() {
            v[i] = field(&cols, i, name, origin, line)?;
            if !v[i].is_finite() {
                return Err(Error::parse(origin, line, format!("non-finite {name}")));
            }
        }
        samples.push(ImuSample {
            t: v[0],
            w: Vector3::new(v[1], v[2], v[3]),
            a: Vector3::new(v[4], v[5], v[6]),
        });
    }
    if let Some(i) = first_unsorted(samples.iter().map(|s| s.t)) {
        return Err(Error::Validation(format!(
            "{}: IMU timestamps decrease at sample index {i}",
            origin.display()
        )));
    }
    Ok(samples)
}

pub fn load_imu(path: impl AsRef<Path>) -> Result<Vec<ImuSample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_imu(&text, path)
}

fn first_unsorted(ts: impl Iterator<Item = f64>) -> Option<usize> {
    let mut prev = f64::NEG_INFINITY;
    for (i, t) in ts.enumerate() {
        if t < prev {
            return Some(i);
        }
        prev = t;
    }
    None
}

pub fn events_to_text(events: &[Event]) -> String {
    let mut out = String::with_capacity(events.len() * 20);
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.x, e.y, e.t, e.p.as_i8());
    }
    out
}

pub fn imu_to_text(samples: &[ImuSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 48);
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.w.x, s.w.y, s.w.z, s.a.x, s.a.y, s.a.z
        );
    }
    out
}

/// Split the stream into consecutive non-overlapping windows of length `dt`,
/// starting at the first event.
///
/// The window count is `ceil(span / dt)` (at least one for a non-empty
/// stream); an event sitting exactly on the final boundary belongs to the last
/// window. Each window carries the IMU samples inside `[t0, t0 + dt]` plus the
/// latest sample before `t0`, if any.
pub fn slice_windows(events: &[Event], imu: &[ImuSample], dt: f64) -> Result<Vec<(EventWindow, Vec<ImuSample>)>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "window length must be positive, got {dt}"
        )));
    }
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let origin = first.t;
    let span = last.t - origin;
    let count = ((span / dt).ceil() as usize).max(1);

    let mut windows: Vec<EventWindow> = (0..count)
        .map(|k| EventWindow {
            events: Vec::new(),
            t0: origin + k as f64 * dt,
            dt,
        })
        .collect();
    for e in events {
        let k = (((e.t - origin) / dt).floor() as usize).min(count - 1);
        windows[k].events.push(*e);
    }

    Ok(windows
        .into_iter()
        .map(|w| {
            let imu_slice = imu_for_window(imu, w.t0, w.t0 + w.dt);
            (w, imu_slice)
        })
        .collect())
}

pub(crate) fn imu_for_window(imu: &[ImuSample], t0: f64, t1: f64) -> Vec<ImuSample> {
    let start = imu.partition_point(|s| s.t < t0);
    let end = imu.partition_point(|s| s.t <= t1);
    let from = start.saturating_sub(1);
    imu[from..end.max(from)].to_vec()
}

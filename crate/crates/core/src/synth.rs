//! Synthetic event scenes with exact ground truth.
//!
//! The static background is a set of edge pixels drawn on a canvas somewhat
//! larger than the sensor, expressed in the camera frame at time zero. At time
//! `t` the camera has rotated by `exp(omega * t)` and moved by `accel * t^2 / 2`
//! from rest, so a world pixel is seen at `K R(t)^-1 K^-1 q` shifted by the
//! planar parallax of the displacement. Events are emitted at the rounded
//! position of that forward projection. A single disk moves linearly across the
//! world and fires on its boundary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::event::{events_to_text, imu_to_text, CameraIntrinsics, Event, ImuSample, Polarity};
use crate::fusion::{ground_truth_to_text, GroundTruthBox};
use crate::spatial::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct EgoMotion {
    /// Constant body rate, rad/s.
    pub omega: Vector3<f64>,
    /// Constant acceleration from rest, m/s^2. Zero disables translation.
    pub accel: Vector3<f64>,
    /// Depth of the planar background, metres.
    pub depth: f64,
}

impl EgoMotion {
    pub fn still() -> Self {
        Self {
            omega: Vector3::zeros(),
            accel: Vector3::zeros(),
            depth: 2.0,
        }
    }

    pub fn has_translation(&self) -> bool {
        self.accel.x != 0.0 || self.accel.y != 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    /// Random straight segments drawn on the canvas.
    pub segments: usize,
    pub min_length: f64,
    pub max_length: f64,
    /// Canvas border beyond the sensor, pixels.
    pub margin: f64,
    /// Events per second per edge pixel.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    /// Disk centre at time zero, world pixels.
    pub start: Vector2<f64>,
    /// Pixels per second.
    pub velocity: Vector2<f64>,
    pub radius: f64,
    /// Boundary events per second, whole object.
    pub rate: f64,
}

impl ObjectSpec {
    pub fn center(&self, t: f64) -> Vector2<f64> {
        self.start + self.velocity * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub geometry: CameraIntrinsics,
    pub duration: f64,
    pub ego: EgoMotion,
    pub background: Background,
    pub object: Option<ObjectSpec>,
    /// Uniform noise events per second over the whole sensor.
    pub noise_rate: f64,
    pub imu_rate: f64,
    /// Standard deviation of additive gyro noise, rad/s.
    pub imu_jitter: f64,
    pub seed: u64,
}

fn arg(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {msg}"))
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(arg("duration", "must be positive"));
        }
        let non_negative = [
            ("background.rate", self.background.rate),
            ("background.margin", self.background.margin),
            ("noise.rate", self.noise_rate),
            ("imu.jitter", self.imu_jitter),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(arg(name, "must be finite and >= 0"));
            }
        }
        if !(self.imu_rate > 0.0) {
            return Err(arg("imu.rate", "must be positive"));
        }
        if !(self.ego.depth > 0.0) {
            return Err(arg("ego.depth", "must be positive"));
        }
        if !(self.background.min_length >= 1.0 && self.background.max_length >= self.background.min_length) {
            return Err(arg("background.length", "need 1 <= min <= max"));
        }
        if let Some(o) = &self.object {
            if !(o.rate >= 0.0) || !o.rate.is_finite() {
                return Err(arg("object.rate", "must be finite and >= 0"));
            }
            if !(o.radius > 0.0) {
                return Err(arg("object.radius", "must be positive"));
            }
            let (w, h) = (self.geometry.width as f64, self.geometry.height as f64);
            for t in [0.0, self.duration] {
                let c = o.center(t);
                if c.x - o.radius < 0.0 || c.x + o.radius > w - 1.0 || c.y - o.radius < 0.0 || c.y + o.radius > h - 1.0
                {
                    return Err(arg("object.path", format!("disk leaves the sensor at t={t}")));
                }
            }
        }
        Ok(())
    }
}

/// Camera motion over time; maps world pixels into the image at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub geometry: CameraIntrinsics,
    pub ego: EgoMotion,
}

impl MotionModel {
    pub fn rotation(&self, t: f64) -> Rotation3<f64> {
        Rotation3::new(self.ego.omega * t)
    }

    pub fn displacement(&self, t: f64) -> Vector3<f64> {
        self.ego.accel * (0.5 * t * t)
    }

    /// Image position at time `t` of world pixel `q`.
    pub fn project(&self, q: Vector2<f64>, t: f64) -> Vector2<f64> {
        let k = &self.geometry;
        let ray = Vector3::new((q.x - k.cx) / k.fx, (q.y - k.cy) / k.fy, 1.0);
        let cam = self.rotation(t).inverse() * ray;
        let d = self.displacement(t);
        Vector2::new(
            k.fx * cam.x / cam.z + k.cx - k.fx * d.x / self.ego.depth,
            k.fy * cam.y / cam.z + k.cy - k.fy * d.y / self.ego.depth,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// World pixel of the generating edge.
    Background {
        x: i32,
        y: i32,
    },
    Object(u32),
    Noise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub spec: SceneSpec,
    pub events: Vec<Event>,
    /// Parallel to `events`.
    pub sources: Vec<Source>,
    pub imu: Vec<ImuSample>,
    pub ground_truth: Vec<GroundTruthBox>,
    pub edges: Vec<(i32, i32)>,
    pub dt: f64,
}

impl SynthOutput {
    pub fn motion(&self) -> MotionModel {
        MotionModel {
            geometry: self.spec.geometry,
            ego: self.spec.ego.clone(),
        }
    }

    /// Where the source of background event `i` is seen at time `t`.
    pub fn source_position(&self, i: usize, t: f64) -> Option<Vector2<f64>> {
        match self.sources[i] {
            Source::Background { x, y } => Some(self.motion().project(Vector2::new(x as f64, y as f64), t)),
            _ => None,
        }
    }

    /// Window start times, matching `slice_windows` for the same `dt`.
    pub fn window_starts(&self) -> Vec<f64> {
        window_starts(&self.events, self.dt)
    }
}

fn window_starts(events: &[Event], dt: f64) -> Vec<f64> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Vec::new();
    };
    let origin = first.t;
    let count = (((last.t - origin) / dt).ceil() as usize).max(1);
    (0..count).map(|k| origin + k as f64 * dt).collect()
}

fn polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random::<bool>() {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// Arrival times of a Poisson process on `[0, duration)`.
fn arrivals(rng: &mut ChaCha8Rng, rate: f64, duration: f64) -> Vec<f64> {
    let mean = rate * duration;
    if mean <= 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    let mut ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * duration).collect();
    ts.sort_by(f64::total_cmp);
    ts
}

fn draw_edges(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<(i32, i32)> {
    let bg = &spec.background;
    let (w, h) = (spec.geometry.width as f64, spec.geometry.height as f64);
    let mut set = BTreeSet::new();
    for _ in 0..bg.segments {
        let x0 = rng.random_range(-bg.margin..w + bg.margin);
        let y0 = rng.random_range(-bg.margin..h + bg.margin);
        let len = if bg.max_length > bg.min_length {
            rng.random_range(bg.min_length..bg.max_length)
        } else {
            bg.min_length
        };
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let steps = (len * 2.0).ceil() as usize;
        for s in 0..=steps {
            let d = len * s as f64 / steps as f64;
            let x = (x0 + d * angle.cos()).round() as i32;
            let y = (y0 + d * angle.sin()).round() as i32;
            set.insert((y, x));
        }
    }
    set.into_iter().map(|(y, x)| (x, y)).collect()
}

fn to_pixel(p: Vector2<f64>, k: &CameraIntrinsics) -> Option<(u16, u16)> {
    let (x, y) = ((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64);
    k.contains(x, y).then_some((x as u16, y as u16))
}

/// Tight pixel box of the disk over `[t0, t0 + dt]`, seen in the camera frame
/// at `t0`.
fn truth_box(model: &MotionModel, obj: &ObjectSpec, t0: f64, dt: f64) -> Option<BBox> {
    const TIME_STEPS: usize = 40;
    const ANGLE_STEPS: usize = 180;
    let mut bbox: Option<BBox> = None;
    for i in 0..=TIME_STEPS {
        let t = t0 + dt * i as f64 / TIME_STEPS as f64;
        let c = obj.center(t);
        for j in 0..ANGLE_STEPS {
            let a = std::f64::consts::TAU * j as f64 / ANGLE_STEPS as f64;
            let world = c + Vector2::new(a.cos(), a.sin()) * obj.radius;
            // the disk has moved to `world` at time t; express it in the t0 frame
            let p = model.project(world, t0);
            let (x, y) = ((p.x + 0.5).floor() as i64, (p.y + 0.5).floor() as i64);
            match bbox.as_mut() {
                Some(b) => b.include(x, y),
                None => bbox = Some(BBox::point(x, y)),
            }
        }
    }
    bbox.and_then(|b| {
        let clip = BBox::new(0, 0, model.geometry.width as i64 - 1, model.geometry.height as i64 - 1);
        b.intersection(&clip)
    })
}

pub fn generate(spec: &SceneSpec, dt: f64) -> Result<SynthOutput> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(arg("dt", "must be positive"));
    }
    let k = spec.geometry;
    let model = MotionModel {
        geometry: k,
        ego: spec.ego.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = draw_edges(spec, &mut rng);

    let mut tagged: Vec<(Event, Source)> = Vec::new();
    for &(x, y) in &edges {
        let q = Vector2::new(x as f64, y as f64);
        for t in arrivals(&mut rng, spec.background.rate, spec.duration) {
            let p = polarity(&mut rng);
            if let Some((px, py)) = to_pixel(model.project(q, t), &k) {
                tagged.push((Event::new(px, py, t, p), Source::Background { x, y }));
            }
        }
    }
    if let Some(obj) = &spec.object {
        for t in arrivals(&mut rng, obj.rate, spec.duration) {
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            let p = polarity(&mut rng);
            let world = obj.center(t) + Vector2::new(a.cos(), a.sin()) * obj.radius;
            if let Some((px, py)) = to_pixel(model.project(world, t), &k) {
                tagged.push((Event::new(px, py, t, p), Source::Object(0)));
            }
        }
    }
    for t in arrivals(&mut rng, spec.noise_rate, spec.duration) {
        let x = rng.random_range(0..k.width) as u16;
        let y = rng.random_range(0..k.height) as u16;
        let p = polarity(&mut rng);
        tagged.push((Event::new(x, y, t, p), Source::Noise));
    }
    // stable: equal timestamps keep generation order
    tagged.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    let (events, sources): (Vec<Event>, Vec<Source>) = tagged.into_iter().unzip();

    let n_imu = (spec.duration * spec.imu_rate).ceil() as usize + 1;
    let jitter = Normal::new(0.0, spec.imu_jitter).map_err(|e| arg("imu.jitter", e))?;
    let imu = (0..n_imu)
        .map(|i| {
            let mut w = spec.ego.omega;
            if spec.imu_jitter > 0.0 {
                w += Vector3::new(
                    jitter.sample(&mut rng),
                    jitter.sample(&mut rng),
                    jitter.sample(&mut rng),
                );
            }
            ImuSample {
                t: i as f64 / spec.imu_rate,
                w,
                a: spec.ego.accel,
            }
        })
        .collect();

    let ground_truth = match &spec.object {
        Some(obj) => window_starts(&events, dt)
            .into_iter()
            .filter_map(|t0| truth_box(&model, obj, t0, dt).map(|bbox| GroundTruthBox { bbox, window_t0: t0 }))
            .collect(),
        None => Vec::new(),
    };

    Ok(SynthOutput {
        spec: spec.clone(),
        events,
        sources,
        imu,
        ground_truth,
        edges,
        dt,
    })
}

fn base_scene(name: &str, seed: u64) -> SceneSpec {
    SceneSpec {
        name: name.to_string(),
        geometry: CameraIntrinsics::davis346(),
        duration: 0.3,
        ego: EgoMotion::still(),
        background: Background {
            segments: 40,
            min_length: 20.0,
            max_length: 80.0,
            margin: 60.0,
            rate: 400.0,
        },
        object: Some(ObjectSpec {
            start: Vector2::new(90.0, 110.0),
            velocity: Vector2::new(500.0, 120.0),
            radius: 12.0,
            rate: 100_000.0,
        }),
        noise_rate: 0.0,
        imu_rate: 1000.0,
        imu_jitter: 0.0,
        seed,
    }
}

/// The named scenes used for the method comparison report.
pub fn standard_suite() -> Vec<SceneSpec> {
    let rotation = Vector3::new(0.1, 0.15, 0.3);
    let accel = Vector3::new(1.5, 1.0, 0.0);

    let static_scene = base_scene("static", 11);

    let mut rot = base_scene("rotation", 12);
    rot.ego.omega = rotation;

    let mut trans = base_scene("translation", 13);
    trans.ego.accel = accel;

    let mut both = base_scene("rotation_translation", 14);
    both.ego.omega = rotation;
    both.ego.accel = accel;

    let noisy = |name: &str, rate: f64, seed: u64| {
        let mut s = rot.clone();
        s.name = name.to_string();
        s.noise_rate = rate;
        s.seed = seed;
        s
    };

    // fast object over a densely textured background
    let mut tailing = rot.clone();
    tailing.name = "tailing".into();
    tailing.seed = 18;
    tailing.background.segments = 300;
    if let Some(o) = tailing.object.as_mut() {
        o.start = Vector2::new(60.0, 120.0);
        o.velocity = Vector2::new(800.0, 0.0);
    }

    vec![
        static_scene,
        rot.clone(),
        trans,
        both,
        noisy("noise_low", 20_000.0, 15),
        noisy("noise_mid", 80_000.0, 16),
        noisy("noise_high", 200_000.0, 17),
        tailing,
    ]
}

fn vec3(v: &Vector3<f64>) -> String {
    format!("{},{},{}", v.x, v.y, v.z)
}

fn vec2(v: &Vector2<f64>) -> String {
    format!("{},{}", v.x, v.y)
}

pub fn scene_to_text(spec: &SceneSpec) -> String {
    let g = &spec.geometry;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("name", spec.name.clone());
    kv("geometry.fx", g.fx.to_string());
    kv("geometry.fy", g.fy.to_string());
    kv("geometry.cx", g.cx.to_string());
    kv("geometry.cy", g.cy.to_string());
    kv("geometry.width", g.width.to_string());
    kv("geometry.height", g.height.to_string());
    kv("duration", spec.duration.to_string());
    kv("ego.omega", vec3(&spec.ego.omega));
    kv("ego.accel", vec3(&spec.ego.accel));
    kv("ego.depth", spec.ego.depth.to_string());
    kv("background.segments", spec.background.segments.to_string());
    kv("background.min_length", spec.background.min_length.to_string());
    kv("background.max_length", spec.background.max_length.to_string());
    kv("background.margin", spec.background.margin.to_string());
    kv("background.rate", spec.background.rate.to_string());
    if let Some(o) = &spec.object {
        kv("object.start", vec2(&o.start));
        kv("object.velocity", vec2(&o.velocity));
        kv("object.radius", o.radius.to_string());
        kv("object.rate", o.rate.to_string());
    }
    kv("noise.rate", spec.noise_rate.to_string());
    kv("imu.rate", spec.imu_rate.to_string());
    kv("imu.jitter", spec.imu_jitter.to_string());
    kv("seed", spec.seed.to_string());
    out
}

fn floats<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(arg(key, format!("expected {N} comma-separated numbers")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| arg(key, format!("bad number {p:?}")))?;
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| arg(key, format!("bad value {v:?}")))
}

/// Parse `key=value` lines; unspecified keys keep the base scene's values.
pub fn parse_scene(text: &str) -> Result<SceneSpec> {
    let mut s = base_scene("scene", 0);
    s.object = None;
    let mut obj = ObjectSpec {
        start: Vector2::zeros(),
        velocity: Vector2::zeros(),
        radius: 1.0,
        rate: 0.0,
    };
    let mut has_object = false;
    let mut g = s.geometry;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key=value", i + 1)))?;
        let (key, v) = (key.trim(), v.trim());
        match key {
            "name" => s.name = v.to_string(),
            "geometry.fx" => g.fx = num(key, v)?,
            "geometry.fy" => g.fy = num(key, v)?,
            "geometry.cx" => g.cx = num(key, v)?,
            "geometry.cy" => g.cy = num(key, v)?,
            "geometry.width" => g.width = num(key, v)?,
            "geometry.height" => g.height = num(key, v)?,
            "duration" => s.duration = num(key, v)?,
            "ego.omega" => s.ego.omega = Vector3::from(floats::<3>(key, v)?),
            "ego.accel" => s.ego.accel = Vector3::from(floats::<3>(key, v)?),
            "ego.depth" => s.ego.depth = num(key, v)?,
            "background.segments" => s.background.segments = num(key, v)?,
            "background.min_length" => s.background.min_length = num(key, v)?,
            "background.max_length" => s.background.max_length = num(key, v)?,
            "background.margin" => s.background.margin = num(key, v)?,
            "background.rate" => s.background.rate = num(key, v)?,
            "object.start" => {
                obj.start = Vector2::from(floats::<2>(key, v)?);
                has_object = true;
            }
            "object.velocity" => {
                obj.velocity = Vector2::from(floats::<2>(key, v)?);
                has_object = true;
            }
            "object.radius" => {
                obj.radius = num(key, v)?;
                has_object = true;
            }
            "object.rate" => {
                obj.rate = num(key, v)?;
                has_object = true;
            }
            "noise.rate" => s.noise_rate = num(key, v)?,
            "imu.rate" => s.imu_rate = num(key, v)?,
            "imu.jitter" => s.imu_jitter = num(key, v)?,
            "seed" => s.seed = num(key, v)?,
            other => return Err(Error::InvalidArgument(format!("unknown scene key {other}"))),
        }
    }
    s.geometry = g;
    if has_object {
        s.object = Some(obj);
    }
    s.validate()?;
    Ok(s)
}

/// Write `events.txt`, `imu.txt`, `intrinsics.txt`, `gt.txt` and `scene.txt`.
pub fn write_scene(out: &SynthOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("events.txt", events_to_text(&out.events)),
        ("imu.txt", imu_to_text(&out.imu)),
        ("intrinsics.txt", out.spec.geometry.to_text()),
        ("gt.txt", ground_truth_to_text(&out.ground_truth)),
        ("scene.txt", scene_to_text(&out.spec)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

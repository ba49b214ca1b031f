//! Synthetic cel-style triplets with known motion, and loading of triplet
//! directories from disk.
//!
//! Shapes move along straight lines, `position(s) = start + s * velocity`,
//! with `s` in `[0, 1]` spanning the interval from the first to the last
//! frame. Coordinates are in pixels with pixel centers on integers.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::seeded_rng;
use crate::error::{Error, Result};
use crate::flow::{write_flo, FlowField};
use crate::imaging::{read_png, write_png, Image};

/// Upper bound on either canvas side.
pub const MAX_CANVAS: usize = 8192;
const SUPERSAMPLE: usize = 4;
const PAINT_WAVES: usize = 4;

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Flat {
        color: Rgb,
    },
    /// Smooth sum of sinusoids around `base`, translating rigidly by
    /// `offset + s * velocity`.
    Painted {
        base: Rgb,
        amplitude: f64,
        wavelength: f64,
        #[serde(default)]
        offset: [f64; 2],
        #[serde(default)]
        velocity: [f64; 2],
    },
}

impl Default for Background {
    fn default() -> Self {
        Background::Flat { color: [0.5; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Disc {
        radius: f64,
    },
    /// Axis-aligned, centred on the shape position.
    Rect {
        width: f64,
        height: f64,
    },
    /// Vertices relative to the shape position.
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub fill: Rgb,
    #[serde(default)]
    pub outline: Rgb,
    #[serde(default)]
    pub outline_width: f64,
    /// `[x, y]` at `s = 0`.
    pub start: [f64; 2],
    /// Displacement `[dx, dy]` over the whole interval.
    #[serde(default)]
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletSource {
    Synthetic,
    Disk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub name: String,
    pub i0: Image,
    pub i_tau: Image,
    pub i1: Image,
    pub tau_true: Option<f64>,
    pub gt_flow_01: Option<FlowField>,
    pub source: TripletSource,
}

fn check_color(c: &Rgb, what: &str) -> Result<()> {
    if c.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::Generation(format!("{what} {c:?} outside [0, 1]")))
    }
}

fn check_finite(vals: &[f64], what: &str) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Generation(format!("{what} must be finite")))
    }
}

fn length(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

impl ShapeKind {
    /// Signed distance from `p` (relative to the shape position), negative inside.
    fn sdf(&self, p: [f64; 2]) -> f64 {
        match self {
            ShapeKind::Disc { radius } => length(p) - radius,
            ShapeKind::Rect { width, height } => {
                let dx = p[0].abs() - width / 2.0;
                let dy = p[1].abs() - height / 2.0;
                length([dx.max(0.0), dy.max(0.0)]) + dx.max(dy).min(0.0)
            }
            ShapeKind::Polygon { vertices } => polygon_sdf(vertices, p),
        }
    }

    /// Relative bounding box `(min, max)`.
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            ShapeKind::Disc { radius } => ([-radius, -radius], [*radius, *radius]),
            ShapeKind::Rect { width, height } => ([-width / 2.0, -height / 2.0], [width / 2.0, height / 2.0]),
            ShapeKind::Polygon { vertices } => vertices
                .iter()
                .fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), v| {
                    ([lo[0].min(v[0]), lo[1].min(v[1])], [hi[0].max(v[0]), hi[1].max(v[1])])
                }),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ShapeKind::Disc { radius } => {
                check_finite(&[*radius], "disc radius")?;
                if *radius <= 0.0 {
                    return Err(Error::Generation("disc radius must be positive".into()));
                }
            }
            ShapeKind::Rect { width, height } => {
                check_finite(&[*width, *height], "rect size")?;
                if *width <= 0.0 || *height <= 0.0 {
                    return Err(Error::Generation("rect sides must be positive".into()));
                }
            }
            ShapeKind::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Generation("polygon needs at least 3 vertices".into()));
                }
                check_finite(&vertices.concat(), "polygon vertices")?;
            }
        }
        Ok(())
    }
}

fn polygon_sdf(v: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let mut d = f64::INFINITY;
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (a, b) = (v[j], v[i]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        let h = if len2 > 0.0 {
            ((w[0] * e[0] + w[1] * e[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        d = d.min(length([w[0] - e[0] * h, w[1] - e[1] * h]));
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    if inside {
        -d
    } else {
        d
    }
}

impl ShapeSpec {
    pub fn position(&self, s: f64) -> [f64; 2] {
        [
            self.start[0] + s * self.velocity[0],
            self.start[1] + s * self.velocity[1],
        ]
    }

    fn local_sdf(&self, p: [f64; 2], s: f64) -> f64 {
        let c = self.position(s);
        self.kind.sdf([p[0] - c[0], p[1] - c[1]])
    }

    fn color_at(&self, sd: f64) -> Option<Rgb> {
        if sd > 0.0 {
            None
        } else if self.outline_width > 0.0 && sd > -self.outline_width {
            Some(self.outline)
        } else {
            Some(self.fill)
        }
    }
}

struct Paint {
    waves: Vec<([f64; 2], f64)>,
}

impl Paint {
    fn new(seed: u64, wavelength: f64) -> Self {
        let mut rng = seeded_rng(seed, 7);
        let waves = (0..PAINT_WAVES)
            .map(|k| {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let lambda = wavelength * (1.0 + 0.37 * k as f64);
                let freq = std::f64::consts::TAU / lambda;
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                ([freq * angle.cos(), freq * angle.sin()], phase)
            })
            .collect();
        Self { waves }
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        self.waves
            .iter()
            .map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + phase).sin())
            .sum::<f64>()
            / PAINT_WAVES as f64
    }
}

impl SceneSpec {
    /// Parses and validates a JSON scene description.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SceneSpec = serde_json::from_str(text).map_err(|e| Error::Generation(format!("scene json: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width > MAX_CANVAS || self.height > MAX_CANVAS {
            return Err(Error::Generation(format!(
                "canvas {}x{} outside 1..={MAX_CANVAS}",
                self.width, self.height
            )));
        }
        match &self.background {
            Background::Flat { color } => check_color(color, "background color")?,
            Background::Painted {
                base,
                amplitude,
                wavelength,
                offset,
                velocity,
            } => {
                check_finite(
                    &[*amplitude, *wavelength, offset[0], offset[1], velocity[0], velocity[1]],
                    "background",
                )?;
                if *amplitude < 0.0 || *wavelength <= 0.0 {
                    return Err(Error::Generation(
                        "paint amplitude must be >= 0 and wavelength > 0".into(),
                    ));
                }
                check_color(&base.map(|b| b - amplitude), "background base minus amplitude")?;
                check_color(&base.map(|b| b + amplitude), "background base plus amplitude")?;
            }
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, shape) in self.shapes.iter().enumerate() {
            shape.kind.validate()?;
            check_color(&shape.fill, "fill color")?;
            check_color(&shape.outline, "outline color")?;
            check_finite(
                &[
                    shape.outline_width,
                    shape.start[0],
                    shape.start[1],
                    shape.velocity[0],
                    shape.velocity[1],
                ],
                "shape",
            )?;
            if shape.outline_width < 0.0 {
                return Err(Error::Generation("outline width must be >= 0".into()));
            }
            let (lo, hi) = shape.kind.bounds();
            for s in [0.0, 1.0] {
                let c = shape.position(s);
                if c[0] + lo[0] < -0.5 || c[1] + lo[1] < -0.5 || c[0] + hi[0] > w - 0.5 || c[1] + hi[1] > h - 0.5 {
                    return Err(Error::Generation(format!("shape {i} leaves the canvas at s = {s}")));
                }
            }
        }
        Ok(())
    }

    /// The same motion played backwards: frame `s` of the result is frame
    /// `1 - s` of `self`.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        for shape in &mut out.shapes {
            shape.start = shape.position(1.0);
            shape.velocity = shape.velocity.map(|v| -v);
        }
        if let Background::Painted { offset, velocity, .. } = &mut out.background {
            *offset = [offset[0] + velocity[0], offset[1] + velocity[1]];
            *velocity = velocity.map(|v| -v);
        }
        out
    }

    fn background_velocity(&self) -> [f64; 2] {
        match self.background {
            Background::Flat { .. } => [0.0; 2],
            Background::Painted { velocity, .. } => velocity,
        }
    }
}

struct Renderer<'a> {
    spec: &'a SceneSpec,
    paint: Option<Paint>,
    s: f64,
}

impl Renderer<'_> {
    fn background(&self, p: [f64; 2]) -> Rgb {
        match (&self.spec.background, &self.paint) {
            (
                Background::Painted {
                    base,
                    amplitude,
                    offset,
                    velocity,
                    ..
                },
                Some(paint),
            ) => {
                let q = [
                    p[0] - offset[0] - self.s * velocity[0],
                    p[1] - offset[1] - self.s * velocity[1],
                ];
                let v = amplitude * paint.value(q);
                base.map(|b| b + v)
            }
            (Background::Flat { color }, _) => *color,
            _ => unreachable!("paint exists for painted backgrounds"),
        }
    }

    fn sample(&self, p: [f64; 2]) -> Rgb {
        let mut color = self.background(p);
        for shape in &self.spec.shapes {
            if let Some(c) = shape.color_at(shape.local_sdf(p, self.s)) {
                color = c;
            }
        }
        color
    }

    fn near_boundary(&self, p: [f64; 2]) -> bool {
        self.spec.shapes.iter().any(|shape| {
            let sd = shape.local_sdf(p, self.s);
            sd.abs() < 0.75 || (shape.outline_width > 0.0 && (sd + shape.outline_width).abs() < 0.75)
        })
    }

    fn pixel(&self, x: usize, y: usize) -> Rgb {
        let p = [x as f64, y as f64];
        if !self.near_boundary(p) {
            return self.sample(p);
        }
        let mut acc = [0.0; 3];
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let off = |i: usize| (i as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                let c = self.sample([p[0] + off(sx), p[1] + off(sy)]);
                for k in 0..3 {
                    acc[k] += c[k];
                }
            }
        }
        acc.map(|v| v / (SUPERSAMPLE * SUPERSAMPLE) as f64)
    }
}

/// Renders the scene at time `s`.
pub fn render(spec: &SceneSpec, s: f64) -> Result<Image> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Generation(format!("render time {s} outside [0, 1]")));
    }
    let paint = match spec.background {
        Background::Painted { wavelength, .. } => Some(Paint::new(spec.seed, wavelength)),
        Background::Flat { .. } => None,
    };
    let r = Renderer { spec, paint, s };
    let (h, w) = (spec.height, spec.width);
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            data.extend(r.pixel(x, y));
        }
    }
    Image::new(h, w, 3, data)
}

/// Motion from the first to the last frame: the velocity of the topmost
/// shape covering each pixel at `s = 0`, the background pan elsewhere.
pub fn analytic_flow(spec: &SceneSpec) -> Result<FlowField> {
    spec.validate()?;
    let bg = spec.background_velocity();
    FlowField::from_fn(spec.height, spec.width, |y, x| {
        let p = [x as f64, y as f64];
        let v = spec
            .shapes
            .iter()
            .rev()
            .find(|shape| shape.local_sdf(p, 0.0) <= 0.0)
            .map_or(bg, |shape| shape.velocity);
        [v[0] as f32, v[1] as f32]
    })
}

/// Renders `s = 0, tau, 1` and attaches the known motion.
pub fn gen_triplet(spec: &SceneSpec, tau: f64) -> Result<TripletSample> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Generation(format!("tau {tau} outside (0, 1)")));
    }
    Ok(TripletSample {
        name: format!("synthetic-{}-{tau}", spec.seed),
        i0: render(spec, 0.0)?,
        i_tau: render(spec, tau)?,
        i1: render(spec, 1.0)?,
        tau_true: Some(tau),
        gt_flow_01: Some(analytic_flow(spec)?),
        source: TripletSource::Synthetic,
    })
}

pub const TRIPLET_FILES: [&str; 3] = ["frame1.png", "frame2.png", "frame3.png"];

/// Writes `frame1..3.png`, `meta.json` and, when known, `gt.flo`.
pub fn save_triplet(sample: &TripletSample, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (img, name) in [&sample.i0, &sample.i_tau, &sample.i1].into_iter().zip(TRIPLET_FILES) {
        write_png(img, dir.join(name))?;
    }
    let meta = serde_json::json!({ "name": sample.name, "tau_true": sample.tau_true });
    let path = dir.join("meta.json");
    fs::write(&path, format!("{meta}\n")).map_err(|e| Error::io(&path, e))?;
    if let Some(flow) = &sample.gt_flow_01 {
        write_flo(flow, dir.join("gt.flo"))?;
    }
    Ok(())
}

fn load_one(dir: &Path) -> Result<TripletSample> {
    let [i0, i_tau, i1] = TRIPLET_FILES.map(|f| read_png(dir.join(f)));
    let (i0, i_tau, i1) = (i0?, i_tau?, i1?);
    i0.check_same_shape(&i_tau, "triplet")?;
    i0.check_same_shape(&i1, "triplet")?;
    Ok(TripletSample {
        name: dir
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
        i0,
        i_tau,
        i1,
        tau_true: None,
        gt_flow_01: None,
        source: TripletSource::Disk,
    })
}

/// Triplet folders that failed to load, with the reason.
pub type LoadFailures = Vec<(PathBuf, Error)>;

/// Loads every subdirectory of `dir` holding a triplet, in lexicographic
/// order. Broken triplets are reported alongside instead of aborting.
pub fn load_triplets(dir: impl AsRef<Path>) -> Result<(Vec<TripletSample>, LoadFailures)> {
    let dir = dir.as_ref();
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            subdirs.push(entry.path());
        }
    }
    subdirs.sort();
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for sub in subdirs {
        match load_one(&sub) {
            Ok(s) => samples.push(s),
            Err(e) => errors.push((sub, e)),
        }
    }
    Ok((samples, errors))
}

fn random_color(rng: &mut impl Rng, lo: f64, hi: f64) -> Rgb {
    [
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    ]
}

/// A few outlined shapes translating over a mid-grey background. Every
/// shape moves by `velocity`.
pub fn translation_scene(height: usize, width: usize, velocity: [f64; 2], seed: u64) -> SceneSpec {
    let mut rng = seeded_rng(seed, 8);
    let (w, h) = (width as f64, height as f64);
    let span = w.min(h);
    let margin = |r: f64, axis: usize| r + 2.0 + velocity[axis].abs();
    let n_shapes = rng.random_range(2..=4);
    let mut shapes = Vec::new();
    for i in 0..n_shapes {
        let size = rng.random_range(0.08..0.18) * span;
        let kind = match i % 3 {
            0 => ShapeKind::Disc { radius: size },
            1 => ShapeKind::Rect {
                width: 1.6 * size,
                height: size,
            },
            _ => ShapeKind::Polygon {
                vertices: vec![[-size, size * 0.8], [size, size * 0.8], [0.1 * size, -size]],
            },
        };
        let place = |rng: &mut rand_chacha::ChaCha8Rng, axis: usize, extent: f64| {
            let m = margin(size, axis);
            let lo = m - velocity[axis].min(0.0);
            let hi = extent - m - velocity[axis].max(0.0);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                extent / 2.0 - velocity[axis] / 2.0
            }
        };
        let start = [place(&mut rng, 0, w), place(&mut rng, 1, h)];
        shapes.push(ShapeSpec {
            kind,
            fill: random_color(&mut rng, 0.1, 0.9),
            outline: [0.05; 3],
            outline_width: 1.5,
            start,
            velocity,
        });
    }
    SceneSpec {
        width,
        height,
        background: Background::Flat { color: [0.5; 3] },
        shapes,
        seed,
    }
}

/// A painted background panning by `velocity`, no shapes.
pub fn panning_scene(height: usize, width: usize, velocity: [f64; 2], seed: u64) -> SceneSpec {
    SceneSpec {
        width,
        height,
        background: Background::Painted {
            base: [0.5; 3],
            amplitude: 0.35,
            wavelength: 24.0,
            offset: [0.0; 2],
            velocity,
        },
        shapes: Vec::new(),
        seed,
    }
}

/// Triplet `index` of a reproducible random dataset: a translation scene
/// with a random velocity, and the middle frame at a uniform random time in
/// `[tau_min, tau_max]`.
pub fn random_triplet(
    seed: u64,
    index: u64,
    height: usize,
    width: usize,
    tau_range: (f64, f64),
) -> Result<TripletSample> {
    let (lo, hi) = tau_range;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Error::Generation(format!("tau range [{lo}, {hi}] not inside (0, 1)")));
    }
    let mut rng = seeded_rng(seed, 1 << 32 | index);
    let speed = rng.random_range(0.05..0.12) * height.min(width) as f64;
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let velocity = [speed * angle.cos(), speed * angle.sin()];
    let tau = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let scene_seed = rng.random();
    let mut sample = gen_triplet(&translation_scene(height, width, velocity, scene_seed), tau)?;
    sample.name = format!("{index:06}");
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::backward_warp;

    fn disc_spec(velocity: [f64; 2]) -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 48,
            background: Background::Flat { color: [0.2, 0.3, 0.4] },
            shapes: vec![ShapeSpec {
                kind: ShapeKind::Disc { radius: 8.0 },
                fill: [0.9, 0.8, 0.1],
                outline: [0.0; 3],
                outline_width: 1.0,
                start: [20.0, 24.0],
                velocity,
            }],
            seed: 1,
        }
    }

    fn centroid(img: &Image, bg: f64) -> [f64; 2] {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                let w = (img.get(y, x, 0) - bg).abs();
                sx += w * x as f64;
                sy += w * y as f64;
                n += w;
            }
        }
        [sx / n, sy / n]
    }

    #[test]
    fn random_triplets_reproduce() {
        let a = random_triplet(3, 7, 32, 40, (0.1, 0.9)).unwrap();
        let b = random_triplet(3, 7, 32, 40, (0.1, 0.9)).unwrap();
        assert_eq!(a, b);
        let tau = a.tau_true.unwrap();
        assert!((0.1..=0.9).contains(&tau));
        assert_ne!(a.i0, random_triplet(3, 8, 32, 40, (0.1, 0.9)).unwrap().i0);
        assert!(random_triplet(3, 7, 32, 40, (0.0, 0.5)).is_err());
    }

    #[test]
    fn empty_scene_is_background() {
        let spec = SceneSpec {
            width: 5,
            height: 4,
            background: Background::Flat { color: [0.1, 0.2, 0.3] },
            shapes: vec![],
            seed: 0,
        };
        let img = render(&spec, 0.5).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(img.pixel(y, x), &[0.1, 0.2, 0.3]);
            }
        }
    }

    #[test]
    fn disc_moves_by_velocity() {
        let mut spec = disc_spec([10.0, 0.0]);
        spec.shapes[0].outline_width = 0.0;
        let c0 = centroid(&render(&spec, 0.0).unwrap(), 0.2);
        let c1 = centroid(&render(&spec, 1.0).unwrap(), 0.2);
        let ct = centroid(&render(&spec, 0.3).unwrap(), 0.2);
        assert!((c1[0] - c0[0] - 10.0).abs() < 1e-9, "{c0:?} {c1:?}");
        assert!((c1[1] - c0[1]).abs() < 1e-9);
        assert!((ct[0] - c0[0] - 3.0).abs() < 1e-2, "{ct:?}");
    }

    #[test]
    fn deterministic_render() {
        let spec = panning_scene(20, 30, [3.0, 1.0], 4);
        assert_eq!(render(&spec, 0.4).unwrap(), render(&spec, 0.4).unwrap());
    }

    #[test]
    fn midpoint_frame_and_flow() {
        let spec = disc_spec([10.0, 0.0]);
        let t = gen_triplet(&spec, 0.5).unwrap();
        assert_eq!(t.i_tau, render(&spec, 0.5).unwrap());
        let flow = t.gt_flow_01.unwrap();
        assert_eq!(flow.get(24, 20), [10.0, 0.0]);
        assert_eq!(flow.get(2, 2), [0.0, 0.0]);
        assert!(gen_triplet(&spec, 0.0).is_err());
        assert!(gen_triplet(&spec, 1.0).is_err());
    }

    #[test]
    fn backward_warp_with_analytic_flow_recovers_first_frame() {
        for spec in [disc_spec([7.0, -3.0]), translation_scene(48, 64, [5.0, 2.0], 3)] {
            let f0 = render(&spec, 0.0).unwrap();
            let f1 = render(&spec, 1.0).unwrap();
            let flow = analytic_flow(&spec).unwrap();
            let warped = backward_warp(&f1, &flow).unwrap();
            // Shape interiors only, away from anti-aliased boundaries.
            let (mut err, mut n) = (0.0, 0);
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let p = [x as f64, y as f64];
                    let deep = spec.shapes.iter().any(|s| s.local_sdf(p, 0.0) < -2.0 - s.outline_width)
                        && spec
                            .shapes
                            .iter()
                            .all(|s| s.local_sdf(p, 0.0).abs() > 2.0 + s.outline_width);
                    if deep {
                        for c in 0..3 {
                            err += (warped.get(y, x, c) - f0.get(y, x, c)).abs();
                            n += 1;
                        }
                    }
                }
            }
            assert!(n > 0);
            assert!(err / n as f64 <= 1e-2, "{}", err / n as f64);
        }
    }

    #[test]
    fn reversed_scene_mirrors_triplet() {
        for spec in [disc_spec([10.0, 4.0]), panning_scene(24, 32, [4.0, -2.0], 9)] {
            let fwd = gen_triplet(&spec, 0.3).unwrap();
            let back = gen_triplet(&spec.reversed(), 0.7).unwrap();
            let close = |a: &Image, b: &Image| a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12);
            assert!(close(&fwd.i0, &back.i1));
            assert!(close(&fwd.i1, &back.i0));
            assert!(close(&fwd.i_tau, &back.i_tau));
        }
    }

    #[test]
    fn shapes_leaving_canvas_rejected() {
        let spec = disc_spec([60.0, 0.0]);
        assert!(matches!(render(&spec, 0.0), Err(Error::Generation(_))));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let spec = disc_spec([3.0, 1.0]);
        assert_eq!(SceneSpec::from_json(&spec.to_json()).unwrap(), spec);
        let text = r#"{"width": 16, "height": 16, "shapes": [
            {"kind": "polygon", "vertices": [[-3,-3],[3,-3],[0,3]], "fill": [1,0,0], "start": [8,8]}]}"#;
        let parsed = SceneSpec::from_json(text).unwrap();
        assert_eq!(parsed.background, Background::default());
        assert!(SceneSpec::from_json(r#"{"width": 0, "height": 4}"#).is_err());
        assert!(SceneSpec::from_json(r#"{"width": 4, "height": 4, "extra": 1}"#).is_err());
        assert!(
            SceneSpec::from_json(r#"{"width": 4, "height": 4, "background": {"type": "flat", "color": [2,0,0]}}"#)
                .is_err()
        );
    }

    #[test]
    fn polygon_sdf_matches_rect() {
        let poly = ShapeKind::Polygon {
            vertices: vec![[-3.0, -2.0], [3.0, -2.0], [3.0, 2.0], [-3.0, 2.0]],
        };
        let rect = ShapeKind::Rect {
            width: 6.0,
            height: 4.0,
        };
        for p in [[0.0, 0.0], [2.5, 1.0], [4.0, 0.0], [5.0, 5.0], [-1.0, -2.5]] {
            assert!((poly.sdf(p) - rect.sdf(p)).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn load_triplets_reports_broken() {
        let dir = tempfile::tempdir().unwrap();
        let (s, e) = load_triplets(dir.path()).unwrap();
        assert!(s.is_empty() && e.is_empty());

        let t = gen_triplet(&disc_spec([4.0, 0.0]), 0.5).unwrap();
        save_triplet(&t, dir.path().join("b_good")).unwrap();
        save_triplet(&t, dir.path().join("a_broken")).unwrap();
        fs::remove_file(dir.path().join("a_broken/frame2.png")).unwrap();
        fs::write(dir.path().join("stray.txt"), "x").unwrap();

        let (samples, errors) = load_triplets(dir.path()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].name, "b_good");
        assert_eq!(samples[0].source, TripletSource::Disk);
        assert_eq!(errors.len(), 1);
        assert!(errors[0].0.ends_with("a_broken"));
        assert!(load_triplets(dir.path().join("missing")).is_err());
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edges::gaussian_blur;
use crate::error::{Error, Result};
use crate::imaging::{to_grayscale, Image};

use super::warp::sample_bilinear;
use super::FlowField;

/// Coarse-to-fine Horn–Schunck settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub iterations_per_level: usize,
    /// Weight of the smoothness term relative to brightness constancy.
    pub smoothness: f64,
    /// Resolution ratio between successive pyramid levels.
    pub downscale: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            iterations_per_level: 100,
            smoothness: 0.1,
            downscale: 0.5,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels == 0 {
            return Err(Error::Config("pyramid_levels must be >= 1".into()));
        }
        if self.iterations_per_level == 0 {
            return Err(Error::Config("iterations_per_level must be >= 1".into()));
        }
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(Error::Config(format!(
                "smoothness must be > 0, got {}",
                self.smoothness
            )));
        }
        if !(self.downscale > 0.0 && self.downscale < 1.0) {
            return Err(Error::Config(format!(
                "downscale must lie in (0, 1), got {}",
                self.downscale
            )));
        }
        Ok(())
    }
}

// Inner iterations between re-warps of the second image.
const ITERATIONS_PER_WARP: usize = 20;
// Pre-smoothing of the inputs; hard cel edges otherwise linearise poorly.
const PRESMOOTH_SIGMA: f64 = 1.0;
const MIN_LEVEL_SIZE: usize = 8;

/// A dense per-level flow in `f64`.
#[derive(Clone)]
struct Dense {
    h: usize,
    w: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Dense {
    fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            u: vec![0.0; h * w],
            v: vec![0.0; h * w],
        }
    }

    fn upsampled(&self, h: usize, w: usize) -> Self {
        let sx = w as f64 / self.w as f64;
        let sy = h as f64 / self.h as f64;
        let u_img = Image::new(self.h, self.w, 1, self.u.clone()).expect("finite");
        let v_img = Image::new(self.h, self.w, 1, self.v.clone()).expect("finite");
        let mut out = Dense::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let (py, px) = ((y as f64 + 0.5) / sy - 0.5, (x as f64 + 0.5) / sx - 0.5);
                out.u[y * w + x] = sample_bilinear(&u_img, py, px, 0) * sx;
                out.v[y * w + x] = sample_bilinear(&v_img, py, px, 0) * sy;
            }
        }
        out
    }

    fn to_field(&self) -> FlowField {
        let lim_u = self.w as f64 - 1e-3;
        let lim_v = self.h as f64 - 1e-3;
        let data = self
            .u
            .iter()
            .zip(&self.v)
            .map(|(&u, &v)| [u.clamp(-lim_u, lim_u) as f32, v.clamp(-lim_v, lim_v) as f32])
            .collect();
        FlowField::new(self.h, self.w, data).expect("clamped into the frame")
    }
}

fn resize(img: &Image, h: usize, w: usize) -> Image {
    let sx = w as f64 / img.width() as f64;
    let sy = h as f64 / img.height() as f64;
    Image::from_fn(h, w, 1, |y, x, _| {
        sample_bilinear(img, (y as f64 + 0.5) / sy - 0.5, (x as f64 + 0.5) / sx - 0.5, 0)
    })
}

fn pyramid(img: &Image, p: &FlowParams) -> Vec<Image> {
    let mut levels = vec![img.clone()];
    while levels.len() < p.pyramid_levels {
        let prev = levels.last().expect("non-empty");
        let h = (prev.height() as f64 * p.downscale).round() as usize;
        let w = (prev.width() as f64 * p.downscale).round() as usize;
        if h < MIN_LEVEL_SIZE || w < MIN_LEVEL_SIZE {
            break;
        }
        let smoothed = gaussian_blur(prev, 0.5 / p.downscale);
        levels.push(resize(&smoothed, h, w));
    }
    levels
}

fn gradients(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.height(), img.width());
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            gx[y * w + x] = 0.5 * (img.get_clamped(yi, xi + 1, 0) - img.get_clamped(yi, xi - 1, 0));
            gy[y * w + x] = 0.5 * (img.get_clamped(yi + 1, xi, 0) - img.get_clamped(yi - 1, xi, 0));
        }
    }
    (gx, gy)
}

// Horn–Schunck neighbourhood average: 1/6 on edge neighbours, 1/12 on
// diagonals, border replicated.
#[inline]
fn neighbour_mean(field: &[f64], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let at = |dy: isize, dx: isize| {
        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
        field[yy * w + xx]
    };
    (at(-1, 0) + at(1, 0) + at(0, -1) + at(0, 1)) / 6.0 + (at(-1, -1) + at(-1, 1) + at(1, -1) + at(1, 1)) / 12.0
}

fn refine_level(a: &Image, b: &Image, mut flow: Dense, p: &FlowParams) -> Dense {
    let (h, w) = (a.height(), a.width());
    let (ax, ay) = gradients(a);
    let mut remaining = p.iterations_per_level;
    while remaining > 0 {
        let inner = remaining.min(ITERATIONS_PER_WARP);
        remaining -= inner;

        let warped = Image::from_fn(h, w, 1, |y, x, _| {
            let i = y * w + x;
            sample_bilinear(b, y as f64 + flow.v[i], x as f64 + flow.u[i], 0)
        });
        let (bx, by) = gradients(&warped);
        let ix: Vec<f64> = ax.iter().zip(&bx).map(|(p, q)| 0.5 * (p + q)).collect();
        let iy: Vec<f64> = ay.iter().zip(&by).map(|(p, q)| 0.5 * (p + q)).collect();
        let it: Vec<f64> = warped.data().iter().zip(a.data()).map(|(p, q)| p - q).collect();
        let (u0, v0) = (flow.u.clone(), flow.v.clone());

        for _ in 0..inner {
            let (u_prev, v_prev) = (&flow.u, &flow.v);
            let (mut u_next, mut v_next) = (vec![0.0; h * w], vec![0.0; h * w]);
            u_next
                .par_chunks_mut(w)
                .zip(v_next.par_chunks_mut(w))
                .enumerate()
                .for_each(|(y, (urow, vrow))| {
                    for x in 0..w {
                        let i = y * w + x;
                        let ub = neighbour_mean(u_prev, h, w, y, x);
                        let vb = neighbour_mean(v_prev, h, w, y, x);
                        let r = ix[i] * (ub - u0[i]) + iy[i] * (vb - v0[i]) + it[i];
                        let den = p.smoothness + ix[i] * ix[i] + iy[i] * iy[i];
                        urow[x] = ub - ix[i] * r / den;
                        vrow[x] = vb - iy[i] * r / den;
                    }
                });
            flow.u = u_next;
            flow.v = v_next;
        }
    }
    flow
}

/// Dense flow from `a` to `b` (so `b(p + f(p)) ~ a(p)`) by coarse-to-fine
/// Horn–Schunck with re-warping. Deterministic for a given input.
pub fn estimate_flow(a: &Image, b: &Image, p: &FlowParams) -> Result<FlowField> {
    a.check_same_shape(b, "estimate_flow")?;
    p.validate()?;
    if a.pixel_count() == 0 {
        return Err(Error::invalid("estimate_flow on empty images"));
    }
    let ga = gaussian_blur(&to_grayscale(a)?, PRESMOOTH_SIGMA);
    let gb = gaussian_blur(&to_grayscale(b)?, PRESMOOTH_SIGMA);
    let pa = pyramid(&ga, p);
    let pb = pyramid(&gb, p);

    let coarsest = pa.last().expect("at least one level");
    let mut flow = Dense::zeros(coarsest.height(), coarsest.width());
    for (la, lb) in pa.iter().zip(&pb).rev() {
        if flow.h != la.height() || flow.w != la.width() {
            flow = flow.upsampled(la.height(), la.width());
        }
        flow = refine_level(la, lb, flow, p);
    }
    Ok(flow.to_field())
}

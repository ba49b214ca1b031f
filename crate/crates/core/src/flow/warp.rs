use crate::error::{Error, Result};
use crate::imaging::{morph, Image, Mask, MorphOp};

use super::FlowField;

/// Accumulated splat weight at or below this counts as a hole.
pub const SPLAT_EPSILON: f64 = 1e-7;

const OCCLUSION_THRESHOLD: f64 = 0.5;
const OCCLUSION_OPEN_SIZE: usize = 5;

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear sample at a real-valued position, clamped to the border. Uses
/// nested lerps so constant neighbourhoods reproduce exactly.
pub(crate) fn sample_bilinear(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let (h, w) = (img.height(), img.width());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), fx);
    let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), fx);
    lerp(top, bottom, fy)
}

/// `out(p) = img(p + f(p))`, bilinear, with out-of-frame positions clamped
/// to the border.
pub fn backward_warp(img: &Image, f: &FlowField) -> Result<Image> {
    f.check_extent(img, "backward_warp")?;
    Ok(Image::from_fn(img.height(), img.width(), img.channels(), |y, x, c| {
        let d = f.get(y, x);
        sample_bilinear(img, y as f64 + d[1] as f64, x as f64 + d[0] as f64, c)
    }))
}

/// Brightness-constancy importance `Z = -0.1 * || i0 - warp(i1, f01) ||_1`,
/// the L1 norm taken over channels.
pub fn importance_z(i0: &Image, i1: &Image, f01: &FlowField) -> Result<Image> {
    i0.check_same_shape(i1, "importance_z")?;
    let warped = backward_warp(i1, f01)?;
    let ch = i0.channels();
    let data = i0
        .data()
        .chunks_exact(ch)
        .zip(warped.data().chunks_exact(ch))
        .map(|(a, b)| -0.1 * a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>())
        .collect();
    Image::new(i0.height(), i0.width(), 1, data)
}

struct Splat {
    numerator: Vec<f64>,
    weight: Vec<f64>,
}

// Forward-splats every source pixel to the four bilinear neighbours of
// `p + scale * f(p)` with weight `b * exp(z(p))`. Raster order, so the
// floating-point sums are reproducible.
fn accumulate(img: Option<&Image>, f: &FlowField, z: Option<&Image>, scale: f64) -> Splat {
    let (h, w) = (f.height(), f.width());
    let ch = img.map_or(0, Image::channels);
    let mut numerator = vec![0.0; h * w * ch];
    let mut weight = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let d = f.get(y, x);
            let tx = x as f64 + scale * d[0] as f64;
            let ty = y as f64 + scale * d[1] as f64;
            let x0 = tx.floor();
            let y0 = ty.floor();
            let fx = tx - x0;
            let fy = ty - y0;
            let importance = z.map_or(1.0, |z| z.get(y, x, 0).exp());
            let corners = [
                (y0, x0, (1.0 - fx) * (1.0 - fy)),
                (y0, x0 + 1.0, fx * (1.0 - fy)),
                (y0 + 1.0, x0, (1.0 - fx) * fy),
                (y0 + 1.0, x0 + 1.0, fx * fy),
            ];
            for (qy, qx, b) in corners {
                if b <= 0.0 || qy < 0.0 || qx < 0.0 || qy >= h as f64 || qx >= w as f64 {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                let wgt = b * importance;
                weight[q] += wgt;
                if let Some(img) = img {
                    for (c, &v) in img.pixel(y, x).iter().enumerate() {
                        numerator[q * ch + c] += wgt * v;
                    }
                }
            }
        }
    }
    Splat { numerator, weight }
}

/// Softmax splatting of `img` along `scale * f`, with importance `z`.
///
/// Each target pixel receives the `exp(z)`-weighted average of the source
/// pixels landing on it. Pixels whose total weight is at most
/// [`SPLAT_EPSILON`] are holes: value 0 and mask 0.
pub fn softmax_splat(img: &Image, f: &FlowField, z: &Image, scale: f64) -> Result<(Image, Mask)> {
    f.check_extent(img, "softmax_splat")?;
    f.check_extent(z, "softmax_splat importance")?;
    if z.channels() != 1 {
        return Err(Error::invalid("importance map must have one channel"));
    }
    if !scale.is_finite() {
        return Err(Error::invalid("splat scale must be finite"));
    }
    let ch = img.channels();
    let Splat { numerator, weight } = accumulate(Some(img), f, Some(z), scale);
    let mut data = vec![0.0; numerator.len()];
    let mut mask = vec![0.0; weight.len()];
    for (q, &wq) in weight.iter().enumerate() {
        if wq > SPLAT_EPSILON {
            mask[q] = 1.0;
            for c in 0..ch {
                data[q * ch + c] = numerator[q * ch + c] / wq;
            }
        }
    }
    Ok((
        Image::new(img.height(), img.width(), ch, data)?,
        Mask::new(img.height(), img.width(), mask)?,
    ))
}

/// Total splat weight received by each pixel when an all-ones image is
/// splatted with uniform importance.
pub fn splat_weights(f: &FlowField, scale: f64) -> Image {
    let Splat { weight, .. } = accumulate(None, f, None, scale);
    Image::new(f.height(), f.width(), 1, weight).expect("weights are finite")
}

/// Validity mask of a forward warp: splat an image of ones, keep pixels
/// with accumulated weight above 0.5, then open with a 5x5 square.
pub fn occlusion_mask(f: &FlowField, scale: f64) -> Result<Mask> {
    let received = splat_weights(f, scale);
    let binary = received.map(|w| if w > OCCLUSION_THRESHOLD { 1.0 } else { 0.0 });
    let opened = morph(&binary, MorphOp::Open, OCCLUSION_OPEN_SIZE)?;
    Mask::new(f.height(), f.width(), opened.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(h: usize, w: usize, ch: usize) -> Image {
        Image::from_fn(h, w, ch, |y, x, c| {
            0.5 + 0.4 * ((x as f64 * 0.7 + c as f64).sin() * (y as f64 * 0.45).cos())
        })
    }

    #[test]
    fn backward_zero_flow_identity() {
        let img = textured(9, 11, 3);
        assert_eq!(backward_warp(&img, &FlowField::zeros(9, 11)).unwrap(), img);
    }

    #[test]
    fn backward_constant_fixed_point() {
        let img = Image::filled(8, 8, 3, 0.3);
        let f = FlowField::from_fn(8, 8, |y, x| [(x as f32 * 0.37).sin() * 5.0, y as f32 * 0.6 - 2.0]).unwrap();
        assert_eq!(backward_warp(&img, &f).unwrap(), img);
    }

    #[test]
    fn backward_integer_shift_of_ramp() {
        let img = Image::from_fn(4, 10, 1, |_, x, _| x as f64 / 9.0);
        let f = FlowField::uniform(4, 10, 1.0, 0.0).unwrap();
        let out = backward_warp(&img, &f).unwrap();
        for y in 0..4 {
            for x in 0..9 {
                assert_eq!(out.get(y, x, 0), img.get(y, x + 1, 0));
            }
        }
    }

    #[test]
    fn importance_cases() {
        let a = textured(6, 6, 3);
        let z = importance_z(&a, &a, &FlowField::zeros(6, 6)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let black = Image::zeros(2, 2, 3);
        let b = Image::from_fn(2, 2, 3, |_, _, c| [0.5, 0.25, 0.25][c]);
        let z = importance_z(&black, &b, &FlowField::zeros(2, 2)).unwrap();
        assert!(z.data().iter().all(|&v| (v + 0.1).abs() < 1e-15));
    }

    #[test]
    fn splat_zero_flow_reproduces() {
        let img = textured(7, 9, 3);
        let z = Image::zeros(7, 9, 1);
        let (out, mask) = softmax_splat(&img, &FlowField::zeros(7, 9), &z, 0.37).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(mask, Mask::ones(7, 9));
    }

    #[test]
    fn splat_single_pixel_lands_two_columns_right() {
        let mut img = Image::zeros(6, 8, 1);
        img.set(2, 2, 0, 1.0);
        let f = FlowField::uniform(6, 8, 2.0, 0.0).unwrap();
        let (out, mask) = softmax_splat(&img, &f, &Image::zeros(6, 8, 1), 1.0).unwrap();
        assert_eq!(out.get(2, 4, 0), 1.0);
        assert_eq!(out.get(2, 2, 0), 0.0);
        assert_eq!(mask.get(2, 4), 1.0);
        assert_eq!(mask.get(2, 0), 0.0);
        assert_eq!(mask.get(2, 1), 0.0);
    }

    #[test]
    fn splat_collision_is_softmax_average() {
        let img = Image::new(1, 3, 1, vec![0.2, 0.8, 0.0]).unwrap();
        // pixel 0 moves onto pixel 1; pixel 1 stays; pixel 2 leaves the frame
        let f = FlowField::new(1, 3, vec![[1.0, 0.0], [0.0, 0.0], [2.5, 0.0]]).unwrap();
        let z = Image::new(1, 3, 1, vec![0.0, 3f64.ln(), 0.0]).unwrap();
        let (out, mask) = softmax_splat(&img, &f, &z, 1.0).unwrap();
        assert!((out.get(0, 1, 0) - 0.65).abs() < 1e-12);
        assert_eq!(mask.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn splat_constant_fixed_point_where_valid() {
        let img = Image::filled(10, 10, 3, 0.7);
        let f = FlowField::from_fn(10, 10, |y, x| [((x + y) as f32 * 0.3).sin() * 1.5, 0.4]).unwrap();
        let (out, mask) = softmax_splat(&img, &f, &Image::zeros(10, 10, 1), 1.0).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                for c in 0..3 {
                    let expect = if mask.is_set(y, x) { 0.7 } else { 0.0 };
                    assert!((out.get(y, x, c) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn occlusion_zero_flow_full() {
        assert_eq!(
            occlusion_mask(&FlowField::zeros(12, 12), 0.5).unwrap(),
            Mask::ones(12, 12)
        );
    }

    #[test]
    fn occlusion_uniform_flow_vacates_band() {
        let f = FlowField::uniform(20, 30, 8.0, 0.0).unwrap();
        let m = occlusion_mask(&f, 1.0).unwrap();
        for y in 2..18 {
            for x in 0..30 {
                assert_eq!(m.is_set(y, x), x >= 8, "({y},{x})");
            }
        }
    }

    #[test]
    fn occlusion_hole_survives_speck_does_not() {
        // One pixel jumps far right, leaving a single-pixel hole.
        let hole = FlowField::from_fn(16, 16, |y, x| if (y, x) == (8, 4) { [9.0, 0.0] } else { [0.0, 0.0] }).unwrap();
        let m = occlusion_mask(&hole, 1.0).unwrap();
        assert!(!m.is_set(8, 4));
        assert_eq!(m.count(), 16 * 16 - 1);

        // Left half vacates an 8-px band; a single pixel is sent back into it.
        let speck =
            FlowField::from_fn(16, 24, |y, x| if (y, x) == (8, 10) { [-6.0, 0.0] } else { [8.0, 0.0] }).unwrap();
        let received = splat_weights(&speck, 1.0);
        assert!(received.get(8, 4, 0) > 0.5);
        let m = occlusion_mask(&speck, 1.0).unwrap();
        assert!(!m.is_set(8, 4));
    }

    proptest! {
        #[test]
        fn splat_conserves_weighted_mass(
            seed in any::<u64>(), scale in 0.0f64..1.0
        ) {
            let (h, w) = (12usize, 12usize);
            let mut s = seed | 1;
            let mut next = move || {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let img = Image::from_fn(h, w, 1, |_, _, _| next());
            let z = Image::from_fn(h, w, 1, |_, _, _| -next());
            // Interior pixels move up to 2 px; a 3-px border stays put so
            // nothing leaves the frame.
            let f = FlowField::from_fn(h, w, |y, x| {
                if (3..h - 3).contains(&y) && (3..w - 3).contains(&x) {
                    [(next() * 4.0 - 2.0) as f32, (next() * 4.0 - 2.0) as f32]
                } else {
                    [0.0, 0.0]
                }
            }).unwrap();
            let (out, _) = softmax_splat(&img, &f, &z, scale).unwrap();
            let Splat { weight, .. } = accumulate(Some(&img), &f, Some(&z), scale);
            let lhs: f64 = out.data().iter().zip(&weight).map(|(o, w)| o * w).sum();
            let rhs: f64 = img.data().iter().zip(z.data()).map(|(v, z)| v * z.exp()).sum();
            prop_assert!((lhs - rhs).abs() < 1e-5);

            // Convex hull: each output lies within the range of source values.
            let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (&o, &w) in out.data().iter().zip(&weight) {
                if w > SPLAT_EPSILON {
                    prop_assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
                }
            }
        }
    }
}

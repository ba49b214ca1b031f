use crate::error::{Error, Result};

use super::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Erosion followed by dilation.
    Open,
}

/// Grayscale morphology with a flat `se_size x se_size` square structuring
/// element. Borders replicate the edge pixels.
pub fn morph(img: &Image, op: MorphOp, se_size: usize) -> Result<Image> {
    if img.channels() != 1 {
        return Err(Error::invalid(format!(
            "morphology expects a 1-channel image, got {}",
            img.channels()
        )));
    }
    if se_size == 0 || se_size.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "structuring element size must be odd and >= 1, got {se_size}"
        )));
    }
    let radius = se_size / 2;
    Ok(match op {
        MorphOp::Erode => rank_filter(img, radius, f64::min),
        MorphOp::Dilate => rank_filter(img, radius, f64::max),
        MorphOp::Open => rank_filter(&rank_filter(img, radius, f64::min), radius, f64::max),
    })
}

// A square flat element is separable: filter rows, then columns.
fn rank_filter(img: &Image, radius: usize, pick: fn(f64, f64) -> f64) -> Image {
    if radius == 0 || img.pixel_count() == 0 {
        return img.clone();
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let r = radius as isize;

    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = line[x];
            for dx in -r..=r {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                acc = pick(acc, line[xx]);
            }
            rows[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = rows[y * w + x];
            for dy in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                acc = pick(acc, rows[yy * w + x]);
            }
            out[y * w + x] = acc;
        }
    }
    Image::new(h, w, 1, out).expect("rank filter preserves shape")
}

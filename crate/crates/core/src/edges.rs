//! Explicit edge guidance for line art: a Difference-of-Gaussians response
//! offset to 0.5 and the normalised Euclidean distance to its edge set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{edt, Image, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Ratio between the wide and narrow blur.
    pub k_sigma: f64,
    /// Gain applied to the blur difference.
    pub k_t: f64,
    /// Standard deviation of the narrow blur, in pixels.
    pub sigma: f64,
    /// Edge membership is `dog > dog_threshold`.
    pub dog_threshold: f64,
    /// Distance steepness of the normalised transform, in pixels.
    pub d: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            k_sigma: 1.6,
            k_t: 2.0,
            sigma: 1.0,
            dog_threshold: 0.5,
            d: 15.0,
        }
    }
}

impl EdgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_sigma > 1.0) {
            return Err(Error::Config(format!("k_sigma must be > 1, got {}", self.k_sigma)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.d > 0.0) {
            return Err(Error::Config(format!("d must be > 0, got {}", self.d)));
        }
        if !self.k_t.is_finite() || !self.dog_threshold.is_finite() {
            return Err(Error::Config("k_t and dog_threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Normalised 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with edge replication, applied per channel.
///
/// Accumulates weighted differences to the centre sample, so constant
/// regions come out bit-identical to the input.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let taps = gaussian_kernel(sigma);
    let r = (taps.len() / 2) as isize;
    let (h, w, ch) = img.shape();

    let horizontal = Image::from_fn(h, w, ch, |y, x, c| {
        let centre = img.get(y, x, c);
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            acc += t * (img.get_clamped(y as isize, x as isize + k as isize - r, c) - centre);
        }
        centre + acc
    });
    Image::from_fn(h, w, ch, |y, x, c| {
        let centre = horizontal.get(y, x, c);
        let mut acc = 0.0;
        for (k, &t) in taps.iter().enumerate() {
            acc += t * (horizontal.get_clamped(y as isize + k as isize - r, x as isize, c) - centre);
        }
        centre + acc
    })
}

/// `0.5 + k_t * (G_{k_sigma sigma}(I) - G_sigma(I))`, clamped to `[0, 1]`.
pub fn dog(img: &Image, p: &EdgeParams) -> Result<Image> {
    if img.channels() != 1 {
        return Err(Error::invalid("dog expects a 1-channel image"));
    }
    p.validate()?;
    let narrow = gaussian_blur(img, p.sigma);
    let wide = gaussian_blur(img, p.k_sigma * p.sigma);
    wide.zip_map(&narrow, |g_wide, g_narrow| {
        (0.5 + p.k_t * (g_wide - g_narrow)).clamp(0.0, 1.0)
    })
}

/// Binary edge set `dog > dog_threshold`.
pub fn edge_mask(img: &Image, p: &EdgeParams) -> Result<Mask> {
    Mask::threshold(&dog(img, p)?, p.dog_threshold)
}

/// `1 - exp(-EDT(edges) / d)`. With no detected edges every pixel is
/// infinitely far away and the map is 1 everywhere.
pub fn nedt(img: &Image, p: &EdgeParams) -> Result<Image> {
    let edges = edge_mask(img, p)?;
    Ok(edt(&edges).map(|dist| 1.0 - (-dist / p.d).exp()))
}

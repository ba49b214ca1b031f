use crate::error::{Error, Result};

/// Rec. 601 luma weights used for RGB to grayscale conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A dense `height x width x channels` image stored row-major with
/// interleaved channels.
///
/// Images loaded from disk are in `[0, 1]`. Intermediate planes (diffusion
/// states, distance maps, importance maps) reuse the same container and may
/// leave the unit interval; every value is always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("image must have at least one channel"));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite image value at index {i}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0 && value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds an image by evaluating `f(y, x, c)` for every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels > 0);
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(y, x, c);
                    assert!(v.is_finite(), "non-finite value at ({y}, {x}, {c})");
                    data.push(v);
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw samples. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = (y * self.width + x) * self.channels + c;
        self.data[i] = v;
    }

    /// Sample at `(y, x)` with coordinates clamped into the image.
    #[inline]
    pub fn get_clamped(&self, y: isize, x: isize, c: usize) -> f64 {
        let y = y.clamp(0, self.height as isize - 1) as usize;
        let x = x.clamp(0, self.width as isize - 1) as usize;
        self.get(y, x, c)
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub fn same_extent(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    pub(crate) fn check_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two images of identical shape.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.check_same_shape(other, "zip_map")?;
        Ok(Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn clamp_unit(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Extracts a single channel as a 1-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }
}

/// Converts to one channel. Three-channel input uses [`LUMA_WEIGHTS`]; a
/// one-channel image is returned unchanged.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let data = img
                .data
                .chunks_exact(3)
                .map(|p| LUMA_WEIGHTS[0] * p[0] + LUMA_WEIGHTS[1] * p[1] + LUMA_WEIGHTS[2] * p[2])
                .collect();
            Ok(Image {
                height: img.height,
                width: img.width,
                channels: 1,
                data,
            })
        }
        n => Err(Error::invalid(format!(
            "grayscale conversion needs 1 or 3 channels, got {n}"
        ))),
    }
}

/// A single-plane map with values in `[0, 1]`: occlusion, validity and
/// motion masks. Binary masks hold only 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "mask data has {} values, expected {}",
                data.len(),
                height * width
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "mask value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::filled(height, width, 1.0)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    /// Binary mask from a predicate on `(y, x)`.
    pub fn from_predicate(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(if f(y, x) { 1.0 } else { 0.0 });
            }
        }
        Self { height, width, data }
    }

    /// Binary mask of the samples of a 1-channel image strictly above `threshold`.
    pub fn threshold(img: &Image, threshold: f64) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::invalid("threshold expects a 1-channel image"));
        }
        Ok(Self {
            height: img.height(),
            width: img.width(),
            data: img
                .data()
                .iter()
                .map(|&v| if v > threshold { 1.0 } else { 0.0 })
                .collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_set(&self, y: usize, x: usize) -> bool {
        self.get(y, x) > 0.5
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_of_gray_rgb_is_constant() {
        let img = Image::filled(4, 5, 3, 0.5);
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.channels(), 1);
        for &v in g.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn grayscale_of_pure_red() {
        let img = Image::from_fn(2, 2, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 });
        let g = to_grayscale(&img).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.299));
    }

    #[test]
    fn grayscale_single_channel_is_identity() {
        let img = Image::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f64 / 9.0);
        assert_eq!(to_grayscale(&img).unwrap(), img);
    }

    #[test]
    fn grayscale_rejects_two_channels() {
        let img = Image::zeros(2, 2, 2);
        assert!(matches!(to_grayscale(&img), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn constructor_validates() {
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Mask::new(1, 2, vec![0.0, 1.5]).is_err());
        assert!(Mask::new(1, 2, vec![0.0, 1.0]).unwrap().is_binary());
    }
}

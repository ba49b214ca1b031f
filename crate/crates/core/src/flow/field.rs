use crate::error::{Error, Result};
use crate::imaging::Image;

/// Per-pixel displacement `(u, v)` in pixels, row-major, stored as `f32`
/// so that `.flo` files round-trip bit-exactly.
///
/// Vectors are always finite. Estimated flows also satisfy `|u| < width`,
/// `|v| < height` (see [`FlowField::is_within_frame`]); ingested flows are
/// not required to.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "flow has {} vectors, expected {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|d| !(d[0].is_finite() && d[1].is_finite())) {
            return Err(Error::invalid(format!(
                "flow vector {:?} at index {i} is not finite",
                data[i]
            )));
        }
        Ok(Self { height, width, data })
    }

    /// True when every vector satisfies `|u| < width` and `|v| < height`.
    pub fn is_within_frame(&self) -> bool {
        self.data
            .iter()
            .all(|d| (d[0].abs() as f64) < self.width as f64 && (d[1].abs() as f64) < self.height as f64)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![[0.0; 2]; height * width],
        }
    }

    pub fn uniform(height: usize, width: usize, u: f32, v: f32) -> Result<Self> {
        Self::new(height, width, vec![[u, v]; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[[f32; 2]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    /// Multiplies every vector by `factor`, clamping to the frame bounds.
    pub fn scaled(&self, factor: f64) -> FlowField {
        let (h, w) = (self.height as f64, self.width as f64);
        let lim_u = (w - 1e-3).max(0.0);
        let lim_v = (h - 1e-3).max(0.0);
        FlowField {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|d| {
                    [
                        (d[0] as f64 * factor).clamp(-lim_u, lim_u) as f32,
                        (d[1] as f64 * factor).clamp(-lim_v, lim_v) as f32,
                    ]
                })
                .collect(),
        }
    }

    pub(crate) fn check_extent(&self, img: &Image, what: &str) -> Result<()> {
        if img.same_extent(self.height, self.width) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: flow is {}x{} but image is {}x{}",
                self.height,
                self.width,
                img.height(),
                img.width()
            )))
        }
    }
}

/// Per-pixel Euclidean norm `sqrt(u^2 + v^2)`.
pub fn flow_magnitude(f: &FlowField) -> Image {
    let data = f.data().iter().map(|d| (d[0] as f64).hypot(d[1] as f64)).collect();
    Image::new(f.height(), f.width(), 1, data).expect("magnitudes are finite")
}

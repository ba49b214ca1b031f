use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, Limits};

use crate::error::{Error, Result};

use super::Image;

// Decoder allocation ceiling: 16k x 16k RGB at 8 bits.
const MAX_DECODE_BYTES: u64 = 16_384 * 16_384 * 3;

/// Decodes an 8-bit grayscale or RGB PNG into `[0, 1]` intensities (`v/255`).
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let mut limits = Limits::default();
    limits.max_alloc = Some(MAX_DECODE_BYTES);
    reader.limits(limits);
    let decoded = reader.decode().map_err(|e| Error::Codec(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, raw) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(Error::Codec(format!(
                "unsupported PNG pixel layout {:?}; expected 8-bit grayscale or RGB",
                other.color()
            )))
        }
    };
    let data = raw.into_iter().map(|v| v as f64 / 255.0).collect();
    Image::new(h, w, channels, data)
}

/// Encodes a 1- or 3-channel image as 8-bit PNG using `round(v * 255)`
/// after clamping to `[0, 1]`.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (h, w, c) = img.shape();
    let raw: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let dynamic = match c {
        1 => image::GrayImage::from_raw(w as u32, h as u32, raw).map(DynamicImage::ImageLuma8),
        3 => image::RgbImage::from_raw(w as u32, h as u32, raw).map(DynamicImage::ImageRgb8),
        n => return Err(Error::invalid(format!("PNG output needs 1 or 3 channels, got {n}"))),
    }
    .ok_or_else(|| Error::invalid("image buffer size mismatch"))?;
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Codec(msg) => Error::Codec(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip() {
        let img = Image::from_fn(5, 7, 3, |y, x, c| ((y * 31 + x * 17 + c * 5) % 256) as f64 / 255.0);
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
        let gray = img.channel(1);
        assert_eq!(decode_png(&encode_png(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn write_rounds_to_nearest_level() {
        let img = Image::new(1, 3, 1, vec![0.5, -0.2, 1.7]).unwrap();
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.data(), &[128.0 / 255.0, 0.0, 1.0]);
    }

    #[test]
    fn garbage_is_codec_error() {
        assert!(matches!(decode_png(b"not a png"), Err(Error::Codec(_))));
        assert!(encode_png(&Image::zeros(2, 2, 2)).is_err());
    }
}

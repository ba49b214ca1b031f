use crate::error::{Error, Result};

use super::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Peak signal-to-noise ratio in dB for a peak value of 1.0, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    if a.data().is_empty() {
        return Err(Error::invalid("psnr of empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            w[y * SSIM_WINDOW + x] = g[y] * g[x];
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 1. Windows are evaluated only
/// where they fit entirely inside the image; channels are averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w, ch) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    let mut total = 0.0;
    for c in 0..ch {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let k = win[dy * SSIM_WINDOW + dx];
                        let va = a.get(y0 + dy, x0 + dx, c);
                        let vb = b.get(y0 + dy, x0 + dx, c);
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let var_a = saa - ma * ma;
                let var_b = sbb - mb * mb;
                let cov = sab - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / ch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, ch: usize) -> Image {
        Image::from_fn(h, w, ch, |y, x, c| ((y * 7 + x * 3 + c * 5) % 23) as f64 / 22.0)
    }

    #[test]
    fn psnr_identical_hits_cap() {
        let a = ramp(8, 8, 3);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn psnr_uniform_offsets() {
        let a = Image::filled(4, 4, 1, 0.2);
        let b = Image::filled(4, 4, 1, 0.3);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = Image::filled(4, 4, 1, 0.0);
        let d = Image::filled(4, 4, 1, 1.0);
        assert_eq!(psnr(&c, &d).unwrap(), 0.0);
    }

    #[test]
    fn psnr_symmetric_and_shape_checked() {
        let a = ramp(6, 5, 1);
        let b = a.map(|v| (v * 0.9 + 0.03).min(1.0));
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(psnr(&a, &ramp(5, 6, 1)).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = ramp(16, 20, 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_inverted_checker_is_negative() {
        let a = Image::from_fn(16, 16, 1, |y, x, _| ((y + x) % 2) as f64);
        let b = a.map(|v| 1.0 - v);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "{s}");
        assert!((ssim(&b, &a).unwrap() - s).abs() < 1e-9);
    }

    #[test]
    fn ssim_tiny_noise_near_one() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1e-4).unwrap();
        let a = ramp(24, 24, 1);
        let b = Image::from_fn(24, 24, 1, |y, x, _| a.get(y, x, 0) + n.sample(&mut rng));
        assert!(ssim(&a, &b).unwrap() >= 0.999);
    }

    #[test]
    fn ssim_rejects_small() {
        let a = Image::zeros(10, 30, 1);
        assert!(ssim(&a, &a).is_err());
    }
}

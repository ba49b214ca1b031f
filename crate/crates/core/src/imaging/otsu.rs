use crate::error::{Error, Result};

use super::Image;

pub const OTSU_BINS: usize = 256;

fn bin_of(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * (OTSU_BINS - 1) as f64).round()) as usize
}

fn bin_center(k: usize) -> f64 {
    k as f64 / (OTSU_BINS - 1) as f64
}

/// Otsu's threshold over a 256-bin histogram of a 1-channel image.
///
/// Bin `k` collects values that round to `k/255`; the returned threshold is
/// the center of the last bin of the lower class, so `v > threshold` splits
/// the image into the two Otsu classes. A constant image returns its value.
pub fn otsu_threshold(img: &Image) -> Result<f64> {
    if img.channels() != 1 {
        return Err(Error::invalid("otsu_threshold expects a 1-channel image"));
    }
    let data = img.data();
    let Some(&first) = data.first() else {
        return Err(Error::invalid("otsu_threshold on an empty image"));
    };
    if data.iter().all(|&v| v == first) {
        return Ok(first);
    }

    let mut hist = [0u64; OTSU_BINS];
    for &v in data {
        hist[bin_of(v)] += 1;
    }
    let total = data.len() as f64;
    let mean_total: f64 = hist.iter().enumerate().map(|(k, &n)| k as f64 * n as f64).sum::<f64>() / total;

    let mut between = [0.0f64; OTSU_BINS];
    let mut weight0 = 0.0;
    let mut first_moment0 = 0.0;
    for (k, &n) in hist.iter().enumerate() {
        weight0 += n as f64 / total;
        first_moment0 += k as f64 * n as f64 / total;
        let weight1 = 1.0 - weight0;
        if weight0 <= 0.0 || weight1 <= 1e-15 {
            continue;
        }
        let num = mean_total * weight0 - first_moment0;
        between[k] = num * num / (weight0 * weight1);
    }
    let best = between.iter().copied().fold(0.0, f64::max);
    if best <= 0.0 {
        // All mass in a single bin: no split exists, report that bin.
        return Ok(bin_center(bin_of(first)));
    }
    // Empty bins between the classes form a plateau of equal variance; take
    // its midpoint so the threshold is symmetric under intensity inversion.
    let tied = |k: &usize| between[*k] >= best * (1.0 - 1e-12);
    let lo = (0..OTSU_BINS).find(tied).expect("maximum exists");
    let hi = (0..OTSU_BINS).rev().find(tied).expect("maximum exists");
    let k = (lo + hi) / 2;
    Ok(bin_center(k))
}

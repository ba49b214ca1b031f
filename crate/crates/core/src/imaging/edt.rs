use super::{Image, Mask};

/// Distance reported everywhere when the mask has no foreground.
pub const EDT_UNREACHABLE: f64 = f64::MAX;

/// Exact Euclidean distance from each pixel to the nearest foreground
/// (`> 0.5`) pixel of `mask`, in pixels.
///
/// Separable lower-envelope-of-parabolas transform (Felzenszwalb and
/// Huttenlocher), exact on the integer grid. A mask with no foreground maps
/// to [`EDT_UNREACHABLE`] everywhere.
pub fn edt(mask: &Mask) -> Image {
    let (h, w) = (mask.height(), mask.width());
    if mask.count() == 0 {
        return Image::filled(h, w, 1, EDT_UNREACHABLE);
    }

    // Squared distances; `None` marks "no foreground on this line yet".
    let mut cols: Vec<Option<f64>> = vec![None; h * w];
    let mut f = vec![None; h.max(w)];
    let mut d = vec![None; h.max(w)];

    for x in 0..w {
        for (y, slot) in f[..h].iter_mut().enumerate() {
            *slot = mask.is_set(y, x).then_some(0.0);
        }
        transform_1d(&f[..h], &mut d[..h]);
        for y in 0..h {
            cols[y * w + x] = d[y];
        }
    }

    let mut out = vec![0.0; h * w];
    for y in 0..h {
        f[..w].copy_from_slice(&cols[y * w..(y + 1) * w]);
        transform_1d(&f[..w], &mut d[..w]);
        for x in 0..w {
            out[y * w + x] = d[x].expect("foreground exists").sqrt();
        }
    }
    Image::new(h, w, 1, out).expect("distances are finite")
}

// 1-D squared distance transform of sampled function `f`, where `None` is
// +infinity. Only finite samples contribute parabolas.
fn transform_1d(f: &[Option<f64>], d: &mut [Option<f64>]) {
    let n = f.len();
    let mut verts: Vec<usize> = Vec::with_capacity(n);
    let mut bounds: Vec<f64> = Vec::with_capacity(n + 1);

    for q in 0..n {
        let Some(fq) = f[q] else { continue };
        loop {
            let Some(&p) = verts.last() else {
                verts.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let fp = f[p].expect("vertices are finite");
            let s = ((fq + (q * q) as f64) - (fp + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= *bounds.last().expect("paired with vertex") {
                verts.pop();
                bounds.pop();
            } else {
                verts.push(q);
                bounds.push(s);
                break;
            }
        }
    }

    if verts.is_empty() {
        d.fill(None);
        return;
    }
    let mut k = 0;
    for (x, out) in d.iter_mut().enumerate() {
        while k + 1 < verts.len() && bounds[k + 1] < x as f64 {
            k += 1;
        }
        let p = verts[k];
        let dx = x as f64 - p as f64;
        *out = Some(dx * dx + f[p].expect("vertices are finite"));
    }
}

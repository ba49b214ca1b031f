//! Frame interpolation end to end: warp both frames to time `tau`, fill the
//! holes, then refine with the reverse diffusion chain.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    builtin_denoiser, reverse_sample, BuiltinDenoiser, ConditionSet, DenoiserKind, SamplerOptions, SamplerRun,
};
use crate::edges::{nedt, EdgeParams};
use crate::error::{Error, Result, StageExt};
use crate::flow::{estimate_flow, importance_z, occlusion_mask, softmax_splat, FlowField, FlowParams};
use crate::imaging::{to_grayscale, Image, Mask};
use crate::schedule::{partition_weights, NoiseSchedule, ScheduleConfig};
use crate::taumetric::{tau_ifd, FlowSource};

/// Both frames and their edge maps forward-warped to time `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpBundle {
    pub img_0: Image,
    pub img_1: Image,
    pub edge_0: Image,
    pub edge_1: Image,
    pub mask_0: Mask,
    pub mask_1: Mask,
    pub z_0: Image,
    pub z_1: Image,
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau {tau} outside [0, 1]")))
    }
}

/// Splats `i0` along `tau * f01` and `i1` along `(1 - tau) * f10`.
pub fn warp_to_tau(
    i0: &Image,
    i1: &Image,
    tau: f64,
    f01: &FlowField,
    f10: &FlowField,
    edges: &EdgeParams,
) -> Result<WarpBundle> {
    check_tau(tau)?;
    i0.check_same_shape(i1, "warp_to_tau")?;
    let z_0 = importance_z(i0, i1, f01)?;
    let z_1 = importance_z(i1, i0, f10)?;
    let (img_0, _) = softmax_splat(i0, f01, &z_0, tau)?;
    let (img_1, _) = softmax_splat(i1, f10, &z_1, 1.0 - tau)?;
    let (edge_0, _) = softmax_splat(&nedt(&to_grayscale(i0)?, edges)?, f01, &z_0, tau)?;
    let (edge_1, _) = softmax_splat(&nedt(&to_grayscale(i1)?, edges)?, f10, &z_1, 1.0 - tau)?;
    Ok(WarpBundle {
        img_0,
        img_1,
        edge_0,
        edge_1,
        mask_0: occlusion_mask(f01, tau)?,
        mask_1: occlusion_mask(f10, 1.0 - tau)?,
        z_0,
        z_1,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfillRule {
    /// Holes in one direction take the other direction's warp; holes in
    /// both take the linear cross-fade of the inputs.
    #[default]
    MaskBlend,
    /// The product form `M0 * I0^ * I0 + (1 - M0) * I1^ * I1`, averaged
    /// over both directions, taken as written.
    Literal,
}

impl FromStr for InfillRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask_blend" => Ok(Self::MaskBlend),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::Config(format!("unknown infill rule {s:?}"))),
        }
    }
}

/// Fills warp holes and merges the two directions into one estimate,
/// clamped to `[0, 1]`.
pub fn infill(b: &WarpBundle, i0: &Image, i1: &Image, tau: f64, rule: InfillRule) -> Result<Image> {
    check_tau(tau)?;
    for img in [&b.img_0, &b.img_1, i1] {
        img.check_same_shape(i0, "infill")?;
    }
    if !b.mask_0.is_binary() || !b.mask_1.is_binary() {
        return Err(Error::invalid("infill masks must be binary"));
    }
    Ok(Image::from_fn(i0.height(), i0.width(), i0.channels(), |y, x, c| {
        let (m0, m1) = (b.mask_0.get(y, x), b.mask_1.get(y, x));
        let (w0, w1) = (b.img_0.get(y, x, c), b.img_1.get(y, x, c));
        let (a, z) = (i0.get(y, x, c), i1.get(y, x, c));
        let v = match rule {
            InfillRule::MaskBlend if m0 == 0.0 && m1 == 0.0 => (1.0 - tau) * a + tau * z,
            InfillRule::MaskBlend => {
                let from_0 = m0 * w0 + (1.0 - m0) * w1;
                let from_1 = m1 * w1 + (1.0 - m1) * w0;
                0.5 * (from_0 + from_1)
            }
            InfillRule::Literal => {
                0.5 * (m0 * w0 * a + (1.0 - m0) * w1 * z) + 0.5 * (m1 * w1 * z + (1.0 - m1) * w0 * a)
            }
        };
        v.clamp(0.0, 1.0)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSource {
    Fixed(f64),
    /// Estimated from the triplet; needs the middle frame.
    Ifd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    /// Condition weights are replaced by the partition derived from tau.
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserKind,
    pub flow: FlowParams,
    pub edges: EdgeParams,
    pub tau: TauSource,
    pub infill: InfillRule,
    pub seed: u64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserKind::Shrinkage,
            flow: FlowParams::default(),
            edges: EdgeParams::default(),
            tau: TauSource::Fixed(0.5),
            infill: InfillRule::MaskBlend,
            seed: 0,
        }
    }
}

/// Everything up to the reverse chain, reusable across seeds.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tau_used: f64,
    pub conds: ConditionSet,
    pub schedule: NoiseSchedule,
    pub denoiser: BuiltinDenoiser,
    pub bundle: WarpBundle,
    /// Infilled warp estimate fed to the denoiser.
    pub estimate: Image,
}

impl Prepared {
    pub fn sample(&self, seed: u64, options: SamplerOptions) -> Result<SamplerRun> {
        reverse_sample(
            &self.conds,
            &self.schedule,
            &self.denoiser,
            self.tau_used,
            seed,
            options,
        )
        .stage("sample")
    }
}

/// Flows, warps, infill, schedule and denoiser for a frame pair. `gt` is the
/// true middle frame, needed by the oracle denoiser and by tau estimation.
pub fn prepare(i0: &Image, i1: &Image, cfg: &InterpConfig, gt: Option<&Image>) -> Result<Prepared> {
    i0.check_same_shape(i1, "interpolate").stage("input")?;
    if let Some(gt) = gt {
        gt.check_same_shape(i0, "interpolate ground truth").stage("input")?;
    }
    cfg.flow.validate().stage("config")?;
    cfg.edges.validate().stage("config")?;

    let tau_used = match cfg.tau {
        TauSource::Fixed(t) => {
            check_tau(t).stage("tau")?;
            t
        }
        TauSource::Ifd => {
            let gt = gt
                .ok_or_else(|| Error::Config("tau estimation needs the middle frame".into()))
                .stage("tau")?;
            tau_ifd(i0, gt, i1, &FlowSource::Estimator(cfg.flow)).stage("tau")?.tau
        }
    };

    let (f01, f10) = rayon::join(|| estimate_flow(i0, i1, &cfg.flow), || estimate_flow(i1, i0, &cfg.flow));
    let (f01, f10) = (f01.stage("flow")?, f10.stage("flow")?);
    let bundle = warp_to_tau(i0, i1, tau_used, &f01, &f10, &cfg.edges).stage("warp")?;
    let estimate = infill(&bundle, i0, i1, tau_used, cfg.infill).stage("infill")?;

    let weights = partition_weights(tau_used).stage("schedule")?;
    let schedule = NoiseSchedule::build(&cfg.schedule.clone().with_weights(weights.to_vec())).stage("schedule")?;
    let denoiser = builtin_denoiser(cfg.denoiser, gt, Some(&estimate)).stage("denoiser")?;
    let conds = ConditionSet::new(vec![i0.clone(), i1.clone()]).stage("input")?;
    Ok(Prepared {
        tau_used,
        conds,
        schedule,
        denoiser,
        bundle,
        estimate,
    })
}

#[derive(Debug, Clone)]
pub struct Interpolation {
    pub output: Image,
    pub run: SamplerRun,
    pub tau_used: f64,
    pub estimate: Image,
}

pub fn interpolate(
    i0: &Image,
    i1: &Image,
    cfg: &InterpConfig,
    gt: Option<&Image>,
    options: SamplerOptions,
) -> Result<Interpolation> {
    let prep = prepare(i0, i1, cfg, gt)?;
    let run = prep.sample(cfg.seed, options)?;
    Ok(Interpolation {
        output: run.final_image.clone(),
        run,
        tau_used: prep.tau_used,
        estimate: prep.estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    #[serde(skip)]
    pub mean_img: Image,
    #[serde(skip)]
    pub sd_map: Image,
    #[serde(skip)]
    pub minmax_map: Image,
    pub mean_pairwise_corr: f64,
    pub samples: usize,
}

impl UncertaintyReport {
    pub fn global_sd(&self) -> f64 {
        self.sd_map.mean()
    }

    pub fn global_minmax(&self) -> f64 {
        self.minmax_map.mean()
    }
}

/// Pearson correlation of two flattened images. Two constant images count
/// as perfectly correlated when equal and uncorrelated otherwise.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Per-pixel spread of a set of same-shape samples.
pub fn summarize_samples(samples: &[Image]) -> Result<UncertaintyReport> {
    if samples.len() < 2 {
        return Err(Error::invalid("uncertainty needs at least two samples"));
    }
    let first = &samples[0];
    for s in samples {
        s.check_same_shape(first, "uncertainty samples")?;
    }
    let (h, w, ch) = first.shape();
    let n = samples.len() as f64;
    // Deviations from the first sample keep identical samples exact.
    let shifted = |y: usize, x: usize, c: usize| {
        let base = first.get(y, x, c);
        let (sum, sq) = samples.iter().fold((0.0, 0.0), |(sum, sq), s| {
            let d = s.get(y, x, c) - base;
            (sum + d, sq + d * d)
        });
        (base, sum, sq)
    };
    let mean_img = Image::from_fn(h, w, ch, |y, x, c| {
        let (base, sum, _) = shifted(y, x, c);
        base + sum / n
    });
    let per_pixel = |f: &dyn Fn(usize, usize, usize) -> f64| {
        Image::from_fn(h, w, 1, |y, x, _| (0..ch).map(|c| f(y, x, c)).sum::<f64>() / ch as f64)
    };
    let sd_map = per_pixel(&|y, x, c| {
        let (_, sum, sq) = shifted(y, x, c);
        ((sq - sum * sum / n) / (n - 1.0)).max(0.0).sqrt()
    });
    let minmax_map = per_pixel(&|y, x, c| {
        let (lo, hi) = samples
            .iter()
            .map(|s| s.get(y, x, c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    });
    let pairs: Vec<(usize, usize)> = (0..samples.len())
        .flat_map(|i| (i + 1..samples.len()).map(move |j| (i, j)))
        .collect();
    let corr = pairs
        .par_iter()
        .map(|&(i, j)| pearson(samples[i].data(), samples[j].data()))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(UncertaintyReport {
        mean_img,
        sd_map,
        minmax_map,
        mean_pairwise_corr: corr.clamp(-1.0, 1.0),
        samples: samples.len(),
    })
}

/// Runs the chain with seeds `seed + 1 ..= seed + n_samples` and summarizes
/// the spread of the outputs.
pub fn uncertainty(
    i0: &Image,
    i1: &Image,
    cfg: &InterpConfig,
    gt: Option<&Image>,
    n_samples: usize,
) -> Result<UncertaintyReport> {
    if n_samples < 2 {
        return Err(Error::invalid("uncertainty needs at least two samples"));
    }
    prepared_uncertainty(&prepare(i0, i1, cfg, gt)?, cfg.seed, n_samples)
}

/// [`uncertainty`] on an existing preparation.
pub fn prepared_uncertainty(prep: &Prepared, seed: u64, n_samples: usize) -> Result<UncertaintyReport> {
    if n_samples < 2 {
        return Err(Error::invalid("uncertainty needs at least two samples"));
    }
    let outputs = (1..=n_samples as u64)
        .into_par_iter()
        .map(|k| {
            prep.sample(seed.wrapping_add(k), SamplerOptions::default())
                .map(|r| r.final_image)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize_samples(&outputs)
}

/// Per-pixel root mean square over channels of `pred - gt`.
pub fn rmse_map(pred: &Image, gt: &Image) -> Result<Image> {
    pred.check_same_shape(gt, "rmse_map")?;
    let ch = pred.channels();
    Ok(Image::from_fn(pred.height(), pred.width(), 1, |y, x, _| {
        ((0..ch)
            .map(|c| (pred.get(y, x, c) - gt.get(y, x, c)).powi(2))
            .sum::<f64>()
            / ch as f64)
            .sqrt()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_triplet, translation_scene};

    fn textured(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, 3, |y, x, c| {
            0.5 + 0.3 * ((x as f64 * 0.4 + c as f64).sin() * (y as f64 * 0.3).cos())
        })
    }

    fn bundle_with(m0: Mask, m1: Mask, w0: f64, w1: f64) -> WarpBundle {
        let (h, w) = (m0.height(), m0.width());
        WarpBundle {
            img_0: Image::filled(h, w, 3, w0),
            img_1: Image::filled(h, w, 3, w1),
            edge_0: Image::zeros(h, w, 1),
            edge_1: Image::zeros(h, w, 1),
            mask_0: m0,
            mask_1: m1,
            z_0: Image::zeros(h, w, 1),
            z_1: Image::zeros(h, w, 1),
        }
    }

    #[test]
    fn warp_endpoints_reproduce_inputs() {
        let i0 = textured(16, 20);
        let i1 = i0.map(|v| 1.0 - v);
        let f01 = FlowField::uniform(16, 20, 2.0, 1.0).unwrap();
        let f10 = FlowField::uniform(16, 20, -2.0, -1.0).unwrap();
        let b = warp_to_tau(&i0, &i1, 0.0, &f01, &f10, &EdgeParams::default()).unwrap();
        let close = |a: &Image, b: &Image| a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&b.img_0, &i0));
        assert_eq!(b.mask_0.count(), 16 * 20);
        let b = warp_to_tau(&i0, &i1, 1.0, &f01, &f10, &EdgeParams::default()).unwrap();
        assert!(close(&b.img_1, &i1));
        assert!(warp_to_tau(&i0, &i1, 1.5, &f01, &f10, &EdgeParams::default()).is_err());
    }

    #[test]
    fn static_scene_warps_to_itself() {
        let i0 = textured(12, 12);
        let zero = FlowField::zeros(12, 12);
        let b = warp_to_tau(&i0, &i0, 0.4, &zero, &zero, &EdgeParams::default()).unwrap();
        assert_eq!(b.img_0, i0);
        assert_eq!(b.img_1, i0);
        assert_eq!(b.mask_0.count(), 144);
        assert_eq!(b.mask_1.count(), 144);
    }

    #[test]
    fn infill_rules() {
        let i0 = Image::filled(2, 3, 3, 0.8);
        let i1 = Image::filled(2, 3, 3, 0.4);
        let both = bundle_with(Mask::ones(2, 3), Mask::ones(2, 3), 0.2, 0.6);
        let out = infill(&both, &i0, &i1, 0.25, InfillRule::MaskBlend).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5 * (0.2 + 0.6)));

        let only_1 = bundle_with(Mask::zeros(2, 3), Mask::ones(2, 3), 0.2, 0.6);
        let out = infill(&only_1, &i0, &i1, 0.25, InfillRule::MaskBlend).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.6));

        let neither = bundle_with(Mask::zeros(2, 3), Mask::zeros(2, 3), 0.2, 0.6);
        let out = infill(&neither, &i0, &i1, 0.25, InfillRule::MaskBlend).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.75 * 0.8 + 0.25 * 0.4));

        let literal = infill(&both, &i0, &i1, 0.25, InfillRule::Literal).unwrap();
        assert!(literal
            .data()
            .iter()
            .all(|&v| (v - (0.5 * 0.2 * 0.8 + 0.5 * 0.6 * 0.4)).abs() < 1e-15));
    }

    #[test]
    fn rmse_cases() {
        let gt = Image::filled(2, 2, 3, 0.5);
        assert!(rmse_map(&gt, &gt).unwrap().data().iter().all(|&v| v == 0.0));
        let mut pred = gt.clone();
        pred.set(1, 0, 0, 0.8);
        let m = rmse_map(&pred, &gt).unwrap();
        assert!((m.get(1, 0, 0) - 0.3 / 3f64.sqrt()).abs() < 1e-12);
        let g1 = Image::filled(2, 2, 1, 0.5);
        let mut p1 = g1.clone();
        p1.set(0, 1, 0, 0.2);
        assert!((rmse_map(&p1, &g1).unwrap().get(0, 1, 0) - 0.3).abs() < 1e-12);
        assert!(rmse_map(&g1, &gt).is_err());
    }

    #[test]
    fn two_sample_spread() {
        let a = Image::filled(3, 3, 1, 0.4);
        let mut b = a.clone();
        b.set(1, 2, 0, 0.5);
        let r = summarize_samples(&[a.clone(), b]).unwrap();
        assert!((r.sd_map.get(1, 2, 0) - 0.1 / 2f64.sqrt()).abs() < 1e-12);
        assert!((r.minmax_map.get(1, 2, 0) - 0.1).abs() < 1e-12);
        assert_eq!(r.sd_map.get(0, 0, 0), 0.0);
        let same = summarize_samples(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.mean_pairwise_corr, 1.0);
        assert!(summarize_samples(&[a]).is_err());
    }

    #[test]
    fn oracle_interpolation_hits_truth() {
        let t = gen_triplet(&translation_scene(32, 48, [6.0, 2.0], 1), 0.5).unwrap();
        let cfg = InterpConfig {
            denoiser: DenoiserKind::Oracle,
            ..InterpConfig::default()
        };
        let out = interpolate(&t.i0, &t.i1, &cfg, Some(&t.i_tau), SamplerOptions::default()).unwrap();
        let err = out
            .output
            .data()
            .iter()
            .zip(t.i_tau.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-5);
        let rep = uncertainty(&t.i0, &t.i1, &cfg, Some(&t.i_tau), 3).unwrap();
        assert!(rep.sd_map.data().iter().all(|&v| v == 0.0));
        assert_eq!(rep.mean_pairwise_corr, 1.0);
    }

    #[test]
    fn static_scene_warp_blend_returns_frame() {
        let i0 = textured(24, 24);
        let cfg = InterpConfig {
            denoiser: DenoiserKind::WarpBlend,
            ..InterpConfig::default()
        };
        let out = interpolate(&i0, &i0, &cfg, None, SamplerOptions::default()).unwrap();
        let err = out
            .output
            .data()
            .iter()
            .zip(i0.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn missing_inputs_name_stage() {
        let i0 = textured(16, 16);
        let cfg = InterpConfig {
            tau: TauSource::Ifd,
            ..InterpConfig::default()
        };
        let err = interpolate(&i0, &i0, &cfg, None, SamplerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "tau", .. }), "{err}");
        let cfg = InterpConfig {
            denoiser: DenoiserKind::Oracle,
            ..InterpConfig::default()
        };
        let err = interpolate(&i0, &i0, &cfg, None, SamplerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "denoiser", .. }));
        assert!(matches!(err.root(), Error::Config(_)));
    }

    #[test]
    fn time_reversal_symmetry() {
        let t = gen_triplet(&translation_scene(32, 48, [6.0, 0.0], 2), 0.3).unwrap();
        let cfg = InterpConfig {
            tau: TauSource::Fixed(0.3),
            seed: 11,
            ..InterpConfig::default()
        };
        let rev = InterpConfig {
            tau: TauSource::Fixed(0.7),
            ..cfg.clone()
        };
        let a = interpolate(&t.i0, &t.i1, &cfg, None, SamplerOptions::default()).unwrap();
        let b = interpolate(&t.i1, &t.i0, &rev, None, SamplerOptions::default()).unwrap();
        let err = a
            .output
            .data()
            .iter()
            .zip(b.output.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
    }
}

//! Estimate of where the middle frame of a triplet sits in time, from how
//! much it has moved away from each endpoint.
//!
//! For each endpoint `I_k` a motion mask keeps the regions where the frames
//! differ strongly, and the flow magnitude from `I_k` to `I_tau` is summed
//! over that mask. `tau = mass_0 / (mass_0 + mass_1)`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, flow_magnitude, FlowField, FlowParams};
use crate::imaging::{morph, otsu_threshold, to_grayscale, Image, Mask, MorphOp, OTSU_BINS};
use crate::synth::TripletSample;

/// Side of the flat structuring element used to open the frame difference.
pub const MOTION_SE_SIZE: usize = 5;
pub const HISTOGRAM_BINS: usize = 20;

/// Pixels where `|open(gray(i_tau) - gray(i_a))|` exceeds its Otsu threshold.
///
/// Values are compared on the same 8-bit grid the threshold is computed
/// on, so the mask is exactly the upper Otsu class.
pub fn motion_mask(i_a: &Image, i_tau: &Image) -> Result<Mask> {
    i_a.check_same_shape(i_tau, "motion_mask")?;
    let diff = to_grayscale(i_tau)?.zip_map(&to_grayscale(i_a)?, |a, b| a - b)?;
    let opened = morph(&diff, MorphOp::Open, MOTION_SE_SIZE)?.map(f64::abs);
    let delta = otsu_threshold(&opened)?;
    let levels = (OTSU_BINS - 1) as f64;
    let quantized = opened.map(|v| (v.clamp(0.0, 1.0) * levels).round() / levels);
    Mask::threshold(&quantized, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub mass_0: f64,
    pub mass_1: f64,
    /// Both masses vanished; `tau` fell back to 0.5.
    pub degenerate: bool,
}

impl TauEstimate {
    pub fn from_masses(mass_0: f64, mass_1: f64) -> Self {
        let total = mass_0 + mass_1;
        if total > 0.0 {
            Self {
                tau: mass_0 / total,
                mass_0,
                mass_1,
                degenerate: false,
            }
        } else {
            Self {
                tau: 0.5,
                mass_0,
                mass_1,
                degenerate: true,
            }
        }
    }
}

fn masked_mass(f: &FlowField, m: &Mask) -> Result<f64> {
    if f.height() != m.height() || f.width() != m.width() {
        return Err(Error::invalid(format!(
            "flow is {}x{} but mask is {}x{}",
            f.height(),
            f.width(),
            m.height(),
            m.width()
        )));
    }
    Ok(flow_magnitude(f).data().iter().zip(m.data()).map(|(a, b)| a * b).sum())
}

/// Masses and `tau` from given flows `F_{0->tau}`, `F_{1->tau}` and masks.
pub fn tau_from_flows(f0_tau: &FlowField, f1_tau: &FlowField, m0: &Mask, m1: &Mask) -> Result<TauEstimate> {
    Ok(TauEstimate::from_masses(
        masked_mass(f0_tau, m0)?,
        masked_mass(f1_tau, m1)?,
    ))
}

/// Where the flows towards the middle frame come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowSource {
    Estimator(FlowParams),
    Injected { f0_tau: FlowField, f1_tau: FlowField },
}

impl Default for FlowSource {
    fn default() -> Self {
        FlowSource::Estimator(FlowParams::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauAnalysis {
    pub estimate: TauEstimate,
    pub mask_0: Mask,
    pub mask_1: Mask,
}

/// `tau` together with the two motion masks.
pub fn analyze_tau(i0: &Image, i_tau: &Image, i1: &Image, source: &FlowSource) -> Result<TauAnalysis> {
    i0.check_same_shape(i_tau, "tau_ifd")?;
    i1.check_same_shape(i_tau, "tau_ifd")?;
    let mask_0 = motion_mask(i0, i_tau)?;
    let mask_1 = motion_mask(i1, i_tau)?;
    let estimate = match source {
        FlowSource::Estimator(p) => {
            let (f0, f1) = rayon::join(|| estimate_flow(i0, i_tau, p), || estimate_flow(i1, i_tau, p));
            tau_from_flows(&f0?, &f1?, &mask_0, &mask_1)?
        }
        FlowSource::Injected { f0_tau, f1_tau } => tau_from_flows(f0_tau, f1_tau, &mask_0, &mask_1)?,
    };
    Ok(TauAnalysis {
        estimate,
        mask_0,
        mask_1,
    })
}

pub fn tau_ifd(i0: &Image, i_tau: &Image, i1: &Image, source: &FlowSource) -> Result<TauEstimate> {
    analyze_tau(i0, i_tau, i1, source).map(|a| a.estimate)
}

/// Per-triplet estimates with the estimator, in input order.
pub fn batch_tau(samples: &[TripletSample], params: &FlowParams) -> Vec<Result<TauEstimate>> {
    let source = FlowSource::Estimator(*params);
    samples
        .par_iter()
        .map(|s| tau_ifd(&s.i0, &s.i_tau, &s.i1, &source))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauHistogram {
    /// Counts over `HISTOGRAM_BINS` equal bins of `[0, 1]`; 1.0 falls in the last.
    pub counts: Vec<usize>,
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation, absent below two values.
    pub sd: Option<f64>,
}

pub fn tau_histogram(values: &[f64]) -> TauHistogram {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let k = ((v.clamp(0.0, 1.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let sd = mean
        .filter(|_| n > 1)
        .map(|m| (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    TauHistogram { counts, n, mean, sd }
}

impl TauHistogram {
    /// One line per bin: range, count and a bar.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let peak = self.counts.iter().copied().max().unwrap_or(0).max(1);
        for (k, &c) in self.counts.iter().enumerate() {
            let lo = k as f64 / HISTOGRAM_BINS as f64;
            let hi = (k + 1) as f64 / HISTOGRAM_BINS as f64;
            let bar = "#".repeat((c * 40).div_ceil(peak));
            out.push_str(&format!("[{lo:.2}, {hi:.2}) {c:>6} {bar}\n"));
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        out.push_str(&format!(
            "n = {}, mean = {}, sd = {}\n",
            self.n,
            fmt(self.mean),
            fmt(self.sd)
        ));
        out
    }
}

/// CSV rows `path,tau,mass0,mass1,degenerate`.
pub fn write_tau_csv(rows: &[(String, TauEstimate)], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "path,tau,mass0,mass1,degenerate")?;
    for (path, e) in rows {
        writeln!(
            w,
            "{path},{:.6},{:.6},{:.6},{}",
            e.tau, e.mass_0, e.mass_1, e.degenerate
        )?;
    }
    Ok(())
}

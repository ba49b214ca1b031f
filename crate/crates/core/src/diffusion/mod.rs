//! Multiple-input residual diffusion.
//!
//! With conditions `J_1..J_n` and residuals `R_i = J_i - I`, the forward
//! chain shifts a clean frame `I` toward the weighted blend of the
//! conditions while adding Gaussian noise:
//!
//! ```text
//! x_t = x_{t-1} + sum_i alpha_i(t) R_i + kappa sqrt(sum_i alpha_i(t)) eps
//! x_t = I + sum_i eta_i(t) R_i + kappa sqrt(S(t)) eps          (marginal)
//! ```
//!
//! The reverse step `q(x_{t-1} | x_t, I)` is Gaussian with variance
//! `kappa^2 S(t-1) A(t) / S(t)` (where `A(t) = S(t) - S(t-1)`) and mean
//! `S(t-1)/S(t) (x_t + sum eta_i(t) R_i) + A(t)/S(t) I - sum eta_i(t-1) R_i`.

pub mod ladder;
mod sampler;
pub mod verify;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use self::sampler::{
    builtin_denoiser, reverse_sample, BuiltinDenoiser, DenoiseContext, Denoiser, DenoiserKind, SamplerOptions,
    SamplerRun,
};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::schedule::NoiseSchedule;

/// The ordered condition images `J_1..J_n`; for interpolation `(I0, I1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    conditions: Vec<Image>,
}

impl ConditionSet {
    pub fn new(conditions: Vec<Image>) -> Result<Self> {
        let Some(first) = conditions.first() else {
            return Err(Error::invalid("condition set needs at least one image"));
        };
        if let Some(bad) = conditions.iter().find(|c| !c.same_shape(first)) {
            return Err(Error::invalid(format!(
                "conditions differ in shape: {:?} vs {:?}",
                first.shape(),
                bad.shape()
            )));
        }
        Ok(Self { conditions })
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.conditions
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.conditions[0].shape()
    }

    /// Per-sample `sum_i c_i J_i`.
    pub fn weighted_sum(&self, coeffs: &[f64]) -> Image {
        let mut out = Image::zeros(self.shape().0, self.shape().1, self.shape().2);
        for (j, &c) in self.conditions.iter().zip(coeffs) {
            for (o, &v) in out.data_mut().iter_mut().zip(j.data()) {
                *o += c * v;
            }
        }
        out
    }

    fn check_against(&self, img: &Image, sched: &NoiseSchedule, what: &str) -> Result<()> {
        if sched.n_conditions() != self.len() {
            return Err(Error::invalid(format!(
                "{what}: schedule has {} condition weights but {} conditions were given",
                sched.n_conditions(),
                self.len()
            )));
        }
        img.check_same_shape(&self.conditions[0], what)
    }
}

/// `R_i = J_i - i_tau_est`, unclamped.
pub fn residuals(i_tau_est: &Image, conds: &ConditionSet) -> Result<Vec<Image>> {
    conds
        .images()
        .iter()
        .map(|j| j.zip_map(i_tau_est, |a, b| a - b))
        .collect()
}

/// `base + sum_i c_i (J_i - img)`, evaluated without materialising the
/// residual images.
fn shift_by_residuals(base: &Image, img: &Image, conds: &ConditionSet, coeffs: &[f64]) -> Image {
    let total: f64 = coeffs.iter().sum();
    let blend = conds.weighted_sum(coeffs);
    let mut out = base.clone();
    for ((o, &b), &i) in out.data_mut().iter_mut().zip(blend.data()).zip(img.data()) {
        *o += b - total * i;
    }
    out
}

pub(crate) fn check_step(t: usize, sched: &NoiseSchedule, min: usize) -> Result<()> {
    if t < min || t > sched.steps() {
        return Err(Error::invalid(format!("step {t} outside [{min}, {}]", sched.steps())));
    }
    Ok(())
}

/// Image of i.i.d. standard normal samples drawn in raster order.
pub fn standard_normal(shape: (usize, usize, usize), rng: &mut impl Rng) -> Image {
    let (h, w, c) = shape;
    let data = (0..h * w * c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Image::new(h, w, c, data).expect("normal samples are finite")
}

/// Deterministic generator for `(seed, stream)`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One forward transition `x_{t-1} -> x_t`.
pub fn forward_step(
    x_prev: &Image,
    i_tau: &Image,
    conds: &ConditionSet,
    sched: &NoiseSchedule,
    t: usize,
    rng: &mut impl Rng,
) -> Result<Image> {
    check_step(t, sched, 1)?;
    conds.check_against(x_prev, sched, "forward_step")?;
    i_tau.check_same_shape(x_prev, "forward_step")?;
    let mut out = shift_by_residuals(x_prev, i_tau, conds, sched.alpha(t));
    let scale = sched.kappa() * sched.alpha_sum(t).sqrt();
    let noise = standard_normal(out.shape(), rng);
    for (o, &e) in out.data_mut().iter_mut().zip(noise.data()) {
        *o += scale * e;
    }
    Ok(out)
}

/// Closed-form marginal `x_t | I`, bypassing the intermediate steps.
pub fn forward_marginal(
    i_tau: &Image,
    conds: &ConditionSet,
    sched: &NoiseSchedule,
    t: usize,
    rng: &mut impl Rng,
) -> Result<Image> {
    check_step(t, sched, 1)?;
    conds.check_against(i_tau, sched, "forward_marginal")?;
    let mut out = marginal_mean(i_tau, conds, sched, t);
    let scale = sched.kappa() * sched.eta_sum(t).sqrt();
    let noise = standard_normal(out.shape(), rng);
    for (o, &e) in out.data_mut().iter_mut().zip(noise.data()) {
        *o += scale * e;
    }
    Ok(out)
}

/// Mean of the marginal, `I + sum_i eta_i(t) R_i`.
pub fn marginal_mean(i_tau: &Image, conds: &ConditionSet, sched: &NoiseSchedule, t: usize) -> Image {
    shift_by_residuals(i_tau, i_tau, conds, sched.eta(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mean: Image,
    pub variance: f64,
}

/// Mean and variance of `q(x_{t-1} | x_t, I = i_tau_est)`.
///
/// At `t = 1` the variance is zero and the mean is exactly `i_tau_est`.
pub fn posterior_stats(
    x_t: &Image,
    i_tau_est: &Image,
    conds: &ConditionSet,
    sched: &NoiseSchedule,
    t: usize,
) -> Result<PosteriorStats> {
    check_step(t, sched, 1)?;
    conds.check_against(x_t, sched, "posterior_stats")?;
    i_tau_est.check_same_shape(x_t, "posterior_stats")?;

    let s_prev = sched.eta_sum(t - 1);
    let s_cur = sched.eta_sum(t);
    let keep = s_prev / s_cur;
    let pull = sched.alpha_sum(t) / s_cur;

    let shifted = shift_by_residuals(x_t, i_tau_est, conds, sched.eta(t));
    let back = shift_by_residuals(
        &Image::zeros(x_t.height(), x_t.width(), x_t.channels()),
        i_tau_est,
        conds,
        sched.eta(t - 1),
    );
    let mut mean = shifted;
    for ((m, &est), &b) in mean.data_mut().iter_mut().zip(i_tau_est.data()).zip(back.data()) {
        *m = keep * *m + pull * est - b;
    }
    Ok(PosteriorStats {
        mean,
        variance: sched.posterior_variance(t),
    })
}

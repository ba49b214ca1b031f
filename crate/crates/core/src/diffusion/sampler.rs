use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{posterior_stats, seeded_rng, standard_normal, ConditionSet};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::schedule::NoiseSchedule;

/// Everything a denoiser may look at besides the current state.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseContext<'a> {
    pub conds: &'a ConditionSet,
    pub schedule: &'a NoiseSchedule,
    pub tau_hat: f64,
    pub t: usize,
}

/// Estimates the clean frame from the state `x_t`.
pub trait Denoiser: Sync {
    fn denoise(&self, x_t: &Image, ctx: &DenoiseContext<'_>) -> Result<Image>;
}

impl<F> Denoiser for F
where
    F: Fn(&Image, &DenoiseContext<'_>) -> Result<Image> + Sync,
{
    fn denoise(&self, x_t: &Image, ctx: &DenoiseContext<'_>) -> Result<Image> {
        self(x_t, ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    Oracle,
    Inversion,
    WarpBlend,
    Shrinkage,
}

impl DenoiserKind {
    pub const ALL: [DenoiserKind; 4] = [Self::Oracle, Self::Inversion, Self::WarpBlend, Self::Shrinkage];

    pub fn name(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Inversion => "inversion",
            Self::WarpBlend => "warp_blend",
            Self::Shrinkage => "shrinkage",
        }
    }
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DenoiserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown denoiser {s:?}")))
    }
}

/// Stand-in denoisers that need no learned weights.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinDenoiser {
    /// Returns the ground-truth frame.
    Oracle { truth: Image },
    /// Inverts the marginal mean, `(x_t - sum eta_i J_i) / (1 - S(t))`.
    Inversion,
    /// Returns the warped and infilled estimate, ignoring `x_t`.
    WarpBlend { estimate: Image },
    /// `lambda * inversion + (1 - lambda) * estimate`, `lambda = 1 - S(t)`.
    Shrinkage { estimate: Image },
}

/// Builds a builtin denoiser, checking that what it needs was supplied.
pub fn builtin_denoiser(
    kind: DenoiserKind,
    truth: Option<&Image>,
    estimate: Option<&Image>,
) -> Result<BuiltinDenoiser> {
    let need = |img: Option<&Image>, what: &str| {
        img.cloned()
            .ok_or_else(|| Error::Config(format!("{kind} denoiser requires {what}")))
    };
    Ok(match kind {
        DenoiserKind::Oracle => BuiltinDenoiser::Oracle {
            truth: need(truth, "a ground-truth frame")?,
        },
        DenoiserKind::Inversion => BuiltinDenoiser::Inversion,
        DenoiserKind::WarpBlend => BuiltinDenoiser::WarpBlend {
            estimate: need(estimate, "an interpolated estimate")?,
        },
        DenoiserKind::Shrinkage => BuiltinDenoiser::Shrinkage {
            estimate: need(estimate, "an interpolated estimate")?,
        },
    })
}

fn invert_marginal(x_t: &Image, ctx: &DenoiseContext<'_>) -> Result<Image> {
    x_t.check_same_shape(&ctx.conds.images()[0], "inversion denoiser")?;
    let blend = ctx.conds.weighted_sum(ctx.schedule.eta(ctx.t));
    let keep = 1.0 - ctx.schedule.eta_sum(ctx.t);
    x_t.zip_map(&blend, |x, b| ((x - b) / keep).clamp(0.0, 1.0))
}

impl Denoiser for BuiltinDenoiser {
    fn denoise(&self, x_t: &Image, ctx: &DenoiseContext<'_>) -> Result<Image> {
        match self {
            Self::Oracle { truth } => {
                truth.check_same_shape(x_t, "oracle denoiser")?;
                Ok(truth.clone())
            }
            Self::Inversion => invert_marginal(x_t, ctx),
            Self::WarpBlend { estimate } => {
                estimate.check_same_shape(x_t, "warp_blend denoiser")?;
                Ok(estimate.clone())
            }
            Self::Shrinkage { estimate } => {
                let lambda = 1.0 - ctx.schedule.eta_sum(ctx.t);
                invert_marginal(x_t, ctx)?.zip_map(estimate, |a, b| lambda * a + (1.0 - lambda) * b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplerOptions {
    /// Keep `x_T, x_{T-1}, .., x_0` (unclamped).
    pub keep_trajectory: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerRun {
    pub seed: u64,
    pub trajectory: Option<Vec<Image>>,
    pub final_image: Image,
}

/// Runs the reverse chain from `x_T ~ N(sum eta_i(T) J_i, kappa^2)` down to
/// `x_0`, which is clamped to `[0, 1]` on return.
pub fn reverse_sample<D: Denoiser + ?Sized>(
    conds: &ConditionSet,
    sched: &NoiseSchedule,
    denoiser: &D,
    tau_hat: f64,
    seed: u64,
    options: SamplerOptions,
) -> Result<SamplerRun> {
    if sched.n_conditions() != conds.len() {
        return Err(Error::invalid(format!(
            "schedule has {} condition weights but {} conditions were given",
            sched.n_conditions(),
            conds.len()
        )));
    }
    let steps = sched.steps();
    let mut rng = seeded_rng(seed, 0);

    let mut x = conds.weighted_sum(sched.eta(steps));
    let noise = standard_normal(x.shape(), &mut rng);
    let kappa = sched.kappa();
    for (v, &e) in x.data_mut().iter_mut().zip(noise.data()) {
        *v += kappa * e;
    }
    let mut trajectory = options.keep_trajectory.then(|| vec![x.clone()]);

    for t in (1..=steps).rev() {
        let ctx = DenoiseContext {
            conds,
            schedule: sched,
            tau_hat,
            t,
        };
        let est = denoiser.denoise(&x, &ctx)?;
        if !est.same_shape(&x) {
            return Err(Error::Numerical {
                step: t,
                reason: format!("denoiser returned shape {:?}, expected {:?}", est.shape(), x.shape()),
            });
        }
        if let Some(bad) = est.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                step: t,
                reason: format!("denoiser output is not finite at element {bad}"),
            });
        }
        let post = posterior_stats(&x, &est, conds, sched, t)?;
        x = post.mean;
        if post.variance > 0.0 {
            let sd = post.variance.sqrt();
            let noise = standard_normal(x.shape(), &mut rng);
            for (v, &e) in x.data_mut().iter_mut().zip(noise.data()) {
                *v += sd * e;
            }
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.push(x.clone());
        }
    }

    Ok(SamplerRun {
        seed,
        trajectory,
        final_image: x.clamp_unit(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::forward_marginal;
    use crate::schedule::ScheduleConfig;

    fn frames() -> (ConditionSet, Image) {
        let i0 = Image::from_fn(8, 9, 3, |y, x, c| ((y * 3 + x * 5 + c) % 11) as f64 / 10.0);
        let i1 = Image::from_fn(8, 9, 3, |y, x, c| ((y * 7 + x + 2 * c) % 13) as f64 / 12.0);
        let truth = i0.zip_map(&i1, |a, b| 0.5 * (a + b)).unwrap();
        (ConditionSet::new(vec![i0, i1]).unwrap(), truth)
    }

    fn default_schedule() -> NoiseSchedule {
        NoiseSchedule::build(&ScheduleConfig::default()).unwrap()
    }

    #[test]
    fn oracle_chain_lands_on_truth() {
        let (conds, truth) = frames();
        let sched = default_schedule();
        let d = builtin_denoiser(DenoiserKind::Oracle, Some(&truth), None).unwrap();
        let run = reverse_sample(&conds, &sched, &d, 0.5, 9, SamplerOptions::default()).unwrap();
        let err = run
            .final_image
            .data()
            .iter()
            .zip(truth.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (conds, truth) = frames();
        let sched = default_schedule();
        let d = builtin_denoiser(DenoiserKind::Shrinkage, None, Some(&truth)).unwrap();
        let opts = SamplerOptions { keep_trajectory: true };
        let a = reverse_sample(&conds, &sched, &d, 0.5, 4, opts).unwrap();
        let b = reverse_sample(&conds, &sched, &d, 0.5, 4, opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectory.as_ref().unwrap().len(), 21);
        let c = reverse_sample(&conds, &sched, &d, 0.5, 5, opts).unwrap();
        assert_ne!(a.final_image, c.final_image);
    }

    #[test]
    fn noiseless_warp_blend_passes_through() {
        let (conds, truth) = frames();
        let sched = NoiseSchedule::build(&ScheduleConfig {
            kappa: 1e-12,
            ..ScheduleConfig::default()
        })
        .unwrap();
        let d = builtin_denoiser(DenoiserKind::WarpBlend, None, Some(&truth)).unwrap();
        let run = reverse_sample(&conds, &sched, &d, 0.5, 1, SamplerOptions::default()).unwrap();
        for (a, b) in run.final_image.data().iter().zip(truth.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inversion_recovers_noiseless_marginal() {
        let (conds, truth) = frames();
        let sched = NoiseSchedule::from_ladder_unchecked(vec![0.0, 0.1, 0.6, 0.99], vec![0.5, 0.5], 0.0);
        for t in 1..=3 {
            let mut rng = seeded_rng(0, 0);
            let x = forward_marginal(&truth, &conds, &sched, t, &mut rng).unwrap();
            let ctx = DenoiseContext {
                conds: &conds,
                schedule: &sched,
                tau_hat: 0.5,
                t,
            };
            let est = BuiltinDenoiser::Inversion.denoise(&x, &ctx).unwrap();
            for (a, b) in est.data().iter().zip(truth.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shrinkage_weight_at_first_step() {
        let sched = default_schedule();
        let conds = ConditionSet::new(vec![Image::filled(1, 1, 1, 0.2), Image::filled(1, 1, 1, 0.4)]).unwrap();
        let est = Image::filled(1, 1, 1, 0.9);
        let x = Image::filled(1, 1, 1, 0.5);
        let ctx = DenoiseContext {
            conds: &conds,
            schedule: &sched,
            tau_hat: 0.5,
            t: 1,
        };
        let inv = BuiltinDenoiser::Inversion.denoise(&x, &ctx).unwrap().get(0, 0, 0);
        let out = BuiltinDenoiser::Shrinkage { estimate: est }
            .denoise(&x, &ctx)
            .unwrap()
            .get(0, 0, 0);
        let lambda = 1.0 - sched.eta_sum(1);
        assert!((lambda - 0.9996).abs() < 1e-12);
        assert!((out - (0.9996 * inv + 0.0004 * 0.9)).abs() < 1e-12);
    }

    #[test]
    fn warp_blend_ignores_state() {
        let (conds, truth) = frames();
        let sched = default_schedule();
        let d = BuiltinDenoiser::WarpBlend {
            estimate: truth.clone(),
        };
        let ctx = DenoiseContext {
            conds: &conds,
            schedule: &sched,
            tau_hat: 0.5,
            t: 7,
        };
        let a = d.denoise(&Image::zeros(8, 9, 3), &ctx).unwrap();
        let b = d.denoise(&Image::filled(8, 9, 3, 3.0), &ctx).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        assert!(matches!(
            builtin_denoiser(DenoiserKind::Oracle, None, None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            builtin_denoiser(DenoiserKind::Shrinkage, None, None),
            Err(Error::Config(_))
        ));
        assert!(builtin_denoiser(DenoiserKind::Inversion, None, None).is_ok());
        assert_eq!("warp_blend".parse::<DenoiserKind>().unwrap(), DenoiserKind::WarpBlend);
        assert!("ddim".parse::<DenoiserKind>().is_err());
    }

    #[test]
    fn non_finite_denoiser_aborts_with_step() {
        let (conds, _) = frames();
        let sched = default_schedule();
        let bad = |x: &Image, ctx: &DenoiseContext<'_>| -> Result<Image> {
            let mut out = x.clone();
            if ctx.t == 13 {
                out.data_mut()[4] = f64::NAN;
            }
            Ok(out)
        };
        let err = reverse_sample(&conds, &sched, &bad, 0.5, 0, SamplerOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical { step: 13, .. }), "{err}");
    }
}

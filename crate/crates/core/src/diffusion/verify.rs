//! Monte-Carlo self-test of the forward process and the posterior.
//!
//! Scalar draws are packed into a `1 x N` image so the checks exercise the
//! same code paths as the sampler.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use super::{forward_marginal, forward_step, marginal_mean, posterior_stats, seeded_rng, ConditionSet};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::schedule::NoiseSchedule;

pub const MIN_SAMPLES: usize = 10_000;
/// Mean and regression coefficients must lie within this many standard errors.
pub const Z_LIMIT: f64 = 4.0;
pub const VARIANCE_RATIO_TOL: f64 = 0.03;
pub const RESIDUAL_RATIO_TOL: f64 = 0.05;
pub const EXACT_TOL: f64 = 1e-10;

/// Scalar clean value and one scalar per condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub i_tau: f64,
    pub conds: Vec<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            i_tau: 0.3,
            conds: vec![1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub statistic: String,
    pub expected: f64,
    pub observed: f64,
    pub z: Option<f64>,
    pub pass: bool,
}

impl CheckRow {
    fn z_test(check: String, statistic: &str, expected: f64, observed: f64, se: f64) -> Self {
        let z = (observed - expected) / se;
        Self {
            check,
            statistic: statistic.into(),
            expected,
            observed,
            z: Some(z),
            pass: z.abs() <= Z_LIMIT,
        }
    }

    fn ratio_test(check: String, statistic: &str, expected: f64, observed: f64, tol: f64, se: f64) -> Self {
        let ratio = observed / expected;
        Self {
            check,
            statistic: statistic.into(),
            expected,
            observed,
            z: Some((ratio - 1.0) / se),
            pass: (ratio - 1.0).abs() <= tol,
        }
    }

    fn bound(check: String, statistic: &str, expected: f64, observed: f64, tol: f64) -> Self {
        Self {
            check,
            statistic: statistic.into(),
            expected,
            observed,
            z: None,
            pass: (observed - expected).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn extend(&mut self, other: VerifyReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,statistic,expected,observed,z,verdict\n");
        for r in &self.rows {
            let z = r.z.map(|z| format!("{z:.4}")).unwrap_or_default();
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{},{},{:.10e},{:.10e},{},{}",
                r.check, r.statistic, r.expected, r.observed, z, verdict
            );
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

struct Regression {
    slope: f64,
    intercept: f64,
    residual_var: f64,
    slope_se: f64,
    intercept_se: f64,
}

fn regress(x: &[f64], y: &[f64]) -> Regression {
    let n = x.len() as f64;
    let (mx, vx) = moments(x);
    let (my, _) = moments(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx = vx * (n - 1.0);
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let residual_var = rss / (n - 2.0);
    Regression {
        slope,
        intercept,
        residual_var,
        slope_se: (residual_var / sxx).sqrt(),
        intercept_se: (residual_var * (1.0 / n + mx * mx / sxx)).sqrt(),
    }
}

fn checkpoints(steps: usize, from: usize) -> Vec<usize> {
    let mut ts = vec![from, steps.div_ceil(4), steps.div_ceil(2), steps];
    ts.retain(|&t| t >= from && t <= steps);
    ts.sort_unstable();
    ts.dedup();
    ts
}

/// Composed forward steps against the closed-form marginal, and the joint
/// `(x_{t-1}, x_t)` regression against the posterior.
pub fn mc_verify(sched: &NoiseSchedule, scenario: &Scenario, samples: usize, seed: u64) -> Result<VerifyReport> {
    if samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "mc_verify needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let n = samples;
    let row = |v: f64| Image::filled(1, n, 1, v);
    let conds = ConditionSet::new(scenario.conds.iter().map(|&v| row(v)).collect())?;
    let i_tau = row(scenario.i_tau);
    let kappa2 = sched.kappa().powi(2);
    let mut report = VerifyReport::default();

    let marks = checkpoints(sched.steps(), 1);
    let mut rng = seeded_rng(seed, 1);
    let mut x = i_tau.clone();
    for t in 1..=sched.steps() {
        x = forward_step(&x, &i_tau, &conds, sched, t, &mut rng)?;
        if !marks.contains(&t) {
            continue;
        }
        let (mean, var) = moments(x.data());
        let expect_mean = marginal_mean(&i_tau, &conds, sched, t).get(0, 0, 0);
        let expect_var = kappa2 * sched.eta_sum(t);
        let name = format!("marginal_composition_t{t}");
        report.rows.push(CheckRow::z_test(
            name.clone(),
            "mean",
            expect_mean,
            mean,
            (expect_var / n as f64).sqrt(),
        ));
        report.rows.push(CheckRow::ratio_test(
            name,
            "variance",
            expect_var,
            var,
            VARIANCE_RATIO_TOL,
            (2.0 / (n as f64 - 1.0)).sqrt(),
        ));
    }

    for t in checkpoints(sched.steps(), 2) {
        let mut rng = seeded_rng(seed, 100 + t as u64);
        let prev = forward_marginal(&i_tau, &conds, sched, t - 1, &mut rng)?;
        let cur = forward_step(&prev, &i_tau, &conds, sched, t, &mut rng)?;
        let fit = regress(cur.data(), prev.data());

        let probe = Image::new(1, 2, 1, vec![0.0, 1.0])?;
        let probe_conds = ConditionSet::new(scenario.conds.iter().map(|&v| Image::filled(1, 2, 1, v)).collect())?;
        let post = posterior_stats(&probe, &Image::filled(1, 2, 1, scenario.i_tau), &probe_conds, sched, t)?;
        let intercept = post.mean.get(0, 0, 0);
        let slope = post.mean.get(0, 1, 0) - intercept;

        let name = format!("posterior_regression_t{t}");
        report
            .rows
            .push(CheckRow::z_test(name.clone(), "slope", slope, fit.slope, fit.slope_se));
        report.rows.push(CheckRow::z_test(
            name.clone(),
            "intercept",
            intercept,
            fit.intercept,
            fit.intercept_se,
        ));
        report.rows.push(CheckRow::ratio_test(
            name,
            "residual_variance",
            post.variance,
            fit.residual_var,
            RESIDUAL_RATIO_TOL,
            (2.0 / (n as f64 - 2.0)).sqrt(),
        ));
    }
    Ok(report)
}

/// Single-condition posterior against the two-term form it must reduce to,
/// over random ladders and inputs.
pub fn reduction_check(trials: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = seeded_rng(seed, 2);
    let mut mean_err = 0.0f64;
    let mut var_err = 0.0f64;
    for _ in 0..trials {
        let eta_prev: f64 = rng.random_range(1e-4..0.9);
        let eta_cur: f64 = rng.random_range(eta_prev + 1e-4..1.0);
        let kappa: f64 = rng.random_range(0.1..4.0);
        let x_t: f64 = rng.random_range(-3.0..3.0);
        let x0: f64 = rng.random_range(0.0..1.0);
        let j: f64 = rng.random_range(0.0..1.0);
        let sched = NoiseSchedule::from_ladder_unchecked(vec![0.0, eta_prev, eta_cur], vec![1.0], kappa);
        let conds = ConditionSet::new(vec![Image::filled(1, 1, 1, j)])?;
        let post = posterior_stats(
            &Image::filled(1, 1, 1, x_t),
            &Image::filled(1, 1, 1, x0),
            &conds,
            &sched,
            2,
        )?;
        let alpha = eta_cur - eta_prev;
        let mean = eta_prev / eta_cur * x_t + alpha / eta_cur * x0;
        let var = kappa * kappa * eta_prev * alpha / eta_cur;
        mean_err = mean_err.max((post.mean.get(0, 0, 0) - mean).abs());
        var_err = var_err.max((post.variance - var).abs());
    }
    let mut report = VerifyReport::default();
    report.rows.push(CheckRow::bound(
        "single_condition_reduction".into(),
        "max_mean_error",
        0.0,
        mean_err,
        EXACT_TOL,
    ));
    report.rows.push(CheckRow::bound(
        "single_condition_reduction".into(),
        "max_variance_error",
        0.0,
        var_err,
        EXACT_TOL,
    ));
    Ok(report)
}

/// Endpoint values and strict monotonicity of the cumulative ladder.
pub fn schedule_checks(sched: &NoiseSchedule, expect_first: f64, expect_last: f64) -> VerifyReport {
    let sums = sched.eta_sums();
    let steps = sched.steps();
    let mut report = VerifyReport::default();
    report.rows.push(CheckRow::bound(
        "schedule_endpoint_first".into(),
        "eta_sum",
        expect_first,
        sums[1],
        1e-12,
    ));
    report.rows.push(CheckRow::bound(
        "schedule_endpoint_last".into(),
        "eta_sum",
        expect_last,
        sums[steps],
        1e-12,
    ));
    let violations = sums.windows(2).filter(|w| w[1] <= w[0]).count();
    report.rows.push(CheckRow::bound(
        "schedule_monotone".into(),
        "violations",
        0.0,
        violations as f64,
        0.0,
    ));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleConfig;

    #[test]
    fn default_schedule_verifies() {
        let cfg = ScheduleConfig::default();
        let sched = NoiseSchedule::build(&cfg).unwrap();
        let mut report = mc_verify(&sched, &Scenario::default(), 100_000, 7).unwrap();
        report.extend(reduction_check(1000, 7).unwrap());
        report.extend(schedule_checks(&sched, cfg.eta_1_sum(), cfg.eta_t_sum));
        let csv = report.to_csv();
        assert!(report.all_passed(), "{csv}");
        assert!(csv.starts_with("check,statistic,expected,observed,z,verdict\n"));
    }

    #[test]
    fn too_few_samples_rejected() {
        let sched = NoiseSchedule::build(&ScheduleConfig::default()).unwrap();
        assert!(mc_verify(&sched, &Scenario::default(), 100, 0).is_err());
    }

    #[test]
    fn broken_ladder_is_flagged() {
        let sched = NoiseSchedule::from_ladder_unchecked(vec![0.0, 0.1, 0.5, 0.4, 0.99], vec![0.5, 0.5], 2.0);
        let report = schedule_checks(&sched, 0.1, 0.99);
        let failed: Vec<_> = report.failures().map(|r| r.check.as_str()).collect();
        assert_eq!(failed, ["schedule_monotone"]);
        let mc = mc_verify(&sched, &Scenario::default(), MIN_SAMPLES, 0).unwrap();
        assert!(!mc.all_passed());
    }

    #[test]
    fn regression_recovers_known_line() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let fit = regress(&x, &y);
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-10);
        assert!(fit.residual_var < 1e-20);
    }
}

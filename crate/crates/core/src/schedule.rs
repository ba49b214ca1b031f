//! Non-uniform residual-shifting noise ladder for `n` conditions.
//!
//! The total shift `S(t) = sum_i eta_i(t)` grows geometrically in
//! `sqrt(S)`: `sqrt(S(t)) = sqrt(S(1)) * b0^beta(t)` with
//! `beta(t) = ((t-1)/(T-1))^p * (T-1)`, pinned to `S(1)` and `S(T)` at the
//! ends. A weight partition `a` splits it per condition,
//! `eta_i(t) = a_i * S(t)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight-sum tolerance for a valid partition.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Number of diffusion steps `T`.
    pub steps: usize,
    pub kappa: f64,
    /// Growth exponent of the ladder.
    pub p: f64,
    /// Terminal total shift `S(T)`.
    pub eta_t_sum: f64,
    /// Per-condition partition of the total shift; non-negative, sums to 1.
    pub weights: Vec<f64>,
    /// Replaces the default `S(1) = min((0.04/kappa)^2, 0.001)`.
    pub eta_1_override: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            kappa: 2.0,
            p: 0.3,
            eta_t_sum: 0.99,
            weights: vec![0.5, 0.5],
            eta_1_override: None,
        }
    }
}

impl ScheduleConfig {
    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    /// `S(1)` as configured.
    pub fn eta_1_sum(&self) -> f64 {
        self.eta_1_override.unwrap_or_else(|| default_eta_1_sum(self.kappa))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config(format!("steps must be >= 2, got {}", self.steps)));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::Config(format!("p must be > 0, got {}", self.p)));
        }
        if !(self.eta_t_sum > 0.0 && self.eta_t_sum < 1.0) {
            return Err(Error::Config(format!(
                "eta_t_sum must lie in (0, 1), got {}",
                self.eta_t_sum
            )));
        }
        let eta1 = self.eta_1_sum();
        if !(eta1 > 0.0 && eta1 < self.eta_t_sum) {
            return Err(Error::Config(format!(
                "initial shift {eta1} must lie in (0, eta_t_sum = {})",
                self.eta_t_sum
            )));
        }
        validate_weights(&self.weights)
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Config("at least one condition weight is required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!("weights must be finite and >= 0, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Config(format!("weights must sum to 1, got {total}")));
    }
    Ok(())
}

/// `min((0.04/kappa)^2, 0.001)`.
pub fn default_eta_1_sum(kappa: f64) -> f64 {
    (0.04 / kappa).powi(2).min(0.001)
}

/// Ladder exponent `beta(t) = ((t-1)/(T-1))^p * (T-1)`.
pub fn beta(t: usize, steps: usize, p: f64) -> f64 {
    let span = (steps - 1) as f64;
    ((t - 1) as f64 / span).powf(p) * span
}

/// Geometric base `b0 = exp(ln(S(T)/S(1)) / (2(T-1)))`.
pub fn growth_base(eta_1_sum: f64, eta_t_sum: f64, steps: usize) -> f64 {
    ((eta_t_sum / eta_1_sum).ln() / (2.0 * (steps - 1) as f64)).exp()
}

/// Weight partition `(a_I0, a_I1) = (1 - tau, tau)` from the estimated
/// temporal position: at `tau = 0` all terminal mass sits on `I0`.
pub fn partition_weights(tau_hat: f64) -> Result<[f64; 2]> {
    if !(0.0..=1.0).contains(&tau_hat) {
        return Err(Error::invalid(format!("tau must lie in [0, 1], got {tau_hat}")));
    }
    Ok([1.0 - tau_hat, tau_hat])
}

/// The complete diffusion timetable, indexed by `t = 0..=T` with
/// `eta(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kappa: f64,
    weights: Vec<f64>,
    eta_sum: Vec<f64>,
    alpha_sum: Vec<f64>,
    eta: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
}

impl NoiseSchedule {
    pub fn build(cfg: &ScheduleConfig) -> Result<Self> {
        cfg.validate()?;
        let steps = cfg.steps;
        let eta1 = cfg.eta_1_sum();
        let b0 = growth_base(eta1, cfg.eta_t_sum, steps);
        let root1 = eta1.sqrt();

        let mut eta_sum = vec![0.0; steps + 1];
        eta_sum[1] = eta1;
        for (t, slot) in eta_sum.iter_mut().enumerate().take(steps).skip(2) {
            *slot = (root1 * b0.powf(beta(t, steps, cfg.p))).powi(2);
        }
        eta_sum[steps] = cfg.eta_t_sum;

        let schedule = Self::from_ladder_unchecked(eta_sum, cfg.weights.clone(), cfg.kappa);
        if let Some(t) = (2..=steps).find(|&t| schedule.eta_sum[t] <= schedule.eta_sum[t - 1]) {
            return Err(Error::Config(format!("ladder is not increasing at t = {t}")));
        }
        Ok(schedule)
    }

    /// Builds a schedule from an explicit total-shift ladder `S(0..=T)`
    /// without checking monotonicity or endpoints. Intended for
    /// verification harnesses that need to exercise broken ladders.
    pub fn from_ladder_unchecked(eta_sum: Vec<f64>, weights: Vec<f64>, kappa: f64) -> Self {
        assert!(eta_sum.len() >= 2, "ladder needs t = 0 and at least one step");
        let steps = eta_sum.len() - 1;
        let eta: Vec<Vec<f64>> = eta_sum
            .iter()
            .map(|&s| weights.iter().map(|&a| a * s).collect())
            .collect();
        let mut alpha = vec![vec![0.0; weights.len()]; steps + 1];
        let mut alpha_sum = vec![0.0; steps + 1];
        for t in 1..=steps {
            for i in 0..weights.len() {
                alpha[t][i] = eta[t][i] - eta[t - 1][i];
            }
            alpha_sum[t] = eta_sum[t] - eta_sum[t - 1];
        }
        Self {
            kappa,
            weights,
            eta_sum,
            alpha_sum,
            eta,
            alpha,
        }
    }

    pub fn steps(&self) -> usize {
        self.eta_sum.len() - 1
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_conditions(&self) -> usize {
        self.weights.len()
    }

    /// Total shift `S(t)`.
    pub fn eta_sum(&self, t: usize) -> f64 {
        self.eta_sum[t]
    }

    pub fn eta_sums(&self) -> &[f64] {
        &self.eta_sum
    }

    /// Total increment `S(t) - S(t-1)`; zero at `t = 0`.
    pub fn alpha_sum(&self, t: usize) -> f64 {
        self.alpha_sum[t]
    }

    pub fn eta(&self, t: usize) -> &[f64] {
        &self.eta[t]
    }

    pub fn alpha(&self, t: usize) -> &[f64] {
        &self.alpha[t]
    }

    /// Posterior variance `kappa^2 S(t-1) (S(t) - S(t-1)) / S(t)` of the
    /// reverse step `t -> t-1`; zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps());
        self.kappa * self.kappa * self.eta_sum[t - 1] * self.alpha_sum[t] / self.eta_sum[t]
    }

    /// One CSV row per `t = 0..=T`:
    /// `t, eta_sum, eta_1..eta_n, alpha_1..alpha_n, sigma`.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        let n = self.n_conditions();
        let mut header = vec!["t".to_string(), "eta_sum".to_string()];
        header.extend((1..=n).map(|i| format!("eta_{i}")));
        header.extend((1..=n).map(|i| format!("alpha_{i}")));
        header.push("sigma".into());
        writeln!(out, "{}", header.join(","))?;
        for t in 0..=self.steps() {
            let sigma = if t == 0 { 0.0 } else { self.posterior_variance(t).sqrt() };
            let mut row = vec![t.to_string(), format!("{:e}", self.eta_sum[t])];
            row.extend(self.eta[t].iter().map(|v| format!("{v:e}")));
            row.extend(self.alpha[t].iter().map(|v| format!("{v:e}")));
            row.push(format!("{sigma:e}"));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

//! Posterior mean on a single step for arbitrary per-condition ladders.
//!
//! The sampler only ever sees proportional ladders (`eta_i = a_i S`), for
//! which the residual correction `delta` vanishes. These scalar helpers
//! keep the general expressions around so the simplifications can be
//! checked on ladders where it does not.

/// One step of a general ladder: `eta_i(t-1)` and `eta_i(t)` per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLadder {
    pub eta_prev: Vec<f64>,
    pub eta_cur: Vec<f64>,
}

impl StepLadder {
    pub fn new(eta_prev: Vec<f64>, eta_cur: Vec<f64>) -> Self {
        assert_eq!(eta_prev.len(), eta_cur.len(), "ladder lengths differ");
        Self { eta_prev, eta_cur }
    }

    pub fn s_prev(&self) -> f64 {
        self.eta_prev.iter().sum()
    }

    pub fn s_cur(&self) -> f64 {
        self.eta_cur.iter().sum()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.eta_cur.iter().zip(&self.eta_prev).map(|(c, p)| c - p).collect()
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha().iter().sum()
    }

    pub fn variance(&self, kappa: f64) -> f64 {
        kappa * kappa * self.s_prev() * self.alpha_sum() / self.s_cur()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `delta` written in terms of the increments `alpha_i`.
pub fn delta_full(l: &StepLadder, residuals: &[f64]) -> f64 {
    let alpha = l.alpha();
    (l.alpha_sum() * dot(&l.eta_prev, residuals) - l.s_prev() * dot(&alpha, residuals)) / l.s_cur()
}

/// `delta` with the increments eliminated.
pub fn delta_reduced(l: &StepLadder, residuals: &[f64]) -> f64 {
    dot(&l.eta_prev, residuals) - l.s_prev() * dot(&l.eta_cur, residuals) / l.s_cur()
}

/// `S(t-1)/S(t) x_t + A(t)/S(t) I - delta`.
pub fn mean_with_delta(l: &StepLadder, x_t: f64, i_tau: f64, delta: f64) -> f64 {
    (l.s_prev() * x_t + l.alpha_sum() * i_tau) / l.s_cur() - delta
}

/// The factored mean used by the sampler.
pub fn mean_factored(l: &StepLadder, x_t: f64, i_tau: f64, residuals: &[f64]) -> f64 {
    l.s_prev() / l.s_cur() * (x_t + dot(&l.eta_cur, residuals)) + l.alpha_sum() / l.s_cur() * i_tau
        - dot(&l.eta_prev, residuals)
}

/// Mean obtained by conditioning the joint Gaussian of `(x_{t-1}, x_t)`
/// given `I` directly, with no rearrangement.
pub fn mean_conditioned(l: &StepLadder, x_t: f64, i_tau: f64, residuals: &[f64]) -> f64 {
    let prev_mean = i_tau + dot(&l.eta_prev, residuals);
    let cur_mean = i_tau + dot(&l.eta_cur, residuals);
    prev_mean + l.s_prev() / l.s_cur() * (x_t - cur_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ladder_strategy(n: usize) -> impl Strategy<Value = (StepLadder, Vec<f64>, f64, f64)> {
        (
            prop::collection::vec((0.01f64..0.5, 0.01f64..0.5), n),
            prop::collection::vec(-1.0f64..1.0, n),
            -2.0f64..2.0,
            0.0f64..1.0,
        )
            .prop_map(|(pairs, r, x, i)| {
                let prev: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let cur: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
                (StepLadder::new(prev, cur), r, x, i)
            })
    }

    proptest! {
        #[test]
        fn delta_forms_agree((l, r, x, i) in ladder_strategy(3)) {
            let full = delta_full(&l, &r);
            let reduced = delta_reduced(&l, &r);
            prop_assert!((full - reduced).abs() < 1e-10);
            let a = mean_with_delta(&l, x, i, full);
            let b = mean_with_delta(&l, x, i, reduced);
            let c = mean_factored(&l, x, i, &r);
            prop_assert!((a - b).abs() < 1e-10);
            prop_assert!((a - c).abs() < 1e-10);
        }

        #[test]
        fn single_condition_reduces_to_resshift(
            eta_prev in 0.001f64..0.5, inc in 0.001f64..0.5,
            x in -2.0f64..2.0, x0 in 0.0f64..1.0, j in 0.0f64..1.0, kappa in 0.1f64..4.0,
        ) {
            let l = StepLadder::new(vec![eta_prev], vec![eta_prev + inc]);
            let eta_cur = eta_prev + inc;
            let r = [j - x0];
            let expect = eta_prev / eta_cur * x + inc / eta_cur * x0;
            prop_assert!((mean_factored(&l, x, x0, &r) - expect).abs() < 1e-12);
            let var = kappa * kappa * eta_prev * inc / eta_cur;
            prop_assert!((l.variance(kappa) - var).abs() < 1e-12);
        }

        #[test]
        fn proportional_ladders_have_no_correction(
            a in 0.05f64..0.95, s_prev in 0.001f64..0.5, inc in 0.001f64..0.5,
            r in prop::collection::vec(-1.0f64..1.0, 2), x in -2.0f64..2.0, i in 0.0f64..1.0,
        ) {
            let w = [a, 1.0 - a];
            let l = StepLadder::new(
                w.iter().map(|wi| wi * s_prev).collect(),
                w.iter().map(|wi| wi * (s_prev + inc)).collect(),
            );
            prop_assert!(delta_reduced(&l, &r).abs() < 1e-12);
            let c = mean_conditioned(&l, x, i, &r);
            prop_assert!((mean_factored(&l, x, i, &r) - c).abs() < 1e-12);
        }

        #[test]
        fn conditioning_flips_the_correction_sign((l, r, x, i) in ladder_strategy(2)) {
            // On unequal ladders the direct conditional mean differs from the
            // factored form; it is what the factored form gives with -delta.
            let d = delta_reduced(&l, &r);
            let c = mean_conditioned(&l, x, i, &r);
            prop_assert!((c - mean_with_delta(&l, x, i, -d)).abs() < 1e-10);
        }
    }

    #[test]
    fn conditioning_oracle_on_known_case() {
        // n = 1, eta 0.3 -> 0.5, x_t = 1, I = 0, J = 2.
        let l = StepLadder::new(vec![0.3], vec![0.5]);
        assert!((mean_conditioned(&l, 1.0, 0.0, &[2.0]) - 0.6).abs() < 1e-15);
        assert!((mean_factored(&l, 1.0, 0.0, &[2.0]) - 0.6).abs() < 1e-15);
        assert!((l.variance(2.0) - 0.48).abs() < 1e-15);
    }

    #[test]
    fn unequal_ladder_shows_nonzero_correction() {
        let l = StepLadder::new(vec![0.1, 0.2], vec![0.4, 0.25]);
        let r = [0.5, -0.5];
        assert!(delta_reduced(&l, &r).abs() > 1e-3);
    }
}

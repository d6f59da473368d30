//! Input-channel denoisers: posterior mean of a binary status given Gaussian
//! pseudodata `v = x + q`, `q ~ N(0, delta)`, under three priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Posterior probability of `X=1` from pseudodata under a Bernoulli(pi)
/// prior: `{1 + (pi^-1 - 1) exp(-(v - 1/2)/delta)}^-1`. Increasing in `v`
/// and exactly `pi` at `v = 1/2`.
pub fn denoise_bernoulli(v: f64, delta: f64, pi: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if pi <= 0.0 {
        return 0.0;
    }
    if pi >= 1.0 {
        return 1.0;
    }
    let t = (v - 0.5) / delta;
    // 1 / (1 + (1-pi)/pi * e^-t), computed on whichever side avoids overflow
    if t >= 0.0 {
        1.0 / (1.0 + (1.0 - pi) / pi * (-t).exp())
    } else {
        let a = pi / (1.0 - pi) * t.exp();
        a / (1.0 + a)
    }
}

/// The contact-tracing denoiser: same Gaussian likelihood ratio as the
/// Bernoulli one, with the prior supplied per individual per day.
pub fn denoise_ct(v: f64, delta: f64, prior: f64) -> f64 {
    denoise_bernoulli(v, delta, prior)
}

/// Family prior: a household is viral with probability `pi_vf`; members of a
/// viral household are infected independently with probability `pi_ind`;
/// members of a non-viral household are healthy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyPrior {
    pub pi_vf: f64,
    pub pi_ind: f64,
    pub membership: Vec<Vec<usize>>,
}

impl FamilyPrior {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("pi_vf", self.pi_vf), ("pi_ind", self.pi_ind)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0,1], got {v}")));
            }
        }
        let mut seen = vec![false; n];
        for fam in &self.membership {
            if fam.is_empty() {
                return Err(Error::structural("empty family"));
            }
            for &i in fam {
                if i >= n {
                    return Err(Error::structural(format!("family member {i} outside population")));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::structural("family membership does not cover the population"));
        }
        Ok(())
    }

    /// Marginal prior infection probability of any single member.
    pub fn marginal(&self) -> f64 {
        self.pi_vf * self.pi_ind
    }
}

/// Family denoiser for the members of one household, O(|F|) via the
/// conditionally-i.i.d. factorization
/// `f(v_F | viral) = prod_i [pi_ind N(v_i;1,delta) + (1-pi_ind) N(v_i;0,delta)]`,
/// which equals the sum over all 2^|F| infection patterns.
/// Returns `Pr(F viral | v_F) * Pr(X_i = 1 | v_i, viral)` per member.
pub fn denoise_family(v_family: &[f64], delta: f64, pi_vf: f64, pi_ind: f64) -> Vec<f64> {
    let deltas = vec![delta; v_family.len()];
    denoise_family_percomponent(v_family, &deltas, pi_vf, pi_ind)
}

/// Family denoiser with one pseudodata variance per member. The conditional
/// factorization holds member by member, so each likelihood ratio just uses
/// its own variance.
pub(crate) fn denoise_family_percomponent(
    v_family: &[f64],
    deltas: &[f64],
    pi_vf: f64,
    pi_ind: f64,
) -> Vec<f64> {
    debug_assert_eq!(v_family.len(), deltas.len());
    if v_family.is_empty() {
        return Vec::new();
    }
    if pi_vf <= 0.0 {
        return vec![0.0; v_family.len()];
    }
    // log L1/L0 = sum_i ln(pi_ind e^{t_i} + 1 - pi_ind), t_i = (v_i - 1/2)/delta_i
    let mut log_ratio = 0.0f64;
    for (&v, &delta) in v_family.iter().zip(deltas) {
        debug_assert!(delta > 0.0);
        let t = (v - 0.5) / delta;
        log_ratio += if t > 0.0 {
            t + (pi_ind + (1.0 - pi_ind) * (-t).exp()).ln()
        } else {
            (pi_ind * t.exp() + 1.0 - pi_ind).ln()
        };
    }
    let p_viral = if pi_vf >= 1.0 {
        1.0
    } else {
        let log_odds = (pi_vf / (1.0 - pi_vf)).ln() + log_ratio;
        if log_odds >= 0.0 {
            1.0 / (1.0 + (-log_odds).exp())
        } else {
            let a = log_odds.exp();
            a / (1.0 + a)
        }
    };
    v_family
        .iter()
        .zip(deltas)
        .map(|(&v, &delta)| p_viral * denoise_bernoulli(v, delta, pi_ind))
        .collect()
}

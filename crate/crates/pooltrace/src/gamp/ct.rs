//! Contact-tracing priors: pairwise infection estimates from (tau, d) side
//! information, aggregation over the trailing SI period, and the
//! maximum-likelihood plug-in for the rate parameter lambda.

use serde::{Deserialize, Serialize};

use crate::epidemic::ContactEdge;
use crate::error::{Error, Result};

/// Tuning for the CT prior machinery.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CtConfig {
    /// Division guard in the pairwise estimate.
    pub epsilon: f64,
    /// Trailing window of contact days aggregated into the prior.
    pub si_window: usize,
    /// Lower bound on priors so contact-free individuals stay detectable;
    /// `None` disables the floor.
    pub prior_floor: Option<f64>,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig { epsilon: 1e-6, si_window: 8, prior_floor: Some(default_prior_floor(2e-4, 8)) }
    }
}

/// Stray-infection floor `1 - (1 - p1)^si_window`.
pub fn default_prior_floor(p1: f64, si_window: usize) -> f64 {
    1.0 - (1.0 - p1).powi(si_window as i32)
}

/// Estimated probability that `i` is infected through one contact with `j`:
/// `exp(-1 / (lambda tau d psi + epsilon))` with
/// `psi = 1 - Pr(X_i=0) Pr(X_j=0)`.
pub fn estimate_pairwise_infection(
    tau: f64,
    d: f64,
    prior_i: f64,
    prior_j: f64,
    lambda: f64,
    epsilon: f64,
) -> f64 {
    debug_assert!(epsilon > 0.0);
    let psi = 1.0 - (1.0 - prior_i) * (1.0 - prior_j);
    (-((lambda * tau * d * psi + epsilon).recip())).exp()
}

/// Pairwise estimates for one day: `(i, j, p_hat)` per recorded contact.
pub type PhatDay = Vec<(u32, u32, f64)>;

/// Aggregate pairwise estimates over the SI period:
/// `prior_i = 1 - prod_d prod_j (1 - p_hat_ij^(d))`, floored from below when
/// a floor is configured. `history` must cover at least `si_window` days;
/// the trailing `si_window` entries are used.
pub fn ct_prior_update(
    history: &[PhatDay],
    si_window: usize,
    n: usize,
    floor: Option<f64>,
) -> Result<Vec<f64>> {
    if history.len() < si_window {
        return Err(Error::structural(format!(
            "SI history has {} days, need {si_window}",
            history.len()
        )));
    }
    let mut log_escape = vec![0.0f64; n];
    for day in &history[history.len() - si_window..] {
        for &(i, j, p) in day {
            let (i, j) = (i as usize, j as usize);
            if i >= n || j >= n {
                return Err(Error::structural(format!("contact ({i}, {j}) outside population")));
            }
            let escape = (1.0 - p).max(0.0).ln();
            log_escape[i] += escape;
            log_escape[j] += escape;
        }
    }
    let floor = floor.unwrap_or(0.0);
    Ok(log_escape.iter().map(|&le| (-le.exp_m1()).max(floor).min(1.0)).collect())
}

/// One SI window of features: per-day contacts and per-day status estimates
/// `Pr(X=1)` for every node (ground truth or earlier posteriors).
#[derive(Debug, Clone)]
pub struct SiWindow<'a> {
    pub n: usize,
    pub contacts: &'a [Vec<ContactEdge>],
    pub statuses: &'a [Vec<f64>],
}

impl<'a> SiWindow<'a> {
    pub fn validate(&self, si_window: usize) -> Result<()> {
        if self.contacts.len() < si_window || self.statuses.len() != self.contacts.len() {
            return Err(Error::structural(format!(
                "SI window needs {si_window} days of contacts and statuses, got {} and {}",
                self.contacts.len(),
                self.statuses.len()
            )));
        }
        Ok(())
    }

    /// Pairwise estimates per day at a given rate parameter.
    pub fn phat_days(&self, lambda: f64, epsilon: f64) -> Vec<PhatDay> {
        self.contacts
            .iter()
            .zip(self.statuses)
            .map(|(edges, status)| {
                edges
                    .iter()
                    .map(|e| {
                        let p = estimate_pairwise_infection(
                            e.tau,
                            e.d,
                            status[e.i as usize],
                            status[e.j as usize],
                            lambda,
                            epsilon,
                        );
                        (e.i, e.j, p)
                    })
                    .collect()
            })
            .collect()
    }

    /// Per-individual priors for the day after the window.
    pub fn priors(&self, lambda: f64, cfg: &CtConfig) -> Result<Vec<f64>> {
        self.validate(cfg.si_window)?;
        let phat = self.phat_days(lambda, cfg.epsilon);
        ct_prior_update(&phat, cfg.si_window, self.n, cfg.prior_floor)
    }

    fn contact_count(&self) -> usize {
        self.contacts.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LambdaMlOpts {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub golden_iters: usize,
    /// Returned when the likelihood carries no information about lambda.
    pub default_lambda: f64,
}

impl Default for LambdaMlOpts {
    fn default() -> Self {
        LambdaMlOpts {
            grid_lo: 1e-3,
            grid_hi: 1e3,
            grid_points: 48,
            golden_iters: 32,
            default_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LambdaMl {
    pub lambda_hat: f64,
    /// Set when the likelihood was flat in lambda (no informative contacts).
    pub flat: bool,
    /// Log-likelihood at the optimum, up to a lambda-independent constant.
    pub log_likelihood: f64,
}

/// Maximum-likelihood plug-in: maximize
/// `sum_i ln[ N(v_i;1,delta) Pr(X_i=1|lambda) + N(v_i;0,delta) Pr(X_i=0|lambda) ]`
/// over a log grid followed by golden-section refinement. The priors come
/// from the SI window at each candidate lambda.
pub fn estimate_lambda_ml(
    v: &[f64],
    delta: f64,
    window: &SiWindow<'_>,
    cfg: &CtConfig,
    opts: &LambdaMlOpts,
) -> Result<LambdaMl> {
    if v.len() != window.n {
        return Err(Error::dimension(format!(
            "pseudodata has {} entries for population {}",
            v.len(),
            window.n
        )));
    }
    if delta <= 0.0 {
        return Err(Error::domain("delta must be positive"));
    }
    window.validate(cfg.si_window)?;
    if window.contact_count() == 0 {
        return Ok(LambdaMl { lambda_hat: opts.default_lambda, flat: true, log_likelihood: 0.0 });
    }

    let loglik = |lambda: f64| -> Result<f64> {
        let priors = window.priors(lambda, cfg)?;
        // ln[prior e^t + (1-prior)] with t=(v-1/2)/delta; the N(v;0,delta)
        // factor is lambda-independent and dropped
        Ok(v.iter()
            .zip(&priors)
            .map(|(&vi, &pi)| {
                let t = (vi - 0.5) / delta;
                if t > 0.0 {
                    t + (pi + (1.0 - pi) * (-t).exp()).ln()
                } else {
                    (pi * t.exp() + 1.0 - pi).ln()
                }
            })
            .sum())
    };

    let mut best = (opts.default_lambda, f64::NEG_INFINITY);
    let mut values = Vec::with_capacity(opts.grid_points);
    let (llo, lhi) = (opts.grid_lo.ln(), opts.grid_hi.ln());
    for g in 0..opts.grid_points {
        let lambda =
            (llo + (lhi - llo) * g as f64 / (opts.grid_points - 1) as f64).exp();
        let ll = loglik(lambda)?;
        values.push(ll);
        if ll > best.1 {
            best = (lambda, ll);
        }
    }
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-9 {
        return Ok(LambdaMl {
            lambda_hat: opts.default_lambda,
            flat: true,
            log_likelihood: best.1,
        });
    }

    // golden-section refine around the best grid point
    let step = (lhi - llo) / (opts.grid_points - 1) as f64;
    let mut a = best.0.ln() - step;
    let mut b = best.0.ln() + step;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - golden * (b - a);
    let mut x2 = a + golden * (b - a);
    let mut f1 = loglik(x1.exp())?;
    let mut f2 = loglik(x2.exp())?;
    for _ in 0..opts.golden_iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + golden * (b - a);
            f2 = loglik(x2.exp())?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - golden * (b - a);
            f1 = loglik(x1.exp())?;
        }
    }
    let (lambda_hat, ll) = if f1 > f2 { (x1.exp(), f1) } else { (x2.exp(), f2) };
    let (lambda_hat, ll) = if ll >= best.1 { (lambda_hat, ll) } else { best };
    Ok(LambdaMl { lambda_hat, flat: false, log_likelihood: ll })
}

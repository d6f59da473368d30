//! Generalized approximate message passing for the binary measurement model.
//!
//! Sum-product GAMP with a scalar pseudodata variance: the output channel
//! turns pool totals and test outcomes into scores `h` and curvatures `r`,
//! the input channel turns pseudodata `v = x + N(0, delta)` into posterior
//! probabilities through one of three denoisers (Bernoulli, family, CT).

pub mod ct;
pub mod denoise;
pub mod output;

use serde::{Deserialize, Serialize};

pub use ct::{
    ct_prior_update, default_prior_floor, estimate_lambda_ml, estimate_pairwise_infection,
    CtConfig, LambdaMl, LambdaMlOpts, PhatDay, SiWindow,
};
pub use denoise::{denoise_bernoulli, denoise_ct, denoise_family, FamilyPrior};
pub use output::{output_denoiser_binary, posterior_w_moments};

use crate::design::BinaryMatrix;
use crate::error::{Error, Result};
use crate::measurement::M1Params;

/// Iteration schedule. `damping` is the weight of the fresh update when
/// mixing with the previous iterate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GampOpts {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    /// Also run from an uninformative start and keep the solution whose
    /// thresholded calls score higher under the exact discrete channel.
    /// Guards against the all-zero fixed point on hard instances.
    pub multi_start: bool,
}

impl Default for GampOpts {
    fn default() -> Self {
        GampOpts { max_iters: 200, tol: 1e-6, damping: 0.7, multi_start: true }
    }
}

/// Input-channel prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Denoiser {
    Bernoulli { pi: f64 },
    Family(FamilyPrior),
    Ct { priors: Vec<f64> },
}

impl Denoiser {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Denoiser::Bernoulli { pi } => {
                if !(0.0..=1.0).contains(pi) {
                    return Err(Error::config(format!("pi must be in [0,1], got {pi}")));
                }
            }
            Denoiser::Family(prior) => {
                prior.validate(n)?;
                let total: usize = prior.membership.iter().map(Vec::len).sum();
                if total != n {
                    return Err(Error::structural(
                        "family denoiser requires a disjoint household partition",
                    ));
                }
            }
            Denoiser::Ct { priors } => {
                if priors.len() != n {
                    return Err(Error::dimension(format!(
                        "{} CT priors for population {n}",
                        priors.len()
                    )));
                }
                if priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::domain("CT priors must lie in [0,1]"));
                }
            }
        }
        Ok(())
    }

    fn prior_means(&self, n: usize) -> Vec<f64> {
        match self {
            Denoiser::Bernoulli { pi } => vec![*pi; n],
            Denoiser::Family(prior) => {
                let mut p = vec![0.0; n];
                for fam in &prior.membership {
                    for &i in fam {
                        p[i] = prior.marginal();
                    }
                }
                p
            }
            Denoiser::Ct { priors } => priors.clone(),
        }
    }

    fn posterior(&self, v: &[f64], delta: &[f64], out: &mut [f64]) {
        match self {
            Denoiser::Bernoulli { pi } => {
                for ((o, &vi), &dj) in out.iter_mut().zip(v).zip(delta) {
                    *o = denoise_bernoulli(vi, dj, *pi);
                }
            }
            Denoiser::Ct { priors } => {
                for (((o, &vi), &dj), &pi) in out.iter_mut().zip(v).zip(delta).zip(priors) {
                    *o = denoise_ct(vi, dj, pi);
                }
            }
            Denoiser::Family(prior) => {
                for fam in &prior.membership {
                    let vf: Vec<f64> = fam.iter().map(|&i| v[i]).collect();
                    let df: Vec<f64> = fam.iter().map(|&i| delta[i]).collect();
                    let pf = denoise::denoise_family_percomponent(
                        &vf,
                        &df,
                        prior.pi_vf,
                        prior.pi_ind,
                    );
                    for (&i, &p) in fam.iter().zip(&pf) {
                        out[i] = p;
                    }
                }
            }
        }
    }
}

/// Per-iteration channel state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GampState {
    /// Pseudodata per individual.
    pub v: Vec<f64>,
    /// Mean pseudodata variance across individuals.
    pub delta: f64,
    /// Pseudodata variance per individual.
    pub delta_cols: Vec<f64>,
    /// Output-channel means per pool.
    pub k: Vec<f64>,
    /// Output-channel variances per pool.
    pub theta: Vec<f64>,
    /// Output-channel scores per pool.
    pub h: Vec<f64>,
    /// Posterior probabilities per individual.
    pub x_hat: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GampRun {
    pub x_hat: Vec<f64>,
    pub state: GampState,
    pub iterations: usize,
    pub converged: bool,
}

const THETA_FLOOR: f64 = 1e-12;
const WARM_TAU: f64 = 0.25;
const R_CLAMP: (f64, f64) = (1e-12, 1e12);
const DELTA_CLAMP: (f64, f64) = (1e-12, 1e12);

/// Run GAMP until the posterior stops moving (sup-norm below `opts.tol`) or
/// `opts.max_iters` is reached. Divergence (NaN/Inf anywhere in the state)
/// aborts with the last finite state attached.
pub fn run_gamp(
    a: &BinaryMatrix,
    y: &[u8],
    params: &M1Params,
    denoiser: &Denoiser,
    opts: &GampOpts,
) -> Result<GampRun> {
    let (m, n) = (a.m, a.n);
    if y.len() != m {
        return Err(Error::dimension(format!("{} measurements for {m} pools", y.len())));
    }
    if y.iter().any(|&b| b > 1) {
        return Err(Error::domain("M1 measurements must be 0/1"));
    }
    params.validate()?;
    denoiser.validate(n)?;
    if !(0.0..=1.0).contains(&opts.damping) || opts.damping == 0.0 {
        return Err(Error::config("damping must be in (0, 1]"));
    }

    let prior_run = gamp_from_init(a, y, params, denoiser, opts, None)?;
    if !opts.multi_start {
        return Ok(prior_run);
    }
    let flat_run = gamp_from_init(a, y, params, denoiser, opts, Some(0.5));
    match flat_run {
        Ok(flat) => {
            let prior_means = denoiser.prior_means(n);
            let s_prior = call_log_likelihood(a, y, params, &prior_run.x_hat, &prior_means);
            let s_flat = call_log_likelihood(a, y, params, &flat.x_hat, &prior_means);
            Ok(if s_flat > s_prior { flat } else { prior_run })
        }
        Err(_) => Ok(prior_run),
    }
}

/// Exact joint log-likelihood of the thresholded calls: Bernoulli priors
/// plus the discrete channel on integer pool totals.
fn call_log_likelihood(
    a: &BinaryMatrix,
    y: &[u8],
    params: &M1Params,
    x_hat: &[f64],
    priors: &[f64],
) -> f64 {
    let calls: Vec<bool> = x_hat.iter().map(|&p| p > 0.5).collect();
    let mut ll = 0.0;
    for (j, &c) in calls.iter().enumerate() {
        let pi = priors[j].clamp(1e-12, 1.0 - 1e-12);
        ll += if c { pi.ln() } else { (1.0 - pi).ln() };
    }
    for (i, cols) in a.row_cols().iter().enumerate() {
        let w = cols.iter().filter(|&&j| calls[j as usize]).count();
        let p_pos =
            if w > 0 { 1.0 - params.p_fn } else { params.p_fp }.clamp(1e-12, 1.0 - 1e-12);
        ll += if y[i] == 1 { p_pos.ln() } else { (1.0 - p_pos).ln() };
    }
    ll
}

fn gamp_from_init(
    a: &BinaryMatrix,
    y: &[u8],
    params: &M1Params,
    denoiser: &Denoiser,
    opts: &GampOpts,
    flat_init: Option<f64>,
) -> Result<GampRun> {
    let (m, n) = (a.m, a.n);
    let rows = a.row_cols();

    let mut x_hat = match flat_init {
        Some(p0) => vec![p0; n],
        None => denoiser.prior_means(n),
    };
    let mut tau_x: Vec<f64> = x_hat.iter().map(|&p| (p * (1.0 - p)).max(WARM_TAU)).collect();
    let mut h = vec![0.0f64; m];
    let mut state = GampState {
        v: x_hat.clone(),
        delta: 1.0,
        delta_cols: vec![1.0; n],
        k: vec![0.0; m],
        theta: vec![0.0; m],
        h: h.clone(),
        x_hat: x_hat.clone(),
        iteration: 0,
    };

    let gamma = opts.damping;
    let mut posterior = vec![0.0f64; n];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iters {
        iterations = iter;
        // output linear step
        let mut theta = vec![0.0f64; m];
        let mut k = vec![0.0f64; m];
        for i in 0..m {
            let mut t = 0.0;
            let mut mu = 0.0;
            for &j in &rows[i] {
                t += tau_x[j as usize];
                mu += x_hat[j as usize];
            }
            theta[i] = t.max(THETA_FLOOR);
            k[i] = mu - theta[i] * h[i];
        }
        // output nonlinear step
        let mut r_pool = vec![0.0f64; m];
        for i in 0..m {
            let (mean_w, var_w) = posterior_w_moments(y[i] == 1, k[i], theta[i], params);
            let h_new = (mean_w - k[i]) / theta[i];
            h[i] = gamma * h_new + (1.0 - gamma) * h[i];
            r_pool[i] = ((theta[i] - var_w) / (theta[i] * theta[i])).clamp(R_CLAMP.0, R_CLAMP.1);
        }
        // input linear step, one pseudodata variance per individual
        let mut v = vec![0.0f64; n];
        let mut delta_cols = vec![1.0f64; n];
        for (j, cols) in a.columns().enumerate() {
            let r_sum: f64 = cols.iter().map(|&i| r_pool[i as usize]).sum();
            let dj = if cols.is_empty() {
                DELTA_CLAMP.1 // unpooled individual: prior only
            } else {
                (1.0 / r_sum).clamp(DELTA_CLAMP.0, DELTA_CLAMP.1)
            };
            let s: f64 = cols.iter().map(|&i| h[i as usize]).sum();
            delta_cols[j] = dj;
            v[j] = x_hat[j] + dj * s;
        }
        // input nonlinear step
        denoiser.posterior(&v, &delta_cols, &mut posterior);
        let mut diff = 0.0f64;
        for j in 0..n {
            let p_new = gamma * posterior[j] + (1.0 - gamma) * x_hat[j];
            diff = diff.max((p_new - x_hat[j]).abs());
            x_hat[j] = p_new;
            let t_new = (posterior[j] * (1.0 - posterior[j])).max(0.0);
            tau_x[j] = gamma * t_new + (1.0 - gamma) * tau_x[j];
        }

        let finite = x_hat
            .iter()
            .chain(&v)
            .chain(&h)
            .chain(&k)
            .chain(&theta)
            .chain(&delta_cols)
            .all(|f| f.is_finite());
        if !finite {
            return Err(Error::GampDivergence { iteration: iter, state: Box::new(state) });
        }
        let delta_mean = delta_cols.iter().sum::<f64>() / n as f64;
        state = GampState {
            v,
            delta: delta_mean,
            delta_cols,
            k,
            theta,
            h: h.clone(),
            x_hat: x_hat.clone(),
            iteration: iter,
        };
        if diff < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(GampRun { x_hat, state, iterations, converged })
}

/// EM plug-in estimate of a Bernoulli prior from pseudodata: iterate
/// `pi <- mean(posterior(pi))` on the two-component Gaussian mixture.
pub fn estimate_bernoulli_prior_ml(v: &[f64], delta: f64, iters: usize) -> f64 {
    let mut pi = 0.05f64;
    for _ in 0..iters {
        let mean =
            v.iter().map(|&vi| denoise_bernoulli(vi, delta, pi)).sum::<f64>() / v.len() as f64;
        pi = mean.clamp(1e-5, 1.0 - 1e-5);
    }
    pi
}

/// EM plug-in for the family prior `(pi_vf, pi_ind)`: expectation of the
/// viral indicator per household and of the infected count within viral
/// households, from pseudodata.
pub fn estimate_family_prior_ml(
    v: &[f64],
    delta: f64,
    membership: &[Vec<usize>],
    iters: usize,
) -> (f64, f64) {
    let mut pi_vf = 0.1f64;
    let mut pi_ind = 0.7f64;
    for _ in 0..iters {
        let mut sum_viral = 0.0;
        let mut sum_members = 0.0;
        let mut sum_infected = 0.0;
        for fam in membership {
            // Pr(F viral | v_F) under the current parameters
            let mut log_ratio = 0.0;
            for &i in fam {
                let t = (v[i] - 0.5) / delta;
                log_ratio += if t > 0.0 {
                    t + (pi_ind + (1.0 - pi_ind) * (-t).exp()).ln()
                } else {
                    (pi_ind * t.exp() + 1.0 - pi_ind).ln()
                };
            }
            let log_odds = (pi_vf / (1.0 - pi_vf)).ln() + log_ratio;
            let p_viral = if log_odds >= 0.0 {
                1.0 / (1.0 + (-log_odds).exp())
            } else {
                let a = log_odds.exp();
                a / (1.0 + a)
            };
            sum_viral += p_viral;
            sum_members += p_viral * fam.len() as f64;
            for &i in fam {
                sum_infected += p_viral * denoise_bernoulli(v[i], delta, pi_ind);
            }
        }
        pi_vf = (sum_viral / membership.len() as f64).clamp(1e-5, 1.0 - 1e-5);
        if sum_members > 0.0 {
            pi_ind = (sum_infected / sum_members).clamp(1e-5, 1.0 - 1e-5);
        }
    }
    (pi_vf, pi_ind)
}

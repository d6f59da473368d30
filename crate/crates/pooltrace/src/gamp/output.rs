//! Binary output channel: posterior moments of the pool total `W` given a
//! test outcome and the channel's Gaussian approximation `W ~ N(k, theta)`.
//!
//! The likelihood only distinguishes `w = 0` from `w > 0`, so the posterior
//! splits into a point mass at zero (weighted by the Gaussian mass on
//! `(-inf, 0]`) and a truncated Gaussian on `(0, inf)`:
//! `f(w | y) ∝ Pr(y | w) exp(-(w-k)^2 / (2 theta))`.

use statrs::function::erf::erfc;

use crate::measurement::M1Params;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Posterior mean and variance of `W` given `y`, prior mean `k`, prior
/// variance `theta`.
pub fn posterior_w_moments(y: bool, k: f64, theta: f64, params: &M1Params) -> (f64, f64) {
    debug_assert!(theta > 0.0);
    // channel weights on the zero atom and the positive part
    let (p_zero, p_pos) = if y {
        (params.p_fp, 1.0 - params.p_fn)
    } else {
        (1.0 - params.p_fp, params.p_fn)
    };
    let sigma = theta.sqrt();
    let z = k / sigma;
    let cdf_pos = norm_cdf(z); // Gaussian mass on (0, inf)
    let cdf_zero = norm_cdf(-z);
    let pdf = phi(z);
    // first and second moments of the positive part (unnormalized)
    let m1 = k * cdf_pos + sigma * pdf;
    let m2 = (k * k + theta) * cdf_pos + k * sigma * pdf;
    let z_norm = p_zero * cdf_zero + p_pos * cdf_pos;
    if z_norm < 1e-300 {
        // channel assigns zero mass everywhere; fall back to the prior
        return (k.max(0.0), theta);
    }
    let e1 = p_pos * m1 / z_norm;
    let e2 = p_pos * m2 / z_norm;
    let var = (e2 - e1 * e1).max(0.0);
    (e1, var)
}

/// Output-channel score `h = (E[W | y, k, theta] - k) / theta` and the
/// posterior variance of `W`.
pub fn output_denoiser_binary(y: bool, k: f64, theta: f64, params: &M1Params) -> (f64, f64) {
    let (mean, var) = posterior_w_moments(y, k, theta, params);
    ((mean - k) / theta, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Simpson-rule quadrature of the stated posterior: point mass
    /// `p_zero * Phi(-k/sigma)` at zero plus density
    /// `p_pos * N(w; k, theta)` on `(0, hi]`.
    fn quadrature_oracle(y: bool, k: f64, theta: f64, params: &M1Params) -> (f64, f64) {
        let (p_zero, p_pos) = if y {
            (params.p_fp, 1.0 - params.p_fn)
        } else {
            (1.0 - params.p_fp, params.p_fn)
        };
        let sigma = theta.sqrt();
        let hi = k.max(0.0) + 12.0 * sigma;
        let steps = 40_000usize;
        let hstep = hi / steps as f64;
        let dens = |w: f64| (-(w - k) * (w - k) / (2.0 * theta)).exp() / (sigma * SQRT_2PI);
        let mut z0 = 0.0;
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for i in 0..=steps {
            let w = i as f64 * hstep;
            let weight = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let f = dens(w) * weight;
            z0 += f;
            z1 += f * w;
            z2 += f * w * w;
        }
        let scale = hstep / 3.0 * p_pos;
        let (z0, z1, z2) = (z0 * scale, z1 * scale, z2 * scale);
        let atom = p_zero * norm_cdf(-k / sigma);
        let z = atom + z0;
        let mean = z1 / z;
        let var = z2 / z - mean * mean;
        (mean, var)
    }

    #[test]
    fn noiseless_negative_pool_pins_zero() {
        let params = M1Params { p_fp: 0.0, p_fn: 0.0 };
        let (mean, var) = posterior_w_moments(false, -2.0, 0.5, &params);
        assert!(mean.abs() < 1e-12);
        assert!(var.abs() < 1e-12);
        // even with k near 0 the posterior collapses to the atom
        let (mean, _) = posterior_w_moments(false, 0.0, 1.0, &params);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn uninformative_channel_returns_prior_posterior() {
        // p_fp = p_fn = 0.5: y carries no information, so the posterior
        // equals the atom-plus-positive prior regardless of y
        let params = M1Params { p_fp: 0.5, p_fn: 0.5 };
        for &(k, theta) in &[(1.0, 0.25), (-0.5, 0.9), (2.0, 4.0)] {
            let (m_pos, v_pos) = posterior_w_moments(true, k, theta, &params);
            let (m_neg, v_neg) = posterior_w_moments(false, k, theta, &params);
            assert!((m_pos - m_neg).abs() < 1e-12);
            assert!((v_pos - v_neg).abs() < 1e-12);
            // closed form of the y-free posterior mean
            let sigma = theta.sqrt();
            let expect = k * norm_cdf(k / sigma) + sigma * phi(k / sigma);
            assert!((m_pos - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_match_quadrature() {
        let paper = M1Params { p_fp: 0.001, p_fn: 0.02 };
        let uninform = M1Params { p_fp: 0.3, p_fn: 0.25 };
        let mut worst = 0.0f64;
        for params in [paper, uninform] {
            for &y in &[true, false] {
                for &k in &[-1.5, -0.3, 0.0, 0.4, 1.0, 2.5] {
                    for &theta in &[0.05, 0.25, 1.0, 3.0] {
                        let (mean, var) = posterior_w_moments(y, k, theta, &params);
                        let (qm, qv) = quadrature_oracle(y, k, theta, &params);
                        worst = worst.max((mean - qm).abs()).max((var - qv).abs());
                        assert!(
                            (mean - qm).abs() < 1e-6 && (var - qv).abs() < 1e-6,
                            "y={y} k={k} theta={theta}: ({mean},{var}) vs ({qm},{qv})"
                        );
                    }
                }
            }
        }
        assert!(worst < 1e-6, "worst deviation {worst}");
    }

    #[test]
    fn spec_spot_case_y1() {
        // generic case (y=1, k=1.0, theta=0.25, paper noise)
        let params = M1Params { p_fp: 0.001, p_fn: 0.02 };
        let (mean, var) = posterior_w_moments(true, 1.0, 0.25, &params);
        let (qm, qv) = quadrature_oracle(true, 1.0, 0.25, &params);
        assert!((mean - qm).abs() < 1e-6);
        assert!((var - qv).abs() < 1e-6);
        let (h, _) = output_denoiser_binary(true, 1.0, 0.25, &params);
        assert!((h - (mean - 1.0) / 0.25).abs() < 1e-15);
    }
}

//! Conditional posterior updates shared by the M1 and M2 samplers.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    bernoulli, sample_beta, sample_normal, sample_normal_precision, InverseGammaSpec,
    InverseWishartSpec, TruncatedNormalSpec,
};
use crate::error::{domain, Result};
use crate::linalg;
use crate::math;

/// Precision-weighted cross products Σ w x x' and Σ w x y.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionAccumulator {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub n_obs: usize,
}

impl RegressionAccumulator {
    pub fn new(k: usize) -> Self {
        RegressionAccumulator {
            xtx: DMatrix::zeros(k, k),
            xty: DVector::zeros(k),
            n_obs: 0,
        }
    }

    pub fn add(&mut self, x: &[f64], y: f64, weight: f64) {
        let k = x.len();
        for a in 0..k {
            let wx = weight * x[a];
            self.xty[a] += wx * y;
            for b in 0..=a {
                self.xtx[(a, b)] += wx * x[b];
            }
        }
        self.n_obs += 1;
    }

    pub fn merge(&mut self, other: &RegressionAccumulator) {
        for a in 0..self.xtx.nrows() {
            for b in 0..=a {
                self.xtx[(a, b)] += other.xtx[(a, b)];
            }
        }
        self.xty += &other.xty;
        self.n_obs += other.n_obs;
    }

    fn full_xtx(&self) -> DMatrix<f64> {
        let mut m = self.xtx.clone();
        for a in 0..m.nrows() {
            for b in 0..a {
                m[(b, a)] = m[(a, b)];
            }
        }
        m
    }
}

/// Posterior mean and covariance of a Normal regression coefficient.
pub fn regression_posterior(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    acc: &RegressionAccumulator,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let prior_prec = linalg::spd_inverse(prior_cov)?;
    let prec = &prior_prec + acc.full_xtx();
    let lin = &prior_prec * prior_mean + &acc.xty;
    let cov = linalg::spd_inverse(&prec)?;
    let mean = &cov * lin;
    Ok((mean, cov))
}

/// Draw of a common coefficient vector with a Normal prior.
pub fn update_common_regression<R: Rng + ?Sized>(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    acc: &RegressionAccumulator,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let prior_prec = linalg::spd_inverse(prior_cov)?;
    let prec = &prior_prec + acc.full_xtx();
    let lin = &prior_prec * prior_mean + &acc.xty;
    Ok(sample_normal_precision(&prec, &lin, rng)?.1)
}

/// Beta(a + ψ, b + N − ψ) draw with ψ the number of deviators.
pub fn update_q<R: Rng + ?Sized>(z: &[bool], a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let ones = z.iter().filter(|&&v| v).count();
    update_q_count(ones, z.len(), a, b, rng)
}

pub fn update_q_count<R: Rng + ?Sized>(ones: usize, n: usize, a: f64, b: f64, rng: &mut R) -> Result<f64> {
    sample_beta(a + ones as f64, b + (n - ones) as f64, rng)
}

pub fn v_delta_normal_posterior(z: &[bool], deltas: &[f64], prior: &InverseGammaSpec) -> InverseGammaSpec {
    let mut n = 0.0;
    let mut ss = 0.0;
    for (&zi, &d) in z.iter().zip(deltas) {
        if zi {
            n += 1.0;
            ss += d * d;
        }
    }
    prior.posterior(n, ss)
}

pub fn update_v_delta_normal<R: Rng + ?Sized>(
    z: &[bool],
    deltas: &[f64],
    prior: &InverseGammaSpec,
    rng: &mut R,
) -> Result<f64> {
    prior.validate()?;
    Ok(v_delta_normal_posterior(z, deltas, prior).sample(rng))
}

pub fn v_delta_alpha_iw_posterior(
    z: &[bool],
    deltas: &[DVector<f64>],
    prior: &InverseWishartSpec,
) -> InverseWishartSpec {
    let mut scale = prior.scale.clone();
    let mut dof = prior.dof;
    for (&zi, d) in z.iter().zip(deltas) {
        if zi {
            dof += 1.0;
            scale += d * d.transpose();
        }
    }
    linalg::symmetrize(&mut scale);
    InverseWishartSpec { dof, scale }
}

pub fn update_v_delta_alpha_iw<R: Rng + ?Sized>(
    z: &[bool],
    deltas: &[DVector<f64>],
    prior: &InverseWishartSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    v_delta_alpha_iw_posterior(z, deltas, prior).sample(rng)
}

/// Sufficient statistics of a scalar deviation δ in r_t = x_t δ + e_t with
/// e_t ~ N(0, 1/w_t): `precision = Σ w x²`, `score = Σ w x r`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlabStats {
    pub precision: f64,
    pub score: f64,
}

impl SlabStats {
    pub fn add(&mut self, x: f64, r: f64, w: f64) {
        self.precision += w * x * x;
        self.score += w * x * r;
    }
}

/// log K for a Normal slab: logit(q) − ½ ln(v/v̄) + δ̄²/(2v̄).
pub fn indicator_log_odds_normal(stats: SlabStats, q: f64, v_delta: f64) -> f64 {
    let vbar = 1.0 / (1.0 / v_delta + stats.precision);
    math::logit(q) - 0.5 * math::ln1p(v_delta * stats.precision) + 0.5 * vbar * stats.score * stats.score
}

pub fn update_indicator_and_deviation_normal<R: Rng + ?Sized>(
    stats: SlabStats,
    q: f64,
    v_delta: f64,
    rng: &mut R,
) -> (bool, f64) {
    let z = if q <= 0.0 || !(v_delta > 0.0) {
        false
    } else if q >= 1.0 {
        true
    } else {
        bernoulli(math::logistic(indicator_log_odds_normal(stats, q, v_delta)), rng)
    };
    if !z {
        return (false, 0.0);
    }
    let vbar = 1.0 / (1.0 / v_delta + stats.precision);
    (true, sample_normal(vbar * stats.score, math::sqrt(vbar), rng))
}

/// Shape and scale of the slab IG(1/v + 2, 1/v + 1) after `n_obs`
/// observations with weighted residual sum of squares `ss`.
pub fn ig_slab_posterior(ss: f64, n_obs: usize, v_delta_sigma: f64) -> InverseGammaSpec {
    InverseGammaSpec {
        nu: 2.0 / v_delta_sigma + 4.0 + n_obs as f64,
        tau: 2.0 / v_delta_sigma + 2.0 + ss,
    }
}

/// log K for the variance scale δ^σ with an IG slab and spike at one.
pub fn indicator_log_odds_ig(ss: f64, n_obs: usize, q: f64, v_delta_sigma: f64) -> f64 {
    let a0 = 1.0 / v_delta_sigma + 2.0;
    let b0 = 1.0 / v_delta_sigma + 1.0;
    let post = ig_slab_posterior(ss, n_obs, v_delta_sigma);
    math::logit(q) + math::ln_gamma(post.shape()) - math::ln_gamma(a0) + a0 * math::ln(b0)
        - post.shape() * math::ln(post.scale())
        + 0.5 * ss
}

/// `ss` is Σ_t ř_t²/σ_t² over the unit's `n_obs` observations.
pub fn update_indicator_and_deviation_ig<R: Rng + ?Sized>(
    ss: f64,
    n_obs: usize,
    q: f64,
    v_delta_sigma: f64,
    rng: &mut R,
) -> (bool, f64) {
    let z = if q <= 0.0 {
        false
    } else if q >= 1.0 {
        true
    } else {
        bernoulli(math::logistic(indicator_log_odds_ig(ss, n_obs, q, v_delta_sigma)), rng)
    };
    if !z {
        return (false, 1.0);
    }
    (true, ig_slab_posterior(ss, n_obs, v_delta_sigma).sample(rng))
}

/// Step-size adaptation state of the random-walk sampler for v_δσ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwmhAdaptState {
    pub log_step: f64,
    pub iteration: u64,
    pub target_accept: f64,
    pub exponent_p: f64,
    pub cap: f64,
    pub adapting: bool,
    pub accepted: u64,
    pub proposals: u64,
}

impl Default for RwmhAdaptState {
    fn default() -> Self {
        RwmhAdaptState {
            log_step: 0.0,
            iteration: 0,
            target_accept: 0.44,
            exponent_p: 0.55,
            cap: 10.0,
            adapting: true,
            accepted: 0,
            proposals: 0,
        }
    }
}

impl RwmhAdaptState {
    pub fn step(&self) -> f64 {
        math::exp(self.log_step)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposals = 0;
    }

    /// log c ← g(log c + j^{-p} (accept_prob − α*)), g clipping to ±cap.
    pub fn adapt(&mut self, accept_prob: f64) {
        self.iteration += 1;
        let j = self.iteration as f64;
        let x = self.log_step + math::powf(j, -self.exponent_p) * (accept_prob - self.target_accept);
        self.log_step = x.clamp(-self.cap, self.cap);
    }
}

/// Sufficient statistics of the deviator scales entering the ω posterior.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeviatorScaleStats {
    pub count: f64,
    /// Σ (ln δ + 1/δ) over deviators.
    pub sum_log_inv: f64,
}

impl DeviatorScaleStats {
    pub fn from_deviations(deltas: &[f64]) -> Self {
        let mut s = DeviatorScaleStats::default();
        for &d in deltas {
            s.count += 1.0;
            s.sum_log_inv += math::ln(d) + 1.0 / d;
        }
        s
    }

    pub fn from_units(z: &[bool], deltas: &[f64]) -> Self {
        let d: Vec<f64> = z.iter().zip(deltas).filter(|(&zi, _)| zi).map(|(_, &d)| d).collect();
        Self::from_deviations(&d)
    }
}

/// Log posterior of ω = v_δσ up to a constant.
pub fn v_delta_sigma_log_posterior(omega: f64, stats: DeviatorScaleStats, prior: &InverseGammaSpec) -> f64 {
    if !(omega > 0.0 && omega.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let inv = 1.0 / omega;
    let psi = stats.count;
    let mut lp = -(prior.nu / 2.0 + 1.0) * math::ln(omega) - inv * (stats.sum_log_inv + prior.tau / 2.0);
    if psi > 0.0 {
        lp += psi * (inv + 2.0) * math::ln1p(inv) - psi * math::ln_gamma(inv + 2.0);
    }
    lp
}

/// One truncated-normal random-walk step for ω, adapting the step size
/// while `adapt.adapting` is set.
pub fn update_v_delta_sigma_rwmh<R: Rng + ?Sized>(
    omega: f64,
    stats: DeviatorScaleStats,
    prior: &InverseGammaSpec,
    adapt: &mut RwmhAdaptState,
    rng: &mut R,
) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(domain("current v_delta_sigma must be positive"));
    }
    let c = adapt.step();
    let prop = TruncatedNormalSpec {
        center: omega,
        lower_bound: 0.0,
        scale: c,
    }
    .sample(rng);
    let lp_new = v_delta_sigma_log_posterior(prop, stats, prior);
    let lp_old = v_delta_sigma_log_posterior(omega, stats, prior);
    let log_ratio = lp_new - lp_old - (math::ln_norm_cdf(prop / c) - math::ln_norm_cdf(omega / c));
    let accept_prob = if log_ratio.is_nan() || lp_new == f64::NEG_INFINITY {
        0.0
    } else if log_ratio >= 0.0 {
        1.0
    } else {
        math::exp(log_ratio)
    };
    let u: f64 = rng.random();
    let accepted = u < accept_prob;
    adapt.proposals += 1;
    if accepted {
        adapt.accepted += 1;
    }
    if adapt.adapting {
        adapt.adapt(accept_prob);
    }
    Ok(if accepted { prop } else { omega })
}

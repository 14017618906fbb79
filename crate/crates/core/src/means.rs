//! Vector-of-means model: y_i = δ_i + u_i with a spike-and-slab prior on δ_i.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::blocks::{self, SlabStats};
use crate::chain::{ChainBuilder, ChainOutput};
use crate::distributions::InverseGammaSpec;
use crate::error::{domain, Result};
use crate::math;

/// Closed-form posterior of one δ_i: a point mass at zero with weight
/// `1 - q_star` and N(delta_star, v_star) with weight `q_star`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeansPosterior {
    pub delta_star: f64,
    pub v_star: f64,
    pub q_star: f64,
}

/// Log posterior odds of the slab component.
pub fn log_posterior_odds(y: f64, q: f64, v_delta: f64) -> f64 {
    math::logit(q) - 0.5 * math::ln1p(v_delta) + 0.5 * v_delta / (v_delta + 1.0) * y * y
}

pub fn exact_posterior(y: f64, q: f64, v_delta: f64) -> Result<MeansPosterior> {
    if !(0.0..=1.0).contains(&q) {
        return Err(domain("q must lie in [0, 1]"));
    }
    if !(v_delta > 0.0) {
        return Err(domain("v_delta must be positive"));
    }
    let v_star = 1.0 / (1.0 / v_delta + 1.0);
    let q_star = if q == 0.0 || q == 1.0 {
        q
    } else {
        math::logistic(log_posterior_odds(y, q, v_delta))
    };
    Ok(MeansPosterior {
        delta_star: y * v_star,
        v_star,
        q_star,
    })
}

impl MeansPosterior {
    pub fn mean(&self) -> f64 {
        self.q_star * self.delta_star
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let cont = self.q_star * math::norm_cdf((x - self.delta_star) / math::sqrt(self.v_star));
        if x >= 0.0 {
            cont + (1.0 - self.q_star)
        } else {
            cont
        }
    }

    /// Median by bisection on the mixture CDF; exactly zero when the atom
    /// straddles one half.
    pub fn median(&self) -> f64 {
        let sd = math::sqrt(self.v_star);
        let below = self.q_star * math::norm_cdf(-self.delta_star / sd);
        if below <= 0.5 && below + (1.0 - self.q_star) >= 0.5 {
            return 0.0;
        }
        let (mut lo, mut hi) = if below > 0.5 {
            (self.delta_star - 40.0 * sd, 0.0)
        } else {
            (0.0, self.delta_star + 40.0 * sd)
        };
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn posterior_mean(y: f64, q: f64, v_delta: f64) -> Result<f64> {
    Ok(exact_posterior(y, q, v_delta)?.mean())
}

pub fn posterior_median(y: f64, q: f64, v_delta: f64) -> Result<f64> {
    Ok(exact_posterior(y, q, v_delta)?.median())
}

/// log p(Y | q, v) with δ integrated out.
pub fn log_marginal_likelihood(y: &[f64], q: f64, v_delta: f64) -> f64 {
    let mut acc = 0.0;
    for &yi in y {
        let spike = if q < 1.0 { math::ln1p(-q) - 0.5 * yi * yi } else { f64::NEG_INFINITY };
        let slab = if q > 0.0 {
            math::ln(q) - 0.5 * math::ln1p(v_delta) - yi * yi / (2.0 * (1.0 + v_delta))
        } else {
            f64::NEG_INFINITY
        };
        acc += math::log_sum_exp(spike, slab);
    }
    acc - 0.5 * y.len() as f64 * math::LN_2PI
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArgmaxResult {
    pub q_hat: f64,
    pub v_hat: f64,
    pub z_hat: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// log p(Y, Z | q̂, v̂) at the returned point.
    pub log_objective: f64,
}

/// Profiled parameters for a fixed assignment: q̂ = mean(z) and
/// v̂ = max(0, mean of y² over z = 1 minus one).
pub fn profile(y: &[f64], z: &[bool]) -> (f64, f64) {
    let m = z.iter().filter(|&&b| b).count();
    if m == 0 {
        return (0.0, 0.0);
    }
    let ss: f64 = y.iter().zip(z).filter(|(_, &b)| b).map(|(v, _)| v * v).sum();
    (m as f64 / y.len() as f64, (ss / m as f64 - 1.0).max(0.0))
}

/// log p(Y, Z | q, v) with δ integrated out of the slab units.
pub fn log_joint(y: &[f64], z: &[bool], q: f64, v: f64) -> f64 {
    let mut acc = 0.0;
    for (&yi, &zi) in y.iter().zip(z) {
        acc += if zi {
            if q <= 0.0 {
                return f64::NEG_INFINITY;
            }
            math::ln(q) + math::norm_ln_pdf(yi, 0.0, 1.0 + v)
        } else {
            if q >= 1.0 {
                return f64::NEG_INFINITY;
            }
            math::ln1p(-q) + math::norm_ln_pdf(yi, 0.0, 1.0)
        };
    }
    acc
}

pub fn profiled_log_joint(y: &[f64], z: &[bool]) -> f64 {
    let (q, v) = profile(y, z);
    log_joint(y, z, q, v)
}

fn assign(y: &[f64], q: f64, v: f64) -> Vec<bool> {
    if q <= 0.0 {
        return vec![false; y.len()];
    }
    y.iter().map(|&yi| log_posterior_odds(yi, q, v) >= 0.0).collect()
}

/// Joint maximizer of p(Y, Z | q, v) over (q, v, Z).
///
/// Coordinate iteration of the three first-order conditions from `init`,
/// followed by a scan of the nested assignments that flag the m largest |y_i|.
/// For any fixed m those dominate every other assignment, so the scan finds
/// the global maximum. Ties prefer fewer flagged units.
pub fn argmax_estimator(y: &[f64], init: (f64, f64), max_iter: usize) -> Result<ArgmaxResult> {
    if y.is_empty() {
        return Err(domain("argmax estimator needs at least one observation"));
    }
    let n = y.len();
    let (mut q, mut v) = init;
    let mut z = assign(y, q, v);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let (nq, nv) = profile(y, &z);
        q = nq;
        v = nv;
        if q == 0.0 {
            converged = true;
            break;
        }
        let nz = assign(y, q, v);
        if nz == z {
            converged = true;
            break;
        }
        z = nz;
    }
    let mut best_z = z;
    let mut best = profiled_log_joint(y, &best_z);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| math::abs(y[b]).partial_cmp(&math::abs(y[a])).unwrap().then(a.cmp(&b)));
    let mut cand = vec![false; n];
    let mut scan_best = profiled_log_joint(y, &cand);
    let mut scan_z = cand.clone();
    for &i in &order {
        cand[i] = true;
        let lj = profiled_log_joint(y, &cand);
        if lj > scan_best + 1e-12 {
            scan_best = lj;
            scan_z = cand.clone();
        }
    }
    let flagged = |z: &[bool]| z.iter().filter(|&&b| b).count();
    if scan_best > best + 1e-12 || (scan_best >= best - 1e-12 && flagged(&scan_z) < flagged(&best_z)) {
        best = scan_best;
        best_z = scan_z;
    }
    let (q_hat, v_hat) = profile(y, &best_z);
    Ok(ArgmaxResult {
        q_hat,
        v_hat,
        z_hat: best_z,
        iterations,
        converged,
        log_objective: best,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QPrior {
    Fixed(f64),
    Beta { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VPrior {
    Fixed(f64),
    InverseGamma(InverseGammaSpec),
}

/// Gibbs sampler over (Z, δ, q, v) for the means model.
///
/// Stores common traces `q` and `v_delta` and unit groups `z` and `delta`.
pub fn gibbs_means<R: Rng + ?Sized>(
    y: &[f64],
    q_prior: QPrior,
    v_prior: VPrior,
    n_draws: usize,
    rng: &mut R,
) -> Result<ChainOutput> {
    let n = y.len();
    let mut q = match q_prior {
        QPrior::Fixed(q) => q,
        QPrior::Beta { a, b } => a / (a + b),
    };
    let mut v = match v_prior {
        VPrior::Fixed(v) => v,
        VPrior::InverseGamma(s) => s.mean().unwrap_or(1.0),
    };
    if !(0.0..=1.0).contains(&q) || !(v > 0.0) {
        return Err(domain("means model prior out of domain"));
    }
    let mut z = vec![false; n];
    let mut delta = vec![0.0; n];
    let mut out = ChainBuilder::new(n);
    out.add_common("q");
    out.add_common("v_delta");
    out.add_group("z", 1);
    out.add_group("delta", 1);
    for _ in 0..n_draws {
        for i in 0..n {
            let stats = SlabStats {
                precision: 1.0,
                score: y[i],
            };
            let (zi, di) = blocks::update_indicator_and_deviation_normal(stats, q, v, rng);
            z[i] = zi;
            delta[i] = di;
        }
        if let QPrior::Beta { a, b } = q_prior {
            q = blocks::update_q(&z, a, b, rng)?;
        }
        if let VPrior::InverseGamma(spec) = v_prior {
            v = blocks::update_v_delta_normal(&z, &delta, &spec, rng)?;
        }
        out.push_common(&[q, v]);
        out.push_unit("z", z.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        out.push_unit("delta", delta.iter().cloned());
    }
    Ok(out.finish())
}

//! Closed-form and simulation oracles: the means model, the state prior
//! covariance, the random-walk acceptance rate and the IG scale identity.

use sparsepanel_core::blocks::{self, DeviatorScaleStats, RwmhAdaptState};
use sparsepanel_core::distributions::{sample_normal, InverseGammaSpec};
use sparsepanel_core::m2::{build_state_prior_cov, joint_block_log_odds, M2Params};
use sparsepanel_core::means::{argmax_estimator, exact_posterior, posterior_median};
use sparsepanel_core::nalgebra::{DMatrix, DVector};
use sparsepanel_core::rand::Rng;
use sparsepanel_core::RngStream;

use super::grid::simpson;

fn phi(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

fn ln_phi(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
}

/// Slab mass, mean, variance and mass below zero of δ | y by Simpson quadrature.
struct SlabQuad {
    mass: f64,
    mean: f64,
    var: f64,
    below: f64,
}

fn slab_quad(y: f64, v: f64, panels: usize) -> SlabQuad {
    let f = |d: f64| phi(d, 0.0, v) * phi(y, d, 1.0);
    let (a, b) = (y.min(0.0) - 14.0, y.max(0.0) + 14.0);
    let mass = simpson(a, b, panels, f);
    let mean = simpson(a, b, panels, |d| d * f(d)) / mass;
    let var = simpson(a, b, panels, |d| (d - mean) * (d - mean) * f(d)) / mass;
    let below = simpson(a, 0.0, panels, f) / mass;
    SlabQuad { mass, mean, var, below }
}

/// Largest absolute deviation of the closed-form posterior from quadrature
/// over a grid of (y, q, v).
pub fn exact_posterior_vs_quadrature() -> f64 {
    let mut worst: f64 = 0.0;
    for &q in &[0.05, 0.3, 0.5, 0.9] {
        for &v in &[0.1, 1.0, 5.0] {
            for i in 0..=16 {
                let y = -4.0 + 0.5 * i as f64;
                let p = exact_posterior(y, q, v).unwrap();
                let s = slab_quad(y, v, 60_000);
                let spike = (1.0 - q) * phi(y, 0.0, 1.0);
                let q_star = q * s.mass / (q * s.mass + spike);
                for e in [
                    p.q_star - q_star,
                    p.delta_star - s.mean,
                    p.v_star - s.var,
                    p.mean() - q_star * s.mean,
                ] {
                    worst = worst.max(e.abs());
                }
            }
        }
    }
    worst
}

fn profiled_objective(y: &[f64], mask: u32) -> (f64, u32) {
    let n = y.len();
    let m = mask.count_ones();
    let flagged = |i: usize| mask & (1 << i) != 0;
    if m == 0 {
        return (y.iter().map(|&x| ln_phi(x, 0.0, 1.0)).sum(), 0);
    }
    let q = m as f64 / n as f64;
    let ss: f64 = (0..n).filter(|&i| flagged(i)).map(|i| y[i] * y[i]).sum();
    let v = (ss / m as f64 - 1.0).max(0.0);
    let mut obj = 0.0;
    for (i, &x) in y.iter().enumerate() {
        obj += if flagged(i) {
            q.ln() + ln_phi(x, 0.0, 1.0 + v)
        } else {
            (1.0 - q).ln() + ln_phi(x, 0.0, 1.0)
        };
    }
    (obj, m)
}

/// Number of random instances (N ≤ 10) where the argmax estimator returns
/// the exhaustive-search assignment, out of `instances`.
pub fn argmax_vs_exhaustive(instances: usize, seed: u64) -> usize {
    let mut agree = 0;
    for inst in 0..instances {
        let mut rng = RngStream::new(seed, inst as u64);
        let n = rng.random_range(1..=10usize);
        let q: f64 = rng.random();
        let v = 0.2 + 6.0 * rng.random::<f64>();
        let y: Vec<f64> = (0..n)
            .map(|_| {
                let d = if rng.random::<f64>() < q { sample_normal(0.0, v.sqrt(), &mut rng) } else { 0.0 };
                d + sample_normal(0.0, 1.0, &mut rng)
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, u32::MAX, 0u32);
        for mask in 0..(1u32 << n) {
            let (obj, m) = profiled_objective(&y, mask);
            if obj > best.0 + 1e-12 || ((obj - best.0).abs() <= 1e-12 && m < best.1) {
                best = (obj, m, mask);
            }
        }
        let got = argmax_estimator(&y, (0.5, 1.0), 1000).unwrap();
        let want: Vec<bool> = (0..n).map(|i| best.2 & (1 << i) != 0).collect();
        if got.z_hat == want && (got.log_objective - best.0).abs() < 1e-9 {
            agree += 1;
        }
    }
    agree
}

/// Violations of the thresholding property of the posterior median on a
/// (q, v) grid: zero exactly on a symmetric interval around y = 0, agreeing
/// with the quadrature CDF, and shrinking toward zero elsewhere.
pub fn median_thresholding_violations() -> usize {
    let mut bad = 0;
    for &q in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        for &v in &[0.2, 1.0, 4.0] {
            let ys: Vec<f64> = (0..=240).map(|i| 0.025 * i as f64).collect();
            let mut zero_run_ended = false;
            for &y in &ys {
                let m = posterior_median(y, q, v).unwrap();
                let mneg = posterior_median(-y, q, v).unwrap();
                if (m + mneg).abs() > 1e-9 {
                    bad += 1;
                }
                let s = slab_quad(y, v, 4_000);
                let spike = (1.0 - q) * phi(y, 0.0, 1.0);
                let q_star = q * s.mass / (q * s.mass + spike);
                let f0m = q_star * s.below;
                let f0 = f0m + 1.0 - q_star;
                let ambiguous = (f0m - 0.5).abs() < 1e-9 || (f0 - 0.5).abs() < 1e-9;
                let zero_oracle = f0m <= 0.5 && f0 >= 0.5;
                if !ambiguous && zero_oracle != (m == 0.0) {
                    bad += 1;
                }
                if m == 0.0 {
                    if zero_run_ended {
                        bad += 1;
                    }
                } else {
                    zero_run_ended = true;
                    if m < 0.0 || m > y + 1e-12 {
                        bad += 1;
                    }
                }
            }
        }
    }
    bad
}

/// Largest |V_s − simulated covariance| / MC standard error over all
/// elements and all (ρ, T) in the grid, with `paths` simulated paths.
pub fn state_cov_max_z(paths: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut case = 0;
    for &rho in &[0.0, 0.6, 0.97, 1.0] {
        for &t in &[3usize, 8] {
            let mut rng = RngStream::new(seed, case);
            case += 1;
            let s2: Vec<f64> = (0..t).map(|_| 0.2 + 1.3 * rng.random::<f64>()).collect();
            let de = 0.5 + 1.5 * rng.random::<f64>();
            let v0 = 0.1 + 0.9 * rng.random::<f64>();
            let vs = build_state_prior_cov(rho, &s2, de, v0, t);
            let mut sum = vec![0.0; t * t];
            let mut sum2 = vec![0.0; t * t];
            let mut s = vec![0.0; t];
            for _ in 0..paths {
                let mut prev = sample_normal(0.0, v0.sqrt(), &mut rng);
                for j in 0..t {
                    prev = rho * prev + sample_normal(0.0, (s2[j] * de).sqrt(), &mut rng);
                    s[j] = prev;
                }
                for a in 0..t {
                    for b in 0..t {
                        let p = s[a] * s[b];
                        sum[a * t + b] += p;
                        sum2[a * t + b] += p * p;
                    }
                }
            }
            let n = paths as f64;
            for a in 0..t {
                for b in 0..t {
                    let m = sum[a * t + b] / n;
                    let se = ((sum2[a * t + b] / n - m * m) / n).sqrt();
                    worst = worst.max((vs[(a, b)] - m).abs() / se);
                }
            }
        }
    }
    worst
}

/// Acceptance rates over the last `tail` of `iters` adapted random-walk
/// steps on three random v_δσ posteriors.
pub fn rwmh_acceptance(iters: usize, tail: usize, seed: u64) -> Vec<f64> {
    [3usize, 20, 100]
        .iter()
        .enumerate()
        .map(|(c, &psi)| {
            let mut rng = RngStream::new(seed, c as u64);
            let prior = InverseGammaSpec {
                nu: 6.0 + 12.0 * rng.random::<f64>(),
                tau: 4.0 + 12.0 * rng.random::<f64>(),
            };
            let w0 = 0.3 + 2.0 * rng.random::<f64>();
            let d: Vec<f64> = (0..psi)
                .map(|_| InverseGammaSpec::from_variance(w0).unwrap().sample(&mut rng))
                .collect();
            let stats = DeviatorScaleStats::from_deviations(&d);
            let mut adapt = RwmhAdaptState::default();
            let mut w = 1.0;
            for it in 0..iters {
                if it == iters - tail {
                    adapt.reset_counts();
                }
                w = blocks::update_v_delta_sigma_rwmh(w, stats, &prior, &mut adapt, &mut rng).unwrap();
            }
            adapt.acceptance_rate()
        })
        .collect()
}

pub struct ScaleMoments {
    pub v: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
}

/// Sample mean and variance of the IG(1/v + 2, 1/v + 1) variance scale.
pub fn ig_scale_moments(v: f64, n: usize, seed: u64) -> ScaleMoments {
    let mut rng = RngStream::new(seed, (v * 1000.0) as u64);
    let spec = InverseGammaSpec::from_variance(v).unwrap();
    let xs: Vec<f64> = (0..n).map(|_| spec.sample(&mut rng)).collect();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    ScaleMoments {
        v,
        mean,
        mean_se: (m2 / nf).sqrt(),
        var: m2 * nf / (nf - 1.0),
        var_se: ((m4 - m2 * m2) / nf).sqrt(),
    }
}

fn dense_ln_normal(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let c = cov.clone().cholesky().unwrap();
    let r = y - mean;
    let sol = c.solve(&r);
    let ln_det: f64 = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + ln_det + r.dot(&sol))
}

/// Largest |error| of the joint-block indicator log odds against the ratio
/// of two dense Gaussian marginal likelihoods, on random small units.
pub fn joint_block_odds_error(instances: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let mut rng = RngStream::new(seed, inst as u64);
        let (k, t) = (2, 5);
        let mut p = M2Params::table4_prior_means(k, t);
        p.q_alpha = 0.1 + 0.8 * rng.random::<f64>();
        p.rho = 0.2 + 0.9 * rng.random::<f64>();
        p.mu_s0 = sample_normal(0.0, 0.3, &mut rng);
        p.v_s0 = 0.05 + 0.5 * rng.random::<f64>();
        p.alpha = vec![sample_normal(0.0, 1.0, &mut rng), sample_normal(0.0, 0.3, &mut rng)];
        p.v_delta_alpha = vec![0.3, 0.02, 0.02, 0.05];
        for g in 0..t {
            p.sigma2_u[g] = 0.05 + 0.3 * rng.random::<f64>();
            p.sigma2_eps[g] = 0.02 + 0.2 * rng.random::<f64>();
        }
        let (dr, du, de) = (sample_normal(0.0, 0.1, &mut rng), 0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>());
        let mut x = Vec::new();
        let mut y = Vec::new();
        for g in 0..t {
            let h = 1.0 + g as f64 + 5.0 * inst as f64 / instances as f64;
            x.extend([1.0, h / 10.0]);
            y.push(if inst % 3 == 1 && g == 2 { f64::NAN } else { sample_normal(0.5, 0.7, &mut rng) });
        }
        let got = joint_block_log_odds(&y, &x, &p, dr, du, de).unwrap();

        // s = a s_0 + L e with a_t = ρ^t and L_tj = ρ^{t−j}.
        let r = p.rho + dr;
        let obs: Vec<usize> = (0..t).filter(|&g| y[g].is_finite()).collect();
        let mut vs = DMatrix::zeros(t, t);
        let a = DVector::from_fn(t, |g, _| r.powi(g as i32 + 1));
        let l = DMatrix::from_fn(t, t, |g, j| if j <= g { r.powi((g - j) as i32) } else { 0.0 });
        let d = DMatrix::from_diagonal(&DVector::from_fn(t, |g, _| p.sigma2_eps[g] * de));
        vs += &a * a.transpose() * p.v_s0 + &l * d * l.transpose();
        let xm = DMatrix::from_fn(obs.len(), k, |o, j| x[obs[o] * k + j]);
        let yo = DVector::from_fn(obs.len(), |o, _| y[obs[o]]);
        let mean = &xm * DVector::from_vec(p.alpha.clone()) + DVector::from_fn(obs.len(), |o, _| a[obs[o]] * p.mu_s0);
        let base = DMatrix::from_fn(obs.len(), obs.len(), |o1, o2| {
            vs[(obs[o1], obs[o2])] + if o1 == o2 { p.sigma2_u[obs[o1]] * du } else { 0.0 }
        });
        let vda = DMatrix::from_row_slice(k, k, &p.v_delta_alpha);
        let with = &base + &xm * vda * xm.transpose();
        let want = (p.q_alpha / (1.0 - p.q_alpha)).ln() + dense_ln_normal(&yo, &mean, &with) - dense_ln_normal(&yo, &mean, &base);
        worst = worst.max((got - want).abs());
    }
    worst
}

//! Grid-quadrature oracles for the conditional draw of every Gibbs block.
//!
//! Each oracle is built from the prior density times the likelihood of the
//! block's data, never from the conjugate update under test.

use sparsepanel_core::blocks::{self, DeviatorScaleStats, RegressionAccumulator, RwmhAdaptState, SlabStats};
use sparsepanel_core::distributions::{sample_normal, InverseGammaSpec, TruncatedNormalSpec};
use sparsepanel_core::m2::{update_mu_v_s0, update_s0, M2Hyper};
use sparsepanel_core::nalgebra::{DMatrix, DVector};
use sparsepanel_core::rand::Rng;
use sparsepanel_core::RngStream;
use statrs::distribution::{ContinuousCDF, InverseGamma};
use statrs::function::gamma::ln_gamma;

use super::grid::{log_sum_exp, GridDensity};
use super::stats::{binomial_z, ks};

#[derive(Clone, Debug)]
pub struct BlockCheck {
    pub block: &'static str,
    pub instance: usize,
    pub ks: f64,
    /// z statistic of the slab inclusion frequency.
    pub inclusion_z: Option<f64>,
}

const CELLS: usize = 200_000;

fn ln_norm(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
}

fn ln_ig(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

fn unif(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn check(block: &'static str, instance: usize, ks: f64, inclusion_z: Option<f64>) -> BlockCheck {
    BlockCheck {
        block,
        instance,
        ks,
        inclusion_z,
    }
}

/// Bivariate Normal regression coefficient; both marginals on a 2-D grid.
fn common_regression(inst: usize, n: usize, rng: &mut RngStream) -> Vec<BlockCheck> {
    let m0 = [unif(rng, -1.0, 1.0), unif(rng, -1.0, 1.0)];
    let v0 = [unif(rng, 0.2, 2.0), unif(rng, 0.2, 2.0)];
    let nobs = 6;
    let xs: Vec<f64> = (0..nobs).map(|_| sample_normal(0.5, 1.0, rng)).collect();
    let ws: Vec<f64> = (0..nobs).map(|_| unif(rng, 0.5, 3.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 + 0.3 * x + sample_normal(0.0, 1.0, rng)).collect();
    let mut acc = RegressionAccumulator::new(2);
    for t in 0..nobs {
        acc.add(&[1.0, xs[t]], ys[t], ws[t]);
    }
    let pm = DVector::from_vec(m0.to_vec());
    let pc = DMatrix::from_diagonal(&DVector::from_vec(v0.to_vec()));
    let draws: Vec<DVector<f64>> = (0..n)
        .map(|_| blocks::update_common_regression(&pm, &pc, &acc, rng).unwrap())
        .collect();

    let g = 1200;
    let lo = [-8.0, -8.0];
    let hi = [8.0, 8.0];
    let step = [(hi[0] - lo[0]) / g as f64, (hi[1] - lo[1]) / g as f64];
    let mut lf = vec![0.0; g * g];
    for i in 0..g {
        let a = lo[0] + (i as f64 + 0.5) * step[0];
        for j in 0..g {
            let b = lo[1] + (j as f64 + 0.5) * step[1];
            let mut l = ln_norm(a, m0[0], v0[0]) + ln_norm(b, m0[1], v0[1]);
            for t in 0..nobs {
                l += ln_norm(ys[t], a + b * xs[t], 1.0 / ws[t]);
            }
            lf[i * g + j] = l;
        }
    }
    let marg_a: Vec<f64> = (0..g).map(|i| log_sum_exp(&lf[i * g..(i + 1) * g])).collect();
    let marg_b: Vec<f64> = (0..g)
        .map(|j| log_sum_exp(&(0..g).map(|i| lf[i * g + j]).collect::<Vec<_>>()))
        .collect();
    let ga = GridDensity::from_log_values(lo[0], hi[0], marg_a);
    let gb = GridDensity::from_log_values(lo[1], hi[1], marg_b);
    vec![
        check("common_regression[0]", inst, ks(draws.iter().map(|d| d[0]).collect(), |x| ga.cdf(x)), None),
        check("common_regression[1]", inst, ks(draws.iter().map(|d| d[1]).collect(), |x| gb.cdf(x)), None),
    ]
}

fn q_beta(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let (a, b) = (unif(rng, 1.0, 3.0), unif(rng, 1.0, 3.0));
    let units = 20;
    let ones = rng.random_range(0..=units);
    let draws: Vec<f64> = (0..n)
        .map(|_| blocks::update_q_count(ones, units, a, b, rng).unwrap())
        .collect();
    let grid = GridDensity::new(0.0, 1.0, CELLS, |q| {
        (a - 1.0) * q.ln() + (b - 1.0) * (1.0 - q).ln() + ones as f64 * q.ln() + (units - ones) as f64 * (1.0 - q).ln()
    });
    check("q_beta", inst, ks(draws, |x| grid.cdf(x)), None)
}

fn v_delta_normal(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let prior = InverseGammaSpec {
        nu: unif(rng, 4.0, 10.0),
        tau: unif(rng, 0.5, 5.0),
    };
    let units = 15;
    let mut z: Vec<bool> = (0..units).map(|_| rng.random::<f64>() < 0.6).collect();
    for zi in z.iter_mut().take(5) {
        *zi = true;
    }
    let d: Vec<f64> = z
        .iter()
        .map(|&zi| if zi { sample_normal(0.0, 0.7, rng) } else { 3.0 })
        .collect();
    let draws: Vec<f64> = (0..n)
        .map(|_| blocks::update_v_delta_normal(&z, &d, &prior, rng).unwrap())
        .collect();
    let ss: f64 = z.iter().zip(&d).filter(|(&zi, _)| zi).map(|(_, x)| x * x).sum();
    let hi = 40.0 * (prior.tau + ss) / prior.nu + 1.0;
    let grid = GridDensity::new(0.0, hi, CELLS, |v| {
        let mut l = ln_ig(v, prior.nu / 2.0, prior.tau / 2.0);
        for (&zi, &x) in z.iter().zip(&d) {
            if zi {
                l += ln_norm(x, 0.0, v);
            }
        }
        l
    });
    check("v_delta_normal", inst, ks(draws, |x| grid.cdf(x)), None)
}

/// One-dimensional inverse Wishart: IW_1(ν, ψ) has density IG(ν/2, ψ/2).
fn v_delta_iw_scalar(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let dof = unif(rng, 4.0, 8.0);
    let psi = unif(rng, 0.2, 2.0);
    let prior = sparsepanel_core::distributions::InverseWishartSpec::new(dof, DMatrix::from_element(1, 1, psi)).unwrap();
    let units = 12;
    let z: Vec<bool> = (0..units).map(|i| i % 3 != 0).collect();
    let d: Vec<DVector<f64>> = (0..units).map(|_| DVector::from_element(1, sample_normal(0.0, 0.6, rng))).collect();
    let draws: Vec<f64> = (0..n)
        .map(|_| blocks::update_v_delta_alpha_iw(&z, &d, &prior, rng).unwrap()[(0, 0)])
        .collect();
    let grid = GridDensity::new(0.0, 20.0, CELLS, |v| {
        let mut l = ln_ig(v, dof / 2.0, psi / 2.0);
        for (&zi, x) in z.iter().zip(&d) {
            if zi {
                l += ln_norm(x[0], 0.0, v);
            }
        }
        l
    });
    check("v_delta_alpha_iw", inst, ks(draws, |x| grid.cdf(x)), None)
}

/// Diagonal marginals of a 2 × 2 inverse Wishart draw: Σ_jj ~ IG((ν − 1)/2, Ψ_jj/2).
fn v_delta_iw_diag(inst: usize, n: usize, rng: &mut RngStream) -> Vec<BlockCheck> {
    let dof = unif(rng, 4.0, 8.0);
    let scale = DMatrix::from_row_slice(2, 2, &[unif(rng, 0.3, 1.0), 0.05, 0.05, unif(rng, 0.05, 0.3)]);
    let prior = sparsepanel_core::distributions::InverseWishartSpec::new(dof, scale.clone()).unwrap();
    let units = 10;
    let z: Vec<bool> = (0..units).map(|i| i % 2 == 0).collect();
    let d: Vec<DVector<f64>> = (0..units)
        .map(|_| DVector::from_vec(vec![sample_normal(0.0, 0.7, rng), sample_normal(0.0, 0.3, rng)]))
        .collect();
    let draws: Vec<DMatrix<f64>> = (0..n)
        .map(|_| blocks::update_v_delta_alpha_iw(&z, &d, &prior, rng).unwrap())
        .collect();
    let mut post = scale;
    let mut post_dof = dof;
    for (&zi, x) in z.iter().zip(&d) {
        if zi {
            post += x * x.transpose();
            post_dof += 1.0;
        }
    }
    (0..2)
        .map(|j| {
            let ig = InverseGamma::new((post_dof - 1.0) / 2.0, post[(j, j)] / 2.0).unwrap();
            check(
                if j == 0 { "v_delta_alpha_iw_diag[0]" } else { "v_delta_alpha_iw_diag[1]" },
                inst,
                ks(draws.iter().map(|m| m[(j, j)]).collect(), |x| ig.cdf(x)),
                None,
            )
        })
        .collect()
}

fn normal_slab(inst: usize, n: usize, rng: &mut RngStream) -> Vec<BlockCheck> {
    let q = unif(rng, 0.2, 0.8);
    let v = unif(rng, 0.1, 2.0);
    let nobs = 5;
    let truth = if inst % 2 == 0 { 0.0 } else { 0.8 };
    let xs: Vec<f64> = (0..nobs).map(|_| sample_normal(1.0, 0.7, rng)).collect();
    let ws: Vec<f64> = (0..nobs).map(|_| unif(rng, 0.5, 2.0)).collect();
    let rs: Vec<f64> = (0..nobs)
        .map(|t| truth * xs[t] + sample_normal(0.0, (1.0 / ws[t]).sqrt(), rng))
        .collect();
    let mut st = SlabStats::default();
    for t in 0..nobs {
        st.add(xs[t], rs[t], ws[t]);
    }
    let (mut hits, mut slab) = (0, Vec::new());
    for _ in 0..n {
        let (z, d) = blocks::update_indicator_and_deviation_normal(st, q, v, rng);
        if z {
            hits += 1;
            slab.push(d);
        }
    }
    let lik = |d: f64| (0..nobs).map(|t| ln_norm(rs[t], xs[t] * d, 1.0 / ws[t])).sum::<f64>();
    let grid = GridDensity::new(-15.0, 15.0, CELLS, |d| ln_norm(d, 0.0, v) + lik(d));
    let log_slab = q.ln() + grid.log_mass;
    let log_spike = (1.0 - q).ln() + lik(0.0);
    let p1 = 1.0 / (1.0 + (log_spike - log_slab).exp());
    vec![check(
        "normal_slab",
        inst,
        if slab.len() > 100 { ks(slab, |x| grid.cdf(x)) } else { 0.0 },
        Some(binomial_z(hits, n, p1)),
    )]
}

fn ig_slab(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let q = unif(rng, 0.2, 0.8);
    let v = unif(rng, 0.25, 2.0);
    let nobs = 8;
    let truth = if inst % 2 == 0 { 1.0 } else { 2.5 };
    let s2: Vec<f64> = (0..nobs).map(|_| unif(rng, 0.5, 2.0)).collect();
    let rs: Vec<f64> = s2.iter().map(|s| sample_normal(0.0, (s * truth).sqrt(), rng)).collect();
    let ss: f64 = rs.iter().zip(&s2).map(|(r, s)| r * r / s).sum();
    let (mut hits, mut slab) = (0, Vec::new());
    for _ in 0..n {
        let (z, d) = blocks::update_indicator_and_deviation_ig(ss, nobs, q, v, rng);
        if z {
            hits += 1;
            slab.push(d);
        }
    }
    let lik = |d: f64| rs.iter().zip(&s2).map(|(r, s)| ln_norm(*r, 0.0, s * d)).sum::<f64>();
    let (a0, b0) = (1.0 / v + 2.0, 1.0 / v + 1.0);
    let grid = GridDensity::new(0.0, 60.0, CELLS, |d| ln_ig(d, a0, b0) + lik(d));
    let log_slab = q.ln() + grid.log_mass;
    let log_spike = (1.0 - q).ln() + lik(1.0);
    let p1 = 1.0 / (1.0 + (log_spike - log_slab).exp());
    check(
        "ig_slab",
        inst,
        if slab.len() > 100 { ks(slab, |x| grid.cdf(x)) } else { 0.0 },
        Some(binomial_z(hits, n, p1)),
    )
}

/// Random-walk sampler for v_δσ: adapted for a burn-in, then frozen and thinned.
fn v_delta_sigma_rwmh(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let prior = InverseGammaSpec {
        nu: unif(rng, 8.0, 16.0),
        tau: unif(rng, 6.0, 12.0),
    };
    let psi = [5, 15, 40][inst % 3];
    let w0 = unif(rng, 0.5, 2.0);
    let d: Vec<f64> = (0..psi)
        .map(|_| InverseGammaSpec::from_variance(w0).unwrap().sample(rng))
        .collect();
    let stats = DeviatorScaleStats::from_deviations(&d);
    let mut adapt = RwmhAdaptState::default();
    let mut w = 1.0;
    for _ in 0..5_000 {
        w = blocks::update_v_delta_sigma_rwmh(w, stats, &prior, &mut adapt, rng).unwrap();
    }
    adapt.adapting = false;
    let thin = 20;
    let mut draws = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..thin {
            w = blocks::update_v_delta_sigma_rwmh(w, stats, &prior, &mut adapt, rng).unwrap();
        }
        draws.push(w);
    }
    let grid = GridDensity::new(0.0, 20.0, CELLS, |om| {
        ln_ig(om, prior.nu / 2.0, prior.tau / 2.0) + d.iter().map(|&x| ln_ig(x, 1.0 / om + 2.0, 1.0 / om + 1.0)).sum::<f64>()
    });
    check("v_delta_sigma_rwmh", inst, ks(draws, |x| grid.cdf(x)), None)
}

fn sigma2_ig(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let prior = InverseGammaSpec {
        nu: unif(rng, 2.0, 12.0),
        tau: unif(rng, 0.5, 10.0),
    };
    let nobs = 10;
    let truth = unif(rng, 0.3, 2.0);
    let e: Vec<f64> = (0..nobs).map(|_| sample_normal(0.0, truth.sqrt(), rng)).collect();
    let ss: f64 = e.iter().map(|x| x * x).sum();
    let draws: Vec<f64> = (0..n).map(|_| prior.posterior(nobs as f64, ss).sample(rng)).collect();
    let hi = 40.0 * (prior.tau + ss) / (prior.nu + nobs as f64);
    let grid = GridDensity::new(0.0, hi, CELLS, |s| {
        ln_ig(s, prior.nu / 2.0, prior.tau / 2.0) + e.iter().map(|&x| ln_norm(x, 0.0, s)).sum::<f64>()
    });
    check("sigma2_ig", inst, ks(draws, |x| grid.cdf(x)), None)
}

/// μ_s0 | v_s0 then v_s0 | μ_s0; the v_s0 oracle integrates over the μ_s0 draw.
fn mu_v_s0(inst: usize, n: usize, rng: &mut RngStream) -> Vec<BlockCheck> {
    let mut h = M2Hyper::table4(1);
    h.mu_s0_mean = unif(rng, -0.5, 0.5);
    h.mu_s0_var = unif(rng, 0.02, 0.5);
    h.v_s0 = InverseGammaSpec {
        nu: unif(rng, 4.0, 10.0),
        tau: unif(rng, 0.1, 1.0),
    };
    let v_cur = unif(rng, 0.1, 0.5);
    let s0: Vec<f64> = (0..6).map(|_| sample_normal(0.2, 0.5, rng)).collect();
    let draws: Vec<(f64, f64)> = (0..n).map(|_| update_mu_v_s0(&s0, v_cur, &h, rng)).collect();

    let mu_lik = |m: f64| ln_norm(m, h.mu_s0_mean, h.mu_s0_var) + s0.iter().map(|&s| ln_norm(s, m, v_cur)).sum::<f64>();
    let gm = GridDensity::new(-6.0, 6.0, CELLS, mu_lik);

    let (gmu, gv) = (800, 6000);
    let (mlo, mhi, vhi) = (-3.0, 3.0, 8.0);
    let mstep = (mhi - mlo) / gmu as f64;
    let vstep = vhi / gv as f64;
    let mu_lw: Vec<f64> = (0..gmu).map(|i| mu_lik(mlo + (i as f64 + 0.5) * mstep)).collect();
    let mu_norm = log_sum_exp(&mu_lw);
    let mut v_mass = vec![0.0; gv];
    for (i, lw) in mu_lw.iter().enumerate() {
        let wm = (lw - mu_norm).exp();
        if wm < 1e-14 {
            continue;
        }
        let m = mlo + (i as f64 + 0.5) * mstep;
        let lv: Vec<f64> = (0..gv)
            .map(|j| {
                let v = (j as f64 + 0.5) * vstep;
                ln_ig(v, h.v_s0.nu / 2.0, h.v_s0.tau / 2.0) + s0.iter().map(|&s| ln_norm(s, m, v)).sum::<f64>()
            })
            .collect();
        let c = log_sum_exp(&lv);
        for j in 0..gv {
            v_mass[j] += wm * (lv[j] - c).exp();
        }
    }
    let gvd = GridDensity::from_log_values(0.0, vhi, v_mass.iter().map(|m| m.ln()).collect());
    vec![
        check("mu_s0", inst, ks(draws.iter().map(|d| d.0).collect(), |x| gm.cdf(x)), None),
        check("v_s0", inst, ks(draws.iter().map(|d| d.1).collect(), |x| gvd.cdf(x)), None),
    ]
}

fn s0(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let s1 = unif(rng, -1.0, 1.0);
    let phi = unif(rng, 0.0, 1.1);
    let mu = unif(rng, -0.5, 0.5);
    let v0 = unif(rng, 0.05, 1.0);
    let e1 = unif(rng, 0.05, 1.0);
    let draws: Vec<f64> = (0..n).map(|_| update_s0(s1, phi, mu, v0, e1, rng)).collect();
    let r = 12.0 * v0.sqrt();
    let grid = GridDensity::new(mu - r, mu + r, CELLS, |s| ln_norm(s, mu, v0) + ln_norm(s1, phi * s, e1));
    check("s0", inst, ks(draws, |x| grid.cdf(x)), None)
}

fn truncated_normal(inst: usize, n: usize, rng: &mut RngStream) -> BlockCheck {
    let center = [-1.0, 0.3, 2.0][inst % 3];
    let scale = [0.2, 1.0, 0.7][inst % 3];
    let spec = TruncatedNormalSpec::new(center, 0.0, scale).unwrap();
    let draws: Vec<f64> = (0..n).map(|_| spec.sample(rng)).collect();
    let hi = center.max(0.0) + 15.0 * scale;
    let grid = GridDensity::new(0.0, hi, CELLS, |x| ln_norm(x, center, scale * scale));
    check("truncated_normal", inst, ks(draws, |x| grid.cdf(x)), None)
}

/// Every block on `instances` randomized problems with `n` draws each.
pub fn block_suite(n: usize, instances: usize, seed: u64) -> Vec<BlockCheck> {
    let mut out = Vec::new();
    for inst in 0..instances {
        let r = |k: u64| RngStream::new(seed, (inst as u64) * 64 + k);
        out.extend(common_regression(inst, n, &mut r(0)));
        out.push(q_beta(inst, n, &mut r(1)));
        out.push(v_delta_normal(inst, n, &mut r(2)));
        out.push(v_delta_iw_scalar(inst, n, &mut r(3)));
        out.extend(v_delta_iw_diag(inst, n, &mut r(4)));
        out.extend(normal_slab(inst, n, &mut r(5)));
        out.push(ig_slab(inst, n, &mut r(6)));
        out.push(v_delta_sigma_rwmh(inst, n, &mut r(7)));
        out.push(sigma2_ig(inst, n, &mut r(8)));
        out.extend(mu_v_s0(inst, n, &mut r(9)));
        out.push(s0(inst, n, &mut r(10)));
        out.push(truncated_normal(inst, n, &mut r(11)));
    }
    out
}

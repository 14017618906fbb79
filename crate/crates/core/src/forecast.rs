//! Posterior predictive simulation and scoring for M2 chains, interval-width
//! comparisons and the cohort inequality decomposition.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::chain::ChainOutput;
use crate::distributions::{bernoulli, sample_mv_normal, sample_normal};
use crate::error::{Error, Result};
use crate::m2::{run_m2_individual, IndividualPrior, M2Params, RegressorTrend};
use crate::math;
use crate::panel::{slab_normal, slab_scale, PanelData};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FullInfoParamUnc,
    FullInfoNoParamUnc,
    IndividualInfo,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::FullInfoParamUnc,
        Scenario::FullInfoNoParamUnc,
        Scenario::IndividualInfo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::FullInfoParamUnc => "full_info_param_unc",
            Scenario::FullInfoNoParamUnc => "full_info_no_param_unc",
            Scenario::IndividualInfo => "individual_info",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }
}

/// Predictive distribution per (unit, horizon): for every retained draw the
/// conditional Normal mean and variance, plus one simulated path value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub scenario: Scenario,
    /// Panel indices of the forecast units.
    pub units: Vec<usize>,
    pub horizons: Vec<usize>,
    pub n_draws: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub sim: Vec<f64>,
}

impl PredictiveDraws {
    fn idx(&self, u: usize, h: usize) -> core::ops::Range<usize> {
        let start = (u * self.horizons.len() + h) * self.n_draws;
        start..start + self.n_draws
    }

    pub fn means(&self, u: usize, h: usize) -> &[f64] {
        &self.mean[self.idx(u, h)]
    }

    pub fn variances(&self, u: usize, h: usize) -> &[f64] {
        &self.var[self.idx(u, h)]
    }

    pub fn simulated(&self, u: usize, h: usize) -> &[f64] {
        &self.sim[self.idx(u, h)]
    }

    pub fn predictive_mean(&self, u: usize, h: usize) -> f64 {
        let m = self.means(u, h);
        m.iter().sum::<f64>() / m.len() as f64
    }

    /// Mixture variance: mean of conditional variances plus variance of means.
    pub fn predictive_variance(&self, u: usize, h: usize) -> f64 {
        let m = self.means(u, h);
        let v = self.variances(u, h);
        let n = m.len() as f64;
        let mu = self.predictive_mean(u, h);
        v.iter().sum::<f64>() / n + m.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n
    }

    /// Log predictive density of `y` under the Normal mixture.
    pub fn ln_density(&self, u: usize, h: usize, y: f64) -> f64 {
        let lp: Vec<f64> = self
            .means(u, h)
            .iter()
            .zip(self.variances(u, h))
            .map(|(&m, &v)| normal_ln_pdf_or_atom(y, m, v))
            .collect();
        math::log_mean_exp(&lp)
    }

    fn mixture_cdf(&self, u: usize, h: usize, x: f64) -> f64 {
        let m = self.means(u, h);
        let v = self.variances(u, h);
        let mut acc = 0.0;
        for (&mi, &vi) in m.iter().zip(v) {
            acc += if vi > 0.0 {
                math::norm_cdf((x - mi) / math::sqrt(vi))
            } else if x >= mi {
                1.0
            } else {
                0.0
            };
        }
        acc / m.len() as f64
    }

    /// Quantile of the predictive mixture by bisection.
    pub fn quantile(&self, u: usize, h: usize, p: f64) -> f64 {
        let m = self.means(u, h);
        let v = self.variances(u, h);
        let sd = math::sqrt(v.iter().cloned().fold(0.0, f64::max));
        let lo0 = m.iter().cloned().fold(f64::INFINITY, f64::min) - 10.0 * sd;
        let hi0 = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd;
        let (mut lo, mut hi) = (lo0, hi0);
        if hi - lo <= 0.0 {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mixture_cdf(u, h, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + math::abs(mid)) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Equal-tail interval at the given level.
    pub fn interval(&self, u: usize, h: usize, level: f64) -> (f64, f64) {
        let a = 0.5 * (1.0 - level);
        (self.quantile(u, h, a), self.quantile(u, h, 1.0 - a))
    }
}

fn normal_ln_pdf_or_atom(y: f64, m: f64, v: f64) -> f64 {
    if v > 0.0 {
        math::norm_ln_pdf(y, m, v)
    } else if y == m {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Units whose observation window reaches the last sample period.
pub fn forecast_units(data: &PanelData) -> Vec<usize> {
    let last = data.n_periods().saturating_sub(1);
    (0..data.n_units()).filter(|&i| data.present(i, last)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
struct UnitDraw {
    coef: Vec<f64>,
    rho: f64,
    s2u: f64,
    s2e: f64,
    s_t: f64,
}

fn unit_draw(chain: &ChainOutput, d: usize, i: usize, k: usize, last: usize) -> Result<UnitDraw> {
    let get = |n: &str| {
        chain
            .common_value(d, n)
            .ok_or_else(|| Error::Config(format!("chain lacks {n}")))
    };
    let da = chain.unit_draw("delta_alpha", d, i);
    let mut coef = Vec::with_capacity(k);
    for j in 0..k {
        coef.push(get(&format!("alpha_{j}"))? + da.map_or(0.0, |v| v[j]));
    }
    let one = |g: &str, default: f64| chain.unit_draw(g, d, i).map_or(default, |v| v[0]);
    let s_t = chain
        .unit_draw("states", d, i)
        .and_then(|s| s.get(last + 1).copied())
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("missing s_T draw for unit {i}")))?;
    Ok(UnitDraw {
        coef,
        rho: get("rho")? + one("delta_rho", 0.0),
        s2u: get(&format!("sigma2_u_{last}"))? * one("delta_sigma_u", 1.0),
        s2e: get(&format!("sigma2_eps_{last}"))? * one("delta_sigma_eps", 1.0),
        s_t,
    })
}

fn mean_draw(draws: &[UnitDraw]) -> UnitDraw {
    let n = draws.len() as f64;
    let k = draws[0].coef.len();
    let mut out = UnitDraw {
        coef: vec![0.0; k],
        ..UnitDraw::default()
    };
    for d in draws {
        for j in 0..k {
            out.coef[j] += d.coef[j] / n;
        }
        out.rho += d.rho / n;
        out.s2u += d.s2u / n;
        out.s2e += d.s2e / n;
        out.s_t += d.s_t / n;
    }
    out
}

/// Conditional mean, variance and one simulated value per horizon.
fn forward(
    d: &UnitDraw,
    x_last: &[f64],
    horizons: &[usize],
    trend: RegressorTrend,
    rng: &mut RngStream,
) -> Vec<(f64, f64, f64)> {
    let hmax = horizons.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(horizons.len());
    let mut s = d.s_t;
    let mut path = Vec::with_capacity(hmax);
    for h in 1..=hmax {
        s = d.rho * s + sample_normal(0.0, math::sqrt(d.s2e), rng);
        let x = trend.extrapolate(x_last, h);
        let xb: f64 = x.iter().zip(&d.coef).map(|(a, b)| a * b).sum();
        path.push((xb, xb + s + sample_normal(0.0, math::sqrt(d.s2u), rng)));
    }
    for &h in horizons {
        let (xb, y) = path[h - 1];
        let mut geo = 0.0;
        let mut r2 = 1.0;
        for _ in 0..h {
            geo += r2;
            r2 *= d.rho * d.rho;
        }
        let mean = xb + math::powf(d.rho, h as f64) * d.s_t;
        out.push((mean, d.s2u + d.s2e * geo, y));
    }
    out
}

fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::Config("horizons must be a non-empty list of positive integers".into()));
    }
    Ok(())
}

/// Full-information predictive draws from a pooled M2 chain.
pub fn predict(
    chain: &ChainOutput,
    data: &PanelData,
    horizons: &[usize],
    scenario: Scenario,
    trend: RegressorTrend,
    seed: u64,
) -> Result<PredictiveDraws> {
    check_horizons(horizons)?;
    if scenario == Scenario::IndividualInfo {
        return Err(Error::Config("individual_info needs per-unit chains; use predict_individual".into()));
    }
    if chain.n_draws == 0 {
        return Err(Error::EmptyChain);
    }
    if chain.n_units != data.n_units() {
        return Err(Error::Config("chain and data have different unit counts".into()));
    }
    let units = forecast_units(data);
    let k = data.k;
    let last = data.n_periods() - 1;
    let nd = chain.n_draws;
    let mut out = PredictiveDraws {
        scenario,
        units: units.clone(),
        horizons: horizons.to_vec(),
        n_draws: nd,
        mean: Vec::with_capacity(units.len() * horizons.len() * nd),
        var: Vec::new(),
        sim: Vec::new(),
    };
    let mut mean = vec![0.0; units.len() * horizons.len() * nd];
    let mut var = mean.clone();
    let mut sim = mean.clone();
    for (pos, &i) in units.iter().enumerate() {
        let draws = (0..nd).map(|d| unit_draw(chain, d, i, k, last)).collect::<Result<Vec<_>>>()?;
        let fixed = (scenario == Scenario::FullInfoNoParamUnc).then(|| mean_draw(&draws));
        let mut rng = RngStream::new(seed, i as u64);
        let x_last = data.x_at(i, last);
        for (d, dr) in draws.iter().enumerate() {
            let dr = fixed.as_ref().unwrap_or(dr);
            for (hp, (m, v, y)) in forward(dr, x_last, horizons, trend, &mut rng).into_iter().enumerate() {
                let at = (pos * horizons.len() + hp) * nd + d;
                mean[at] = m;
                var[at] = v;
                sim[at] = y;
            }
        }
    }
    out.mean = mean;
    out.var = var;
    out.sim = sim;
    Ok(out)
}

/// Fit the single-unit model for every forecast unit.
pub fn fit_individual_chains(
    data: &PanelData,
    prior: &IndividualPrior,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<ChainOutput>> {
    let units = forecast_units(data);
    let p = data.n_periods();
    let fit = |&i: &usize| {
        let one = data.select(&[i], 0..p);
        run_m2_individual(&one, prior, n_draws, burn_in, crate::rng::mix(&[seed, i as u64]))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        units.par_iter().map(fit).collect()
    }
    #[cfg(not(feature = "parallel"))]
    units.iter().map(fit).collect()
}

/// Individual-information predictive draws; `chains[j]` belongs to the
/// j-th unit of [`forecast_units`].
pub fn predict_individual(
    chains: &[ChainOutput],
    data: &PanelData,
    horizons: &[usize],
    trend: RegressorTrend,
    seed: u64,
) -> Result<PredictiveDraws> {
    check_horizons(horizons)?;
    let units = forecast_units(data);
    if chains.len() != units.len() {
        return Err(Error::Config("one individual chain per forecast unit required".into()));
    }
    let nd = chains.first().map_or(0, |c| c.n_draws);
    if nd == 0 || chains.iter().any(|c| c.n_draws != nd) {
        return Err(Error::EmptyChain);
    }
    let k = data.k;
    let last = data.n_periods() - 1;
    let nh = horizons.len();
    let mut mean = vec![0.0; units.len() * nh * nd];
    let mut var = mean.clone();
    let mut sim = mean.clone();
    for (pos, (&i, ch)) in units.iter().zip(chains).enumerate() {
        let mut rng = RngStream::new(seed, i as u64);
        for d in 0..nd {
            let dr = unit_draw(ch, d, 0, k, last)?;
            for (hp, (m, v, y)) in forward(&dr, data.x_at(i, last), horizons, trend, &mut rng).into_iter().enumerate() {
                let at = (pos * nh + hp) * nd + d;
                mean[at] = m;
                var[at] = v;
                sim[at] = y;
            }
        }
    }
    Ok(PredictiveDraws {
        scenario: Scenario::IndividualInfo,
        units,
        horizons: horizons.to_vec(),
        n_draws: nd,
        mean,
        var,
        sim,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub mse: f64,
    pub lps: f64,
    pub n_scored: usize,
    pub unit_lps: Vec<f64>,
    /// Units whose realization has zero predictive density.
    pub zero_density_units: Vec<usize>,
}

/// MSE of the predictive mean and log predictive score at the first horizon.
/// `realized[j]` is the outcome of the j-th forecast unit; NaN entries are skipped.
pub fn score(pred: &PredictiveDraws, realized: &[f64]) -> Result<ScoreReport> {
    if realized.len() != pred.units.len() {
        return Err(Error::Config("realized values must align with forecast units".into()));
    }
    let (mut se, mut lps, mut n) = (0.0, 0.0, 0usize);
    let mut unit_lps = vec![f64::NAN; realized.len()];
    let mut zero = Vec::new();
    for (j, &y) in realized.iter().enumerate() {
        if !y.is_finite() {
            continue;
        }
        let e = pred.predictive_mean(j, 0) - y;
        se += e * e;
        let l = pred.ln_density(j, 0, y);
        if l == f64::NEG_INFINITY {
            zero.push(pred.units[j]);
        }
        unit_lps[j] = l;
        lps += l;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySample("no realized values to score".into()));
    }
    if !zero.is_empty() {
        lps = f64::NEG_INFINITY;
    }
    Ok(ScoreReport {
        mse: se / n as f64,
        lps: lps / n as f64,
        n_scored: n,
        unit_lps,
        zero_density_units: zero,
    })
}

/// Percentage change of MSE against a baseline; negative is an improvement.
pub fn relative_mse_delta(alt: &ScoreReport, base: &ScoreReport) -> f64 {
    100.0 * (alt.mse - base.mse) / base.mse
}

pub fn lps_delta(alt: &ScoreReport, base: &ScoreReport) -> f64 {
    alt.lps - base.lps
}

/// Posterior probability that a unit belongs to the core group in both
/// regression coefficients and persistence.
pub fn core_probability(chain: &ChainOutput, unit: usize) -> f64 {
    if chain.n_draws == 0 {
        return f64::NAN;
    }
    let za = chain.unit_column("z_alpha", unit, 0);
    let zr = chain.unit_column("z_rho", unit, 0);
    let core = (0..chain.n_draws)
        .filter(|&d| za.get(d).map_or(true, |&v| v == 0.0) && zr.get(d).map_or(true, |&v| v == 0.0))
        .count();
    core as f64 / chain.n_draws as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRatios {
    pub units: Vec<usize>,
    /// NaN where the denominator width is zero.
    pub ratios: Vec<f64>,
    pub excluded: Vec<usize>,
    pub mean_all: f64,
    pub mean_core: Option<f64>,
    pub mean_deviator: Option<f64>,
}

/// Ratio of equal-tail interval widths `num / den` per unit at horizon
/// position `h`. Units with core probability ≥ ½ count as core.
pub fn interval_width_ratios(
    num: &PredictiveDraws,
    den: &PredictiveDraws,
    h: usize,
    level: f64,
    core_prob: Option<&[f64]>,
) -> Result<WidthRatios> {
    if num.units != den.units {
        return Err(Error::Config("scenarios cover different units".into()));
    }
    if h >= num.horizons.len() || h >= den.horizons.len() {
        return Err(Error::Config("horizon position out of range".into()));
    }
    if let Some(c) = core_prob {
        if c.len() != num.units.len() {
            return Err(Error::Config("core probabilities must align with forecast units".into()));
        }
    }
    let width = |p: &PredictiveDraws, u: usize| {
        let (a, b) = p.interval(u, h, level);
        b - a
    };
    let mut ratios = Vec::with_capacity(num.units.len());
    let mut excluded = Vec::new();
    let (mut sa, mut na, mut sc, mut nc, mut sd, mut ndv) = (0.0, 0usize, 0.0, 0usize, 0.0, 0usize);
    for u in 0..num.units.len() {
        let wd = width(den, u);
        if !(wd > 0.0) {
            excluded.push(num.units[u]);
            ratios.push(f64::NAN);
            continue;
        }
        let r = width(num, u) / wd;
        ratios.push(r);
        sa += r;
        na += 1;
        if let Some(c) = core_prob {
            if c[u] >= 0.5 {
                sc += r;
                nc += 1;
            } else {
                sd += r;
                ndv += 1;
            }
        }
    }
    let avg = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok(WidthRatios {
        units: num.units.clone(),
        ratios,
        excluded,
        mean_all: avg(sa, na).unwrap_or(f64::NAN),
        mean_core: avg(sc, nc),
        mean_deviator: avg(sd, ndv),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResult {
    pub v: Vec<f64>,
    pub v_no_delta_alpha: Vec<f64>,
    pub v_no_transitory: Vec<f64>,
    pub ratio_delta_alpha: Vec<f64>,
    pub ratio_transitory: Vec<f64>,
}

/// Cross-sectional variance of y_t, t = 1..T, for a simulated cohort with
/// experience h_it = t. The flags switch off δ^α and the transitory shock
/// while keeping every random draw identical.
pub fn cohort_variances(
    params: &M2Params,
    n: usize,
    t: usize,
    seed: u64,
    no_delta_alpha: bool,
    no_transitory: bool,
) -> Result<Vec<f64>> {
    params.validate(t)?;
    let k = params.k();
    if k > 2 {
        return Err(Error::Config("cohort simulation supports k = 1 or 2".into()));
    }
    let vda = params.v_delta_alpha_matrix();
    let zero = DVector::zeros(k);
    let mut sum = vec![0.0; t];
    let mut sum2 = vec![0.0; t];
    for i in 0..n {
        let mut r = RngStream::new(seed, i as u64);
        let za = bernoulli(params.q_alpha, &mut r);
        let da: Vec<f64> = if za {
            sample_mv_normal(&zero, &vda, &mut r)?.iter().cloned().collect()
        } else {
            vec![0.0; k]
        };
        let (_, dr) = slab_normal(params.q_rho, params.v_delta_rho, &mut r);
        let (_, du) = slab_scale(params.q_sigma_u, params.v_delta_sigma_u, &mut r)?;
        let (_, de) = slab_scale(params.q_sigma_eps, params.v_delta_sigma_eps, &mut r)?;
        let rho_i = params.rho + dr;
        let mut s = sample_normal(params.mu_s0, math::sqrt(params.v_s0), &mut r);
        for tt in 1..=t {
            s = rho_i * s + sample_normal(0.0, math::sqrt(params.sigma2_eps[tt - 1] * de), &mut r);
            let u = sample_normal(0.0, math::sqrt(params.sigma2_u[tt - 1] * du), &mut r);
            let x = if k == 2 { [1.0, tt as f64 / 10.0] } else { [1.0, 0.0] };
            let mut y = s;
            for j in 0..k {
                let d = if no_delta_alpha { 0.0 } else { da[j] };
                y += x[j] * (params.alpha[j] + d);
            }
            if !no_transitory {
                y += u;
            }
            sum[tt - 1] += y;
            sum2[tt - 1] += y * y;
        }
    }
    let nf = n as f64;
    Ok(sum
        .iter()
        .zip(&sum2)
        .map(|(s, s2)| {
            let m = s / nf;
            (s2 / nf - m * m).max(0.0)
        })
        .collect())
}

/// Share of the cross-sectional variance attributable to δ^α and to the
/// transitory shock, from three coupled cohort simulations.
pub fn inequality_decomposition(params: &M2Params, n: usize, t: usize, seed: u64) -> Result<DecompositionResult> {
    if n < 2 {
        return Err(Error::InsufficientData("cohort needs at least two units".into()));
    }
    let v = cohort_variances(params, n, t, seed, false, false)?;
    let va = cohort_variances(params, n, t, seed, true, false)?;
    let vu = cohort_variances(params, n, t, seed, false, true)?;
    let ratio = |a: &[f64]| v.iter().zip(a).map(|(b, x)| if *b > 0.0 { 1.0 - x / b } else { f64::NAN }).collect();
    Ok(DecompositionResult {
        ratio_delta_alpha: ratio(&va),
        ratio_transitory: ratio(&vu),
        v,
        v_no_delta_alpha: va,
        v_no_transitory: vu,
    })
}

/// Posterior means of the M2 common parameters from a chain, with
/// parameters fixed by the variant filled from `fallback`.
pub fn posterior_mean_params(chain: &ChainOutput, fallback: &M2Params) -> M2Params {
    let m = |n: &str, d: f64| chain.common_trace(n).map_or(d, |v| v.iter().sum::<f64>() / v.len() as f64);
    let k = fallback.k();
    let mut p = fallback.clone();
    for j in 0..k {
        p.alpha[j] = m(&format!("alpha_{j}"), p.alpha[j]);
        for l in 0..=j {
            let v = m(&format!("v_delta_alpha_{j}{l}"), p.v_delta_alpha[j * k + l]);
            p.v_delta_alpha[j * k + l] = v;
            p.v_delta_alpha[l * k + j] = v;
        }
    }
    p.rho = m("rho", p.rho);
    for g in 0..p.sigma2_u.len() {
        p.sigma2_u[g] = m(&format!("sigma2_u_{g}"), p.sigma2_u[g]);
        p.sigma2_eps[g] = m(&format!("sigma2_eps_{g}"), p.sigma2_eps[g]);
    }
    p.q_alpha = m("q_alpha", p.q_alpha);
    p.q_rho = m("q_rho", p.q_rho);
    p.q_sigma_u = m("q_sigma_u", p.q_sigma_u);
    p.q_sigma_eps = m("q_sigma_eps", p.q_sigma_eps);
    p.v_delta_rho = m("v_delta_rho", p.v_delta_rho);
    p.v_delta_sigma_u = m("v_delta_sigma_u", p.v_delta_sigma_u);
    p.v_delta_sigma_eps = m("v_delta_sigma_eps", p.v_delta_sigma_eps);
    p.mu_s0 = m("mu_s0", p.mu_s0);
    p.v_s0 = m("v_s0", p.v_s0);
    p
}

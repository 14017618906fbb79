//! Panel data container, estimation samples, and synthetic panels.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::distributions::{bernoulli, sample_mv_normal, sample_normal, InverseGammaSpec};
use crate::error::{domain, Error, Result};
use crate::m1::M1Params;
use crate::m2::M2Params;
use crate::math;
use crate::rng::RngStream;

/// Observations y_it on a rectangular unit × period grid with a missingness
/// mask and k regressors per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelData {
    pub unit_ids: Vec<String>,
    pub times: Vec<i64>,
    /// Row-major N × P; NaN where missing.
    pub y: Vec<f64>,
    pub mask: Vec<bool>,
    pub k: usize,
    /// N × P × k.
    pub x: Vec<f64>,
}

impl PanelData {
    pub fn new(
        unit_ids: Vec<String>,
        times: Vec<i64>,
        y: Vec<f64>,
        mask: Vec<bool>,
        k: usize,
        x: Vec<f64>,
    ) -> Result<Self> {
        let (n, p) = (unit_ids.len(), times.len());
        if y.len() != n * p || mask.len() != n * p || x.len() != n * p * k {
            return Err(Error::Data(format!(
                "panel dimensions inconsistent: {n} units, {p} periods, k = {k}"
            )));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Data("periods must be strictly increasing".into()));
            }
        }
        for c in 0..n * p {
            if mask[c] {
                if !y[c].is_finite() {
                    return Err(Error::Data(format!("non-finite y at cell {c}")));
                }
                if x[c * k..(c + 1) * k].iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("non-finite regressor at cell {c}")));
                }
            }
        }
        Ok(PanelData {
            unit_ids,
            times,
            y,
            mask,
            k,
            x,
        })
    }

    /// Balanced panel without regressors, y given unit by unit.
    pub fn from_rows(rows: &[Vec<f64>], times: Vec<i64>) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let y: Vec<f64> = rows.iter().flat_map(|r| r.iter().cloned()).collect();
        let mask = vec![true; y.len()];
        PanelData::new(ids, times, y, mask, 0, Vec::new())
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn present(&self, i: usize, t: usize) -> bool {
        self.mask[i * self.n_periods() + t]
    }

    #[inline]
    pub fn y_at(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.n_periods() + t]
    }

    #[inline]
    pub fn x_at(&self, i: usize, t: usize) -> &[f64] {
        let c = i * self.n_periods() + t;
        &self.x[c * self.k..(c + 1) * self.k]
    }

    pub fn unit_row(&self, i: usize) -> &[f64] {
        let p = self.n_periods();
        &self.y[i * p..(i + 1) * p]
    }

    pub fn is_balanced(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// First and last observed period index of unit `i`.
    pub fn span(&self, i: usize) -> Option<(usize, usize)> {
        let p = self.n_periods();
        let first = (0..p).find(|&t| self.present(i, t))?;
        let last = (0..p).rev().find(|&t| self.present(i, t))?;
        Some((first, last))
    }

    pub fn longest_run(&self, i: usize) -> usize {
        let mut best = 0;
        let mut cur = 0;
        for t in 0..self.n_periods() {
            if self.present(i, t) {
                cur += 1;
                best = best.max(cur);
            } else {
                cur = 0;
            }
        }
        best
    }

    /// Every unit must have at least two consecutive observations.
    pub fn check_estimable(&self) -> Result<()> {
        if self.n_units() == 0 {
            return Err(Error::EmptySample("panel has no units".into()));
        }
        for i in 0..self.n_units() {
            if self.longest_run(i) < 2 {
                return Err(Error::InsufficientData(format!(
                    "unit {} has fewer than two consecutive observations",
                    self.unit_ids[i]
                )));
            }
        }
        Ok(())
    }

    pub fn select(&self, units: &[usize], periods: core::ops::Range<usize>) -> PanelData {
        let p = self.n_periods();
        let k = self.k;
        let mut y = Vec::new();
        let mut mask = Vec::new();
        let mut x = Vec::new();
        for &i in units {
            for t in periods.clone() {
                let c = i * p + t;
                y.push(self.y[c]);
                mask.push(self.mask[c]);
                x.extend_from_slice(&self.x[c * k..(c + 1) * k]);
            }
        }
        PanelData {
            unit_ids: units.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            times: self.times[periods].to_vec(),
            y,
            mask,
            k,
            x,
        }
    }

    pub fn n_observations(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// Units observed in all `t + 1` periods ending at `last_period`.
    Balanced { t: usize, last_period: i64 },
    Unbalanced { min_consecutive: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub kind: SampleKind,
    pub holdout_periods: usize,
}

/// Split into estimation and holdout panels.
pub fn make_estimation_sample(data: &PanelData, spec: &SampleSpec) -> Result<(PanelData, PanelData)> {
    let h = spec.holdout_periods;
    let (units, window) = match spec.kind {
        SampleKind::Balanced { t, last_period } => {
            if h >= t {
                return Err(domain("holdout_periods must be smaller than T"));
            }
            let end = data
                .times
                .iter()
                .position(|&s| s == last_period)
                .ok_or_else(|| domain(format!("period {last_period} not in panel")))?;
            if end < t {
                return Err(domain(format!("fewer than {} periods end at {last_period}", t + 1)));
            }
            let window = (end - t)..(end + 1);
            let units: Vec<usize> = (0..data.n_units())
                .filter(|&i| window.clone().all(|c| data.present(i, c)))
                .collect();
            (units, window)
        }
        SampleKind::Unbalanced { min_consecutive } => {
            if min_consecutive < 2 {
                return Err(domain("min_consecutive must be at least 2"));
            }
            if h >= data.n_periods() {
                return Err(domain("holdout_periods must be smaller than the number of periods"));
            }
            let est = data.select(&(0..data.n_units()).collect::<Vec<_>>(), 0..data.n_periods() - h);
            let units: Vec<usize> = (0..data.n_units())
                .filter(|&i| est.longest_run(i) >= min_consecutive)
                .collect();
            (units, 0..data.n_periods())
        }
    };
    if units.is_empty() {
        return Err(Error::EmptySample("no unit satisfies the sample definition".into()));
    }
    let split = window.end - h;
    Ok((
        data.select(&units, window.start..split),
        data.select(&units, split..window.end),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Residualized {
    pub data: PanelData,
    pub rank_deficient: bool,
}

/// One-hot period dummies for the present observations in unit-major order.
pub fn period_dummies(data: &PanelData) -> DMatrix<f64> {
    let p = data.n_periods();
    let rows: Vec<usize> = (0..data.n_units() * p).filter(|&c| data.mask[c]).map(|c| c % p).collect();
    let mut d = DMatrix::zeros(rows.len(), p);
    for (r, &t) in rows.iter().enumerate() {
        d[(r, t)] = 1.0;
    }
    d
}

/// Replace y by pooled least-squares residuals on `dummies`, whose rows are
/// the present observations in unit-major order.
pub fn residualize(data: &PanelData, dummies: &DMatrix<f64>) -> Result<Residualized> {
    let cells: Vec<usize> = (0..data.y.len()).filter(|&c| data.mask[c]).collect();
    if dummies.nrows() != cells.len() {
        return Err(Error::MatrixDomain(format!(
            "dummies have {} rows for {} observations",
            dummies.nrows(),
            cells.len()
        )));
    }
    let y = DVector::from_iterator(cells.len(), cells.iter().map(|&c| data.y[c]));
    let svd = dummies.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-12 * smax * dummies.nrows().max(dummies.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Decomposition(e.to_string()))?;
    let resid = &y - dummies * beta;
    let mut out = data.clone();
    for (r, &c) in cells.iter().enumerate() {
        out.y[c] = resid[r];
    }
    Ok(Residualized {
        data: out,
        rank_deficient: rank < dummies.ncols(),
    })
}

/// Realized unit-level quantities of an M1 simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct M1UnitTruth {
    pub z_alpha: Vec<bool>,
    pub delta_alpha: Vec<f64>,
    pub z_rho: Vec<bool>,
    pub delta_rho: Vec<f64>,
    pub z_sigma: Vec<bool>,
    pub delta_sigma: Vec<f64>,
}

impl M1UnitTruth {
    pub fn alpha_i(&self, p: &M1Params) -> Vec<f64> {
        self.delta_alpha.iter().map(|d| p.alpha + d).collect()
    }
    pub fn rho_i(&self, p: &M1Params) -> Vec<f64> {
        self.delta_rho.iter().map(|d| p.rho + d).collect()
    }
}

pub(crate) fn slab_scale<R: Rng + ?Sized>(q: f64, v: f64, rng: &mut R) -> Result<(bool, f64)> {
    if bernoulli(q, rng) {
        Ok((true, InverseGammaSpec::from_variance(v)?.sample(rng)))
    } else {
        Ok((false, 1.0))
    }
}

pub(crate) fn slab_normal<R: Rng + ?Sized>(q: f64, v: f64, rng: &mut R) -> (bool, f64) {
    if bernoulli(q, rng) {
        (true, sample_normal(0.0, math::sqrt(v), rng))
    } else {
        (false, 0.0)
    }
}

/// Simulate M1 with y_i0 = 0 and periods 0..=T.
pub fn simulate_m1<R: RngCore + ?Sized>(
    params: &M1Params,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<(PanelData, M1UnitTruth)> {
    params.validate()?;
    let seed = rng.next_u64();
    let mut truth = M1UnitTruth {
        z_alpha: Vec::with_capacity(n),
        delta_alpha: Vec::with_capacity(n),
        z_rho: Vec::with_capacity(n),
        delta_rho: Vec::with_capacity(n),
        z_sigma: Vec::with_capacity(n),
        delta_sigma: Vec::with_capacity(n),
    };
    let mut y = Vec::with_capacity(n * (t + 1));
    for i in 0..n {
        let mut r = RngStream::new(seed, i as u64);
        let (za, da) = slab_normal(params.q_alpha, params.v_delta_alpha, &mut r);
        let (zr, dr) = slab_normal(params.q_rho, params.v_delta_rho, &mut r);
        let (zs, ds) = slab_scale(params.q_sigma, params.v_delta_sigma, &mut r)?;
        let sd = math::sqrt(params.sigma2 * ds);
        let mut prev = 0.0;
        y.push(prev);
        for _ in 0..t {
            prev = params.alpha + da + (params.rho + dr) * prev + sample_normal(0.0, sd, &mut r);
            y.push(prev);
        }
        truth.z_alpha.push(za);
        truth.delta_alpha.push(da);
        truth.z_rho.push(zr);
        truth.delta_rho.push(dr);
        truth.z_sigma.push(zs);
        truth.delta_sigma.push(ds);
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let mask = vec![true; y.len()];
    Ok((
        PanelData::new(ids, (0..=t as i64).collect(), y, mask, 0, Vec::new())?,
        truth,
    ))
}

/// Regressor construction for M2 panels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressors {
    /// x_it = [1].
    Intercept,
    /// x_it = [1, h_it/10] with h_it = start_i + t − 1.
    Experience { start: Vec<f64> },
}

impl Regressors {
    pub fn k(&self) -> usize {
        match self {
            Regressors::Intercept => 1,
            Regressors::Experience { .. } => 2,
        }
    }

    fn row(&self, i: usize, t: usize) -> Vec<f64> {
        match self {
            Regressors::Intercept => vec![1.0],
            Regressors::Experience { start } => vec![1.0, (start[i] + t as f64 - 1.0) / 10.0],
        }
    }
}

/// Realized unit-level quantities of an M2 simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct M2UnitTruth {
    pub z_alpha: Vec<bool>,
    pub delta_alpha: Vec<Vec<f64>>,
    pub z_rho: Vec<bool>,
    pub delta_rho: Vec<f64>,
    pub z_sigma_u: Vec<bool>,
    pub delta_sigma_u: Vec<f64>,
    pub z_sigma_eps: Vec<bool>,
    pub delta_sigma_eps: Vec<f64>,
    /// s_i0, …, s_iT.
    pub states: Vec<Vec<f64>>,
}

/// Simulate M2 over periods 1..=T, drawing s_i0 ~ N(μ_s0, v_s0).
pub fn simulate_m2<R: RngCore + ?Sized>(
    params: &M2Params,
    n: usize,
    t: usize,
    regressors: &Regressors,
    rng: &mut R,
) -> Result<(PanelData, M2UnitTruth)> {
    params.validate(t)?;
    let k = params.alpha.len();
    if regressors.k() != k {
        return Err(domain("regressor count does not match alpha"));
    }
    if let Regressors::Experience { start } = regressors {
        if start.len() != n {
            return Err(domain("experience profile needs one start per unit"));
        }
    }
    let seed = rng.next_u64();
    let vda = params.v_delta_alpha_matrix();
    let zero = DVector::zeros(k);
    let mut truth = M2UnitTruth {
        z_alpha: vec![],
        delta_alpha: vec![],
        z_rho: vec![],
        delta_rho: vec![],
        z_sigma_u: vec![],
        delta_sigma_u: vec![],
        z_sigma_eps: vec![],
        delta_sigma_eps: vec![],
        states: vec![],
    };
    let mut y = Vec::with_capacity(n * t);
    let mut x = Vec::with_capacity(n * t * k);
    for i in 0..n {
        let mut r = RngStream::new(seed, i as u64);
        let za = bernoulli(params.q_alpha, &mut r);
        let da: Vec<f64> = if za {
            sample_mv_normal(&zero, &vda, &mut r)?.iter().cloned().collect()
        } else {
            vec![0.0; k]
        };
        let (zr, dr) = slab_normal(params.q_rho, params.v_delta_rho, &mut r);
        let (zu, du) = slab_scale(params.q_sigma_u, params.v_delta_sigma_u, &mut r)?;
        let (ze, de) = slab_scale(params.q_sigma_eps, params.v_delta_sigma_eps, &mut r)?;
        let rho_i = params.rho + dr;
        let mut s = Vec::with_capacity(t + 1);
        s.push(sample_normal(params.mu_s0, math::sqrt(params.v_s0), &mut r));
        for tt in 1..=t {
            let prev = s[tt - 1];
            s.push(rho_i * prev + sample_normal(0.0, math::sqrt(params.sigma2_eps[tt - 1] * de), &mut r));
            let xr = regressors.row(i, tt);
            let mean: f64 = xr.iter().zip(params.alpha.iter().zip(&da)).map(|(xv, (a, d))| xv * (a + d)).sum();
            y.push(mean + s[tt] + sample_normal(0.0, math::sqrt(params.sigma2_u[tt - 1] * du), &mut r));
            x.extend(xr);
        }
        truth.z_alpha.push(za);
        truth.delta_alpha.push(da);
        truth.z_rho.push(zr);
        truth.delta_rho.push(dr);
        truth.z_sigma_u.push(zu);
        truth.delta_sigma_u.push(du);
        truth.z_sigma_eps.push(ze);
        truth.delta_sigma_eps.push(de);
        truth.states.push(s);
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let mask = vec![true; y.len()];
    Ok((PanelData::new(ids, (1..=t as i64).collect(), y, mask, k, x)?, truth))
}

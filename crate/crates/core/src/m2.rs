//! Gibbs sampler for the state-space model
//!   y_it = x_it'(α + δ_i^α) + s_it + σ_{u,t} (δ_{i,u}^σ)^{1/2} u_it,
//!   s_it = (ρ + δ_i^ρ) s_{i,t−1} + σ_{ε,t} (δ_{i,ε}^σ)^{1/2} ε_it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blocks::{self, DeviatorScaleStats, RegressionAccumulator, RwmhAdaptState, SlabStats};
use crate::chain::{ChainBuilder, ChainOutput, RwmhDiagnostics};
use crate::distributions::{sample_normal, sample_std_normal, InverseGammaSpec, InverseWishartSpec};
use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::m1::BetaSpec;
use crate::math;
use crate::panel::{M2UnitTruth, PanelData};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum M2Variant {
    Baseline,
    Homosk,
    Rip,
    Hip,
}

impl M2Variant {
    pub const ALL: [M2Variant; 4] = [M2Variant::Baseline, M2Variant::Homosk, M2Variant::Rip, M2Variant::Hip];

    pub fn name(&self) -> &'static str {
        match self {
            M2Variant::Baseline => "baseline",
            M2Variant::Homosk => "homosk",
            M2Variant::Rip => "rip",
            M2Variant::Hip => "hip",
        }
    }

    pub fn parse(s: &str) -> Option<M2Variant> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }

    /// Forced slab probability for the regression coefficients.
    fn forced_q_coef(&self) -> Option<f64> {
        match self {
            M2Variant::Rip => Some(0.0),
            M2Variant::Hip => Some(1.0),
            _ => None,
        }
    }

    fn hetsk(&self) -> bool {
        *self != M2Variant::Homosk
    }
}

/// Common parameters θ of M2; time-varying variances are indexed by the
/// panel's period columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M2Params {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub sigma2_u: Vec<f64>,
    pub sigma2_eps: Vec<f64>,
    pub q_alpha: f64,
    pub q_rho: f64,
    pub q_sigma_u: f64,
    pub q_sigma_eps: f64,
    /// Row-major k × k.
    pub v_delta_alpha: Vec<f64>,
    pub v_delta_rho: f64,
    pub v_delta_sigma_u: f64,
    pub v_delta_sigma_eps: f64,
    pub mu_s0: f64,
    pub v_s0: f64,
}

impl M2Params {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn v_delta_alpha_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(k, k, &self.v_delta_alpha)
    }

    /// Prior means of the default hyperparameters with all q set to zero.
    pub fn table4_prior_means(k: usize, t: usize) -> Self {
        let h = M2Hyper::table4(k);
        let iw = h.v_delta_alpha_spec().mean().unwrap();
        M2Params {
            alpha: h.mu_alpha.clone(),
            rho: h.mu_rho,
            sigma2_u: vec![h.sigma2_u.mean().unwrap(); t],
            sigma2_eps: vec![h.sigma2_eps.mean().unwrap(); t],
            q_alpha: 0.0,
            q_rho: 0.0,
            q_sigma_u: 0.0,
            q_sigma_eps: 0.0,
            v_delta_alpha: iw.transpose().iter().cloned().collect(),
            v_delta_rho: h.v_delta_rho.mean().unwrap(),
            v_delta_sigma_u: h.v_delta_sigma_u.mean().unwrap(),
            v_delta_sigma_eps: h.v_delta_sigma_eps.mean().unwrap(),
            mu_s0: h.mu_s0_mean,
            v_s0: h.v_s0.mean().unwrap(),
        }
    }

    /// Check for simulation: variances may be zero.
    pub fn validate(&self, t: usize) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(domain("alpha must have at least one entry"));
        }
        if self.sigma2_u.len() < t || self.sigma2_eps.len() < t {
            return Err(domain(format!("need {t} period variances")));
        }
        if self.v_delta_alpha.len() != k * k {
            return Err(domain("v_delta_alpha must be k x k"));
        }
        for q in [self.q_alpha, self.q_rho, self.q_sigma_u, self.q_sigma_eps] {
            if !(0.0..=1.0).contains(&q) {
                return Err(domain(format!("slab probability {q} outside [0, 1]")));
            }
        }
        if self.sigma2_u.iter().chain(&self.sigma2_eps).any(|&v| !(v >= 0.0)) || !(self.v_s0 >= 0.0) {
            return Err(domain("variances must be non-negative"));
        }
        for v in [self.v_delta_rho, self.v_delta_sigma_u, self.v_delta_sigma_eps] {
            if !(v > 0.0) {
                return Err(domain("slab variances must be positive"));
            }
        }
        if self.q_alpha > 0.0 && nalgebra::Cholesky::new(self.v_delta_alpha_matrix()).is_none() {
            return Err(Error::MatrixDomain("v_delta_alpha not positive definite".into()));
        }
        Ok(())
    }
}

/// Prior hyperparameters λ of M2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M2Hyper {
    pub mu_alpha: Vec<f64>,
    /// Row-major k × k prior covariance of α.
    pub v_alpha: Vec<f64>,
    pub mu_rho: f64,
    pub v_rho: f64,
    pub sigma2_u: InverseGammaSpec,
    pub sigma2_eps: InverseGammaSpec,
    pub q_alpha: BetaSpec,
    pub q_rho: BetaSpec,
    pub q_sigma_u: BetaSpec,
    pub q_sigma_eps: BetaSpec,
    pub v_delta_alpha_dof: f64,
    /// Row-major k × k.
    pub v_delta_alpha_scale: Vec<f64>,
    pub v_delta_rho: InverseGammaSpec,
    pub v_delta_sigma_u: InverseGammaSpec,
    pub v_delta_sigma_eps: InverseGammaSpec,
    pub mu_s0_mean: f64,
    pub mu_s0_var: f64,
    pub v_s0: InverseGammaSpec,
}

impl M2Hyper {
    /// Default prior for k = 1 (intercept) or k = 2 (intercept, experience/10).
    pub fn table4(k: usize) -> Self {
        let mut scale = vec![0.0; k * k];
        for j in 0..k {
            scale[j * k + j] = if j == 0 { 0.5 } else { 0.1 };
        }
        let mut v_alpha = vec![0.0; k * k];
        for j in 0..k {
            v_alpha[j * k + j] = 1.0;
        }
        let beta = BetaSpec { a: 1.0, b: 1.0 };
        M2Hyper {
            mu_alpha: vec![0.0; k],
            v_alpha,
            mu_rho: 0.8,
            v_rho: 1.0,
            sigma2_u: InverseGammaSpec { nu: 6.0, tau: 0.2 },
            sigma2_eps: InverseGammaSpec { nu: 6.0, tau: 0.2 },
            q_alpha: beta,
            q_rho: beta,
            q_sigma_u: beta,
            q_sigma_eps: beta,
            v_delta_alpha_dof: 5.05,
            v_delta_alpha_scale: scale,
            v_delta_rho: InverseGammaSpec { nu: 16.5, tau: 3.625 },
            v_delta_sigma_u: InverseGammaSpec { nu: 12.0, tau: 10.0 },
            v_delta_sigma_eps: InverseGammaSpec { nu: 12.0, tau: 10.0 },
            mu_s0_mean: 0.0,
            mu_s0_var: 0.05,
            v_s0: InverseGammaSpec { nu: 6.0, tau: 0.2 },
        }
    }

    pub fn k(&self) -> usize {
        self.mu_alpha.len()
    }

    pub fn v_alpha_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(k, k, &self.v_alpha)
    }

    pub fn v_delta_alpha_spec(&self) -> InverseWishartSpec {
        let k = self.k();
        InverseWishartSpec {
            dof: self.v_delta_alpha_dof,
            scale: DMatrix::from_row_slice(k, k, &self.v_delta_alpha_scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.v_alpha.len() != k * k || self.v_delta_alpha_scale.len() != k * k {
            return Err(domain("hyperparameter dimensions inconsistent with k"));
        }
        if nalgebra::Cholesky::new(self.v_alpha_matrix()).is_none() {
            return Err(Error::MatrixDomain("prior covariance of alpha not positive definite".into()));
        }
        self.v_delta_alpha_spec().validate()?;
        if !(self.v_rho > 0.0 && self.mu_s0_var > 0.0) {
            return Err(domain("prior variances must be positive"));
        }
        for b in [self.q_alpha, self.q_rho, self.q_sigma_u, self.q_sigma_eps] {
            if !(b.a > 0.0 && b.b > 0.0) {
                return Err(domain("beta prior needs a, b > 0"));
            }
        }
        for s in [
            self.sigma2_u,
            self.sigma2_eps,
            self.v_delta_rho,
            self.v_delta_sigma_u,
            self.v_delta_sigma_eps,
            self.v_s0,
        ] {
            s.validate()?;
        }
        Ok(())
    }
}

/// Regressor values for periods beyond the sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorTrend {
    /// Repeat the last observed row.
    Constant,
    /// Add `step` per period to column `column` (experience/10 moves by 0.1).
    Trend { column: usize, step: f64 },
}

impl RegressorTrend {
    pub fn extrapolate(&self, last: &[f64], h: usize) -> Vec<f64> {
        let mut x = last.to_vec();
        if let RegressorTrend::Trend { column, step } = *self {
            if column < x.len() {
                x[column] += step * h as f64;
            }
        }
        x
    }

    /// Experience trend when k = 2, constant otherwise.
    pub fn default_for(k: usize) -> Self {
        if k == 2 {
            RegressorTrend::Trend { column: 1, step: 0.1 }
        } else {
            RegressorTrend::Constant
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M2Config {
    pub variant: M2Variant,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub hyper: M2Hyper,
    pub seed: u64,
    pub adapt_after_burnin: bool,
    pub parallel: bool,
    pub regressor_trend: RegressorTrend,
    /// One σ² per equation shared by all periods.
    pub time_invariant_variances: bool,
    /// Hold (μ_s0, v_s0) at their prior centre instead of sampling them.
    pub fixed_s0_prior: bool,
    pub stream_ids: Option<Vec<u64>>,
}

impl M2Config {
    pub fn new(variant: M2Variant, k: usize, n_draws: usize, burn_in: usize, seed: u64) -> Self {
        M2Config {
            variant,
            n_draws,
            burn_in,
            thin: 1,
            hyper: M2Hyper::table4(k),
            seed,
            adapt_after_burnin: false,
            parallel: true,
            regressor_trend: RegressorTrend::default_for(k),
            time_invariant_variances: false,
            fixed_s0_prior: false,
            stream_ids: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.n_draws == 0 {
            errs.push("n_draws must be positive".into());
        }
        if self.burn_in >= self.n_draws {
            errs.push(format!("burn_in ({}) must be smaller than n_draws ({})", self.burn_in, self.n_draws));
        }
        if self.thin == 0 {
            errs.push("thin must be at least 1".into());
        }
        if let Err(e) = self.hyper.validate() {
            errs.push(format!("{e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    pub fn n_kept(&self) -> usize {
        (self.n_draws - self.burn_in).div_ceil(self.thin)
    }
}

/// Prior covariance of s_1..s_T given s_0 ~ N(·, v_s0) and
/// s_t = ρ_i s_{t−1} + N(0, σ²_{ε,t} δ^σ_{i,ε}).
pub fn build_state_prior_cov(rho_i: f64, sigma2_eps_by_t: &[f64], delta_sigma_eps_i: f64, v_s0: f64, t: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(t, t);
    let mut prev = v_s0;
    for a in 0..t {
        prev = rho_i * rho_i * prev + sigma2_eps_by_t[a] * delta_sigma_eps_i;
        v[(a, a)] = prev;
    }
    for a in 0..t {
        let mut f = 1.0;
        for b in (a + 1)..t {
            f *= rho_i;
            let c = f * v[(a, a)];
            v[(a, b)] = c;
            v[(b, a)] = c;
        }
    }
    v
}

#[derive(Clone, Debug)]
struct Unit {
    /// Global column of the first window period.
    first: usize,
    /// y over the window, NaN where missing.
    y: Vec<f64>,
    obs: Vec<bool>,
    /// Window rows of x, row-major.
    x: Vec<f64>,
    za: bool,
    da: Vec<f64>,
    zr: bool,
    dr: f64,
    zu: bool,
    du: f64,
    ze: bool,
    de: f64,
    /// s at window positions 0..=len, position 0 being the initial state.
    s: Vec<f64>,
    rng: RngStream,
}

/// Per-sweep quantities shared by all unit updates.
struct Shared<'a> {
    p: &'a M2Params,
    k: usize,
    vda_inv: DMatrix<f64>,
    vda_ln_det: f64,
}

impl Unit {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn xrow(&self, j: usize, k: usize) -> &[f64] {
        &self.x[j * k..(j + 1) * k]
    }

    fn coef(&self, p: &M2Params) -> Vec<f64> {
        p.alpha.iter().zip(&self.da).map(|(a, d)| a + d).collect()
    }

    fn meas_ss(&self, p: &M2Params, k: usize) -> (f64, usize) {
        let c = self.coef(p);
        let (mut ss, mut n) = (0.0, 0);
        for j in 0..self.len() {
            if self.obs[j] {
                let m: f64 = self.xrow(j, k).iter().zip(&c).map(|(a, b)| a * b).sum();
                let e = self.y[j] - m - self.s[j + 1];
                ss += e * e / p.sigma2_u[self.first + j];
                n += 1;
            }
        }
        (ss, n)
    }

    fn state_ss(&self, p: &M2Params) -> f64 {
        let r = p.rho + self.dr;
        let mut ss = 0.0;
        for j in 0..self.len() {
            let e = self.s[j + 1] - r * self.s[j];
            ss += e * e / p.sigma2_eps[self.first + j];
        }
        ss
    }

    /// (z_ρ, δ_ρ), then the two variance-scale blocks.
    fn update_phase_a(&mut self, sh: &Shared, variant: M2Variant) {
        let p = sh.p;
        if variant.forced_q_coef() != Some(0.0) {
            let mut st = SlabStats::default();
            for j in 0..self.len() {
                let w = 1.0 / (p.sigma2_eps[self.first + j] * self.de);
                st.add(self.s[j], self.s[j + 1] - p.rho * self.s[j], w);
            }
            let (z, d) = blocks::update_indicator_and_deviation_normal(st, p.q_rho, p.v_delta_rho, &mut self.rng);
            self.zr = z;
            self.dr = d;
        }
        if variant.hetsk() {
            let (ss, n) = self.meas_ss(p, sh.k);
            let (z, d) = blocks::update_indicator_and_deviation_ig(ss, n, p.q_sigma_u, p.v_delta_sigma_u, &mut self.rng);
            self.zu = z;
            self.du = d;
            let ss = self.state_ss(p);
            let (z, d) =
                blocks::update_indicator_and_deviation_ig(ss, self.len(), p.q_sigma_eps, p.v_delta_sigma_eps, &mut self.rng);
            self.ze = z;
            self.de = d;
        }
    }

    /// Joint (z_α, δ_α, s_1..T) block followed by s_0 | s_1.
    fn update_phase_b(&mut self, sh: &Shared) -> Result<()> {
        let p = sh.p;
        let k = sh.k;
        let t = self.len();
        let rho_i = p.rho + self.dr;
        let eps: Vec<f64> = (0..t).map(|j| p.sigma2_eps[self.first + j]).collect();
        let vs = build_state_prior_cov(rho_i, &eps, self.de, p.v_s0, t);
        let cs = linalg::cholesky_jitter(&vs)?;
        let mut vs_inv = cs.inverse();
        linalg::symmetrize(&mut vs_inv);
        let vs_ln_det = linalg::ln_det_chol(&cs);
        let mut m = DVector::zeros(t);
        let mut f = 1.0;
        for j in 0..t {
            f *= rho_i;
            m[j] = f * p.mu_s0;
        }
        let b_prior = &vs_inv * &m;
        let prior_quad = m.dot(&b_prior);

        // State-only precision and linear term.
        let mut p0 = vs_inv;
        let mut b0 = b_prior;
        let mut ycheck = vec![0.0; t];
        let mut hinv = vec![0.0; t];
        for j in 0..t {
            if self.obs[j] {
                let xa: f64 = self.xrow(j, k).iter().zip(&p.alpha).map(|(a, b)| a * b).sum();
                ycheck[j] = self.y[j] - xa;
                hinv[j] = 1.0 / (p.sigma2_u[self.first + j] * self.du);
                p0[(j, j)] += hinv[j];
                b0[j] += hinv[j] * ycheck[j];
            }
        }

        let q = p.q_alpha;
        let want0 = q < 1.0;
        let want1 = q > 0.0;
        let branch0 = if want0 { Some(Branch::new(p0.clone(), b0.clone(), vs_ln_det, prior_quad)?) } else { None };
        let branch1 = if want1 {
            let n = k + t;
            let mut p1 = DMatrix::zeros(n, n);
            let mut b1 = DVector::zeros(n);
            p1.view_mut((0, 0), (k, k)).copy_from(&sh.vda_inv);
            p1.view_mut((k, k), (t, t)).copy_from(&p0);
            b1.rows_mut(k, t).copy_from(&b0);
            for j in 0..t {
                if self.obs[j] {
                    let x = self.xrow(j, k);
                    for a in 0..k {
                        b1[a] += hinv[j] * x[a] * ycheck[j];
                        p1[(a, k + j)] += hinv[j] * x[a];
                        p1[(k + j, a)] += hinv[j] * x[a];
                        for b in 0..k {
                            p1[(a, b)] += hinv[j] * x[a] * x[b];
                        }
                    }
                }
            }
            Some(Branch::new(p1, b1, vs_ln_det + sh.vda_ln_det, prior_quad)?)
        } else {
            None
        };
        let z = match (&branch0, &branch1) {
            (Some(b0), Some(b1)) => {
                let lk = math::logit(q) + b1.log_ml - b0.log_ml;
                crate::distributions::bernoulli(math::logistic(lk), &mut self.rng)
            }
            (None, Some(_)) => true,
            _ => false,
        };
        if z {
            let draw = branch1.unwrap().draw(&mut self.rng);
            self.za = true;
            for a in 0..k {
                self.da[a] = draw[a];
            }
            for j in 0..t {
                self.s[j + 1] = draw[k + j];
            }
        } else {
            let draw = branch0.unwrap().draw(&mut self.rng);
            self.za = false;
            self.da.iter_mut().for_each(|d| *d = 0.0);
            for j in 0..t {
                self.s[j + 1] = draw[j];
            }
        }

        // s_0 | s_1.
        let e1 = p.sigma2_eps[self.first] * self.de;
        let p00 = p.v_s0;
        if p00 > 0.0 {
            let p10 = rho_i * rho_i * p00 + e1;
            let mean = p.mu_s0 + p00 * rho_i / p10 * (self.s[1] - rho_i * p.mu_s0);
            let var = p00 - p00 * p00 * rho_i * rho_i / p10;
            self.s[0] = sample_normal(mean, math::sqrt(var.max(0.0)), &mut self.rng);
        } else {
            self.s[0] = p.mu_s0;
        }
        Ok(())
    }
}

/// Gaussian branch of the joint block: precision, linear term and the
/// part of the log marginal likelihood that differs across branches.
struct Branch {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    mean: DVector<f64>,
    log_ml: f64,
}

impl Branch {
    fn new(prec: DMatrix<f64>, lin: DVector<f64>, ln_det_prior: f64, prior_quad: f64) -> Result<Self> {
        let chol = linalg::cholesky_jitter(&prec)?;
        let mean = chol.solve(&lin);
        let log_ml = -0.5 * (ln_det_prior + linalg::ln_det_chol(&chol) + prior_quad - lin.dot(&mean));
        Ok(Branch { chol, mean, log_ml })
    }

    fn draw(self, rng: &mut RngStream) -> DVector<f64> {
        let l = self.chol.l();
        let z = DVector::from_fn(self.mean.len(), |_, _| sample_std_normal(rng));
        &self.mean + linalg::solve_upper_transpose(&l, &z)
    }
}

/// Log marginal likelihoods (up to a shared constant) of the two joint-block
/// branches for one unit; exposed for testing the indicator odds.
pub fn joint_block_log_odds(
    y: &[f64],
    x: &[f64],
    p: &M2Params,
    delta_rho: f64,
    delta_sigma_u: f64,
    delta_sigma_eps: f64,
) -> Result<f64> {
    let k = p.k();
    let t = y.len();
    let mut u = Unit {
        first: 0,
        y: y.to_vec(),
        obs: y.iter().map(|v| v.is_finite()).collect(),
        x: x.to_vec(),
        za: false,
        da: vec![0.0; k],
        zr: false,
        dr: delta_rho,
        zu: false,
        du: delta_sigma_u,
        ze: false,
        de: delta_sigma_eps,
        s: vec![0.0; t + 1],
        rng: RngStream::new(0, 0),
    };
    let vda = p.v_delta_alpha_matrix();
    let c = linalg::cholesky_jitter(&vda)?;
    let sh = Shared {
        p,
        k,
        vda_inv: c.inverse(),
        vda_ln_det: linalg::ln_det_chol(&c),
    };
    let _ = &mut u;
    let rho_i = p.rho + u.dr;
    let eps: Vec<f64> = (0..t).map(|j| p.sigma2_eps[j]).collect();
    let vs = build_state_prior_cov(rho_i, &eps, u.de, p.v_s0, t);
    let cs = linalg::cholesky_jitter(&vs)?;
    let vs_inv = cs.inverse();
    let vs_ln_det = linalg::ln_det_chol(&cs);
    let mut m = DVector::zeros(t);
    let mut f = 1.0;
    for j in 0..t {
        f *= rho_i;
        m[j] = f * p.mu_s0;
    }
    let b_prior = &vs_inv * &m;
    let prior_quad = m.dot(&b_prior);
    let mut p0 = vs_inv;
    let mut b0 = b_prior;
    let n = k + t;
    let mut p1 = DMatrix::zeros(n, n);
    let mut b1 = DVector::zeros(n);
    for j in 0..t {
        if u.obs[j] {
            let xr = &x[j * k..(j + 1) * k];
            let xa: f64 = xr.iter().zip(&p.alpha).map(|(a, b)| a * b).sum();
            let yc = y[j] - xa;
            let h = 1.0 / (p.sigma2_u[j] * u.du);
            p0[(j, j)] += h;
            b0[j] += h * yc;
            for a in 0..k {
                b1[a] += h * xr[a] * yc;
                p1[(a, k + j)] += h * xr[a];
                p1[(k + j, a)] += h * xr[a];
                for b in 0..k {
                    p1[(a, b)] += h * xr[a] * xr[b];
                }
            }
        }
    }
    let mut top = sh.vda_inv.clone();
    top += p1.view((0, 0), (k, k));
    p1.view_mut((0, 0), (k, k)).copy_from(&top);
    p1.view_mut((k, k), (t, t)).copy_from(&p0);
    b1.rows_mut(k, t).copy_from(&b0);
    let br0 = Branch::new(p0, b0, vs_ln_det, prior_quad)?;
    let br1 = Branch::new(p1, b1, vs_ln_det + sh.vda_ln_det, prior_quad)?;
    Ok(math::logit(p.q_alpha) + br1.log_ml - br0.log_ml)
}

/// Step-by-step M2 sampler; [`run_m2`] drives it for a full chain.
#[derive(Clone, Debug)]
pub struct M2Sampler {
    variant: M2Variant,
    hyper: M2Hyper,
    params: M2Params,
    units: Vec<Unit>,
    n_periods: usize,
    k: usize,
    rng: RngStream,
    rwmh_u: RwmhAdaptState,
    rwmh_e: RwmhAdaptState,
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    parallel: bool,
    pooled: bool,
    fixed_s0_prior: bool,
}

impl M2Sampler {
    pub fn new(data: &PanelData, config: &M2Config) -> Result<Self> {
        config.validate()?;
        let n = data.n_units();
        let k = data.k;
        if n == 0 {
            return Err(Error::EmptySample("no units".into()));
        }
        if k != config.hyper.k() {
            return Err(Error::Config(format!("data has k = {k}, prior has k = {}", config.hyper.k())));
        }
        let stream_ids: Vec<u64> = match &config.stream_ids {
            Some(ids) if ids.len() == n => ids.clone(),
            Some(_) => return Err(Error::Config("stream_ids length must equal the number of units".into())),
            None => (0..n as u64).collect(),
        };
        let h = &config.hyper;
        let variant = config.variant;
        let hip = variant == M2Variant::Hip;
        let mut units = Vec::with_capacity(n);
        for i in 0..n {
            let (f, l) = data
                .span(i)
                .ok_or_else(|| Error::InsufficientData(format!("unit {} has no observations", data.unit_ids[i])))?;
            let y: Vec<f64> = (f..=l).map(|t| if data.present(i, t) { data.y_at(i, t) } else { f64::NAN }).collect();
            let obs: Vec<bool> = (f..=l).map(|t| data.present(i, t)).collect();
            let mut x = Vec::with_capacity((l - f + 1) * k);
            for t in f..=l {
                if data.present(i, t) {
                    x.extend_from_slice(data.x_at(i, t));
                } else {
                    x.extend(core::iter::repeat(0.0).take(k));
                }
            }
            // States start at the observation minus the prior-mean regression fit.
            let mut s = vec![0.0; l - f + 2];
            let mut last = 0.0;
            for j in 0..y.len() {
                if obs[j] {
                    let xa: f64 = x[j * k..(j + 1) * k].iter().zip(&h.mu_alpha).map(|(a, b)| a * b).sum();
                    last = y[j] - xa;
                }
                s[j + 1] = last;
            }
            s[0] = s[1];
            units.push(Unit {
                first: f,
                y,
                obs,
                x,
                za: hip,
                da: vec![0.0; k],
                zr: hip,
                dr: 0.0,
                zu: false,
                du: 1.0,
                ze: false,
                de: 1.0,
                s,
                rng: RngStream::new(config.seed, stream_ids[i].wrapping_add(1)),
            });
        }
        let t = data.n_periods();
        let qc = variant.forced_q_coef();
        let qs = if variant.hetsk() { None } else { Some(0.0) };
        let iw_mean = h
            .v_delta_alpha_spec()
            .mean()
            .unwrap_or_else(|| h.v_delta_alpha_spec().scale.clone());
        let ig_mean = |s: InverseGammaSpec| s.mean().unwrap_or(s.tau / s.nu);
        let params = M2Params {
            alpha: h.mu_alpha.clone(),
            rho: h.mu_rho,
            sigma2_u: vec![ig_mean(h.sigma2_u); t],
            sigma2_eps: vec![ig_mean(h.sigma2_eps); t],
            q_alpha: qc.unwrap_or(h.q_alpha.mean()),
            q_rho: qc.unwrap_or(h.q_rho.mean()),
            q_sigma_u: qs.unwrap_or(h.q_sigma_u.mean()),
            q_sigma_eps: qs.unwrap_or(h.q_sigma_eps.mean()),
            v_delta_alpha: iw_mean.transpose().iter().cloned().collect(),
            v_delta_rho: ig_mean(h.v_delta_rho),
            v_delta_sigma_u: ig_mean(h.v_delta_sigma_u),
            v_delta_sigma_eps: ig_mean(h.v_delta_sigma_eps),
            mu_s0: h.mu_s0_mean,
            v_s0: ig_mean(h.v_s0),
        };
        Ok(M2Sampler {
            variant,
            hyper: h.clone(),
            params,
            units,
            n_periods: t,
            k,
            rng: RngStream::new(config.seed, 0),
            rwmh_u: RwmhAdaptState::default(),
            rwmh_e: RwmhAdaptState::default(),
            parallel: config.parallel,
            pooled: config.time_invariant_variances,
            fixed_s0_prior: config.fixed_s0_prior,
        })
    }

    pub fn params(&self) -> &M2Params {
        &self.params
    }

    pub fn set_params(&mut self, p: M2Params) {
        self.params = p;
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn rwmh_states_mut(&mut self) -> (&mut RwmhAdaptState, &mut RwmhAdaptState) {
        (&mut self.rwmh_u, &mut self.rwmh_e)
    }

    /// Unit state; `states[i]` covers the unit window plus its initial state.
    pub fn unit_state(&self) -> M2UnitTruth {
        let u = &self.units;
        M2UnitTruth {
            z_alpha: u.iter().map(|u| u.za).collect(),
            delta_alpha: u.iter().map(|u| u.da.clone()).collect(),
            z_rho: u.iter().map(|u| u.zr).collect(),
            delta_rho: u.iter().map(|u| u.dr).collect(),
            z_sigma_u: u.iter().map(|u| u.zu).collect(),
            delta_sigma_u: u.iter().map(|u| u.du).collect(),
            z_sigma_eps: u.iter().map(|u| u.ze).collect(),
            delta_sigma_eps: u.iter().map(|u| u.de).collect(),
            states: u.iter().map(|u| u.s.clone()).collect(),
        }
    }

    pub fn set_unit_state(&mut self, s: &M2UnitTruth) {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.za = s.z_alpha[i];
            u.da = s.delta_alpha[i].clone();
            u.zr = s.z_rho[i];
            u.dr = s.delta_rho[i];
            u.zu = s.z_sigma_u[i];
            u.du = s.delta_sigma_u[i];
            u.ze = s.z_sigma_eps[i];
            u.de = s.delta_sigma_eps[i];
            u.s = s.states[i].clone();
        }
    }

    /// Replace the observed y values of unit `i` (window order).
    pub fn set_observations(&mut self, i: usize, y: &[f64]) {
        let u = &mut self.units[i];
        for (j, &v) in y.iter().enumerate() {
            if u.obs[j] {
                u.y[j] = v;
            }
        }
    }

    /// Unit window: first global column and regressor rows.
    pub fn unit_design(&self, i: usize) -> (usize, &[f64]) {
        (self.units[i].first, &self.units[i].x)
    }

    fn shared(p: &M2Params) -> Result<Shared<'_>> {
        let k = p.k();
        let (vda_inv, vda_ln_det) = if p.q_alpha > 0.0 {
            let c = linalg::cholesky_jitter(&p.v_delta_alpha_matrix())?;
            let mut inv = c.inverse();
            linalg::symmetrize(&mut inv);
            (inv, linalg::ln_det_chol(&c))
        } else {
            (DMatrix::zeros(k, k), 0.0)
        };
        Ok(Shared {
            p,
            k,
            vda_inv,
            vda_ln_det,
        })
    }

    pub fn sweep(&mut self) -> Result<()> {
        let h = self.hyper.clone();
        let v = self.variant;
        let k = self.k;
        let n = self.units.len();

        // α
        let mut acc = RegressionAccumulator::new(k);
        for u in &self.units {
            for j in 0..u.len() {
                if u.obs[j] {
                    let x = u.xrow(j, k);
                    let xd: f64 = x.iter().zip(&u.da).map(|(a, b)| a * b).sum();
                    let w = 1.0 / (self.params.sigma2_u[u.first + j] * u.du);
                    acc.add(x, u.y[j] - xd - u.s[j + 1], w);
                }
            }
        }
        let a = blocks::update_common_regression(
            &DVector::from_vec(h.mu_alpha.clone()),
            &h.v_alpha_matrix(),
            &acc,
            &mut self.rng,
        )?;
        self.params.alpha = a.iter().cloned().collect();

        // ρ
        let mut acc = RegressionAccumulator::new(1);
        for u in &self.units {
            for j in 0..u.len() {
                let w = 1.0 / (self.params.sigma2_eps[u.first + j] * u.de);
                acc.add(&[u.s[j]], u.s[j + 1] - u.dr * u.s[j], w);
            }
        }
        let r = blocks::update_common_regression(
            &DVector::from_element(1, h.mu_rho),
            &DMatrix::from_element(1, 1, h.v_rho),
            &acc,
            &mut self.rng,
        )?;
        self.params.rho = r[0];

        // q's
        let count = |f: fn(&Unit) -> bool| self.units.iter().filter(|u| f(u)).count();
        let (ca, cr, cu, ce) = (count(|u| u.za), count(|u| u.zr), count(|u| u.zu), count(|u| u.ze));
        if v.forced_q_coef().is_none() {
            self.params.q_alpha = blocks::update_q_count(ca, n, h.q_alpha.a, h.q_alpha.b, &mut self.rng)?;
            self.params.q_rho = blocks::update_q_count(cr, n, h.q_rho.a, h.q_rho.b, &mut self.rng)?;
        }
        if v.hetsk() {
            self.params.q_sigma_u = blocks::update_q_count(cu, n, h.q_sigma_u.a, h.q_sigma_u.b, &mut self.rng)?;
            self.params.q_sigma_eps = blocks::update_q_count(ce, n, h.q_sigma_eps.a, h.q_sigma_eps.b, &mut self.rng)?;
        }

        // v_δα, v_δρ
        if v.forced_q_coef() != Some(0.0) {
            let z: Vec<bool> = self.units.iter().map(|u| u.za).collect();
            let d: Vec<DVector<f64>> = self.units.iter().map(|u| DVector::from_vec(u.da.clone())).collect();
            let m = blocks::update_v_delta_alpha_iw(&z, &d, &h.v_delta_alpha_spec(), &mut self.rng)?;
            self.params.v_delta_alpha = m.transpose().iter().cloned().collect();
            let (mut nr, mut sr) = (0.0, 0.0);
            for u in self.units.iter().filter(|u| u.zr) {
                nr += 1.0;
                sr += u.dr * u.dr;
            }
            self.params.v_delta_rho = h.v_delta_rho.posterior(nr, sr).sample(&mut self.rng);
        }

        // v_δσ's
        if v.hetsk() {
            let su = DeviatorScaleStats::from_deviations(
                &self.units.iter().filter(|u| u.zu).map(|u| u.du).collect::<Vec<_>>(),
            );
            let se = DeviatorScaleStats::from_deviations(
                &self.units.iter().filter(|u| u.ze).map(|u| u.de).collect::<Vec<_>>(),
            );
            self.params.v_delta_sigma_u = blocks::update_v_delta_sigma_rwmh(
                self.params.v_delta_sigma_u,
                su,
                &h.v_delta_sigma_u,
                &mut self.rwmh_u,
                &mut self.rng,
            )?;
            self.params.v_delta_sigma_eps = blocks::update_v_delta_sigma_rwmh(
                self.params.v_delta_sigma_eps,
                se,
                &h.v_delta_sigma_eps,
                &mut self.rwmh_e,
                &mut self.rng,
            )?;
        }

        // (z_ρ, δ_ρ), (z_σu, δ_σu), (z_σε, δ_σε)
        self.unit_phase(false)?;

        // μ_s0, v_s0
        if !self.fixed_s0_prior {
            let s0: Vec<f64> = self.units.iter().map(|u| u.s[0]).collect();
            let (mu, vs0) = update_mu_v_s0(&s0, self.params.v_s0, &h, &mut self.rng);
            self.params.mu_s0 = mu;
            self.params.v_s0 = vs0;
        }

        // joint (z_α, δ_α, states) and s_0
        self.unit_phase(true)?;

        // σ²_{u,t}, σ²_{ε,t}
        self.update_time_variances(&h);
        Ok(())
    }

    fn unit_phase(&mut self, joint: bool) -> Result<()> {
        let params = self.params.clone();
        let sh = Self::shared(&params)?;
        let v = self.variant;
        let run = |u: &mut Unit| -> Result<()> {
            if joint {
                u.update_phase_b(&sh)
            } else {
                u.update_phase_a(&sh, v);
                Ok(())
            }
        };
        #[cfg(feature = "parallel")]
        if self.parallel {
            use rayon::prelude::*;
            return self.units.par_iter_mut().try_for_each(run);
        }
        self.units.iter_mut().try_for_each(run)
    }

    fn update_time_variances(&mut self, h: &M2Hyper) {
        let t = self.n_periods;
        let k = self.k;
        let mut nu_u = vec![0.0; t];
        let mut ss_u = vec![0.0; t];
        let mut nu_e = vec![0.0; t];
        let mut ss_e = vec![0.0; t];
        for u in &self.units {
            let c = u.coef(&self.params);
            let r = self.params.rho + u.dr;
            for j in 0..u.len() {
                let g = u.first + j;
                if u.obs[j] {
                    let m: f64 = u.xrow(j, k).iter().zip(&c).map(|(a, b)| a * b).sum();
                    let e = u.y[j] - m - u.s[j + 1];
                    nu_u[g] += 1.0;
                    ss_u[g] += e * e / u.du;
                }
                let e = u.s[j + 1] - r * u.s[j];
                nu_e[g] += 1.0;
                ss_e[g] += e * e / u.de;
            }
        }
        if self.pooled {
            let su = h.sigma2_u.posterior(nu_u.iter().sum(), ss_u.iter().sum()).sample(&mut self.rng);
            let se = h.sigma2_eps.posterior(nu_e.iter().sum(), ss_e.iter().sum()).sample(&mut self.rng);
            self.params.sigma2_u.iter_mut().for_each(|v| *v = su);
            self.params.sigma2_eps.iter_mut().for_each(|v| *v = se);
        } else {
            for g in 0..t {
                self.params.sigma2_u[g] = h.sigma2_u.posterior(nu_u[g], ss_u[g]).sample(&mut self.rng);
                self.params.sigma2_eps[g] = h.sigma2_eps.posterior(nu_e[g], ss_e[g]).sample(&mut self.rng);
            }
        }
    }

    fn common_names(&self) -> Vec<String> {
        let v = self.variant;
        let k = self.k;
        let t = self.n_periods;
        let mut names: Vec<String> = (0..k).map(|j| format!("alpha_{j}")).collect();
        names.push("rho".into());
        names.extend((0..t).map(|g| format!("sigma2_u_{g}")));
        names.extend((0..t).map(|g| format!("sigma2_eps_{g}")));
        if v.forced_q_coef().is_none() {
            names.push("q_alpha".into());
            names.push("q_rho".into());
        }
        if v.hetsk() {
            names.push("q_sigma_u".into());
            names.push("q_sigma_eps".into());
        }
        if v.forced_q_coef() != Some(0.0) {
            for a in 0..k {
                for b in 0..=a {
                    names.push(format!("v_delta_alpha_{a}{b}"));
                }
            }
            names.push("v_delta_rho".into());
        }
        if v.hetsk() {
            names.push("v_delta_sigma_u".into());
            names.push("v_delta_sigma_eps".into());
        }
        if !self.fixed_s0_prior {
            names.push("mu_s0".into());
            names.push("v_s0".into());
        }
        names
    }

    fn common_values(&self) -> Vec<f64> {
        let v = self.variant;
        let p = &self.params;
        let k = self.k;
        let mut out = p.alpha.clone();
        out.push(p.rho);
        out.extend_from_slice(&p.sigma2_u);
        out.extend_from_slice(&p.sigma2_eps);
        if v.forced_q_coef().is_none() {
            out.push(p.q_alpha);
            out.push(p.q_rho);
        }
        if v.hetsk() {
            out.push(p.q_sigma_u);
            out.push(p.q_sigma_eps);
        }
        if v.forced_q_coef() != Some(0.0) {
            for a in 0..k {
                for b in 0..=a {
                    out.push(p.v_delta_alpha[a * k + b]);
                }
            }
            out.push(p.v_delta_rho);
        }
        if v.hetsk() {
            out.push(p.v_delta_sigma_u);
            out.push(p.v_delta_sigma_eps);
        }
        if !self.fixed_s0_prior {
            out.push(p.mu_s0);
            out.push(p.v_s0);
        }
        out
    }
}

/// Conjugate draws of μ_s0 | s_0, v_s0 and then v_s0 | s_0, μ_s0.
pub fn update_mu_v_s0<R: rand::Rng + ?Sized>(s0: &[f64], v_s0: f64, h: &M2Hyper, rng: &mut R) -> (f64, f64) {
    let n = s0.len() as f64;
    let sum: f64 = s0.iter().sum();
    let var = 1.0 / (1.0 / h.mu_s0_var + n / v_s0);
    let mean = var * (h.mu_s0_mean / h.mu_s0_var + sum / v_s0);
    let mu = sample_normal(mean, math::sqrt(var), rng);
    let ss: f64 = s0.iter().map(|s| (s - mu) * (s - mu)).sum();
    (mu, h.v_s0.posterior(n, ss).sample(rng))
}

/// Draw s_0 given s_1: prior N(μ_s0, v_s0), transition s_1 = φ s_0 + N(0, e1).
pub fn update_s0<R: rand::Rng + ?Sized>(s1: f64, phi: f64, mu_s0: f64, v_s0: f64, e1: f64, rng: &mut R) -> f64 {
    if !(v_s0 > 0.0) {
        return mu_s0;
    }
    let (mean, var) = s0_posterior(s1, phi, mu_s0, v_s0, e1);
    sample_normal(mean, math::sqrt(var), rng)
}

pub fn s0_posterior(s1: f64, phi: f64, mu_s0: f64, v_s0: f64, e1: f64) -> (f64, f64) {
    let p10 = phi * phi * v_s0 + e1;
    (
        mu_s0 + v_s0 * phi / p10 * (s1 - phi * mu_s0),
        v_s0 - v_s0 * v_s0 * phi * phi / p10,
    )
}

/// Periods covered by the stored state group: the initial state plus one per column.
pub fn state_width(n_periods: usize) -> usize {
    n_periods + 1
}

pub fn run_m2(data: &PanelData, config: &M2Config) -> Result<ChainOutput> {
    let mut s = M2Sampler::new(data, config)?;
    let k = s.k;
    let v = config.variant;
    let width = state_width(s.n_periods);
    let names = s.common_names();
    let mut out = ChainBuilder::new(s.n_units());
    for n in &names {
        out.add_common(n);
    }
    let coef = v.forced_q_coef() != Some(0.0);
    if coef {
        out.add_group("z_alpha", 1);
        out.add_group("delta_alpha", k);
        out.add_group("z_rho", 1);
        out.add_group("delta_rho", 1);
    }
    if v.hetsk() {
        for g in ["z_sigma_u", "delta_sigma_u", "z_sigma_eps", "delta_sigma_eps"] {
            out.add_group(g, 1);
        }
    }
    out.add_group("states", width);
    out.reserve(config.n_kept());
    let adapt0 = config.burn_in > 0 || config.adapt_after_burnin;
    s.rwmh_u.adapting = adapt0;
    s.rwmh_e.adapting = adapt0;
    let b = |z: bool| if z { 1.0 } else { 0.0 };
    for sweep in 0..config.n_draws {
        if sweep == config.burn_in {
            for st in [&mut s.rwmh_u, &mut s.rwmh_e] {
                st.adapting = config.adapt_after_burnin;
                st.reset_counts();
            }
        }
        s.sweep()?;
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            if coef {
                out.push_unit("z_alpha", s.units.iter().map(|u| b(u.za)));
                out.push_unit("delta_alpha", s.units.iter().flat_map(|u| u.da.clone()));
                out.push_unit("z_rho", s.units.iter().map(|u| b(u.zr)));
                out.push_unit("delta_rho", s.units.iter().map(|u| u.dr));
            }
            if v.hetsk() {
                out.push_unit("z_sigma_u", s.units.iter().map(|u| b(u.zu)));
                out.push_unit("delta_sigma_u", s.units.iter().map(|u| u.du));
                out.push_unit("z_sigma_eps", s.units.iter().map(|u| b(u.ze)));
                out.push_unit("delta_sigma_eps", s.units.iter().map(|u| u.de));
            }
            let mut states = Vec::with_capacity(s.n_units() * width);
            for u in &s.units {
                let mut row = vec![f64::NAN; width];
                row[u.first..u.first + u.s.len()].copy_from_slice(&u.s);
                states.extend(row);
            }
            out.push_unit("states", states);
            out.push_common(&s.common_values());
        }
    }
    if v.hetsk() {
        out.set_rwmh(vec![
            RwmhDiagnostics {
                name: "v_delta_sigma_u".into(),
                accepted: s.rwmh_u.accepted,
                proposals: s.rwmh_u.proposals,
                final_log_step: s.rwmh_u.log_step,
            },
            RwmhDiagnostics {
                name: "v_delta_sigma_eps".into(),
                accepted: s.rwmh_e.accepted,
                proposals: s.rwmh_e.proposals,
                final_log_step: s.rwmh_e.log_step,
            },
        ]);
    }
    Ok(out.finish())
}

/// Fixed priors of the single-unit model used for individual-information forecasts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualPrior {
    /// Prior mean and row-major covariance of the unit's regression coefficients.
    pub coef_mean: Vec<f64>,
    pub coef_cov: Vec<f64>,
    pub rho_mean: f64,
    pub rho_var: f64,
    pub sigma2_u: InverseGammaSpec,
    pub sigma2_eps: InverseGammaSpec,
    pub s0_mean: f64,
    pub s0_var: f64,
}

impl IndividualPrior {
    pub fn default_for(k: usize) -> Self {
        let mut cov = vec![0.0; k * k];
        for j in 0..k {
            cov[j * k + j] = if j == 0 { 0.24 } else { 0.05 };
        }
        IndividualPrior {
            coef_mean: vec![0.0; k],
            coef_cov: cov,
            rho_mean: 0.8,
            rho_var: 0.25,
            sigma2_u: InverseGammaSpec { nu: 4.02, tau: 0.101 },
            sigma2_eps: InverseGammaSpec { nu: 4.02, tau: 0.101 },
            s0_mean: 0.0,
            s0_var: 0.05,
        }
    }
}

/// Single-unit state-space model with fixed priors and time-invariant
/// variances. The chain uses the M2 layout: `alpha_*` are the unit's own
/// coefficients and `rho` its persistence.
pub fn run_m2_individual(
    unit: &PanelData,
    prior: &IndividualPrior,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ChainOutput> {
    if unit.n_units() != 1 {
        return Err(Error::Config("individual model takes exactly one unit".into()));
    }
    let k = unit.k;
    if unit.n_observations() < 3 {
        return Err(Error::InsufficientData("individual model needs T >= 3".into()));
    }
    if prior.coef_mean.len() != k || prior.coef_cov.len() != k * k {
        return Err(Error::Config("individual prior dimensions do not match k".into()));
    }
    let mut hyper = M2Hyper::table4(k);
    hyper.mu_alpha = prior.coef_mean.clone();
    hyper.v_alpha = prior.coef_cov.clone();
    hyper.mu_rho = prior.rho_mean;
    hyper.v_rho = prior.rho_var;
    hyper.sigma2_u = prior.sigma2_u;
    hyper.sigma2_eps = prior.sigma2_eps;
    hyper.mu_s0_mean = prior.s0_mean;
    // v_s0 enters only through its starting value, held fixed.
    hyper.v_s0 = InverseGammaSpec {
        nu: 6.0,
        tau: 4.0 * prior.s0_var,
    };
    let config = M2Config {
        variant: M2Variant::Rip,
        n_draws,
        burn_in,
        thin: 1,
        hyper,
        seed,
        adapt_after_burnin: false,
        parallel: false,
        regressor_trend: RegressorTrend::default_for(k),
        time_invariant_variances: true,
        fixed_s0_prior: true,
        stream_ids: None,
    };
    // Homoskedastic across units is automatic with a single unit; the rip
    // variant keeps δ at zero, so `alpha` and `rho` are the unit's own.
    let mut s = M2Sampler::new(unit, &config)?;
    s.variant = M2Variant::Rip;
    s.params.v_s0 = prior.s0_var;
    s.params.q_sigma_u = 0.0;
    s.params.q_sigma_eps = 0.0;
    let names = s.common_names();
    let width = state_width(s.n_periods);
    let mut out = ChainBuilder::new(1);
    for n in &names {
        out.add_common(n);
    }
    out.add_group("states", width);
    for sweep in 0..n_draws {
        s.sweep_individual()?;
        if sweep >= burn_in {
            let u = &s.units[0];
            let mut row = vec![f64::NAN; width];
            row[u.first..u.first + u.s.len()].copy_from_slice(&u.s);
            out.push_unit("states", row);
            out.push_common(&s.common_values());
        }
    }
    Ok(out.finish())
}

impl M2Sampler {
    /// Sweep of the single-unit model: no deviations, no δ^σ, fixed s_0 prior.
    fn sweep_individual(&mut self) -> Result<()> {
        let h = self.hyper.clone();
        let k = self.k;
        let mut acc = RegressionAccumulator::new(k);
        for u in &self.units {
            for j in 0..u.len() {
                if u.obs[j] {
                    let w = 1.0 / self.params.sigma2_u[u.first + j];
                    acc.add(u.xrow(j, k), u.y[j] - u.s[j + 1], w);
                }
            }
        }
        let a = blocks::update_common_regression(
            &DVector::from_vec(h.mu_alpha.clone()),
            &h.v_alpha_matrix(),
            &acc,
            &mut self.rng,
        )?;
        self.params.alpha = a.iter().cloned().collect();
        let mut acc = RegressionAccumulator::new(1);
        for u in &self.units {
            for j in 0..u.len() {
                let w = 1.0 / self.params.sigma2_eps[u.first + j];
                acc.add(&[u.s[j]], u.s[j + 1], w);
            }
        }
        let r = blocks::update_common_regression(
            &DVector::from_element(1, h.mu_rho),
            &DMatrix::from_element(1, 1, h.v_rho),
            &acc,
            &mut self.rng,
        )?;
        self.params.rho = r[0];
        self.params.q_alpha = 0.0;
        self.unit_phase(true)?;
        self.update_time_variances(&h);
        Ok(())
    }
}

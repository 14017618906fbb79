//! Gibbs samplers for the dynamic panel model
//! y_it = (α + δ_i^α) + (ρ + δ_i^ρ) y_{i,t−1} + σ (δ_i^σ)^{1/2} u_it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{
    self, DeviatorScaleStats, RegressionAccumulator, RwmhAdaptState, SlabStats,
};
use crate::chain::{self, ChainBuilder, ChainOutput, RwmhDiagnostics};
use crate::distributions::{sample_std_normal, InverseGammaSpec};
use crate::error::{domain, Error, Result};
use crate::math;
use crate::panel::{M1UnitTruth, PanelData};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum M1Variant {
    SsHomosk,
    SsHetsk,
    Homogeneous,
    FullHeteroHomosk,
    FullHeteroHetsk,
}

impl M1Variant {
    pub const ALL: [M1Variant; 5] = [
        M1Variant::SsHomosk,
        M1Variant::SsHetsk,
        M1Variant::Homogeneous,
        M1Variant::FullHeteroHomosk,
        M1Variant::FullHeteroHetsk,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            M1Variant::SsHomosk => "ss_homosk",
            M1Variant::SsHetsk => "ss_hetsk",
            M1Variant::Homogeneous => "homogeneous",
            M1Variant::FullHeteroHomosk => "full_hetero_homosk",
            M1Variant::FullHeteroHetsk => "full_hetero_hetsk",
        }
    }

    pub fn parse(s: &str) -> Option<M1Variant> {
        Self::ALL.iter().copied().find(|v| v.name() == s)
    }

    fn spike_slab(&self) -> bool {
        matches!(self, M1Variant::SsHomosk | M1Variant::SsHetsk)
    }

    fn full_hetero(&self) -> bool {
        matches!(self, M1Variant::FullHeteroHomosk | M1Variant::FullHeteroHetsk)
    }

    fn hetsk(&self) -> bool {
        matches!(self, M1Variant::SsHetsk | M1Variant::FullHeteroHetsk)
    }

    /// Forced slab probabilities (α/ρ, σ); `None` when sampled.
    fn forced_q(&self) -> (Option<f64>, Option<f64>) {
        match self {
            M1Variant::SsHomosk => (None, Some(0.0)),
            M1Variant::SsHetsk => (None, None),
            M1Variant::Homogeneous => (Some(0.0), Some(0.0)),
            M1Variant::FullHeteroHomosk => (Some(1.0), Some(0.0)),
            M1Variant::FullHeteroHetsk => (Some(1.0), Some(1.0)),
        }
    }
}

/// Common parameters θ of M1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M1Params {
    pub alpha: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub q_alpha: f64,
    pub q_rho: f64,
    pub q_sigma: f64,
    pub v_delta_alpha: f64,
    pub v_delta_rho: f64,
    pub v_delta_sigma: f64,
}

impl M1Params {
    /// Monte Carlo design values with q = 0.
    pub fn table1() -> Self {
        M1Params {
            alpha: 1.0,
            rho: 0.6,
            sigma2: 0.8,
            q_alpha: 0.0,
            q_rho: 0.0,
            q_sigma: 0.0,
            v_delta_alpha: 0.05,
            v_delta_rho: 0.09,
            v_delta_sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("q_alpha", self.q_alpha), ("q_rho", self.q_rho), ("q_sigma", self.q_sigma)] {
            if !(0.0..=1.0).contains(&q) {
                return Err(domain(format!("{name} = {q} outside [0, 1]")));
            }
        }
        if !(self.sigma2 >= 0.0) {
            return Err(domain("sigma2 must be non-negative"));
        }
        for (name, v) in [
            ("v_delta_alpha", self.v_delta_alpha),
            ("v_delta_rho", self.v_delta_rho),
            ("v_delta_sigma", self.v_delta_sigma),
        ] {
            if !(v > 0.0) {
                return Err(domain(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub a: f64,
    pub b: f64,
}

impl BetaSpec {
    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Prior hyperparameters λ of M1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M1Hyper {
    pub mu_alpha: f64,
    pub v_alpha: f64,
    pub mu_rho: f64,
    pub v_rho: f64,
    pub sigma2: InverseGammaSpec,
    pub q_alpha: BetaSpec,
    pub q_rho: BetaSpec,
    pub q_sigma: BetaSpec,
    pub v_delta_alpha: InverseGammaSpec,
    pub v_delta_rho: InverseGammaSpec,
    pub v_delta_sigma: InverseGammaSpec,
}

impl Default for M1Hyper {
    fn default() -> Self {
        M1Hyper {
            mu_alpha: 0.0,
            v_alpha: 1.0,
            mu_rho: 0.0,
            v_rho: 0.25,
            sigma2: InverseGammaSpec { nu: 12.0, tau: 10.0 },
            q_alpha: BetaSpec { a: 1.0, b: 1.0 },
            q_rho: BetaSpec { a: 1.0, b: 1.0 },
            q_sigma: BetaSpec { a: 1.0, b: 1.0 },
            v_delta_alpha: InverseGammaSpec { nu: 6.0, tau: 4.0 },
            v_delta_rho: InverseGammaSpec { nu: 6.0, tau: 2.0 },
            v_delta_sigma: InverseGammaSpec { nu: 12.0, tau: 10.0 },
        }
    }
}

impl M1Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_alpha > 0.0 && self.v_rho > 0.0) {
            return Err(domain("prior variances of alpha and rho must be positive"));
        }
        for b in [self.q_alpha, self.q_rho, self.q_sigma] {
            if !(b.a > 0.0 && b.b > 0.0) {
                return Err(domain("beta prior needs a, b > 0"));
            }
        }
        self.sigma2.validate()?;
        self.v_delta_alpha.validate()?;
        self.v_delta_rho.validate()?;
        self.v_delta_sigma.validate()
    }

    /// Starting values: prior means, with the RWMH start at τ/(ν − 2).
    pub fn prior_means(&self, variant: M1Variant) -> M1Params {
        let (qab, qs) = variant.forced_q();
        let ig_mean = |s: InverseGammaSpec| s.mean().unwrap_or(s.tau / s.nu);
        M1Params {
            alpha: self.mu_alpha,
            rho: self.mu_rho,
            sigma2: ig_mean(self.sigma2),
            q_alpha: qab.unwrap_or(self.q_alpha.mean()),
            q_rho: qab.unwrap_or(self.q_rho.mean()),
            q_sigma: qs.unwrap_or(self.q_sigma.mean()),
            v_delta_alpha: ig_mean(self.v_delta_alpha),
            v_delta_rho: ig_mean(self.v_delta_rho),
            v_delta_sigma: ig_mean(self.v_delta_sigma),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M1Config {
    pub variant: M1Variant,
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub hyper: M1Hyper,
    pub seed: u64,
    /// Keep adapting the RWMH step after burn-in.
    pub adapt_after_burnin: bool,
    /// Visit the α/ρ/σ unit sub-blocks in random order.
    pub randomize_unit_blocks: bool,
    /// Run unit blocks on the rayon pool when the `parallel` feature is on.
    pub parallel: bool,
    /// Hold θ fixed at these values and sample only (z, δ).
    pub fixed_common: Option<M1Params>,
    /// Stream id per unit; defaults to the unit index.
    pub stream_ids: Option<Vec<u64>>,
}

impl M1Config {
    pub fn new(variant: M1Variant, n_draws: usize, burn_in: usize, seed: u64) -> Self {
        M1Config {
            variant,
            n_draws,
            burn_in,
            thin: 1,
            hyper: M1Hyper::default(),
            seed,
            adapt_after_burnin: false,
            randomize_unit_blocks: false,
            parallel: false,
            fixed_common: None,
            stream_ids: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_draws == 0 {
            errs.push("n_draws must be positive".into());
        }
        if self.burn_in >= self.n_draws {
            errs.push(format!("burn_in ({}) must be smaller than n_draws ({})", self.burn_in, self.n_draws));
        }
        if self.thin == 0 {
            errs.push(alloc::string::String::from("thin must be at least 1"));
        }
        if let Err(e) = self.hyper.validate() {
            errs.push(format!("{e}"));
        }
        if let Some(p) = &self.fixed_common {
            if let Err(e) = p.validate() {
                errs.push(format!("{e}"));
            }
            let (qab, qs) = self.variant.forced_q();
            if qab.is_some_and(|q| q != p.q_alpha || q != p.q_rho) || qs.is_some_and(|q| q != p.q_sigma) {
                errs.push(format!("fixed slab probabilities contradict variant {}", self.variant.name()));
            }
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

#[derive(Clone, Debug)]
struct Unit {
    /// y_{i0}, …, y_{iT_i}.
    y: Vec<f64>,
    za: bool,
    da: f64,
    zr: bool,
    dr: f64,
    zs: bool,
    ds: f64,
    rng: RngStream,
}

impl Unit {
    fn t(&self) -> usize {
        self.y.len() - 1
    }

    fn ssr(&self, a: f64, r: f64) -> f64 {
        let mut s = 0.0;
        for t in 1..self.y.len() {
            let e = self.y[t] - a - r * self.y[t - 1];
            s += e * e;
        }
        s
    }

    fn update(&mut self, p: &M1Params, variant: M1Variant, randomize: bool) -> Result<()> {
        let w = 1.0 / (p.sigma2 * self.ds);
        if variant.full_hetero() {
            self.update_joint(p, w)?;
        } else if variant != M1Variant::Homogeneous {
            let swap = randomize && self.rng.random::<bool>();
            if swap {
                self.update_rho(p, w);
                self.update_alpha(p, w);
            } else {
                self.update_alpha(p, w);
                self.update_rho(p, w);
            }
        }
        if variant.hetsk() {
            let ss = self.ssr(p.alpha + self.da, p.rho + self.dr) / p.sigma2;
            let (z, d) = blocks::update_indicator_and_deviation_ig(ss, self.t(), p.q_sigma, p.v_delta_sigma, &mut self.rng);
            self.zs = z;
            self.ds = d;
        }
        Ok(())
    }

    fn update_alpha(&mut self, p: &M1Params, w: f64) {
        let r = p.rho + self.dr;
        let mut st = SlabStats::default();
        for t in 1..self.y.len() {
            st.add(1.0, self.y[t] - p.alpha - r * self.y[t - 1], w);
        }
        let (z, d) = blocks::update_indicator_and_deviation_normal(st, p.q_alpha, p.v_delta_alpha, &mut self.rng);
        self.za = z;
        self.da = d;
    }

    fn update_rho(&mut self, p: &M1Params, w: f64) {
        let a = p.alpha + self.da;
        let mut st = SlabStats::default();
        for t in 1..self.y.len() {
            st.add(self.y[t - 1], self.y[t] - a - p.rho * self.y[t - 1], w);
        }
        let (z, d) = blocks::update_indicator_and_deviation_normal(st, p.q_rho, p.v_delta_rho, &mut self.rng);
        self.zr = z;
        self.dr = d;
    }

    /// Bivariate Normal draw of (δ^α, δ^ρ) with z ≡ 1.
    fn update_joint(&mut self, p: &M1Params, w: f64) -> Result<()> {
        let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 1..self.y.len() {
            let x = self.y[t - 1];
            let r = self.y[t] - p.alpha - p.rho * x;
            s11 += 1.0;
            s12 += x;
            s22 += x * x;
            b1 += r;
            b2 += x * r;
        }
        let p11 = 1.0 / p.v_delta_alpha + w * s11;
        let p12 = w * s12;
        let p22 = 1.0 / p.v_delta_rho + w * s22;
        let (b1, b2) = (w * b1, w * b2);
        // Cholesky of [[p11, p12], [p12, p22]].
        let l11 = math::sqrt(p11);
        let l21 = p12 / l11;
        let d = p22 - l21 * l21;
        if !(d > 0.0) {
            return Err(Error::Decomposition("unit precision not positive definite".into()));
        }
        let l22 = math::sqrt(d);
        let det = p11 * p22 - p12 * p12;
        let m1 = (p22 * b1 - p12 * b2) / det;
        let m2 = (p11 * b2 - p12 * b1) / det;
        let (z1, z2) = (sample_std_normal(&mut self.rng), sample_std_normal(&mut self.rng));
        // Solve L' e = z.
        let e2 = z2 / l22;
        let e1 = (z1 - l21 * e2) / l11;
        self.za = true;
        self.zr = true;
        self.da = m1 + e1;
        self.dr = m2 + e2;
        Ok(())
    }
}

/// Step-by-step M1 sampler; [`run_m1`] drives it for a full chain.
#[derive(Clone, Debug)]
pub struct M1Sampler {
    variant: M1Variant,
    hyper: M1Hyper,
    params: M1Params,
    units: Vec<Unit>,
    rng: RngStream,
    rwmh: RwmhAdaptState,
    fixed: bool,
    randomize: bool,
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    parallel: bool,
}

impl M1Sampler {
    pub fn new(data: &PanelData, config: &M1Config) -> Result<Self> {
        config.validate()?;
        let n = data.n_units();
        if n == 0 {
            return Err(Error::EmptySample("no units".into()));
        }
        let stream_ids: Vec<u64> = match &config.stream_ids {
            Some(ids) if ids.len() == n => ids.clone(),
            Some(_) => return Err(Error::Config("stream_ids length must equal the number of units".into())),
            None => (0..n as u64).collect(),
        };
        let variant = config.variant;
        let mut units = Vec::with_capacity(n);
        for i in 0..n {
            let (f, l) = data
                .span(i)
                .ok_or_else(|| Error::InsufficientData(format!("unit {} has no observations", data.unit_ids[i])))?;
            if (f..=l).any(|t| !data.present(i, t)) {
                return Err(Error::Data(format!("unit {} has interior missing values", data.unit_ids[i])));
            }
            if l - f < 2 {
                return Err(Error::InsufficientData(format!(
                    "unit {} needs T >= 2 (initial value plus two periods)",
                    data.unit_ids[i]
                )));
            }
            let full = variant.full_hetero();
            units.push(Unit {
                y: (f..=l).map(|t| data.y_at(i, t)).collect(),
                za: full,
                da: 0.0,
                zr: full,
                dr: 0.0,
                zs: variant == M1Variant::FullHeteroHetsk,
                ds: 1.0,
                rng: RngStream::new(config.seed, stream_ids[i].wrapping_add(1)),
            });
        }
        let (params, fixed) = match config.fixed_common {
            Some(p) => (p, true),
            None => (config.hyper.prior_means(variant), false),
        };
        Ok(M1Sampler {
            variant,
            hyper: config.hyper,
            params,
            units,
            rng: RngStream::new(config.seed, 0),
            rwmh: RwmhAdaptState::default(),
            fixed,
            randomize: config.randomize_unit_blocks,
            parallel: config.parallel,
        })
    }

    pub fn params(&self) -> &M1Params {
        &self.params
    }

    pub fn set_params(&mut self, p: M1Params) {
        self.params = p;
    }

    pub fn rwmh(&self) -> &RwmhAdaptState {
        &self.rwmh
    }

    pub fn rwmh_mut(&mut self) -> &mut RwmhAdaptState {
        &mut self.rwmh
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit_state(&self) -> M1UnitTruth {
        M1UnitTruth {
            z_alpha: self.units.iter().map(|u| u.za).collect(),
            delta_alpha: self.units.iter().map(|u| u.da).collect(),
            z_rho: self.units.iter().map(|u| u.zr).collect(),
            delta_rho: self.units.iter().map(|u| u.dr).collect(),
            z_sigma: self.units.iter().map(|u| u.zs).collect(),
            delta_sigma: self.units.iter().map(|u| u.ds).collect(),
        }
    }

    pub fn set_unit_state(&mut self, s: &M1UnitTruth) {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.za = s.z_alpha[i];
            u.da = s.delta_alpha[i];
            u.zr = s.z_rho[i];
            u.dr = s.delta_rho[i];
            u.zs = s.z_sigma[i];
            u.ds = s.delta_sigma[i];
        }
    }

    /// Observations y_i0..y_iT of unit `i`.
    pub fn observations(&self, i: usize) -> &[f64] {
        &self.units[i].y
    }

    pub fn set_observations(&mut self, i: usize, y: &[f64]) {
        self.units[i].y.clear();
        self.units[i].y.extend_from_slice(y);
    }

    fn update_units(&mut self) -> Result<()> {
        let p = self.params;
        let variant = self.variant;
        let randomize = self.randomize;
        #[cfg(feature = "parallel")]
        if self.parallel {
            use rayon::prelude::*;
            return self
                .units
                .par_iter_mut()
                .try_for_each(|u| u.update(&p, variant, randomize));
        }
        for u in &mut self.units {
            u.update(&p, variant, randomize)?;
        }
        Ok(())
    }

    /// One full Gibbs sweep.
    pub fn sweep(&mut self) -> Result<()> {
        if self.fixed {
            return self.update_units();
        }
        let h = self.hyper;
        let v = self.variant;

        // (α, ρ)
        let mut acc = RegressionAccumulator::new(2);
        for u in &self.units {
            let w = 1.0 / (self.params.sigma2 * u.ds);
            for t in 1..u.y.len() {
                let x = u.y[t - 1];
                acc.add(&[1.0, x], u.y[t] - u.da - u.dr * x, w);
            }
        }
        let beta = blocks::update_common_regression(
            &DVector::from_vec(vec![h.mu_alpha, h.mu_rho]),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![h.v_alpha, h.v_rho])),
            &acc,
            &mut self.rng,
        )?;
        self.params.alpha = beta[0];
        self.params.rho = beta[1];

        // q's
        if v.spike_slab() {
            let n = self.units.len();
            let za = self.units.iter().filter(|u| u.za).count();
            let zr = self.units.iter().filter(|u| u.zr).count();
            self.params.q_alpha = blocks::update_q_count(za, n, h.q_alpha.a, h.q_alpha.b, &mut self.rng)?;
            self.params.q_rho = blocks::update_q_count(zr, n, h.q_rho.a, h.q_rho.b, &mut self.rng)?;
            if v.hetsk() {
                let zs = self.units.iter().filter(|u| u.zs).count();
                self.params.q_sigma = blocks::update_q_count(zs, n, h.q_sigma.a, h.q_sigma.b, &mut self.rng)?;
            }
        }

        // v_δ's
        if v != M1Variant::Homogeneous {
            let (mut na, mut sa, mut nr, mut sr) = (0.0, 0.0, 0.0, 0.0);
            for u in &self.units {
                if u.za {
                    na += 1.0;
                    sa += u.da * u.da;
                }
                if u.zr {
                    nr += 1.0;
                    sr += u.dr * u.dr;
                }
            }
            self.params.v_delta_alpha = h.v_delta_alpha.posterior(na, sa).sample(&mut self.rng);
            self.params.v_delta_rho = h.v_delta_rho.posterior(nr, sr).sample(&mut self.rng);
        }
        if v.hetsk() {
            let mut stats = DeviatorScaleStats::default();
            for u in self.units.iter().filter(|u| u.zs) {
                stats.count += 1.0;
                stats.sum_log_inv += math::ln(u.ds) + 1.0 / u.ds;
            }
            self.params.v_delta_sigma = blocks::update_v_delta_sigma_rwmh(
                self.params.v_delta_sigma,
                stats,
                &h.v_delta_sigma,
                &mut self.rwmh,
                &mut self.rng,
            )?;
        }

        self.update_units()?;

        // σ²
        let (mut nobs, mut ss) = (0.0, 0.0);
        for u in &self.units {
            nobs += u.t() as f64;
            ss += u.ssr(self.params.alpha + u.da, self.params.rho + u.dr) / u.ds;
        }
        self.params.sigma2 = h.sigma2.posterior(nobs, ss).sample(&mut self.rng);
        if !self.params.sigma2.is_finite() || !(self.params.sigma2 > 0.0) {
            return Err(Error::Decomposition("non-finite sigma2 draw".into()));
        }
        Ok(())
    }

    fn common_layout(&self) -> Vec<&'static str> {
        let v = self.variant;
        let mut names = vec!["alpha", "rho", "sigma2"];
        if v.spike_slab() {
            names.extend(["q_alpha", "q_rho"]);
        }
        if v == M1Variant::SsHetsk {
            names.push("q_sigma");
        }
        if v != M1Variant::Homogeneous {
            names.extend(["v_delta_alpha", "v_delta_rho"]);
        }
        if v.hetsk() {
            names.push("v_delta_sigma");
        }
        names
    }

    fn common_values(&self, names: &[&str]) -> Vec<f64> {
        let p = &self.params;
        names
            .iter()
            .map(|n| match *n {
                "alpha" => p.alpha,
                "rho" => p.rho,
                "sigma2" => p.sigma2,
                "q_alpha" => p.q_alpha,
                "q_rho" => p.q_rho,
                "q_sigma" => p.q_sigma,
                "v_delta_alpha" => p.v_delta_alpha,
                "v_delta_rho" => p.v_delta_rho,
                _ => p.v_delta_sigma,
            })
            .collect()
    }
}

/// Run a full M1 chain.
pub fn run_m1(data: &PanelData, config: &M1Config) -> Result<ChainOutput> {
    let mut s = M1Sampler::new(data, config)?;
    let names = s.common_layout();
    let v = config.variant;
    let mut out = ChainBuilder::new(s.n_units());
    for n in &names {
        out.add_common(n);
    }
    let has_ab = v != M1Variant::Homogeneous;
    if has_ab {
        for g in ["z_alpha", "delta_alpha", "z_rho", "delta_rho"] {
            out.add_group(g, 1);
        }
    }
    if v.hetsk() {
        out.add_group("z_sigma", 1);
        out.add_group("delta_sigma", 1);
    }
    out.reserve(config.n_kept());
    s.rwmh.adapting = config.burn_in > 0 || config.adapt_after_burnin;
    let b = |z: bool| if z { 1.0 } else { 0.0 };
    for sweep in 0..config.n_draws {
        if sweep == config.burn_in {
            s.rwmh.adapting = config.adapt_after_burnin;
            s.rwmh.reset_counts();
        }
        s.sweep()?;
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
            if has_ab {
                out.push_unit("z_alpha", s.units.iter().map(|u| b(u.za)));
                out.push_unit("delta_alpha", s.units.iter().map(|u| u.da));
                out.push_unit("z_rho", s.units.iter().map(|u| b(u.zr)));
                out.push_unit("delta_rho", s.units.iter().map(|u| u.dr));
            }
            if v.hetsk() {
                out.push_unit("z_sigma", s.units.iter().map(|u| b(u.zs)));
                out.push_unit("delta_sigma", s.units.iter().map(|u| u.ds));
            }
            out.push_common(&s.common_values(&names));
        }
    }
    if v.hetsk() && !s.fixed {
        out.set_rwmh(vec![RwmhDiagnostics {
            name: "v_delta_sigma".into(),
            accepted: s.rwmh.accepted,
            proposals: s.rwmh.proposals,
            final_log_step: s.rwmh.log_step,
        }]);
    }
    Ok(out.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    Mean,
    Median,
    /// Posterior median of the common value plus δ̂, where δ̂ is the spike
    /// value if more than `threshold` of the draws are spikes and the
    /// posterior median of δ otherwise.
    MedianWithSpikeAdjust(f64),
    /// As above with posterior means.
    MeanWithSpikeAdjust(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn estimate_one(
    common: &[f64],
    delta: &[f64],
    z: &[f64],
    spike: f64,
    multiplicative: bool,
    rule: PointRule,
) -> f64 {
    let combine = |c: f64, d: f64| if multiplicative { c * d } else { c + d };
    if delta.is_empty() {
        return match rule {
            PointRule::Mean | PointRule::MeanWithSpikeAdjust(_) => combine(mean(common), spike),
            _ => combine(chain::median(common), spike),
        };
    }
    let spike_frac = if z.is_empty() {
        0.0
    } else {
        z.iter().filter(|&&v| v == 0.0).count() as f64 / z.len() as f64
    };
    match rule {
        PointRule::Mean => mean(&common.iter().zip(delta).map(|(&c, &d)| combine(c, d)).collect::<Vec<_>>()),
        PointRule::Median => chain::median(&common.iter().zip(delta).map(|(&c, &d)| combine(c, d)).collect::<Vec<_>>()),
        PointRule::MedianWithSpikeAdjust(thr) => {
            let d = if spike_frac > thr { spike } else { chain::median(delta) };
            combine(chain::median(common), d)
        }
        PointRule::MeanWithSpikeAdjust(thr) => {
            let d = if spike_frac > thr { spike } else { mean(delta) };
            combine(mean(common), d)
        }
    }
}

/// Per-unit estimates of α_i, ρ_i, σ²_i from an M1 chain.
pub fn point_estimates(chain: &ChainOutput, rule: PointRule) -> Result<PointEstimates> {
    if chain.n_draws == 0 {
        return Err(Error::EmptyChain);
    }
    let get = |n: &str| chain.common_trace(n).ok_or_else(|| Error::Config(format!("chain lacks {n}")));
    let (a, r, s) = (get("alpha")?, get("rho")?, get("sigma2")?);
    let mut out = PointEstimates {
        alpha: vec![],
        rho: vec![],
        sigma2: vec![],
    };
    for i in 0..chain.n_units {
        let col = |g: &str| chain.unit_column(g, i, 0);
        out.alpha.push(estimate_one(&a, &col("delta_alpha"), &col("z_alpha"), 0.0, false, rule));
        out.rho.push(estimate_one(&r, &col("delta_rho"), &col("z_rho"), 0.0, false, rule));
        out.sigma2.push(estimate_one(&s, &col("delta_sigma"), &col("z_sigma"), 1.0, true, rule));
    }
    Ok(out)
}

//! Monte Carlo compound-risk experiments for the M1 estimators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::chain::ChainOutput;
use crate::error::{Error, Result};
use crate::m1::{point_estimates, run_m1, M1Config, M1Hyper, M1Params, M1Variant, PointRule};
use crate::math;
use crate::panel::{simulate_m1, PanelData};
use crate::rng::{mix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MCModel {
    M1Homosk,
    M1Hetsk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ss,
    Q0,
    Q1,
    Oracle,
    SsHomoskMisspec,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Ss,
        Estimator::Q0,
        Estimator::Q1,
        Estimator::Oracle,
        Estimator::SsHomoskMisspec,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Ss => "ss",
            Estimator::Q0 => "q0",
            Estimator::Q1 => "q1",
            Estimator::Oracle => "oracle",
            Estimator::SsHomoskMisspec => "ss_homosk_misspec",
        }
    }

    pub fn parse(s: &str) -> Option<Estimator> {
        Self::ALL.iter().copied().find(|e| e.name() == s)
    }

    fn variant(&self, model: MCModel) -> M1Variant {
        let het = model == MCModel::M1Hetsk;
        match self {
            Estimator::Ss | Estimator::Oracle if het => M1Variant::SsHetsk,
            Estimator::Ss | Estimator::Oracle | Estimator::SsHomoskMisspec => M1Variant::SsHomosk,
            Estimator::Q0 => M1Variant::Homogeneous,
            Estimator::Q1 if het => M1Variant::FullHeteroHetsk,
            Estimator::Q1 => M1Variant::FullHeteroHomosk,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Alpha,
    Rho,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Alpha => "alpha",
            Target::Rho => "rho",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCDesign {
    pub model: MCModel,
    /// Truth for α, ρ, σ², v_δρ, v_δσ; q and v_δα come from the grid.
    pub theta: M1Params,
    pub q_grid: Vec<f64>,
    pub v_delta_alpha_grid: Vec<f64>,
    pub n: usize,
    pub t: usize,
    pub n_sim: usize,
    pub estimators: Vec<Estimator>,
    pub n_draws: usize,
    pub burn_in: usize,
    pub hyper: M1Hyper,
}

impl MCDesign {
    /// Homoskedastic experiment on the full (q, v) grid with 5000/2500 chains.
    pub fn table2() -> Self {
        MCDesign {
            model: MCModel::M1Homosk,
            theta: M1Params::table1(),
            q_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            v_delta_alpha_grid: vec![0.05, 0.5, 1.0],
            n: 500,
            t: 8,
            n_sim: 100,
            estimators: vec![Estimator::Ss, Estimator::Q0, Estimator::Q1, Estimator::Oracle],
            n_draws: 5000,
            burn_in: 2500,
            hyper: M1Hyper::default(),
        }
    }

    /// Heteroskedastic experiment, including the misspecified homoskedastic S&S.
    pub fn table3() -> Self {
        MCDesign {
            model: MCModel::M1Hetsk,
            estimators: vec![
                Estimator::Ss,
                Estimator::SsHomoskMisspec,
                Estimator::Q0,
                Estimator::Q1,
                Estimator::Oracle,
            ],
            ..Self::table2()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if self.n_sim == 0 {
            errs.push("n_sim must be at least 1".into());
        }
        if self.n == 0 || self.t == 0 {
            errs.push("n and t must be positive".into());
        }
        if self.q_grid.is_empty() || self.q_grid.iter().any(|q| !(0.0..=1.0).contains(q)) {
            errs.push("q_grid values must lie in [0, 1]".into());
        }
        if self.v_delta_alpha_grid.is_empty() || self.v_delta_alpha_grid.iter().any(|v| !(*v > 0.0)) {
            errs.push("v_delta_alpha_grid values must be positive".into());
        }
        if self.estimators.is_empty() {
            errs.push("at least one estimator required".into());
        }
        if self.burn_in >= self.n_draws {
            errs.push(format!("burn_in ({}) must be smaller than n_draws ({})", self.burn_in, self.n_draws));
        }
        if let Err(e) = self.hyper.validate() {
            errs.push(format!("{e}"));
        }
        for c in self.cells() {
            if let Err(e) = self.truth(c.0, c.1).validate() {
                errs.push(format!("{e}"));
                break;
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    /// Grid cells in (v_δα outer, q inner) order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &v in &self.v_delta_alpha_grid {
            for &q in &self.q_grid {
                out.push((q, v));
            }
        }
        out
    }

    /// Truth at one grid cell.
    pub fn truth(&self, q: f64, v: f64) -> M1Params {
        let het = self.model == MCModel::M1Hetsk;
        M1Params {
            q_alpha: q,
            q_rho: q,
            q_sigma: if het { q } else { 0.0 },
            v_delta_alpha: v,
            ..self.theta.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCell {
    pub q: f64,
    pub v_delta_alpha: f64,
    pub estimator: Estimator,
    pub target: Target,
    pub risk: f64,
    pub mc_se: f64,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskTable {
    pub cells: Vec<RiskCell>,
    pub n_failed: usize,
    pub n_total: usize,
}

impl RiskTable {
    pub fn get(&self, q: f64, v: f64, e: Estimator, t: Target) -> Option<&RiskCell> {
        self.cells
            .iter()
            .find(|c| c.q == q && c.v_delta_alpha == v && c.estimator == e && c.target == t)
    }
}

/// Posterior-mean estimates of α_i and ρ_i under one estimator.
pub fn estimate(
    data: &PanelData,
    design: &MCDesign,
    estimator: Estimator,
    truth: &M1Params,
    seed: u64,
    parallel: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut c = M1Config::new(estimator.variant(design.model), design.n_draws, design.burn_in, seed);
    c.hyper = design.hyper.clone();
    c.parallel = parallel;
    if estimator == Estimator::Oracle {
        c.fixed_common = Some(truth.clone());
    }
    let ch = run_m1(data, &c)?;
    let e = point_estimates(&ch, PointRule::Mean)?;
    if e.alpha.iter().chain(&e.rho).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite estimate".into()));
    }
    Ok((e.alpha, e.rho))
}

/// Posterior means with every common parameter fixed at the truth.
pub fn oracle_estimator(data: &PanelData, truth: &M1Params, model: MCModel, n_draws: usize, burn_in: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let design = MCDesign {
        model,
        n_draws,
        burn_in,
        ..MCDesign::table2()
    };
    estimate(data, &design, Estimator::Oracle, truth, seed, true)
}

/// Per-replication losses for all estimators; `None` marks a failed fit.
type RepLoss = Vec<Option<(f64, f64)>>;

fn replication(design: &MCDesign, cell: usize, rep: usize, seed: u64, parallel: bool) -> Result<RepLoss> {
    let (q, v) = design.cells()[cell];
    let truth = design.truth(q, v);
    let mut rng = RngStream::new(mix(&[seed, cell as u64, rep as u64]), 0);
    let (data, ut) = simulate_m1(&truth, design.n, design.t, &mut rng)?;
    let a_true = ut.alpha_i(&truth);
    let r_true = ut.rho_i(&truth);
    let n = a_true.len() as f64;
    Ok(design
        .estimators
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let s = mix(&[seed, cell as u64, rep as u64, k as u64 + 1]);
            estimate(&data, design, e, &truth, s, parallel).ok().map(|(a, r)| {
                let la = a.iter().zip(&a_true).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
                let lr = r.iter().zip(&r_true).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n;
                (la, lr)
            })
        })
        .collect())
}

fn summarize_cell(design: &MCDesign, q: f64, v: f64, reps: &[RepLoss]) -> Vec<RiskCell> {
    let mut out = Vec::new();
    for (k, &e) in design.estimators.iter().enumerate() {
        for (ti, target) in [Target::Alpha, Target::Rho].into_iter().enumerate() {
            let xs: Vec<f64> = reps
                .iter()
                .filter_map(|r| r[k].map(|l| if ti == 0 { l.0 } else { l.1 }))
                .collect();
            let n_ok = xs.len();
            let (risk, se) = if n_ok == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let m = xs.iter().sum::<f64>() / n_ok as f64;
                let se = if n_ok > 1 {
                    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n_ok - 1) as f64;
                    math::sqrt(var / n_ok as f64)
                } else {
                    0.0
                };
                (m, se)
            };
            out.push(RiskCell {
                q,
                v_delta_alpha: v,
                estimator: e,
                target,
                risk,
                mc_se: se,
                n_ok,
                n_failed: reps.len() - n_ok,
            });
        }
    }
    out
}

/// Run all cells; `on_cell` sees the rows of each completed cell.
pub fn run_experiment_with(design: &MCDesign, seed: u64, on_cell: &mut dyn FnMut(&[RiskCell])) -> Result<RiskTable> {
    design.validate()?;
    let mut cells = Vec::new();
    let (mut failed, mut total) = (0, 0);
    for (ci, (q, v)) in design.cells().into_iter().enumerate() {
        let reps: Vec<RepLoss> = run_reps(design, ci, seed)?;
        let rows = summarize_cell(design, q, v, &reps);
        for r in reps.iter() {
            total += r.len();
            failed += r.iter().filter(|x| x.is_none()).count();
        }
        on_cell(&rows);
        cells.extend(rows);
    }
    if failed * 20 > total {
        return Err(Error::Replications { failed, total });
    }
    Ok(RiskTable {
        cells,
        n_failed: failed,
        n_total: total,
    })
}

pub fn run_experiment(design: &MCDesign, seed: u64) -> Result<RiskTable> {
    run_experiment_with(design, seed, &mut |_| {})
}

#[cfg(feature = "parallel")]
fn run_reps(design: &MCDesign, cell: usize, seed: u64) -> Result<Vec<RepLoss>> {
    use rayon::prelude::*;
    (0..design.n_sim)
        .into_par_iter()
        .map(|r| replication(design, cell, r, seed, false))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_reps(design: &MCDesign, cell: usize, seed: u64) -> Result<Vec<RepLoss>> {
    (0..design.n_sim).map(|r| replication(design, cell, r, seed, false)).collect()
}

/// Plot data for the cross-sectional estimate histograms and q densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramExport {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha_bins: Vec<Bin>,
    pub rho_bins: Vec<Bin>,
    pub q_grid: Vec<f64>,
    pub q_alpha_density: Vec<f64>,
    pub q_rho_density: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram; identical values give a single bin.
pub fn histogram(xs: &[f64], n_bins: usize) -> Vec<Bin> {
    let xs: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return vec![];
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo || n_bins <= 1 {
        return vec![Bin { lo, hi, count: xs.len() }];
    }
    let w = (hi - lo) / n_bins as f64;
    let mut bins: Vec<Bin> = (0..n_bins)
        .map(|b| Bin {
            lo: lo + b as f64 * w,
            hi: if b + 1 == n_bins { hi } else { lo + (b + 1) as f64 * w },
            count: 0,
        })
        .collect();
    for x in xs {
        let b = (((x - lo) / w) as usize).min(n_bins - 1);
        bins[b].count += 1;
    }
    bins
}

/// Gaussian kernel density on [0, 1] with reflection at both ends.
pub fn reflected_kde(xs: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 0 {
        return vec![0.0; grid.len()];
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let sd = math::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64);
    let h = (1.06 * sd * math::powf(n as f64, -0.2)).max(0.01);
    let c = 1.0 / (n as f64 * h * math::sqrt(2.0 * core::f64::consts::PI));
    grid.iter()
        .map(|&g| {
            let mut s = 0.0;
            for &x in xs {
                for y in [x, -x, 2.0 - x] {
                    let z = (g - y) / h;
                    s += math::exp(-0.5 * z * z);
                }
            }
            s * c
        })
        .collect()
}

pub const KDE_GRID: usize = 512;

pub fn histogram_export(chain: &ChainOutput, rule: PointRule, n_bins: usize) -> Result<HistogramExport> {
    let e = point_estimates(chain, rule)?;
    let grid: Vec<f64> = (0..KDE_GRID).map(|j| j as f64 / (KDE_GRID - 1) as f64).collect();
    let dens = |n: &str| chain.common_trace(n).map(|q| reflected_kde(&q, &grid)).unwrap_or_default();
    Ok(HistogramExport {
        alpha_bins: histogram(&e.alpha, n_bins),
        rho_bins: histogram(&e.rho, n_bins),
        alpha: e.alpha,
        rho: e.rho,
        q_alpha_density: dens("q_alpha"),
        q_rho_density: dens("q_rho"),
        q_grid: grid,
    })
}

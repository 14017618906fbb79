//! Forecast pipeline calibration on panels simulated from the M2 prior.

use sparsepanel_core::forecast::{
    fit_individual_chains, interval_width_ratios, predict, predict_individual, score, Scenario,
};
use sparsepanel_core::m2::{run_m2, IndividualPrior, M2Config, M2Hyper, M2Variant, RegressorTrend};
use sparsepanel_core::panel::{simulate_m2, Regressors};
use sparsepanel_core::rng::mix;
use sparsepanel_core::RngStream;

use super::geweke::m2_prior;

#[derive(Clone, Debug)]
pub struct Calibration {
    /// Share of held-out outcomes inside the 90% one-step interval.
    pub coverage: f64,
    pub n_scored: usize,
    pub lps: f64,
    pub lps_doubled: f64,
    /// Mean width ratio of no-parameter-uncertainty over parameter-uncertainty intervals.
    pub ratio_no_param: f64,
    /// Mean width ratio of individual-information over full-information intervals.
    pub ratio_individual: f64,
}

/// `reps` panels of N units and T estimation periods plus one held-out
/// period, each with its parameters drawn from the prior. The last period
/// keeps the variances of period T, as the forecasts assume.
pub fn forecast_calibration(reps: usize, n: usize, t: usize, draws: usize, burn_in: usize, seed: u64) -> Calibration {
    let h = M2Hyper::table4(1);
    let (mut hits, mut total) = (0usize, 0usize);
    let mut out = Calibration {
        coverage: 0.0,
        n_scored: 0,
        lps: f64::NAN,
        lps_doubled: f64::NAN,
        ratio_no_param: f64::NAN,
        ratio_individual: f64::NAN,
    };
    for rep in 0..reps {
        let mut rng = RngStream::new(seed, rep as u64);
        let (mut p, _) = m2_prior(&h, 0, t + 1, &mut rng);
        p.sigma2_u[t] = p.sigma2_u[t - 1];
        p.sigma2_eps[t] = p.sigma2_eps[t - 1];
        let (full, _) = simulate_m2(&p, n, t + 1, &Regressors::Intercept, &mut rng).unwrap();
        let all: Vec<usize> = (0..n).collect();
        let est = full.select(&all, 0..t);
        let realized: Vec<f64> = (0..n).map(|i| full.y_at(i, t)).collect();

        let chain_seed = mix(&[seed, rep as u64, 1]);
        let doubled = rep == 0;
        let kept = if doubled { 2 * draws } else { draws };
        let cfg = M2Config::new(M2Variant::Baseline, 1, burn_in + kept, burn_in, chain_seed);
        let chain = run_m2(&est, &cfg).unwrap();
        let pred = predict(&chain, &est, &[1], Scenario::FullInfoParamUnc, RegressorTrend::Constant, chain_seed).unwrap();
        for (j, &y) in realized.iter().enumerate() {
            let (lo, hi) = pred.interval(j, 0, 0.90);
            hits += usize::from(y >= lo && y <= hi);
            total += 1;
        }
        if doubled {
            out.lps_doubled = score(&pred, &realized).unwrap().lps;
            let half = truncate_draws(&pred, draws);
            out.lps = score(&half, &realized).unwrap().lps;

            let fixed =
                predict(&chain, &est, &[1], Scenario::FullInfoNoParamUnc, RegressorTrend::Constant, chain_seed).unwrap();
            out.ratio_no_param = interval_width_ratios(&fixed, &pred, 0, 0.90, None).unwrap().mean_all;
            let ind = fit_individual_chains(&est, &IndividualPrior::default_for(1), burn_in + draws, burn_in, chain_seed)
                .unwrap();
            let ipred = predict_individual(&ind, &est, &[1], RegressorTrend::Constant, chain_seed).unwrap();
            out.ratio_individual = interval_width_ratios(&ipred, &half, 0, 0.90, None).unwrap().mean_all;
        }
    }
    out.coverage = hits as f64 / total as f64;
    out.n_scored = total;
    out
}

/// The first `d` draws of every unit and horizon.
fn truncate_draws(p: &sparsepanel_core::forecast::PredictiveDraws, d: usize) -> sparsepanel_core::forecast::PredictiveDraws {
    let mut q = p.clone();
    let blocks = p.units.len() * p.horizons.len();
    let take = |v: &[f64]| (0..blocks).flat_map(|b| v[b * p.n_draws..b * p.n_draws + d].to_vec()).collect::<Vec<_>>();
    q.mean = take(&p.mean);
    q.var = take(&p.var);
    q.sim = take(&p.sim);
    q.n_draws = d;
    q
}

//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sparsepanel_core::forecast::{
    self, core_probability, fit_individual_chains, forecast_units, interval_width_ratios, predict, predict_individual,
    Scenario,
};
use sparsepanel_core::m1::{run_m1, M1Config, M1Params, M1Variant, PointRule};
use sparsepanel_core::m2::{run_m2, IndividualPrior, M2Config, M2Params, M2Variant, RegressorTrend};
use sparsepanel_core::mc::{histogram_export, run_experiment_with, MCDesign};
use sparsepanel_core::panel::{simulate_m1, simulate_m2, Regressors};
use sparsepanel_core::{ChainOutput, PanelData, RngStream};

use crate::config::{validate_config, Command, Model, Resolved, RunConfig};
use crate::io::{fmt, read_panel_csv, write_panel_csv};
use crate::output::{self, OutDir};

#[derive(Parser, Debug)]
#[command(name = "sparsepanel", version, about = "Spike-and-slab panel data estimation, Monte Carlo and forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Simulate a panel from M1 or M2.
    Simulate(Flags),
    /// Run a Gibbs sampler and write the chain.
    Estimate(Flags),
    /// Compound-risk Monte Carlo experiment.
    Montecarlo(Flags),
    /// Estimate M2 and produce predictive distributions and scores.
    Forecast(Flags),
    /// Cohort inequality decomposition.
    Decompose(Flags),
}

#[derive(Args, Debug, Default)]
pub struct Flags {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "SPARSEPANEL_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub nsim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// Trailing periods withheld from estimation.
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub periods: Option<usize>,
}

impl Flags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            variant: self.variant.clone(),
            data: self.data.clone(),
            draws: self.draws,
            burnin: self.burnin,
            thin: self.thin,
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            design: self.design.clone(),
            nsim: self.nsim,
            horizons: self.horizons.clone(),
            scenario: self.scenario.clone(),
            holdout: self.holdout,
            units: self.units,
            periods: self.periods,
            ..Default::default()
        }
    }
}

/// Run the CLI and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let (command, flags) = match &cli.command {
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Estimate(f) => (Command::Estimate, f),
        Cmd::Montecarlo(f) => (Command::Montecarlo, f),
        Cmd::Forecast(f) => (Command::Forecast, f),
        Cmd::Decompose(f) => (Command::Decompose, f),
    };
    let base = match &flags.config {
        Some(p) => match load_config(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return 2;
            }
        },
        None => RunConfig::default(),
    };
    let cfg = base.merge(flags.to_config());
    let (resolved, warnings) = match validate_config(command, &cfg) {
        Ok(r) => r,
        Err(issues) => {
            eprintln!("invalid configuration:");
            for i in issues {
                eprintln!("  {i}");
            }
            return 2;
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(resolved.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&resolved, warnings)) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn load_config(p: &Path) -> Result<RunConfig> {
    let s = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing config {}", p.display()))
}

fn finish(out: OutDir, r: &Resolved, warnings: Vec<String>) -> Result<String> {
    let cfg = serde_json::to_value(r.to_run_config())?;
    let m = out.finish(r.command.name(), r.seed, r.threads, cfg, warnings)?;
    Ok(serde_json::json!({
        "command": m.command,
        "out": r.out,
        "files": m.files.len(),
        "wall_seconds": m.wall_seconds,
    })
    .to_string())
}

fn execute(r: &Resolved, warnings: Vec<String>) -> Result<String> {
    let mut out = OutDir::create(&r.out)?;
    match r.command {
        Command::Simulate => simulate(r, &mut out)?,
        Command::Estimate => estimate(r, &mut out)?,
        Command::Montecarlo => montecarlo(r, &mut out)?,
        Command::Forecast => forecast_cmd(r, &mut out)?,
        Command::Decompose => decompose(r, &mut out)?,
    }
    finish(out, r, warnings)
}

fn experience_starts(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 + (i % 20) as f64).collect()
}

fn simulate(r: &Resolved, out: &mut OutDir) -> Result<()> {
    let mut rng = RngStream::new(r.seed, 0);
    match r.model {
        Model::M1 => {
            let p = r.m1_params.clone().unwrap_or_else(M1Params::table1);
            let (data, truth) = simulate_m1(&p, r.units, r.periods, &mut rng)?;
            write_panel_csv(&data, &out.path("panel.csv"))?;
            let mut w = out.csv("truth.csv")?;
            w.write_record(["unit", "z_alpha", "delta_alpha", "z_rho", "delta_rho", "z_sigma", "delta_sigma"])?;
            for i in 0..data.n_units() {
                w.write_record([
                    data.unit_ids[i].clone(),
                    (truth.z_alpha[i] as u8).to_string(),
                    fmt(truth.delta_alpha[i]),
                    (truth.z_rho[i] as u8).to_string(),
                    fmt(truth.delta_rho[i]),
                    (truth.z_sigma[i] as u8).to_string(),
                    fmt(truth.delta_sigma[i]),
                ])?;
            }
            w.flush()?;
        }
        Model::M2 => {
            let p = r.m2_params.clone().unwrap_or_else(|| M2Params::table4_prior_means(2, r.periods));
            let reg = if p.k() == 2 {
                Regressors::Experience {
                    start: experience_starts(r.units),
                }
            } else {
                Regressors::Intercept
            };
            let (data, truth) = simulate_m2(&p, r.units, r.periods, &reg, &mut rng)?;
            write_panel_csv(&data, &out.path("panel.csv"))?;
            let mut w = out.csv("truth.csv")?;
            w.write_record([
                "unit",
                "z_alpha",
                "delta_alpha",
                "z_rho",
                "delta_rho",
                "z_sigma_u",
                "delta_sigma_u",
                "z_sigma_eps",
                "delta_sigma_eps",
                "states",
            ])?;
            for i in 0..data.n_units() {
                let da: Vec<String> = truth.delta_alpha[i].iter().map(|v| fmt(*v)).collect();
                let st: Vec<String> = truth.states[i].iter().map(|v| fmt(*v)).collect();
                w.write_record([
                    data.unit_ids[i].clone(),
                    (truth.z_alpha[i] as u8).to_string(),
                    da.join(" "),
                    (truth.z_rho[i] as u8).to_string(),
                    fmt(truth.delta_rho[i]),
                    (truth.z_sigma_u[i] as u8).to_string(),
                    fmt(truth.delta_sigma_u[i]),
                    (truth.z_sigma_eps[i] as u8).to_string(),
                    fmt(truth.delta_sigma_eps[i]),
                    st.join(" "),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn load_data(r: &Resolved) -> Result<PanelData> {
    let path = r.data.as_ref().context("no data file")?;
    let d = read_panel_csv(path)?;
    let p = d.n_periods();
    if r.holdout >= p {
        bail!("holdout ({}) must be smaller than the number of periods ({p})", r.holdout);
    }
    Ok(if r.holdout > 0 {
        d.select(&(0..d.n_units()).collect::<Vec<_>>(), 0..p - r.holdout)
    } else {
        d
    })
}

fn m2_config(r: &Resolved, k: usize, seed: u64) -> Result<M2Config> {
    let v = M2Variant::parse(&r.variant).context("unknown m2 variant")?;
    let mut c = M2Config::new(v, k, r.draws, r.burnin, seed);
    c.thin = r.thin;
    if let Some(b) = r.q_alpha_prior {
        c.hyper.q_alpha = b;
    }
    if let Some(b) = r.q_rho_prior {
        c.hyper.q_rho = b;
    }
    Ok(c)
}

fn estimate(r: &Resolved, out: &mut OutDir) -> Result<()> {
    let data = load_data(r)?;
    match r.model {
        Model::M1 => {
            let v = M1Variant::parse(&r.variant).context("unknown m1 variant")?;
            let mut c = M1Config::new(v, r.draws, r.burnin, r.seed);
            c.thin = r.thin;
            if let Some(b) = r.q_alpha_prior {
                c.hyper.q_alpha = b;
            }
            if let Some(b) = r.q_rho_prior {
                c.hyper.q_rho = b;
            }
            data.check_estimable()?;
            let ch = run_m1(&data, &c)?;
            output::write_chain(out, &ch, &data.unit_ids)?;
            let h = histogram_export(&ch, PointRule::MeanWithSpikeAdjust(0.8), 40)?;
            output::write_histogram(out, "histogram", &h, &data.unit_ids)?;
        }
        Model::M2 => {
            let ch = run_m2(&data, &m2_config(r, data.k, r.seed)?)?;
            output::write_chain(out, &ch, &data.unit_ids)?;
        }
    }
    Ok(())
}

fn load_design(r: &Resolved) -> Result<MCDesign> {
    let name = r.design.as_deref().unwrap_or("table2");
    let mut d = match name {
        "table2" => MCDesign::table2(),
        "table3" => MCDesign::table3(),
        path => {
            let s = std::fs::read_to_string(path).with_context(|| format!("reading design {path}"))?;
            serde_json::from_str(&s).with_context(|| format!("parsing design {path}"))?
        }
    };
    if let Some(n) = r.nsim {
        d.n_sim = n;
    }
    if r.chain_overridden {
        d.n_draws = r.draws;
        d.burn_in = r.burnin;
    }
    Ok(d)
}

fn montecarlo(r: &Resolved, out: &mut OutDir) -> Result<()> {
    let design = load_design(r)?;
    out.json("design.json", &design)?;
    out.mark_partial()?;
    let mut long = out.csv("risk_long.csv")?;
    let mut first = true;
    let mut io_err: Option<anyhow::Error> = None;
    let mut done = 0usize;
    let n_cells = design.cells().len();
    let table = run_experiment_with(&design, r.seed, &mut |rows| {
        done += 1;
        eprintln!("montecarlo: cell {done}/{n_cells} done");
        if let Err(e) = output::write_risk_long(&mut long, rows, first) {
            io_err.get_or_insert(e);
        }
        first = false;
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    output::write_risk_wide(out, &table, "risk_table.csv")?;
    out.clear_partial()?;
    Ok(())
}

fn forecast_cmd(r: &Resolved, out: &mut OutDir) -> Result<()> {
    let path = r.data.as_ref().context("no data file")?;
    let full = read_panel_csv(path)?;
    let est = load_data(r)?;
    let p_est = est.n_periods();
    let k = est.k;
    let trend = RegressorTrend::default_for(k);
    let chain = run_m2(&est, &m2_config(r, k, r.seed)?)?;
    output::write_chain(out, &chain, &est.unit_ids)?;

    let units = forecast_units(&est);
    let realized: Vec<f64> = units
        .iter()
        .map(|&i| if r.holdout > 0 && full.present(i, p_est) { full.y_at(i, p_est) } else { f64::NAN })
        .collect();
    let mut preds = Vec::new();
    for &s in &r.scenarios {
        let p = match s {
            Scenario::IndividualInfo => {
                let chains: Vec<ChainOutput> =
                    fit_individual_chains(&est, &IndividualPrior::default_for(k), r.draws, r.burnin, r.seed)?;
                predict_individual(&chains, &est, &r.horizons, trend, r.seed)?
            }
            s => predict(&chain, &est, &r.horizons, s, trend, r.seed)?,
        };
        output::write_fan(out, &format!("fan_{}.csv", s.name()), &p, &est.unit_ids)?;
        preds.push(p);
    }
    if realized.iter().any(|v| v.is_finite()) {
        let scores = preds
            .iter()
            .map(|p| Ok((p.scenario.name().to_string(), forecast::score(p, &realized)?)))
            .collect::<Result<Vec<_>>>()?;
        output::write_scores(out, "scores.csv", &scores)?;
    }
    let base = preds.iter().find(|p| p.scenario == Scenario::FullInfoParamUnc);
    if let Some(base) = base {
        let core: Vec<f64> = units.iter().map(|&i| core_probability(&chain, i)).collect();
        let mut rows = Vec::new();
        for p in preds.iter().filter(|p| p.scenario != Scenario::FullInfoParamUnc) {
            for (hp, &h) in r.horizons.iter().enumerate() {
                let w = interval_width_ratios(p, base, hp, 0.9, Some(&core))?;
                rows.push((format!("{}/{}", p.scenario.name(), base.scenario.name()), h, w));
            }
        }
        if !rows.is_empty() {
            output::write_width_ratios(out, "width_ratios.csv", &rows, &est.unit_ids, &core)?;
        }
    }
    Ok(())
}

fn extend_periods(v: &mut Vec<f64>, t: usize) {
    let last = v.last().copied().unwrap_or(0.05);
    while v.len() < t {
        v.push(last);
    }
}

fn decompose(r: &Resolved, out: &mut OutDir) -> Result<()> {
    let mut params = match &r.data {
        Some(_) => {
            let data = load_data(r)?;
            let chain = run_m2(&data, &m2_config(r, data.k, r.seed)?)?;
            output::write_chain(out, &chain, &data.unit_ids)?;
            let fallback = M2Params::table4_prior_means(data.k, data.n_periods());
            forecast::posterior_mean_params(&chain, &fallback)
        }
        None => r
            .m2_params
            .clone()
            .unwrap_or_else(|| M2Params::table4_prior_means(2, r.periods)),
    };
    extend_periods(&mut params.sigma2_u, r.periods);
    extend_periods(&mut params.sigma2_eps, r.periods);
    out.json("params.json", &params)?;
    let d = forecast::inequality_decomposition(&params, r.units, r.periods, r.seed)?;
    output::write_decomposition(out, "decomposition.csv", &d)?;
    Ok(())
}

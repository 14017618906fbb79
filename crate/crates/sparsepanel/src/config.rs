//! Run configuration: JSON file merged with command-line flags, then
//! resolved into a fully specified [`Resolved`] value.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sparsepanel_core::forecast::Scenario;
use sparsepanel_core::m1::{BetaSpec, M1Params, M1Variant};
use sparsepanel_core::m2::{M2Params, M2Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Montecarlo,
    Forecast,
    Decompose,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Montecarlo => "montecarlo",
            Command::Forecast => "forecast",
            Command::Decompose => "decompose",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    M1,
    M2,
}

/// Everything a run can be configured with; all fields optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub variant: Option<String>,
    pub data: Option<PathBuf>,
    pub draws: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Monte Carlo design: a JSON file or one of `table2`, `table3`.
    pub design: Option<String>,
    pub nsim: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    /// A scenario name or `all`.
    pub scenario: Option<String>,
    pub holdout: Option<usize>,
    pub units: Option<usize>,
    pub periods: Option<usize>,
    pub m1_params: Option<M1Params>,
    pub m2_params: Option<M2Params>,
    pub q_alpha_prior: Option<BetaSpec>,
    pub q_rho_prior: Option<BetaSpec>,
}

impl RunConfig {
    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            model, variant, data, draws, burnin, thin, seed, threads, out, design, nsim, horizons, scenario, holdout,
            units, periods, m1_params, m2_params, q_alpha_prior, q_rho_prior
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub command: Command,
    pub model: Model,
    pub variant: String,
    pub data: Option<PathBuf>,
    pub draws: usize,
    pub burnin: usize,
    pub thin: usize,
    /// Whether draws/burnin were given explicitly (they then override a design file).
    pub chain_overridden: bool,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub design: Option<String>,
    pub nsim: Option<usize>,
    pub horizons: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    pub holdout: usize,
    pub units: usize,
    pub periods: usize,
    pub m1_params: Option<M1Params>,
    pub m2_params: Option<M2Params>,
    pub q_alpha_prior: Option<BetaSpec>,
    pub q_rho_prior: Option<BetaSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Resolve defaults and check every field, collecting all problems.
/// Returns the resolved configuration and a list of warnings.
pub fn validate_config(command: Command, cfg: &RunConfig) -> Result<(Resolved, Vec<String>), Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let mut bad = |field: &str, constraint: String| {
        issues.push(ConfigIssue {
            field: field.into(),
            constraint,
        })
    };

    let model = match (command, cfg.model.as_deref()) {
        (Command::Forecast | Command::Decompose, None | Some("m2")) => Model::M2,
        (Command::Forecast | Command::Decompose, Some(m)) => {
            bad("model", format!("{} requires model m2, got {m:?}", command.name()));
            Model::M2
        }
        (_, None | Some("m1")) => Model::M1,
        (_, Some("m2")) => Model::M2,
        (_, Some(m)) => {
            bad("model", format!("must be m1 or m2, got {m:?}"));
            Model::M1
        }
    };
    let variant = match model {
        Model::M1 => {
            let v = cfg.variant.clone().unwrap_or_else(|| "ss_homosk".into());
            match M1Variant::parse(&v) {
                Some(M1Variant::Homogeneous) if cfg.q_alpha_prior.is_some() || cfg.q_rho_prior.is_some() => {
                    warnings.push(format!("variant {v}: q prior ignored under restriction"));
                }
                Some(_) => {}
                None => {
                    let names: Vec<&str> = M1Variant::ALL.iter().map(|v| v.name()).collect();
                    bad("variant", format!("m1 variant must be one of {}, got {v:?}", names.join(", ")));
                }
            }
            v
        }
        Model::M2 => {
            let v = cfg.variant.clone().unwrap_or_else(|| "baseline".into());
            match M2Variant::parse(&v) {
                Some(M2Variant::Rip | M2Variant::Hip) if cfg.q_alpha_prior.is_some() || cfg.q_rho_prior.is_some() => {
                    warnings.push(format!("variant {v}: q prior ignored under restriction"));
                }
                Some(_) => {}
                None => {
                    let names: Vec<&str> = M2Variant::ALL.iter().map(|v| v.name()).collect();
                    bad("variant", format!("m2 variant must be one of {}, got {v:?}", names.join(", ")));
                }
            }
            v
        }
    };

    let needs_data = matches!(command, Command::Estimate | Command::Forecast);
    match &cfg.data {
        None if needs_data => bad("data", format!("required for {}", command.name())),
        Some(p) if !p.is_file() => bad("data", format!("file {} does not exist", p.display())),
        _ => {}
    }

    let draws = cfg.draws.unwrap_or(5000);
    let burnin = cfg.burnin.unwrap_or(draws / 2);
    let thin = cfg.thin.unwrap_or(1);
    if draws == 0 {
        bad("draws", "must be positive".into());
    }
    if burnin >= draws {
        bad("burnin", format!("burnin ({burnin}) must be smaller than draws ({draws})"));
    }
    if thin == 0 {
        bad("thin", "must be at least 1".into());
    }

    let seed = match (cfg.seed, command) {
        (Some(s), _) => s,
        (None, Command::Simulate) => 0,
        (None, _) => {
            bad("seed", format!("required for {}", command.name()));
            0
        }
    };
    let threads = cfg.threads.unwrap_or_else(default_threads);
    if threads == 0 {
        bad("threads", "must be at least 1".into());
    }

    let design = match command {
        Command::Montecarlo => {
            let d = cfg.design.clone().unwrap_or_else(|| "table2".into());
            if d != "table2" && d != "table3" && !std::path::Path::new(&d).is_file() {
                bad("design", format!("{d:?} is neither table2, table3 nor an existing file"));
            }
            Some(d)
        }
        _ => cfg.design.clone(),
    };
    if cfg.nsim == Some(0) {
        bad("nsim", "must be at least 1".into());
    }

    let horizons = cfg.horizons.clone().unwrap_or_else(|| (1..=5).collect());
    if horizons.is_empty() || horizons.contains(&0) {
        bad("horizons", "must be a non-empty list of positive integers".into());
    }
    let scenarios = match cfg.scenario.as_deref() {
        None | Some("all") => Scenario::ALL.to_vec(),
        Some(s) => match Scenario::parse(s) {
            Some(sc) => vec![sc],
            None => {
                bad(
                    "scenario",
                    format!("must be all, full_info_param_unc, full_info_no_param_unc or individual_info, got {s:?}"),
                );
                vec![]
            }
        },
    };
    let holdout = cfg.holdout.unwrap_or(if command == Command::Forecast { 1 } else { 0 });
    let (du, dp) = match (command, model) {
        (Command::Decompose, _) => (10_000, 20),
        (_, Model::M1) => (100, 8),
        (_, Model::M2) => (100, 20),
    };
    let units = cfg.units.unwrap_or(du);
    let periods = cfg.periods.unwrap_or(dp);
    if units == 0 {
        bad("units", "must be positive".into());
    }
    if periods == 0 {
        bad("periods", "must be positive".into());
    }
    if let Some(p) = &cfg.m1_params {
        if let Err(e) = p.validate() {
            bad("m1_params", e.to_string());
        }
    }
    if let Some(p) = &cfg.m2_params {
        if let Err(e) = p.validate(periods) {
            bad("m2_params", e.to_string());
        }
    }
    for (f, b) in [("q_alpha_prior", cfg.q_alpha_prior), ("q_rho_prior", cfg.q_rho_prior)] {
        if let Some(b) = b {
            if !(b.a > 0.0 && b.b > 0.0) {
                bad(f, "beta parameters must be positive".into());
            }
        }
    }

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok((
        Resolved {
            command,
            model,
            variant,
            data: cfg.data.clone(),
            draws,
            burnin,
            thin,
            chain_overridden: cfg.draws.is_some() || cfg.burnin.is_some(),
            seed,
            threads,
            out: cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(command.name())),
            design,
            nsim: cfg.nsim,
            horizons,
            scenarios,
            holdout,
            units,
            periods,
            m1_params: cfg.m1_params.clone(),
            m2_params: cfg.m2_params.clone(),
            q_alpha_prior: cfg.q_alpha_prior,
            q_rho_prior: cfg.q_rho_prior,
        },
        warnings,
    ))
}

impl Resolved {
    /// Round-trippable form for the manifest (threads excluded so that
    /// outputs do not depend on it).
    pub fn to_run_config(&self) -> RunConfig {
        RunConfig {
            model: Some(match self.model {
                Model::M1 => "m1".into(),
                Model::M2 => "m2".into(),
            }),
            variant: Some(self.variant.clone()),
            data: self.data.clone(),
            draws: Some(self.draws),
            burnin: Some(self.burnin),
            thin: Some(self.thin),
            seed: Some(self.seed),
            threads: None,
            out: Some(self.out.clone()),
            design: self.design.clone(),
            nsim: self.nsim,
            horizons: Some(self.horizons.clone()),
            scenario: Some(if self.scenarios.len() == 1 {
                self.scenarios[0].name().into()
            } else {
                "all".into()
            }),
            holdout: Some(self.holdout),
            units: Some(self.units),
            periods: Some(self.periods),
            m1_params: self.m1_params.clone(),
            m2_params: self.m2_params.clone(),
            q_alpha_prior: self.q_alpha_prior,
            q_rho_prior: self.q_rho_prior,
        }
    }
}

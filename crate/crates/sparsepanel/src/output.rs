//! Output directories: chain CSVs, plot-ready tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sparsepanel_core::chain::summarize;
use sparsepanel_core::forecast::{DecompositionResult, PredictiveDraws, ScoreReport, WidthRatios};
use sparsepanel_core::mc::{HistogramExport, RiskCell, RiskTable};
use sparsepanel_core::ChainOutput;

use crate::io::fmt;

pub const PARTIAL_MARKER: &str = "PARTIAL";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    /// Resolved configuration; feeding it back with `--config` re-runs the command.
    pub config: serde_json::Value,
    pub warnings: Vec<String>,
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

/// Tracks files written into an output directory.
pub struct OutDir {
    pub root: PathBuf,
    files: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<fs::File>> {
        let p = self.path(name);
        csv::Writer::from_path(&p).with_context(|| format!("creating {}", p.display()))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn mark_partial(&self) -> Result<()> {
        fs::write(self.root.join(PARTIAL_MARKER), "run incomplete\n")?;
        Ok(())
    }

    pub fn clear_partial(&self) -> Result<()> {
        let p = self.root.join(PARTIAL_MARKER);
        if p.exists() {
            fs::remove_file(p)?;
        }
        Ok(())
    }

    pub fn finish(
        self,
        command: &str,
        seed: u64,
        threads: usize,
        config: serde_json::Value,
        warnings: Vec<String>,
    ) -> Result<Manifest> {
        let mut files = Vec::new();
        for f in &self.files {
            let bytes = fs::read(self.root.join(f)).with_context(|| format!("hashing {f}"))?;
            files.push(FileEntry {
                path: f.clone(),
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            config,
            warnings,
            started_unix: self.started_unix,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            files,
        };
        let mut f = fs::File::create(self.root.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, &m)?;
        f.write_all(b"\n")?;
        Ok(m)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// common.csv, one CSV per unit group, summary.csv and rwmh.json.
pub fn write_chain(out: &mut OutDir, chain: &ChainOutput, unit_ids: &[String]) -> Result<()> {
    let mut w = out.csv("common.csv")?;
    let mut header = vec!["draw".to_string()];
    header.extend(chain.common_names.iter().cloned());
    w.write_record(&header)?;
    let nc = chain.n_common();
    for d in 0..chain.n_draws {
        let mut rec = vec![d.to_string()];
        rec.extend(chain.common[d * nc..(d + 1) * nc].iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    for g in &chain.groups {
        let mut w = out.csv(&format!("{}.csv", g.name))?;
        let mut header = vec!["draw".to_string(), "unit".into()];
        header.extend((0..g.width).map(|j| format!("v{j}")));
        w.write_record(&header)?;
        for d in 0..chain.n_draws {
            for (i, id) in unit_ids.iter().enumerate().take(chain.n_units) {
                let vals = chain.unit_draw(&g.name, d, i).unwrap_or(&[]);
                let mut rec = vec![d.to_string(), id.clone()];
                rec.extend(vals.iter().map(|&v| fmt(v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
    }

    let mut w = out.csv("summary.csv")?;
    w.write_record(["parameter", "mean", "median", "sd", "q05", "q95", "hpd90_lo", "hpd90_hi"])?;
    for name in &chain.common_names {
        let s = summarize(&chain.common_trace(name).unwrap_or_default())?;
        w.write_record([
            name.clone(),
            fmt(s.mean),
            fmt(s.median),
            fmt(s.sd),
            fmt(s.q05),
            fmt(s.q95),
            fmt(s.hpd_lo),
            fmt(s.hpd_hi),
        ])?;
    }
    w.flush()?;
    out.json("rwmh.json", &chain.rwmh)?;
    Ok(())
}

/// Long-format risk rows.
pub fn write_risk_long(w: &mut csv::Writer<fs::File>, rows: &[RiskCell], header: bool) -> Result<()> {
    if header {
        w.write_record(["target", "v_delta_alpha", "estimator", "q", "risk", "mc_se", "n_ok", "n_failed"])?;
    }
    for c in rows {
        w.write_record([
            c.target.name().to_string(),
            fmt(c.v_delta_alpha),
            c.estimator.name().into(),
            fmt(c.q),
            fmt(c.risk),
            fmt(c.mc_se),
            c.n_ok.to_string(),
            c.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wide table layout: rows (target, v_δα, estimator), one
/// risk column and one standard-error column per q.
pub fn write_risk_wide(out: &mut OutDir, table: &RiskTable, name: &str) -> Result<()> {
    let mut qs: Vec<f64> = table.cells.iter().map(|c| c.q).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    let mut w = out.csv(name)?;
    let mut header = vec!["target".to_string(), "v_delta_alpha".into(), "estimator".into()];
    header.extend(qs.iter().map(|q| format!("q={q}")));
    header.extend(qs.iter().map(|q| format!("se q={q}")));
    w.write_record(&header)?;
    let mut keys: Vec<(usize, f64, usize)> = Vec::new();
    for c in &table.cells {
        let key = (c.target as usize, c.v_delta_alpha, c.estimator as usize);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (tg, v, e) in keys {
        let row: Vec<&RiskCell> = table
            .cells
            .iter()
            .filter(|c| c.target as usize == tg && c.v_delta_alpha == v && c.estimator as usize == e)
            .collect();
        let mut rec = vec![row[0].target.name().to_string(), fmt(v), row[0].estimator.name().into()];
        for q in &qs {
            rec.push(row.iter().find(|c| c.q == *q).map_or(String::new(), |c| fmt(c.risk)));
        }
        for q in &qs {
            rec.push(row.iter().find(|c| c.q == *q).map_or(String::new(), |c| fmt(c.mc_se)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const FAN_QUANTILES: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

/// Fan-chart rows (unit, horizon, quantile, value).
pub fn write_fan(out: &mut OutDir, name: &str, pred: &PredictiveDraws, unit_ids: &[String]) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record(["scenario", "unit", "horizon", "quantile", "value"])?;
    for (u, &i) in pred.units.iter().enumerate() {
        for (hp, h) in pred.horizons.iter().enumerate() {
            for q in FAN_QUANTILES {
                w.write_record([
                    pred.scenario.name().to_string(),
                    unit_ids[i].clone(),
                    h.to_string(),
                    format!("{q}"),
                    fmt(pred.quantile(u, hp, q)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores(out: &mut OutDir, name: &str, scores: &[(String, ScoreReport)]) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record(["scenario", "mse", "lps", "n_scored", "zero_density_units"])?;
    for (s, r) in scores {
        let zero: Vec<String> = r.zero_density_units.iter().map(|u| u.to_string()).collect();
        w.write_record([s.clone(), fmt(r.mse), fmt(r.lps), r.n_scored.to_string(), zero.join(" ")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_width_ratios(
    out: &mut OutDir,
    name: &str,
    rows: &[(String, usize, WidthRatios)],
    unit_ids: &[String],
    core_prob: &[f64],
) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record(["comparison", "horizon", "unit", "core_probability", "ratio"])?;
    for (label, h, r) in rows {
        for (j, (&i, &v)) in r.units.iter().zip(&r.ratios).enumerate() {
            w.write_record([label.clone(), h.to_string(), unit_ids[i].clone(), fmt(core_prob[j]), fmt(v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_decomposition(out: &mut OutDir, name: &str, d: &DecompositionResult) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record(["t", "v", "v_no_delta_alpha", "v_no_transitory", "share_delta_alpha", "share_transitory"])?;
    for t in 0..d.v.len() {
        w.write_record([
            (t + 1).to_string(),
            fmt(d.v[t]),
            fmt(d.v_no_delta_alpha[t]),
            fmt(d.v_no_transitory[t]),
            fmt(d.ratio_delta_alpha[t]),
            fmt(d.ratio_transitory[t]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram(out: &mut OutDir, prefix: &str, h: &HistogramExport, unit_ids: &[String]) -> Result<()> {
    let mut w = out.csv(&format!("{prefix}_estimates.csv"))?;
    w.write_record(["unit", "alpha", "rho"])?;
    for (i, id) in unit_ids.iter().enumerate().take(h.alpha.len()) {
        w.write_record([id.clone(), fmt(h.alpha[i]), fmt(h.rho[i])])?;
    }
    w.flush()?;
    let mut w = out.csv(&format!("{prefix}_bins.csv"))?;
    w.write_record(["target", "lo", "hi", "count"])?;
    for (t, bins) in [("alpha", &h.alpha_bins), ("rho", &h.rho_bins)] {
        for b in bins.iter() {
            w.write_record([t.to_string(), fmt(b.lo), fmt(b.hi), b.count.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = out.csv(&format!("{prefix}_q_density.csv"))?;
    w.write_record(["q", "q_alpha_density", "q_rho_density"])?;
    for (j, g) in h.q_grid.iter().enumerate() {
        let a = h.q_alpha_density.get(j).copied().unwrap_or(f64::NAN);
        let r = h.q_rho_density.get(j).copied().unwrap_or(f64::NAN);
        w.write_record([fmt(*g), fmt(a), fmt(r)])?;
    }
    w.flush()?;
    Ok(())
}

//! Long-format panel CSV files: `unit,time,y` plus optional regressors.
//!
//! An `experience` column becomes the regressor `experience / 10` after an
//! intercept; columns named `x_*` are appended as given. Without either the
//! design is a lone intercept. Empty, `NA` or `NaN` values in `y` mark a
//! missing observation, as does an absent (unit, time) row.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sparsepanel_core::PanelData;

pub fn read_panel_csv(path: &Path) -> Result<PanelData> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(cu), Some(ct), Some(cy)) = (col("unit"), col("time"), col("y")) else {
        bail!("{}: header must contain unit, time and y", path.display());
    };
    let ce = col("experience");
    let cx: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("x_"))
        .map(|(j, _)| j)
        .collect();
    let k = 1 + ce.is_some() as usize + cx.len();

    let mut unit_order: Vec<String> = Vec::new();
    let mut unit_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows: Vec<(usize, i64, f64, Vec<f64>)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        let unit = rec[cu].trim().to_string();
        let time: i64 = rec[ct]
            .trim()
            .parse()
            .with_context(|| format!("{}: bad time {:?} on record {}", path.display(), &rec[ct], line + 1))?;
        let y = parse_value(&rec[cy]).with_context(|| format!("{}: bad y on record {}", path.display(), line + 1))?;
        let mut x = Vec::with_capacity(k);
        x.push(1.0);
        if let Some(c) = ce {
            x.push(parse_value(&rec[c])? / 10.0);
        }
        for &c in &cx {
            x.push(parse_value(&rec[c])?);
        }
        let idx = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_order.push(unit);
            unit_order.len() - 1
        });
        rows.push((idx, time, y, x));
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let mut times: Vec<i64> = rows.iter().map(|r| r.1).collect();
    times.sort_unstable();
    times.dedup();
    let tpos: BTreeMap<i64, usize> = times.iter().enumerate().map(|(j, &t)| (t, j)).collect();
    let (n, p) = (unit_order.len(), times.len());
    let mut y = vec![f64::NAN; n * p];
    let mut mask = vec![false; n * p];
    let mut x = vec![0.0; n * p * k];
    for (i, t, v, xr) in rows {
        let at = i * p + tpos[&t];
        if mask[at] {
            bail!("{}: duplicate row for unit {} time {}", path.display(), unit_order[i], t);
        }
        if v.is_finite() {
            if xr.iter().any(|v| !v.is_finite()) {
                bail!("{}: missing regressor for unit {} time {}", path.display(), unit_order[i], t);
            }
            y[at] = v;
            mask[at] = true;
            x[at * k..(at + 1) * k].copy_from_slice(&xr);
        }
    }
    Ok(PanelData::new(unit_order, times, y, mask, k, x)?)
}

fn parse_value(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    Ok(s.parse::<f64>()?)
}

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Write observed rows in the layout `read_panel_csv` accepts. The second
/// regressor column, if any, is written back as `experience`.
pub fn write_panel_csv(data: &PanelData, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["unit".to_string(), "time".into(), "y".into()];
    if data.k >= 2 {
        header.push("experience".into());
    }
    for j in 2..data.k {
        header.push(format!("x_{j}"));
    }
    w.write_record(&header)?;
    for i in 0..data.n_units() {
        for t in 0..data.n_periods() {
            if !data.present(i, t) {
                continue;
            }
            let x = data.x_at(i, t);
            let mut rec = vec![data.unit_ids[i].clone(), data.times[t].to_string(), fmt(data.y_at(i, t))];
            if data.k >= 2 {
                rec.push(fmt(x[1] * 10.0));
            }
            for v in &x[2.min(x.len())..] {
                rec.push(fmt(*v));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

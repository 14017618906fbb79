//! Storage for retained draws and their summaries.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-unit draws of one parameter group, laid out draw-major:
/// `values[(draw * n_units + unit) * width + j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitGroup {
    pub name: String,
    pub width: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RwmhDiagnostics {
    pub name: String,
    pub accepted: u64,
    pub proposals: u64,
    pub final_log_step: f64,
}

impl RwmhDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub n_units: usize,
    pub n_draws: usize,
    pub common_names: Vec<String>,
    /// Draw-major common traces: `common[draw * n_common + j]`.
    pub common: Vec<f64>,
    pub groups: Vec<UnitGroup>,
    pub rwmh: Vec<RwmhDiagnostics>,
}

/// Posterior summary of one scalar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Shortest interval covering `level` of the sorted draws.
pub fn hpd_sorted(sorted: &[f64], level: f64) -> (f64, f64) {
    let n = sorted.len();
    let k = (libm::ceil(level * n as f64) as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[n - 1]);
    let mut width = f64::INFINITY;
    for i in 0..=(n - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < width {
            width = w;
            best = (sorted[i], sorted[i + k - 1]);
        }
    }
    best
}

pub fn summarize(xs: &[f64]) -> Result<Summary> {
    if xs.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = if s.len() > 1 {
        s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let (hpd_lo, hpd_hi) = hpd_sorted(&s, 0.9);
    Ok(Summary {
        mean,
        median: quantile_sorted(&s, 0.5),
        sd: libm::sqrt(var),
        q05: quantile_sorted(&s, 0.05),
        q95: quantile_sorted(&s, 0.95),
        hpd_lo,
        hpd_hi,
    })
}

impl ChainOutput {
    pub fn n_common(&self) -> usize {
        self.common_names.len()
    }

    pub fn common_index(&self, name: &str) -> Option<usize> {
        self.common_names.iter().position(|n| n == name)
    }

    pub fn common_trace(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.common_index(name)?;
        let k = self.n_common();
        Some((0..self.n_draws).map(|d| self.common[d * k + j]).collect())
    }

    pub fn common_value(&self, draw: usize, name: &str) -> Option<f64> {
        let j = self.common_index(name)?;
        Some(self.common[draw * self.n_common() + j])
    }

    pub fn group(&self, name: &str) -> Option<&UnitGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn unit_draw(&self, name: &str, draw: usize, unit: usize) -> Option<&[f64]> {
        let g = self.group(name)?;
        let start = (draw * self.n_units + unit) * g.width;
        Some(&g.values[start..start + g.width])
    }

    /// Trace of entry `j` of `unit` in group `name`; empty if absent.
    pub fn unit_column(&self, name: &str, unit: usize, j: usize) -> Vec<f64> {
        match self.group(name) {
            Some(g) => (0..self.n_draws)
                .map(|d| g.values[(d * self.n_units + unit) * g.width + j])
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn common_summaries(&self) -> Result<Vec<(String, Summary)>> {
        self.common_names
            .iter()
            .map(|n| Ok((n.clone(), summarize(&self.common_trace(n).unwrap())?)))
            .collect()
    }

    pub fn rwmh(&self, name: &str) -> Option<&RwmhDiagnostics> {
        self.rwmh.iter().find(|r| r.name == name)
    }
}

/// Incremental construction of a [`ChainOutput`].
#[derive(Clone, Debug)]
pub struct ChainBuilder {
    out: ChainOutput,
}

impl ChainBuilder {
    pub fn new(n_units: usize) -> Self {
        ChainBuilder {
            out: ChainOutput {
                n_units,
                n_draws: 0,
                common_names: Vec::new(),
                common: Vec::new(),
                groups: Vec::new(),
                rwmh: Vec::new(),
            },
        }
    }

    pub fn add_common(&mut self, name: &str) {
        self.out.common_names.push(name.to_string());
    }

    pub fn add_group(&mut self, name: &str, width: usize) {
        self.out.groups.push(UnitGroup {
            name: name.to_string(),
            width,
            values: Vec::new(),
        });
    }

    pub fn reserve(&mut self, draws: usize) {
        let n = self.out.n_units;
        self.out.common.reserve(draws * self.out.common_names.len());
        for g in &mut self.out.groups {
            g.values.reserve(draws * n * g.width);
        }
    }

    /// Appends one draw of every common parameter; completes a draw.
    pub fn push_common(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.out.common_names.len());
        self.out.common.extend_from_slice(values);
        self.out.n_draws += 1;
    }

    pub fn push_unit(&mut self, name: &str, values: impl IntoIterator<Item = f64>) {
        let g = self
            .out
            .groups
            .iter_mut()
            .find(|g| g.name == name)
            .expect("unit group registered");
        g.values.extend(values);
    }

    pub fn set_rwmh(&mut self, diags: Vec<RwmhDiagnostics>) {
        self.out.rwmh = diags;
    }

    pub fn finish(self) -> ChainOutput {
        self.out
    }
}

/// Batch-means standard error of the mean of a (possibly autocorrelated) trace.
pub fn batch_means_se(xs: &[f64], n_batches: usize) -> f64 {
    let b = xs.len() / n_batches;
    if b == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|k| xs[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let m = means.iter().sum::<f64>() / n_batches as f64;
    let v = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n_batches - 1) as f64;
    libm::sqrt(v / n_batches as f64)
}

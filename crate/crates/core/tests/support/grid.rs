//! Midpoint-rule quadrature of unnormalized log densities.

pub struct GridDensity {
    pub lo: f64,
    pub step: f64,
    /// Cumulative mass at the right edge of each cell, normalized to one.
    cum: Vec<f64>,
    /// ln ∫ f over [lo, hi].
    pub log_mass: f64,
    mids: Vec<f64>,
    weights: Vec<f64>,
}

impl GridDensity {
    pub fn new(lo: f64, hi: f64, cells: usize, log_f: impl Fn(f64) -> f64) -> Self {
        let step = (hi - lo) / cells as f64;
        let lf: Vec<f64> = (0..cells).map(|i| log_f(lo + (i as f64 + 0.5) * step)).collect();
        Self::from_log_values(lo, hi, lf)
    }

    /// Cell-midpoint log density values on an even grid over [lo, hi].
    pub fn from_log_values(lo: f64, hi: f64, lf: Vec<f64>) -> Self {
        let cells = lf.len();
        let step = (hi - lo) / cells as f64;
        let mids: Vec<f64> = (0..cells).map(|i| lo + (i as f64 + 0.5) * step).collect();
        let m = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(m.is_finite(), "log density not finite anywhere on the grid");
        let w: Vec<f64> = lf.iter().map(|&l| (l - m).exp() * step).collect();
        let total: f64 = w.iter().sum();
        let mut cum = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for &v in &w {
            acc += v;
            cum.push(acc / total);
        }
        GridDensity {
            lo,
            step,
            cum,
            log_mass: m + total.ln(),
            mids,
            weights: w.iter().map(|v| v / total).collect(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.step;
        if u <= 0.0 {
            return 0.0;
        }
        let i = u.floor() as usize;
        if i >= self.cum.len() {
            return 1.0;
        }
        let before = if i == 0 { 0.0 } else { self.cum[i - 1] };
        before + (u - i as f64) * (self.cum[i] - before)
    }

    /// Normalized expectation of g.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.mids.iter().zip(&self.weights).map(|(&x, &w)| w * g(x)).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mids.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Composite Simpson rule on [a, b] with an even number of panels.
pub fn simpson(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// ln Σ exp over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

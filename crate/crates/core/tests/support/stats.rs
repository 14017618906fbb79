//! Test statistics.

/// Two-sided Kolmogorov-Smirnov distance against a continuous CDF.
pub fn ks(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean of an autocorrelated series by batch means.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let b = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|j| mean(&xs[j * b..(j + 1) * b])).collect();
    (var(&means) / batches as f64).sqrt()
}

/// z statistic of an observed frequency against probability p.
pub fn binomial_z(hits: usize, n: usize, p: f64) -> f64 {
    let ph = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    if se == 0.0 {
        if (ph - p).abs() < 1e-15 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ph - p) / se
    }
}

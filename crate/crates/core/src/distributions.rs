//! Samplers and log densities for the families used by the Gibbs blocks.

use alloc::format;
#[cfg(test)]
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::math;

/// Inverse Gamma prior written as IG(nu/2, tau/2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseGammaSpec {
    pub nu: f64,
    pub tau: f64,
}

impl InverseGammaSpec {
    pub fn new(nu: f64, tau: f64) -> Result<Self> {
        let s = InverseGammaSpec { nu, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite() && self.tau > 0.0 && self.tau.is_finite()) {
            return Err(domain(format!(
                "inverse gamma needs nu > 0 and tau > 0, got ({}, {})",
                self.nu, self.tau
            )));
        }
        Ok(())
    }

    /// Spec with mean 1 and variance `v`: `(2/v + 4, 2/v + 2)`.
    pub fn from_variance(v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!("variance must be positive, got {v}")));
        }
        Ok(InverseGammaSpec {
            nu: 2.0 / v + 4.0,
            tau: 2.0 / v + 2.0,
        })
    }

    pub fn shape(&self) -> f64 {
        self.nu / 2.0
    }

    pub fn scale(&self) -> f64 {
        self.tau / 2.0
    }

    pub fn mean(&self) -> Option<f64> {
        (self.nu > 2.0).then(|| self.scale() / (self.shape() - 1.0))
    }

    pub fn variance(&self) -> Option<f64> {
        let (a, b) = (self.shape(), self.scale());
        (self.nu > 4.0).then(|| b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0)))
    }

    pub fn mode(&self) -> f64 {
        self.tau / (self.nu + 2.0)
    }

    /// Conjugate update with `n` normal observations whose sum of squares is `ss`.
    pub fn posterior(&self, n: f64, ss: f64) -> InverseGammaSpec {
        InverseGammaSpec {
            nu: self.nu + n,
            tau: self.tau + ss,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (a, b) = (self.shape(), self.scale());
        a * math::ln(b) - math::ln_gamma(a) - (a + 1.0) * math::ln(x) - b / x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale() / sample_gamma(self.shape(), 1.0, rng)
    }
}

pub fn ig_spec_from_variance(v: f64) -> Result<InverseGammaSpec> {
    InverseGammaSpec::from_variance(v)
}

pub fn sample_inverse_gamma<R: Rng + ?Sized>(spec: &InverseGammaSpec, rng: &mut R) -> Result<f64> {
    spec.validate()?;
    Ok(spec.sample(rng))
}

/// Inverse Wishart with `dof` degrees of freedom and scale matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseWishartSpec {
    pub dof: f64,
    pub scale: DMatrix<f64>,
}

impl InverseWishartSpec {
    pub fn new(dof: f64, scale: DMatrix<f64>) -> Result<Self> {
        let s = InverseWishartSpec { dof, scale };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !linalg::is_symmetric(&self.scale) {
            return Err(Error::MatrixDomain("inverse Wishart scale not symmetric".into()));
        }
        if nalgebra::Cholesky::new(self.scale.clone()).is_none() {
            return Err(Error::MatrixDomain("inverse Wishart scale not positive definite".into()));
        }
        if !(self.dof > self.dim() as f64 - 1.0) {
            return Err(domain(format!(
                "inverse Wishart dof {} must exceed dim - 1 = {}",
                self.dof,
                self.dim() as f64 - 1.0
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let p = self.dim() as f64;
        (self.dof > p + 1.0).then(|| &self.scale / (self.dof - p - 1.0))
    }

    /// Marginal of diagonal entry `j`: IG((dof - p + 1)/2, scale_jj/2).
    pub fn diagonal_marginal(&self, j: usize) -> InverseGammaSpec {
        InverseGammaSpec {
            nu: self.dof - self.dim() as f64 + 1.0,
            tau: self.scale[(j, j)],
        }
    }

    pub fn ln_pdf(&self, x: &DMatrix<f64>) -> f64 {
        let p = self.dim();
        let Ok(cx) = linalg::cholesky_jitter(x) else {
            return f64::NEG_INFINITY;
        };
        let Ok(cs) = linalg::cholesky_jitter(&self.scale) else {
            return f64::NEG_INFINITY;
        };
        let nu = self.dof;
        let pf = p as f64;
        let mut ln_mgamma = pf * (pf - 1.0) / 4.0 * math::ln(core::f64::consts::PI);
        for j in 0..p {
            ln_mgamma += math::ln_gamma((nu - j as f64) / 2.0);
        }
        let tr = (&self.scale * cx.inverse()).trace();
        nu / 2.0 * linalg::ln_det_chol(&cs)
            - nu * pf / 2.0 * core::f64::consts::LN_2
            - ln_mgamma
            - (nu + pf + 1.0) / 2.0 * linalg::ln_det_chol(&cx)
            - 0.5 * tr
    }

    /// Bartlett draw of a Wishart(dof, scale^-1) matrix, inverted.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let p = self.dim();
        let prec = linalg::spd_inverse(&self.scale)?;
        let l = linalg::cholesky_jitter(&prec)?.l();
        let mut a = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            a[(i, i)] = math::sqrt(sample_gamma((self.dof - i as f64) / 2.0, 2.0, rng));
            for j in 0..i {
                a[(i, j)] = sample_std_normal(rng);
            }
        }
        let m = l * a;
        let minv = m
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::Decomposition("singular Bartlett factor".into()))?;
        let mut x = minv.transpose() * minv;
        linalg::symmetrize(&mut x);
        Ok(x)
    }
}

pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    spec: &InverseWishartSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    spec.sample(rng)
}

/// Normal left-truncated at `lower_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub center: f64,
    pub lower_bound: f64,
    pub scale: f64,
}

impl TruncatedNormalSpec {
    pub fn new(center: f64, lower_bound: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && center.is_finite() && !lower_bound.is_nan()) {
            return Err(domain(format!(
                "truncated normal needs finite center and scale > 0, got ({center}, {scale})"
            )));
        }
        Ok(TruncatedNormalSpec {
            center,
            lower_bound,
            scale,
        })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > self.lower_bound) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.center) / self.scale;
        -0.5 * z * z
            - math::LN_SQRT_2PI
            - math::ln(self.scale)
            - math::ln_norm_cdf((self.center - self.lower_bound) / self.scale)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = (self.lower_bound - self.center) / self.scale;
        loop {
            let z = if a < 0.4 {
                sample_std_normal(rng)
            } else {
                // Exponential proposal (Robert 1995).
                let lam = 0.5 * (a + math::sqrt(a * a + 4.0));
                let e: f64 = Exp1.sample(rng);
                let z = a + e / lam;
                let u: f64 = rng.random();
                let d = z - lam;
                if u > math::exp(-0.5 * d * d) {
                    continue;
                }
                z
            };
            if z > a {
                let x = self.center + self.scale * z;
                if x > self.lower_bound {
                    return x;
                }
            }
        }
    }
}

pub fn sample_truncated_normal<R: Rng + ?Sized>(spec: &TruncatedNormalSpec, rng: &mut R) -> f64 {
    spec.sample(rng)
}

#[inline]
pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    mean + sd * sample_std_normal(rng)
}

/// Gamma with shape and scale; both must be positive.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, scale)
        .expect("gamma parameters validated by caller")
        .sample(rng)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(domain(format!("beta needs a, b > 0, got ({a}, {b})")));
    }
    let x = sample_gamma(a, 1.0, rng);
    let y = sample_gamma(b, 1.0, rng);
    let s = x + y;
    if s > 0.0 {
        Ok(x / s)
    } else {
        // Both shapes tiny and both draws underflowed.
        Ok(if rng.random::<f64>() < a / (a + b) { 1.0 } else { 0.0 })
    }
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("bernoulli probability {p} outside [0, 1]")));
    }
    Ok(bernoulli(p, rng))
}

#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

pub fn sample_mv_normal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::MatrixDomain("covariance not conformable with mean".into()));
    }
    if !linalg::is_symmetric(cov) {
        return Err(Error::MatrixDomain("covariance not symmetric".into()));
    }
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(mean.clone());
    }
    let l = linalg::cholesky_jitter(cov)?.l();
    let z = DVector::from_fn(mean.len(), |_, _| sample_std_normal(rng));
    Ok(mean + l * z)
}

/// Draw from N(P⁻¹b, P⁻¹) given precision `P` and linear term `b`.
/// Returns `(mean, draw, ln|P|)`.
pub fn sample_normal_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let c = linalg::cholesky_jitter(precision)?;
    let mean = c.solve(linear);
    let l = c.l();
    let z = DVector::from_fn(linear.len(), |_, _| sample_std_normal(rng));
    let draw = &mean + linalg::solve_upper_transpose(&l, &z);
    Ok((mean, draw, linalg::ln_det_chol(&c)))
}

/// Density families with closed-form log densities.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Normal { mean: f64, var: f64 },
    InverseGamma(InverseGammaSpec),
    Gamma { shape: f64, scale: f64 },
    Beta { a: f64, b: f64 },
    TruncatedNormal(TruncatedNormalSpec),
}

impl Family {
    /// Natural-log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, var } => math::norm_ln_pdf(x, mean, var),
            Family::InverseGamma(s) => s.ln_pdf(x),
            Family::Gamma { shape, scale } => {
                if !(x > 0.0) {
                    return f64::NEG_INFINITY;
                }
                (shape - 1.0) * math::ln(x) - x / scale - math::ln_gamma(shape) - shape * math::ln(scale)
            }
            Family::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * math::ln(x) + (b - 1.0) * math::ln1p(-x) - ln_beta(a, b)
            }
            Family::TruncatedNormal(s) => s.ln_pdf(x),
        }
    }
}

pub fn log_density(family: &Family, x: f64) -> f64 {
    family.ln_pdf(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    math::ln_gamma(a) + math::ln_gamma(b) - math::ln_gamma(a + b)
}

/// Empirical mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[cfg(test)]
pub(crate) fn draws<R: Rng + ?Sized>(n: usize, mut f: impl FnMut(&mut R) -> f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| f(rng)).collect()
}

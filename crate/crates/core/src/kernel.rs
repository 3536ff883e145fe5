//! Gaussian kernels, Parzen density estimates and the quadratic information
//! potential of an error sample.
//!
//! Also hosts the analytic density of the prediction error `e = t - y` for a
//! sigmoid classifier whose projected class-conditional inputs are Gaussian.

use crate::error::{Error, Result};
use crate::math::{self, SQRT_2PI};

/// Bandwidth of a Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(alloc::format!(
                "kernel bandwidth must be positive and finite, got {sigma}"
            )));
        }
        Ok(KernelParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `exp(-x^2 / 2 sigma^2) / (sqrt(2 pi) sigma)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.unnormalized(x) / (SQRT_2PI * self.sigma)
    }

    /// The kernel without its normalizing constant, `exp(-x^2 / 2 sigma^2)`.
    #[inline]
    pub fn unnormalized(&self, x: f64) -> f64 {
        math::exp(-x * x / (2.0 * self.sigma * self.sigma))
    }

    /// Value at the origin, the kernel's maximum.
    pub fn peak(&self) -> f64 {
        1.0 / (SQRT_2PI * self.sigma)
    }
}

/// Gaussian kernel with bandwidth `k.sigma()` evaluated at `x`.
pub fn gaussian_kernel(x: f64, k: &KernelParams) -> f64 {
    k.eval(x)
}

fn non_empty(errs: &[f64]) -> Result<()> {
    if errs.is_empty() {
        Err(Error::input("error sample is empty"))
    } else {
        Ok(())
    }
}

/// Parzen estimate of the error density at `e`.
pub fn parzen_pdf(e: f64, errs: &[f64], k: &KernelParams) -> Result<f64> {
    non_empty(errs)?;
    let sum: f64 = errs.iter().map(|&ej| k.eval(e - ej)).sum();
    Ok(sum / errs.len() as f64)
}

/// Empirical quadratic information potential, `(1/N^2) sum_i sum_j k(e_i - e_j)`.
///
/// Uses the symmetry of the kernel to visit each unordered pair once.
pub fn quadratic_information_potential(errs: &[f64], k: &KernelParams) -> Result<f64> {
    non_empty(errs)?;
    let n = errs.len();
    let mut off_diagonal = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            off_diagonal += k.eval(errs[i] - errs[j]);
        }
    }
    let total = n as f64 * k.peak() + 2.0 * off_diagonal;
    Ok(total / (n as f64 * n as f64))
}

/// Renyi's quadratic entropy, `-log` of the information potential.
pub fn renyi_quadratic_entropy(errs: &[f64], k: &KernelParams) -> Result<f64> {
    Ok(-math::ln(quadratic_information_potential(errs, k)?))
}

/// Silverman's rule of thumb, `1.06 s N^(-1/5)` with `s` the sample standard
/// deviation (`N - 1` denominator).
pub fn silverman_bandwidth(errs: &[f64]) -> Result<f64> {
    let n = errs.len();
    if n < 2 {
        return Err(Error::input("bandwidth rule needs at least two samples"));
    }
    let mean = errs.iter().sum::<f64>() / n as f64;
    let ss: f64 = errs.iter().map(|e| (e - mean) * (e - mean)).sum();
    let s = math::sqrt(ss / (n - 1) as f64);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::input("error sample has zero variance"));
    }
    Ok(1.06 * s * math::powf(n as f64, -0.2))
}

/// Projected class statistics of a linear-sigmoid classifier: the means
/// `w'mu_T` and variances `w'Sigma_T w` of the logit per class, plus the
/// prior `p` of class 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassGaussianParams {
    mu0: f64,
    mu1: f64,
    var0: f64,
    var1: f64,
    p: f64,
}

impl ClassGaussianParams {
    pub fn new(mu0: f64, mu1: f64, var0: f64, var1: f64, p: f64) -> Result<Self> {
        if !(var0 > 0.0 && var1 > 0.0) {
            return Err(Error::param("class variances must be positive"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("class prior must lie in [0, 1]"));
        }
        if !(mu0.is_finite() && mu1.is_finite() && var0.is_finite() && var1.is_finite()) {
            return Err(Error::param("class parameters must be finite"));
        }
        Ok(ClassGaussianParams {
            mu0,
            mu1,
            var0,
            var1,
            p,
        })
    }

    /// Means -5/+5, variances 5 and equal priors.
    pub fn illustrative() -> Self {
        ClassGaussianParams {
            mu0: -5.0,
            mu1: 5.0,
            var0: 5.0,
            var1: 5.0,
            p: 0.5,
        }
    }
}

/// Density of `Y = sigmoid(Z)` with `Z ~ N(mean, var)`, for `y` in `(0, 1)`.
fn logit_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    if !(y > 0.0 && y < 1.0) {
        return 0.0;
    }
    let l = math::ln(y / (1.0 - y));
    let d = l - mean;
    let gauss = math::exp(-d * d / (2.0 * var)) / math::sqrt(2.0 * core::f64::consts::PI * var);
    // change of variables: dz/dy = 1 / (y (1 - y))
    gauss / (y * (1.0 - y))
}

/// Analytic density of the error `e = t - y` under the two-Gaussian model:
/// `p f_{Y|1}(1 - e) + q f_{Y|0}(-e)`.
///
/// Class 1 contributes on `(0, 1)` and class 0 on `(-1, 0)`; both are zero at
/// `e = 0` and outside `(-1, 1)`.
pub fn theoretical_error_pdf(e: f64, g: &ClassGaussianParams) -> f64 {
    if !(e > -1.0 && e < 1.0) {
        return 0.0;
    }
    let q = 1.0 - g.p;
    let positive = if e > 0.0 {
        g.p * logit_normal_pdf(1.0 - e, g.mu1, g.var1)
    } else {
        0.0
    };
    let negative = if e < 0.0 {
        q * logit_normal_pdf(-e, g.mu0, g.var0)
    } else {
        0.0
    };
    positive + negative
}

//! Memoryless test sources: Gaussian, uniform on (0, 1), and Laplacian.
//!
//! Each [`SourceModel`] exposes its CDF, a generalized inverse CDF and a seeded
//! sampler. Samples are produced by inversion of a 53-bit open uniform variate
//! from [`crate::rng`], which keeps every family reproducible per seed.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceFamily {
    Gaussian,
    Uniform01,
    Laplacian,
}

impl SourceFamily {
    pub fn name(self) -> &'static str {
        match self {
            SourceFamily::Gaussian => "gaussian",
            SourceFamily::Uniform01 => "uniform01",
            SourceFamily::Laplacian => "laplacian",
        }
    }
}

/// An IID source law.
///
/// `Uniform01` always has mean 1/2 and variance 1/12; those values are derived
/// from the family and any stored parameters are ignored on deserialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SourceSpec", into = "SourceSpec")]
pub struct SourceModel {
    family: SourceFamily,
    mean: f64,
    variance: f64,
}

#[derive(Serialize, Deserialize)]
struct SourceSpec {
    family: SourceFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variance: Option<f64>,
}

impl TryFrom<SourceSpec> for SourceModel {
    type Error = Error;

    fn try_from(spec: SourceSpec) -> Result<Self> {
        let mean = spec.mean.unwrap_or(0.0);
        let variance = spec.variance.unwrap_or(1.0);
        match spec.family {
            SourceFamily::Gaussian => SourceModel::gaussian(mean, variance),
            SourceFamily::Laplacian => SourceModel::laplacian(mean, variance),
            SourceFamily::Uniform01 => Ok(SourceModel::uniform01()),
        }
    }
}

impl From<SourceModel> for SourceSpec {
    fn from(model: SourceModel) -> Self {
        match model.family {
            SourceFamily::Uniform01 => SourceSpec {
                family: model.family,
                mean: None,
                variance: None,
            },
            _ => SourceSpec {
                family: model.family,
                mean: Some(model.mean),
                variance: Some(model.variance),
            },
        }
    }
}

fn check_moments(mean: f64, variance: f64) -> Result<()> {
    if !mean.is_finite() {
        return Err(Error::invalid(format!(
            "source mean must be finite, got {mean}"
        )));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "source variance must be positive and finite, got {variance}"
        )));
    }
    Ok(())
}

impl SourceModel {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        check_moments(mean, variance)?;
        Ok(SourceModel {
            family: SourceFamily::Gaussian,
            mean,
            variance,
        })
    }

    /// Zero-mean unit-variance Gaussian.
    pub fn standard_gaussian() -> Self {
        SourceModel {
            family: SourceFamily::Gaussian,
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn uniform01() -> Self {
        SourceModel {
            family: SourceFamily::Uniform01,
            mean: 0.5,
            variance: 1.0 / 12.0,
        }
    }

    /// Laplacian with density `exp(-|x - mean| / b) / (2b)` where `b = sqrt(variance / 2)`.
    pub fn laplacian(mean: f64, variance: f64) -> Result<Self> {
        check_moments(mean, variance)?;
        Ok(SourceModel {
            family: SourceFamily::Laplacian,
            mean,
            variance,
        })
    }

    /// Zero-mean unit-variance Laplacian, density `exp(-sqrt(2)|x|) / sqrt(2)`.
    pub fn unit_laplacian() -> Self {
        SourceModel {
            family: SourceFamily::Laplacian,
            mean: 0.0,
            variance: 1.0,
        }
    }

    pub fn family(&self) -> SourceFamily {
        self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    fn laplace_scale(&self) -> f64 {
        (self.variance / 2.0).sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self.family {
            SourceFamily::Uniform01 => x.clamp(0.0, 1.0),
            SourceFamily::Gaussian => {
                let z = (x - self.mean) / self.std_dev();
                0.5 * erfc(-z * FRAC_1_SQRT_2)
            }
            SourceFamily::Laplacian => {
                let t = (x - self.mean) / self.laplace_scale();
                if t < 0.0 {
                    0.5 * t.exp()
                } else {
                    1.0 - 0.5 * (-t).exp()
                }
            }
        }
    }

    /// Closed-form or rational-approximation quantile, without the final
    /// correction that enforces `cdf(q) >= u` to the last ulp.
    #[inline]
    fn raw_quantile(&self, u: f64) -> f64 {
        match self.family {
            SourceFamily::Uniform01 => u,
            SourceFamily::Gaussian => self.mean - self.std_dev() * SQRT_2 * erfc_inv(2.0 * u),
            SourceFamily::Laplacian => {
                let b = self.laplace_scale();
                if u < 0.5 {
                    self.mean + b * (2.0 * u).ln()
                } else {
                    self.mean - b * (2.0 * (1.0 - u)).ln()
                }
            }
        }
    }

    /// Generalized inverse `inf { r : F(r) >= u }` for `u` in (0, 1).
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        let mut q = self.raw_quantile(u);
        // walk up to the first float whose CDF reaches u
        let mut steps = 0;
        while self.cdf(q) < u && steps < 64 {
            q = q.next_up();
            steps += 1;
        }
        Ok(q)
    }

    /// `n` IID draws; identical `(model, n, seed)` give identical sequences.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let mut rng = rng::seeded(seed);
        Ok((0..n)
            .map(|_| self.raw_quantile(rng::open_unit(&mut rng)))
            .collect())
    }

    /// `E[X ; a < X <= b]`, used to place discretization atoms at cell centroids.
    pub fn partial_mean(&self, a: f64, b: f64) -> f64 {
        match self.family {
            SourceFamily::Uniform01 => {
                let (lo, hi) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
                0.5 * (hi * hi - lo * lo)
            }
            SourceFamily::Gaussian => {
                let sd = self.std_dev();
                let density = |x: f64| {
                    if x.is_infinite() {
                        0.0
                    } else {
                        let z = (x - self.mean) / sd;
                        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
                    }
                };
                self.mean * (self.cdf(b) - self.cdf(a)) + sd * (density(a) - density(b))
            }
            SourceFamily::Laplacian => {
                let s = self.laplace_scale();
                // antiderivative of t * f(t) for the zero-mean law
                let g = |x: f64| {
                    if x.is_infinite() {
                        0.0
                    } else if x < 0.0 {
                        0.5 * (x - s) * (x / s).exp()
                    } else {
                        -0.5 * (x + s) * (-x / s).exp()
                    }
                };
                let mass = self.cdf(b) - self.cdf(a);
                self.mean * mass + g(b - self.mean) - g(a - self.mean)
            }
        }
    }
}

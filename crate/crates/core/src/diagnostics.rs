//! Empirical checks of the necessary optimality conditions for trellis
//! encoders and rate-constrained simulators.
//!
//! Everything here is a pure function of the input slices. The report ties
//! together the moment conditions, the autocovariance of the reproduction,
//! the plug-in entropy rate of the channel bits with its Marton bound, and the
//! one-dimensional transportation cost between the output marginal and the
//! Shannon optimal reproduction law.

use serde::{Deserialize, Serialize};

use crate::codec::symbols_to_bits;
use crate::error::{Error, Result};
use crate::ratedist::ReproductionDistribution;
use crate::sources::SourceModel;

/// Empirical moments of a source/reproduction pair with `ε = x̂ − x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConditions {
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_hat: f64,
    pub var_hat: f64,
    pub cov_x_xhat: f64,
    /// `COV(X, X̂) / Var(X̂)`, which is 1 at the optimum.
    pub cov_ratio: f64,
    pub error_mean: f64,
    /// `E(ε X̂)`.
    pub error_xhat: f64,
    pub error_var: f64,
    /// `E(X̂) − E(X)`.
    pub mean_deviation: f64,
    pub ratio_deviation: f64,
    /// `Var(X̂) − (Var(X) − d_target)`.
    pub var_deviation: f64,
    /// `Var(ε) − d_target`.
    pub error_var_deviation: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Moment statistics of `(x, xhat)` and their distance from the values an
/// optimal code attains at distortion `d_target`. Variances use `1/n`.
pub fn moment_conditions(x: &[f64], xhat: &[f64], d_target: f64) -> Result<MomentConditions> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: xhat.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mean_x = mean(x);
    let mean_hat = mean(xhat);
    let (mut var_x, mut var_hat, mut cov) = (0.0, 0.0, 0.0);
    let (mut e_sum, mut e_hat) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(xhat) {
        let (da, db) = (a - mean_x, b - mean_hat);
        var_x += da * da;
        var_hat += db * db;
        cov += da * db;
        let e = b - a;
        e_sum += e;
        e_hat += e * b;
    }
    let (var_x, var_hat, cov) = (var_x / n, var_hat / n, cov / n);
    let error_mean = e_sum / n;
    let error_var = xhat
        .iter()
        .zip(x)
        .map(|(b, a)| {
            let d = b - a - error_mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let cov_ratio = cov / var_hat;
    Ok(MomentConditions {
        mean_x,
        var_x,
        mean_hat,
        var_hat,
        cov_x_xhat: cov,
        cov_ratio,
        error_mean,
        error_xhat: e_hat / n,
        error_var,
        mean_deviation: mean_hat - mean_x,
        ratio_deviation: cov_ratio - 1.0,
        var_deviation: var_hat - (var_x - d_target),
        error_var_deviation: error_var - d_target,
    })
}

/// Autocovariance at one lag, normalized by `n − lag`.
pub fn autocovariance(x: &[f64], lag: usize) -> Result<f64> {
    if lag >= x.len() {
        return Err(Error::TooShort {
            needed: lag + 1,
            got: x.len(),
        });
    }
    let m = mean(x);
    let s: f64 = x
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    Ok(s / (x.len() - lag) as f64)
}

/// One entry of a covariance sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagCovariance {
    pub lag: usize,
    pub value: f64,
}

/// `K̂(k)` for `k = 1..=max_lag`; requires `max_lag < len / 10`.
pub fn covariance_sequence(x: &[f64], max_lag: usize) -> Result<Vec<LagCovariance>> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if max_lag * 10 >= x.len() {
        return Err(Error::TooShort {
            needed: max_lag * 10 + 1,
            got: x.len(),
        });
    }
    (1..=max_lag)
        .map(|lag| {
            Ok(LagCovariance {
                lag,
                value: autocovariance(x, lag)?,
            })
        })
        .collect()
}

/// White-noise band `3 var / sqrt(n)` for sample autocovariances.
pub fn whiteness_band(variance: f64, n: usize) -> f64 {
    3.0 * variance / (n as f64).sqrt()
}

/// Largest word length `k` with `2^k <= n / 200`, at least 1.
///
/// Plug-in bias is about `2^k / (2 n k ln 2)` bits per bit, so this keeps it
/// near 2.5e-4 at `n = 10^6`.
pub fn default_word_length(n: usize) -> usize {
    let ratio = n / 200;
    if ratio < 2 {
        1
    } else {
        ratio.ilog2() as usize
    }
}

/// Empirical entropy of overlapping `word_length`-bit words divided by
/// `word_length`, in bits per bit. `bits` holds 0/1 values.
///
/// Fails unless `2^word_length <= bits.len() / 100`.
pub fn plug_in_entropy_rate(bits: &[u8], word_length: usize) -> Result<f64> {
    if word_length == 0 || word_length > 30 {
        return Err(Error::invalid(format!(
            "word length must be in 1..=30, got {word_length}"
        )));
    }
    let words = 1usize << word_length;
    if words > bits.len() / 100 {
        return Err(Error::TooShort {
            needed: words * 100,
            got: bits.len(),
        });
    }
    if let Some(i) = bits.iter().position(|&b| b > 1) {
        return Err(Error::SymbolOutOfAlphabet {
            symbol: bits[i] as u32,
            position: i,
            alphabet: 2,
        });
    }
    let mask = words - 1;
    let mut counts = vec![0u64; words];
    let mut word = 0usize;
    for (i, &b) in bits.iter().enumerate() {
        word = ((word << 1) | b as usize) & mask;
        if i + 1 >= word_length {
            counts[word] += 1;
        }
    }
    let total = (bits.len() + 1 - word_length) as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok((h / word_length as f64).clamp(0.0, 1.0))
}

/// Marton's bound on `d̄_0` to the IID equiprobable process:
/// `sqrt(ln 2 / 2 * (rate − entropy))`, with negative deficits clamped to 0.
pub fn marton_bound(rate: f64, entropy: f64) -> f64 {
    (std::f64::consts::LN_2 / 2.0 * (rate - entropy).max(0.0)).sqrt()
}

/// Squared-error transportation cost between the empirical law of `samples`
/// and `target`, by quantile coupling.
///
/// The empirical quantile is the left-continuous inverse of the empirical
/// CDF, so it takes the value `x_(i)` on `((i-1)/n, i/n]`. The integral is
/// evaluated exactly piece by piece: against the breakpoints of a discrete
/// target, or in closed form against a Gaussian quantile function.
pub fn marginal_t2(samples: &[f64], target: &ReproductionDistribution) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::TooShort {
            needed: 100,
            got: samples.len(),
        });
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    match target {
        ReproductionDistribution::Discrete(pmf) => {
            if pmf.is_empty() {
                return Err(Error::invalid("target support is empty"));
            }
            Ok(t2_discrete(&sorted, pmf.support(), pmf.cumulative()))
        }
        ReproductionDistribution::Gaussian { mean, variance } if *variance == 0.0 => {
            Ok(t2_discrete(&sorted, &[*mean], &[1.0]))
        }
        ReproductionDistribution::Gaussian { mean, variance } => {
            let sd = variance.sqrt();
            let mut total = 0.0;
            let mut lo = GaussianEdge::at(0.0)?;
            for (i, &c) in sorted.iter().enumerate() {
                let hi = GaussianEdge::at((i + 1) as f64 / n)?;
                let w = hi.u - lo.u;
                // ∫ z dΦ = φ(z_lo) − φ(z_hi);  ∫ z² dΦ = w − (z_hi φ_hi − z_lo φ_lo)
                let m1 = mean * w + sd * (lo.pdf - hi.pdf);
                let m2 = mean * mean * w
                    + 2.0 * mean * sd * (lo.pdf - hi.pdf)
                    + variance * (w - (hi.zpdf - lo.zpdf));
                total += c * c * w - 2.0 * c * m1 + m2;
                lo = hi;
            }
            Ok(total.max(0.0))
        }
    }
}

struct GaussianEdge {
    u: f64,
    pdf: f64,
    zpdf: f64,
}

impl GaussianEdge {
    fn at(u: f64) -> Result<Self> {
        if u <= 0.0 || u >= 1.0 {
            return Ok(GaussianEdge {
                u: u.clamp(0.0, 1.0),
                pdf: 0.0,
                zpdf: 0.0,
            });
        }
        let z = SourceModel::standard_gaussian().inverse_cdf(u)?;
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        Ok(GaussianEdge {
            u,
            pdf,
            zpdf: z * pdf,
        })
    }
}

fn t2_discrete(sorted: &[f64], support: &[f64], cumulative: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let (mut i, mut k) = (0usize, 0usize);
    let mut lo = 0.0;
    let mut total = 0.0;
    while i < sorted.len() && k < support.len() {
        let emp_hi = (i + 1) as f64 / n;
        let tgt_hi = if k + 1 == support.len() {
            1.0
        } else {
            cumulative[k]
        };
        let hi = emp_hi.min(tgt_hi);
        let d = sorted[i] - support[k];
        total += d * d * (hi - lo).max(0.0);
        lo = hi;
        if emp_hi <= hi {
            i += 1;
        }
        if tgt_hi <= hi {
            k += 1;
        }
    }
    total
}

/// Adjacent pairs `(x_n, x_{n+1})`.
pub fn scatter_pairs(x: &[f64]) -> Vec<(f64, f64)> {
    x.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Pearson correlation of a list of pairs; `NaN` when either side is constant.
pub fn pair_correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Summary of all diagnostics for one encoding or simulation.
///
/// Source-dependent fields are absent for simulations, which have no source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub mean_hat: f64,
    pub var_hat: f64,
    pub cov_x_xhat: Option<f64>,
    pub error_mean: Option<f64>,
    pub error_var: Option<f64>,
    /// `E(ε X̂)`.
    pub error_xhat_corr: Option<f64>,
    pub moments: Option<MomentConditions>,
    pub covariance_seq: Vec<LagCovariance>,
    pub whiteness_band: f64,
    pub white: bool,
    /// bits per symbol
    pub entropy_rate_estimate: f64,
    pub word_length: usize,
    pub marton_bound: f64,
    pub marginal_t2: f64,
}

/// Inputs to [`DiagnosticsReport::compute`].
#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsInput<'a> {
    /// Source sequence, when the reproduction came from an encoder.
    pub source: Option<&'a [f64]>,
    pub reproduction: &'a [f64],
    pub symbols: &'a [u32],
    pub rate: u32,
    /// Distortion an optimal code would reach, used by the moment targets.
    pub d_target: f64,
    pub target: &'a ReproductionDistribution,
    pub max_lag: usize,
    /// Defaults to [`default_word_length`] of the bit count.
    pub word_length: Option<usize>,
}

impl DiagnosticsReport {
    pub fn compute(input: &DiagnosticsInput<'_>) -> Result<Self> {
        let xhat = input.reproduction;
        if xhat.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: xhat.len(),
            });
        }
        let moments = input
            .source
            .map(|x| moment_conditions(x, xhat, input.d_target))
            .transpose()?;
        let mean_hat = mean(xhat);
        let var_hat = xhat
            .iter()
            .map(|v| (v - mean_hat) * (v - mean_hat))
            .sum::<f64>()
            / xhat.len() as f64;
        let covariance_seq = covariance_sequence(xhat, input.max_lag)?;
        let band = whiteness_band(var_hat, xhat.len());
        let bits = symbols_to_bits(input.symbols, input.rate);
        let word_length = input
            .word_length
            .unwrap_or_else(|| default_word_length(bits.len()));
        let per_bit = plug_in_entropy_rate(&bits, word_length)?;
        let rate = input.rate as f64;
        let entropy = per_bit * rate;
        Ok(DiagnosticsReport {
            mean_hat,
            var_hat,
            cov_x_xhat: moments.as_ref().map(|m| m.cov_x_xhat),
            error_mean: moments.as_ref().map(|m| m.error_mean),
            error_var: moments.as_ref().map(|m| m.error_var),
            error_xhat_corr: moments.as_ref().map(|m| m.error_xhat),
            moments,
            white: covariance_seq.iter().all(|c| c.value.abs() <= band),
            covariance_seq,
            whiteness_band: band,
            entropy_rate_estimate: entropy,
            word_length,
            marton_bound: marton_bound(rate, entropy),
            marginal_t2: marginal_t2(xhat, input.target)?,
        })
    }
}

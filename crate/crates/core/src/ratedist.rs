//! First-order distortion-rate values and Shannon optimal reproduction laws
//! for squared-error distortion.
//!
//! The Gaussian case is analytic. For the uniform and Laplacian sources the
//! source is discretized onto a fine grid, the Blahut-Arimoto iteration is run
//! at a Lagrange slope tuned by bisection to hit the target rate, and the
//! resulting reproduction mass is clustered into its finitely many atoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sources::{SourceFamily, SourceModel};

const PMF_SUM_TOL: f64 = 1e-9;

/// Finitely supported reproduction law.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePmf {
    support: Vec<f64>,
    pmf: Vec<f64>,
    // normalized running sums, last entry exactly 1
    cumulative: Vec<f64>,
}

impl DiscretePmf {
    /// Validates a support/PMF pair: strictly increasing finite support,
    /// strictly positive masses summing to one within 1e-9.
    pub fn new(support: Vec<f64>, pmf: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid(
                "discrete reproduction needs at least one atom",
            ));
        }
        if support.len() != pmf.len() {
            return Err(Error::LengthMismatch {
                left: support.len(),
                right: pmf.len(),
            });
        }
        if support.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("support points must be finite"));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("support must be strictly increasing"));
        }
        if pmf.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::invalid("probabilities must be strictly positive"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = pmf
            .iter()
            .map(|p| {
                running += p;
                running / total
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(DiscretePmf {
            support,
            pmf,
            cumulative,
        })
    }

    /// Like [`DiscretePmf::new`] but rescales the masses to sum to one first.
    pub fn normalized(support: Vec<f64>, mut pmf: Vec<f64>) -> Result<Self> {
        let total: f64 = pmf.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::invalid("total mass must be positive"));
        }
        pmf.iter_mut().for_each(|p| *p /= total);
        Self::new(support, pmf)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.pmf).map(|(y, p)| y * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.support
            .iter()
            .zip(&self.pmf)
            .map(|(y, p)| p * (y - m) * (y - m))
            .sum()
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.support.partition_point(|&s| s <= x) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        // first atom whose cumulative mass reaches u; exact boundaries pick the lower atom
        let k = self.cumulative.partition_point(|&c| c < u);
        self.support[k.min(self.support.len() - 1)]
    }
}

/// Shannon optimal reproduction law: discrete, or Gaussian for Gaussian sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReproductionDocument", into = "ReproductionDocument")]
pub enum ReproductionDistribution {
    Discrete(DiscretePmf),
    Gaussian { mean: f64, variance: f64 },
}

/// JSON form: `{kind, support[], pmf[], mean, variance}`.
#[derive(Serialize, Deserialize)]
struct ReproductionDocument {
    kind: String,
    #[serde(default)]
    support: Vec<f64>,
    #[serde(default)]
    pmf: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl TryFrom<ReproductionDocument> for ReproductionDistribution {
    type Error = Error;

    fn try_from(doc: ReproductionDocument) -> Result<Self> {
        match doc.kind.as_str() {
            "DiscretePMF" => Ok(ReproductionDistribution::Discrete(DiscretePmf::new(
                doc.support,
                doc.pmf,
            )?)),
            "GaussianCDF" => ReproductionDistribution::gaussian(doc.mean, doc.variance),
            other => Err(Error::invalid(format!(
                "unknown reproduction kind {other:?}"
            ))),
        }
    }
}

impl From<ReproductionDistribution> for ReproductionDocument {
    fn from(dist: ReproductionDistribution) -> Self {
        let (mean, variance) = (dist.mean(), dist.variance());
        match dist {
            ReproductionDistribution::Discrete(d) => ReproductionDocument {
                kind: "DiscretePMF".into(),
                support: d.support,
                pmf: d.pmf,
                mean,
                variance,
            },
            ReproductionDistribution::Gaussian { .. } => ReproductionDocument {
                kind: "GaussianCDF".into(),
                support: Vec::new(),
                pmf: Vec::new(),
                mean,
                variance,
            },
        }
    }
}

impl ReproductionDistribution {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid(format!(
                "Gaussian reproduction needs finite mean and variance >= 0, got ({mean}, {variance})"
            )));
        }
        Ok(ReproductionDistribution::Gaussian { mean, variance })
    }

    pub fn discrete(support: Vec<f64>, pmf: Vec<f64>) -> Result<Self> {
        Ok(ReproductionDistribution::Discrete(DiscretePmf::new(
            support, pmf,
        )?))
    }

    pub fn as_discrete(&self) -> Option<&DiscretePmf> {
        match self {
            ReproductionDistribution::Discrete(d) => Some(d),
            ReproductionDistribution::Gaussian { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ReproductionDistribution::Discrete(d) => d.mean(),
            ReproductionDistribution::Gaussian { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ReproductionDistribution::Discrete(d) => d.variance(),
            ReproductionDistribution::Gaussian { variance, .. } => *variance,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReproductionDistribution::Discrete(d) => d.cdf(x),
            ReproductionDistribution::Gaussian { mean, variance } => {
                if *variance == 0.0 {
                    if x >= *mean {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    SourceModel::gaussian(*mean, *variance)
                        .expect("validated at construction")
                        .cdf(x)
                }
            }
        }
    }

    /// Generalized inverse `inf { y : F(y) >= u }` for `u` in (0, 1).
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        match self {
            ReproductionDistribution::Discrete(d) => Ok(d.quantile(u)),
            ReproductionDistribution::Gaussian { mean, variance } => {
                if *variance == 0.0 {
                    Ok(*mean)
                } else {
                    SourceModel::gaussian(*mean, *variance)
                        .expect("validated at construction")
                        .inverse_cdf(u)
                }
            }
        }
    }
}

/// A point on a distortion-rate curve with the reproduction law achieving it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// bits per symbol
    pub rate: f64,
    /// mean squared error
    pub distortion: f64,
    pub reproduction: ReproductionDistribution,
}

/// `D(R) = variance * 2^(-2R)` with a zero-mean Gaussian reproduction of
/// variance `variance - D(R)`.
pub fn gaussian_distortion_rate(variance: f64, rate: f64) -> Result<RdPoint> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "variance must be positive, got {variance}"
        )));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!(
            "rate must be non-negative, got {rate}"
        )));
    }
    let distortion = variance * (-2.0 * rate).exp2();
    Ok(RdPoint {
        rate,
        distortion,
        reproduction: ReproductionDistribution::gaussian(0.0, variance - distortion)?,
    })
}

/// A discretized source: atoms and their probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Resolution of the source discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    /// Half-width in standard deviations for families with unbounded support.
    pub half_width_sd: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 2000,
            half_width_sd: 8.0,
        }
    }
}

impl SourceGrid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("source grid needs at least two points"));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: weights.len(),
            });
        }
        if points.windows(2).any(|w| w[0] >= w[1]) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(
                "grid points must be finite and strictly increasing",
            ));
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::invalid("grid weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::invalid(format!(
                "grid weights sum to {total}, expected 1"
            )));
        }
        Ok(SourceGrid { points, weights })
    }

    /// Partitions the support into `spec.points` equal cells (the two end cells of
    /// unbounded families absorb the tails) and places each atom at its cell's
    /// conditional mean with the cell's probability.
    pub fn discretize(model: &SourceModel, spec: &GridSpec) -> Result<Self> {
        if spec.points < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        let m = spec.points;
        let (lo, hi) = match model.family() {
            SourceFamily::Uniform01 => (0.0, 1.0),
            _ => {
                let w = spec.half_width_sd * model.std_dev();
                (model.mean() - w, model.mean() + w)
            }
        };
        let step = (hi - lo) / m as f64;
        let edge = |i: usize| -> f64 {
            match (i, model.family()) {
                (0, SourceFamily::Uniform01) => 0.0,
                (0, _) => f64::NEG_INFINITY,
                (i, SourceFamily::Uniform01) if i == m => 1.0,
                (i, _) if i == m => f64::INFINITY,
                (i, _) => lo + step * i as f64,
            }
        };
        let cell = |a: f64, b: f64, fallback: f64| -> (f64, f64) {
            let mass = model.cdf(b) - model.cdf(a);
            if mass > 0.0 {
                ((model.partial_mean(a, b) / mass).clamp(a, b), mass)
            } else {
                (fallback, 0.0)
            }
        };
        let symmetric = model.family() != SourceFamily::Uniform01;
        let mu = model.mean();
        let mut points = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 0..m {
            let (a, b) = (edge(i), edge(i + 1));
            let mid = lo + step * (i as f64 + 0.5);
            // upper-tail cells are evaluated in the mirrored lower tail, where
            // the CDF has full relative precision
            let (centre, mass) = if symmetric && a >= mu {
                let (c, w) = cell(2.0 * mu - b, 2.0 * mu - a, 2.0 * mu - mid);
                (2.0 * mu - c, w)
            } else {
                cell(a, b, mid)
            };
            points.push(centre);
            weights.push(mass);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        SourceGrid::new(points, weights)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    /// Median spacing between neighbouring points.
    pub fn step(&self) -> f64 {
        let mut gaps: Vec<f64> = self.points.windows(2).map(|w| w[1] - w[0]).collect();
        let mid = gaps.len() / 2;
        *gaps.select_nth_unstable_by(mid, f64::total_cmp).1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlahutOptions {
    pub max_iter: usize,
    /// Stop once the upper/lower rate bound gap falls below this many bits.
    pub tol: f64,
    /// Reproduction atoms whose mass falls below this are dropped from the
    /// active set; they are re-admitted if the optimality check asks for them.
    pub active_floor: f64,
}

impl Default for BlahutOptions {
    fn default() -> Self {
        BlahutOptions {
            max_iter: 200_000,
            tol: 1e-7,
            active_floor: 1e-14,
        }
    }
}

/// Fixed point of the Blahut-Arimoto iteration at one Lagrange slope.
#[derive(Clone, Debug, PartialEq)]
pub struct BlahutOutcome {
    pub beta: f64,
    /// bits per symbol
    pub rate: f64,
    pub distortion: f64,
    /// Reproduction probabilities over the grid points.
    pub pmf: Vec<f64>,
    pub iterations: usize,
    /// Final upper minus lower rate bound, bits.
    pub gap: f64,
    /// `rate + beta * distortion` in nats after each iteration.
    pub lagrangian: Vec<f64>,
}

/// Row-major `exp(-beta (x_i - x_j)^2)`; symmetric because the reproduction
/// alphabet is the source grid.
struct Kernel {
    m: usize,
    values: Vec<f64>,
}

impl Kernel {
    fn new(points: &[f64], beta: f64) -> Self {
        let m = points.len();
        let mut values = vec![0.0; m * m];
        for (i, &xi) in points.iter().enumerate() {
            let row = &mut values[i * m..(i + 1) * m];
            for (j, &xj) in points.iter().enumerate().skip(i) {
                let v = (-beta * (xi - xj) * (xi - xj)).exp();
                row[j] = v;
            }
        }
        for i in 0..m {
            for j in 0..i {
                values[i * m + j] = values[j * m + i];
            }
        }
        Kernel { m, values }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }
}

/// Blahut-Arimoto iteration for squared error at slope `-beta` (nats per unit
/// distortion), reproduction alphabet equal to the source grid.
pub fn blahut(
    grid: &SourceGrid,
    beta: f64,
    init_pmf: &[f64],
    options: &BlahutOptions,
) -> Result<BlahutOutcome> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if init_pmf.len() != grid.len() {
        return Err(Error::LengthMismatch {
            left: init_pmf.len(),
            right: grid.len(),
        });
    }
    let init_total: f64 = init_pmf.iter().sum();
    if init_total.is_nan() || init_total <= 0.0 || init_pmf.iter().any(|&q| q.is_nan() || q < 0.0) {
        return Err(Error::invalid(
            "initial reproduction pmf must be non-negative with positive mass",
        ));
    }
    let kernel = Kernel::new(&grid.points, beta);
    let mut state = BlahutState::new(grid, &kernel, init_pmf, options.active_floor);
    let tol_nats = options.tol * std::f64::consts::LN_2;
    let mut lagrangian = Vec::new();
    let mut gap = f64::INFINITY;

    for iter in 1..=options.max_iter {
        let (objective, active_gap) = state.step();
        lagrangian.push(objective);
        gap = active_gap;
        if active_gap < tol_nats {
            let full_gap = state.full_gap(tol_nats);
            gap = full_gap;
            if full_gap < tol_nats {
                let (rate_nats, distortion) = state.rate_distortion(beta);
                return Ok(BlahutOutcome {
                    beta,
                    rate: rate_nats / std::f64::consts::LN_2,
                    distortion,
                    pmf: state.q,
                    iterations: iter,
                    gap: gap / std::f64::consts::LN_2,
                    lagrangian,
                });
            }
        }
    }
    Err(Error::NotConverged {
        iterations: options.max_iter,
        gap: gap / std::f64::consts::LN_2,
    })
}

/// Runs exactly `iterations` Blahut updates and returns the reproduction pmf,
/// converged or not. Used to seed support searches.
pub fn blahut_iterations(
    grid: &SourceGrid,
    beta: f64,
    init_pmf: &[f64],
    iterations: usize,
) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if init_pmf.len() != grid.len() {
        return Err(Error::LengthMismatch {
            left: init_pmf.len(),
            right: grid.len(),
        });
    }
    let kernel = Kernel::new(&grid.points, beta);
    let mut state = BlahutState::new(grid, &kernel, init_pmf, 0.0);
    for _ in 0..iterations {
        state.step();
    }
    Ok(state.q)
}

/// Cuts `pmf` at its local minima and returns each piece's centroid and mass.
pub fn valley_atoms(points: &[f64], pmf: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    let (mut mass, mut moment) = (0.0, 0.0);
    for i in 0..pmf.len() {
        let valley = i > 0 && i + 1 < pmf.len() && pmf[i] < pmf[i - 1] && pmf[i] <= pmf[i + 1];
        if valley && mass > 0.0 {
            support.push(moment / mass);
            weights.push(mass);
            mass = 0.0;
            moment = 0.0;
        }
        mass += pmf[i];
        moment += pmf[i] * points[i];
    }
    if mass > 0.0 {
        support.push(moment / mass);
        weights.push(mass);
    }
    (support, weights)
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

struct BlahutState<'a> {
    grid: &'a SourceGrid,
    kernel: &'a Kernel,
    q: Vec<f64>,
    active: Vec<usize>,
    floor: f64,
    z: Vec<f64>,
    w: Vec<f64>,
    c: Vec<f64>,
}

impl<'a> BlahutState<'a> {
    fn new(grid: &'a SourceGrid, kernel: &'a Kernel, init: &[f64], floor: f64) -> Self {
        let total: f64 = init.iter().sum();
        let q: Vec<f64> = init.iter().map(|v| v / total).collect();
        let active = (0..q.len()).filter(|&i| q[i] > 0.0).collect();
        let m = grid.len();
        BlahutState {
            grid,
            kernel,
            q,
            active,
            floor,
            z: vec![0.0; m],
            w: vec![0.0; m],
            c: vec![0.0; m],
        }
    }

    /// Fills `z[x] = sum_y q_y K(x, y)` and `w[x] = p_x / z[x]`; returns the
    /// Lagrangian `-sum_x p_x ln z[x]`.
    fn refresh_partition(&mut self) -> f64 {
        let mut objective = 0.0;
        let dense = self.active.len() * 4 > self.grid.len();
        for x in 0..self.grid.len() {
            let row = self.kernel.row(x);
            let zx: f64 = if dense {
                dot(row, &self.q)
            } else {
                self.active.iter().map(|&y| self.q[y] * row[y]).sum()
            };
            let px = self.grid.weights[x];
            self.z[x] = zx;
            if px > 0.0 {
                // an atom that no active reproduction point can reach
                let zx = zx.max(f64::MIN_POSITIVE);
                self.w[x] = px / zx;
                objective -= px * zx.ln();
            } else {
                self.w[x] = 0.0;
            }
        }
        objective
    }

    fn coefficient(&self, y: usize) -> f64 {
        dot(self.kernel.row(y), &self.w)
    }

    /// One multiplicative update. Returns the Lagrangian before the update and
    /// the active-set bound gap (nats).
    fn step(&mut self) -> (f64, f64) {
        let objective = self.refresh_partition();
        let mut max_log = f64::NEG_INFINITY;
        let mut mean_log = 0.0;
        for &y in &self.active {
            let cy = self.coefficient(y);
            self.c[y] = cy;
            let l = cy.ln();
            max_log = max_log.max(l);
            mean_log += self.q[y] * cy * l;
        }
        let gap = max_log - mean_log;

        let mut total = 0.0;
        for &y in &self.active {
            self.q[y] *= self.c[y];
            total += self.q[y];
        }
        let floor = self.floor;
        let q = &mut self.q;
        self.active.retain(|&y| {
            q[y] /= total;
            if q[y] < floor {
                q[y] = 0.0;
                false
            } else {
                true
            }
        });
        let kept: f64 = self.active.iter().map(|&y| self.q[y]).sum();
        for &y in &self.active {
            self.q[y] /= kept;
        }
        (objective, gap)
    }

    /// Bound gap over the whole grid with the current `q`. Re-admits atoms the
    /// active-set iteration wrongly discarded.
    fn full_gap(&mut self, tol: f64) -> f64 {
        self.refresh_partition();
        let mut max_log = f64::NEG_INFINITY;
        let mut mean_log = 0.0;
        let mut readmit = Vec::new();
        for y in 0..self.grid.len() {
            let cy = self.coefficient(y);
            let l = cy.ln();
            max_log = max_log.max(l);
            if self.q[y] > 0.0 {
                mean_log += self.q[y] * cy * l;
            } else if l > tol {
                readmit.push(y);
            }
        }
        let gap = max_log - mean_log;
        if gap >= tol && !readmit.is_empty() {
            let seed_mass = self.floor * 1e3;
            for y in readmit {
                self.q[y] = seed_mass;
                self.active.push(y);
            }
            self.active.sort_unstable();
            let total: f64 = self.active.iter().map(|&y| self.q[y]).sum();
            for &y in &self.active {
                self.q[y] /= total;
            }
        }
        gap
    }

    /// Rate (nats) and distortion of the test channel induced by the current
    /// `q` at slope `beta`; the rate is the Lagrangian less `beta D`.
    fn rate_distortion(&mut self, beta: f64) -> (f64, f64) {
        let objective = self.refresh_partition();
        let pts = &self.grid.points;
        let mut distortion = 0.0;
        for x in 0..self.grid.len() {
            if self.grid.weights[x] == 0.0 {
                continue;
            }
            let row = self.kernel.row(x);
            let inner: f64 = self
                .active
                .iter()
                .map(|&y| {
                    let d = pts[x] - pts[y];
                    self.q[y] * row[y] * d * d
                })
                .sum();
            distortion += self.w[x] * inner;
        }
        (objective - beta * distortion, distortion)
    }
}

/// A Blahut point whose rate was tuned to a target.
#[derive(Clone, Debug, PartialEq)]
pub struct TunedPoint {
    pub outcome: BlahutOutcome,
    pub bisections: usize,
}

/// Finds the slope whose Blahut point has `|rate - target| <= rate_tol` bits.
///
/// The slope is bracketed by doubling from the Gaussian-bound guess
/// `1 / (2 sigma^2 2^(-2R))`, then bisected geometrically (at most 60 halvings).
pub fn tune_beta(
    grid: &SourceGrid,
    target_rate: f64,
    rate_tol: f64,
    options: &BlahutOptions,
) -> Result<TunedPoint> {
    if target_rate.is_nan() || target_rate <= 0.0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    let mean = grid.mean();
    let variance: f64 = grid
        .points
        .iter()
        .zip(&grid.weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum();
    let mut beta = 1.0 / (2.0 * variance * (-2.0 * target_rate).exp2());
    let uniform = vec![1.0 / grid.len() as f64; grid.len()];

    let mut warm = uniform.clone();
    let run = |beta: f64, warm: &mut Vec<f64>| -> Result<BlahutOutcome> {
        // keep a trace of every atom so the warm start can move its support
        let init: Vec<f64> = warm.iter().map(|q| q + 1e-9).collect();
        let out = blahut(grid, beta, &init, options)?;
        warm.clone_from(&out.pmf);
        Ok(out)
    };

    let mut first = run(beta, &mut warm)?;
    if (first.rate - target_rate).abs() <= rate_tol {
        return Ok(TunedPoint {
            outcome: first,
            bisections: 0,
        });
    }
    let (mut lo, mut hi);
    let mut expansions = 0;
    if first.rate < target_rate {
        lo = beta;
        loop {
            beta *= 2.0;
            expansions += 1;
            let out = run(beta, &mut warm)?;
            if (out.rate - target_rate).abs() <= rate_tol {
                return Ok(TunedPoint {
                    outcome: out,
                    bisections: 0,
                });
            }
            if out.rate > target_rate {
                hi = beta;
                break;
            }
            lo = beta;
            if expansions >= 60 {
                return Err(Error::RateNotBracketed {
                    target: target_rate,
                    last_rate: out.rate,
                    last_beta: beta,
                });
            }
        }
    } else {
        hi = beta;
        loop {
            beta /= 2.0;
            expansions += 1;
            let out = run(beta, &mut warm)?;
            if (out.rate - target_rate).abs() <= rate_tol {
                return Ok(TunedPoint {
                    outcome: out,
                    bisections: 0,
                });
            }
            if out.rate < target_rate {
                lo = beta;
                break;
            }
            hi = beta;
            if expansions >= 60 {
                return Err(Error::RateNotBracketed {
                    target: target_rate,
                    last_rate: out.rate,
                    last_beta: beta,
                });
            }
        }
    }

    for bisections in 1..=60 {
        let mid = (lo * hi).sqrt();
        first = run(mid, &mut warm)?;
        if (first.rate - target_rate).abs() <= rate_tol {
            return Ok(TunedPoint {
                outcome: first,
                bisections,
            });
        }
        if first.rate < target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::RateNotBracketed {
        target: target_rate,
        last_rate: first.rate,
        last_beta: first.beta,
    })
}

/// Drops grid atoms lighter than `prune_threshold`, merges runs of
/// grid-adjacent survivors into their probability-weighted centroids and
/// renormalizes.
pub fn cluster_atoms(points: &[f64], pmf: &[f64], prune_threshold: f64) -> Result<DiscretePmf> {
    if points.len() != pmf.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: pmf.len(),
        });
    }
    let mut support = Vec::new();
    let mut masses = Vec::new();
    let mut run: Option<(usize, f64, f64)> = None; // (last index, mass, first moment)
    for (i, (&y, &p)) in points.iter().zip(pmf).enumerate() {
        if p < prune_threshold || p <= 0.0 {
            continue;
        }
        run = match run {
            Some((last, mass, moment)) if i == last + 1 => Some((i, mass + p, moment + p * y)),
            Some((_, mass, moment)) => {
                support.push(moment / mass);
                masses.push(mass);
                Some((i, p, p * y))
            }
            None => Some((i, p, p * y)),
        };
    }
    if let Some((_, mass, moment)) = run {
        support.push(moment / mass);
        masses.push(mass);
    }
    DiscretePmf::normalized(support, masses)
}

/// Merges sorted atoms separated by less than `min_gap` into their centroids,
/// then drops clusters lighter than `prune_threshold` and renormalizes. The
/// heaviest cluster always survives.
pub fn merge_atoms(
    support: &[f64],
    weights: &[f64],
    min_gap: f64,
    prune_threshold: f64,
) -> Result<DiscretePmf> {
    if support.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: support.len(),
            right: weights.len(),
        });
    }
    let mut atoms: Vec<(f64, f64)> = support
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|a| a.1 > 0.0)
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clusters: Vec<(f64, f64, f64)> = Vec::new(); // (last position, mass, first moment)
    for (y, w) in atoms {
        match clusters.last_mut() {
            Some(c) if y - c.0 < min_gap => {
                c.0 = y;
                c.1 += w;
                c.2 += w * y;
            }
            _ => clusters.push((y, w, w * y)),
        }
    }
    let heaviest = clusters.iter().map(|c| c.1).fold(0.0, f64::max);
    let (support, masses): (Vec<f64>, Vec<f64>) = clusters
        .into_iter()
        .filter(|c| c.1 >= prune_threshold || c.1 == heaviest)
        .map(|c| (c.2 / c.1, c.1))
        .unzip();
    DiscretePmf::normalized(support, masses)
}

// below the default prune threshold, so an inserted atom only shows up in a
// reported law if the iteration grows it
const INSERTED_MASS: f64 = 1e-7;

/// Settings for the free-support refinement in [`refine_support`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iter: usize,
    /// Fixed point reached once an update lowers the Lagrangian by less than
    /// this many nats, or no atom moves or changes mass by more than this.
    pub tol: f64,
    /// Atoms closer than this are merged into their centroid.
    pub merge_distance: f64,
    /// Atoms lighter than this are dropped while iterating.
    pub drop_mass: f64,
    /// Accept the solution when `max_y ln c(y)` over the grid is below this (nats).
    pub certificate_tol: f64,
    /// Cap on rounds of optimality-driven atom insertion.
    pub max_insertions: usize,
    /// Cap on atoms inserted per round. Atoms go in at every local maximum of
    /// `ln c` within a factor four of the largest violation.
    pub insertions_per_round: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iter: 100_000,
            tol: 1e-10,
            merge_distance: 1e-3,
            drop_mass: 1e-9,
            certificate_tol: 1e-5,
            max_insertions: 60,
            insertions_per_round: 64,
        }
    }
}

/// Reproduction atoms with free positions at one Lagrange slope.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedPoint {
    pub beta: f64,
    /// bits per symbol
    pub rate: f64,
    pub distortion: f64,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
    /// Largest `ln c(y)` over the grid at the returned solution (nats).
    pub certificate: f64,
    pub iterations: usize,
}

/// Posterior-weighted centroid iteration with free atom positions, followed by
/// a grid-wide check of the optimality condition `c(y) <= 1`. Wherever the
/// condition fails (at each local maximum of `c`) a new atom is inserted and
/// the iteration resumes, so the returned support is optimal for the
/// discretized source up to `certificate_tol`.
pub fn refine_support(
    grid: &SourceGrid,
    beta: f64,
    support: &[f64],
    weights: &[f64],
    options: &RefineOptions,
) -> Result<RefinedPoint> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if support.is_empty() || support.len() != weights.len() {
        return Err(Error::invalid(
            "refinement needs a non-empty support with matching weights",
        ));
    }
    let mut atoms: Vec<(f64, f64)> = support
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if atoms.is_empty() {
        return Err(Error::invalid("refinement needs positive weights"));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    normalize_atoms(&mut atoms);

    let mut iterations = 0;
    let mut rounds = 0;
    loop {
        iterations += centroid_fixed_point(grid, beta, &mut atoms, options);
        let log_c = log_coefficients(grid, beta, &atoms);
        let certificate = log_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut inserted = false;
        if certificate > options.certificate_tol && rounds < options.max_insertions {
            rounds += 1;
            let m = log_c.len();
            let spacing = 3.0 * (grid.points[m - 1] - grid.points[0]) / m as f64;
            let mut sites: Vec<(f64, f64)> = Vec::new();
            for j in 0..m {
                let l = log_c[j];
                let left = if j > 0 {
                    log_c[j - 1]
                } else {
                    f64::NEG_INFINITY
                };
                let right = if j + 1 < m {
                    log_c[j + 1]
                } else {
                    f64::NEG_INFINITY
                };
                if l > options.certificate_tol && l >= left && l > right {
                    let y = grid.points[j];
                    let pos = atoms.partition_point(|&(s, _)| s < y);
                    // violations next to an atom mean it has not finished moving
                    let near = |k: usize| atoms.get(k).is_some_and(|a| (a.0 - y).abs() < spacing);
                    if !(near(pos) || (pos > 0 && near(pos - 1))) {
                        sites.push((l, y));
                    }
                }
            }
            sites.sort_by(|a, b| b.0.total_cmp(&a.0));
            let strong = 0.25 * certificate;
            for &(_, y) in sites
                .iter()
                .filter(|s| s.0 >= strong)
                .take(options.insertions_per_round)
            {
                let pos = atoms.partition_point(|&(s, _)| s < y);
                atoms.insert(pos, (y, INSERTED_MASS));
                inserted = true;
            }
        }
        if !inserted {
            let (rate, distortion) = atoms_rate_distortion(grid, beta, &atoms);
            let (support, weights) = atoms.into_iter().unzip();
            return Ok(RefinedPoint {
                beta,
                rate: rate / std::f64::consts::LN_2,
                distortion,
                support,
                weights,
                certificate,
                iterations,
            });
        }
        normalize_atoms(&mut atoms);
    }
}

fn normalize_atoms(atoms: &mut [(f64, f64)]) {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    atoms.iter_mut().for_each(|a| a.1 /= total);
}

/// Posterior over atoms for source point `x`, written into `post`; returns
/// `ln Z(x)`.
#[inline]
fn posterior(x: f64, beta: f64, atoms: &[(f64, f64)], post: &mut [f64]) -> f64 {
    let mut top = f64::NEG_INFINITY;
    for (slot, &(y, w)) in post.iter_mut().zip(atoms) {
        let a = w.ln() - beta * (x - y) * (x - y);
        *slot = a;
        top = top.max(a);
    }
    let mut z = 0.0;
    for slot in post.iter_mut() {
        *slot = (*slot - top).exp();
        z += *slot;
    }
    post.iter_mut().for_each(|p| *p /= z);
    top + z.ln()
}

/// One centroid update: every atom moves to the posterior mean of the source
/// points it explains and takes their posterior mass. Atoms lighter than
/// `drop_mass` vanish and atoms closer than `merge_distance` fuse. Returns the
/// Lagrangian `-sum_x p_x ln Z(x)` of the input atoms.
fn centroid_step(
    grid: &SourceGrid,
    beta: f64,
    atoms: &[(f64, f64)],
    options: &RefineOptions,
    next: &mut Vec<(f64, f64)>,
) -> f64 {
    let k = atoms.len();
    let mut post = vec![0.0; k];
    let mut mass = vec![0.0; k];
    let mut moment = vec![0.0; k];
    let mut objective = 0.0;
    for (&x, &p) in grid.points.iter().zip(&grid.weights) {
        if p == 0.0 {
            continue;
        }
        objective -= p * posterior(x, beta, atoms, &mut post);
        for j in 0..k {
            let r = p * post[j];
            mass[j] += r;
            moment[j] += r * x;
        }
    }
    next.clear();
    for j in 0..k {
        if mass[j] >= options.drop_mass {
            next.push((moment[j] / mass[j], mass[j]));
        }
    }
    next.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(next.len());
    for &(y, w) in next.iter() {
        match merged.last_mut() {
            Some(last) if y - last.0 < options.merge_distance => {
                let total = last.1 + w;
                last.0 = (last.0 * last.1 + y * w) / total;
                last.1 = total;
            }
            _ => merged.push((y, w)),
        }
    }
    normalize_atoms(&mut merged);
    *next = merged;
    objective
}

/// Largest change between two atom sets of equal size: mass changes, and
/// position changes weighted by root mass so dying atoms do not hold up
/// convergence.
fn atom_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| ((u.0 - v.0).abs() * u.1.max(v.1).sqrt()).max((u.1 - v.1).abs()))
        .fold(0.0, f64::max)
}

/// Iterates [`centroid_step`] to a fixed point, with squared extrapolation
/// (SQUAREM) over positions and log-masses to get through the slow linear
/// convergence of light tail atoms. Returns the number of updates.
fn centroid_fixed_point(
    grid: &SourceGrid,
    beta: f64,
    atoms: &mut Vec<(f64, f64)>,
    options: &RefineOptions,
) -> usize {
    let mut a1 = Vec::new();
    let mut a2 = Vec::new();
    let mut a3 = Vec::new();
    let mut updates = 0;
    while updates < options.max_iter {
        let f0 = centroid_step(grid, beta, atoms, options, &mut a1);
        updates += 1;
        if a1.len() != atoms.len() {
            std::mem::swap(atoms, &mut a1);
            continue;
        }
        if atom_distance(atoms, &a1) < options.tol {
            std::mem::swap(atoms, &mut a1);
            return updates;
        }
        let f1 = centroid_step(grid, beta, &a1, options, &mut a2);
        updates += 1;
        if a2.len() != a1.len() {
            std::mem::swap(atoms, &mut a2);
            continue;
        }
        // r = a1 - a0, v = a2 - 2 a1 + a0 in (position, log-mass) coordinates
        let coords = |a: &(f64, f64)| [a.0, a.1.ln()];
        let (mut rr, mut vv) = (0.0, 0.0);
        for ((x0, x1), x2) in atoms.iter().zip(&a1).zip(&a2) {
            let (c0, c1, c2) = (coords(x0), coords(x1), coords(x2));
            for d in 0..2 {
                let r = c1[d] - c0[d];
                let v = c2[d] - 2.0 * c1[d] + c0[d];
                rr += r * r;
                vv += v * v;
            }
        }
        let alpha = if vv > 0.0 { -(rr / vv).sqrt() } else { -1.0 };
        let alpha = alpha.min(-1.0);
        let mut jump: Vec<(f64, f64)> = atoms
            .iter()
            .zip(&a1)
            .zip(&a2)
            .map(|((x0, x1), x2)| {
                let (c0, c1, c2) = (coords(x0), coords(x1), coords(x2));
                let e = |d: usize| {
                    let r = c1[d] - c0[d];
                    let v = c2[d] - 2.0 * c1[d] + c0[d];
                    c0[d] - 2.0 * alpha * r + alpha * alpha * v
                };
                (e(0), e(1).exp())
            })
            .collect();
        let ordered = jump.windows(2).all(|w| w[0].0 < w[1].0);
        let finite = jump
            .iter()
            .all(|a| a.0.is_finite() && a.1 > 0.0 && a.1.is_finite());
        if alpha < -1.0 && ordered && finite {
            normalize_atoms(&mut jump);
            let f_jump = centroid_step(grid, beta, &jump, options, &mut a3);
            updates += 1;
            if f_jump <= f1 {
                let done = f0 - f_jump < options.tol
                    || (a3.len() == atoms.len() && atom_distance(atoms, &a3) < options.tol);
                std::mem::swap(atoms, &mut a3);
                if done {
                    return updates;
                }
                continue;
            }
        }
        std::mem::swap(atoms, &mut a2);
        if f0 - f1 < options.tol {
            return updates;
        }
    }
    updates
}

/// `ln c(y)` at every grid point, `c(y) = sum_x p_x exp(-beta (x-y)^2) / Z(x)`,
/// accumulated in the log domain because `Z(x)` underflows in the tails.
fn log_coefficients(grid: &SourceGrid, beta: f64, atoms: &[(f64, f64)]) -> Vec<f64> {
    let mut post = vec![0.0; atoms.len()];
    let terms: Vec<(f64, f64)> = grid
        .points
        .iter()
        .zip(&grid.weights)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&x, &p)| (x, p.ln() - posterior(x, beta, atoms, &mut post)))
        .collect();
    grid.points
        .iter()
        .map(|&y| {
            let top = terms
                .iter()
                .map(|&(x, a)| a - beta * (x - y) * (x - y))
                .fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = terms
                .iter()
                .map(|&(x, a)| (a - beta * (x - y) * (x - y) - top).exp())
                .sum();
            top + sum.ln()
        })
        .collect()
}

/// Rate (nats) and distortion of the test channel induced by `atoms`.
fn atoms_rate_distortion(grid: &SourceGrid, beta: f64, atoms: &[(f64, f64)]) -> (f64, f64) {
    let mut post = vec![0.0; atoms.len()];
    let mut distortion = 0.0;
    let mut log_z = 0.0;
    for (&x, &p) in grid.points.iter().zip(&grid.weights) {
        if p == 0.0 {
            continue;
        }
        log_z += p * posterior(x, beta, atoms, &mut post);
        let d: f64 = post
            .iter()
            .zip(atoms)
            .map(|(q, &(y, _))| q * (x - y) * (x - y))
            .sum();
        distortion += p * d;
    }
    (-beta * distortion - log_z, distortion)
}

/// Settings for [`find_shannon_reproduction`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSearch {
    pub grid: GridSpec,
    pub prune_threshold: f64,
    /// Accepted distance between achieved and target rate, bits.
    pub rate_tol: f64,
    /// Blahut iterations on the seeding grid whose mass peaks seed the support.
    pub seed_iterations: usize,
    /// Resolution divisor of the seeding grid relative to `grid`.
    pub seed_coarsening: usize,
    pub refine: RefineOptions,
}

impl Default for ReproductionSearch {
    fn default() -> Self {
        ReproductionSearch {
            grid: GridSpec::default(),
            prune_threshold: 1e-6,
            rate_tol: 1e-6,
            seed_iterations: 300,
            seed_coarsening: 5,
            refine: RefineOptions::default(),
        }
    }
}

/// Shannon optimal reproduction law and `D(R)` for `model` at `rate` bits.
///
/// Gaussian sources get the analytic answer. Otherwise a short Blahut run on
/// a coarser grid, split into clusters at the valleys of its mass, seeds
/// [`refine_support`]; the slope is searched (at most 60 steps after
/// bracketing) until the refined rate is within `rate_tol` of the target. Atoms lighter than `prune_threshold` are
/// dropped from the reported law and the rest renormalized.
pub fn find_shannon_reproduction(
    model: &SourceModel,
    rate: f64,
    search: &ReproductionSearch,
) -> Result<RdPoint> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("rate must be positive, got {rate}")));
    }
    if model.family() == SourceFamily::Gaussian {
        let mut point = gaussian_distortion_rate(model.variance(), rate)?;
        point.reproduction =
            ReproductionDistribution::gaussian(model.mean(), point.reproduction.variance())?;
        return Ok(point);
    }
    let refined = shannon_point(model, rate, search)?;
    let grid = SourceGrid::discretize(model, &search.grid)?;
    let pmf = merge_atoms(
        &refined.support,
        &refined.weights,
        grid.step(),
        search.prune_threshold,
    )?;
    Ok(RdPoint {
        rate: refined.rate,
        distortion: refined.distortion,
        reproduction: ReproductionDistribution::Discrete(pmf),
    })
}

/// The refined optimum at the slope whose rate matches `rate`.
pub fn shannon_point(
    model: &SourceModel,
    rate: f64,
    search: &ReproductionSearch,
) -> Result<RefinedPoint> {
    let grid = SourceGrid::discretize(model, &search.grid)?;
    let mut beta = 1.0 / (2.0 * model.variance() * (-2.0 * rate).exp2());
    let (mut support, mut weights) = {
        let coarse = SourceGrid::discretize(
            model,
            &GridSpec {
                points: (search.grid.points / search.seed_coarsening.max(1)).max(2),
                ..search.grid
            },
        )?;
        let uniform = vec![1.0 / coarse.len() as f64; coarse.len()];
        let q = blahut_iterations(&coarse, beta, &uniform, search.seed_iterations)?;
        valley_atoms(coarse.points(), &q)
    };

    // slopes far from the target only need a rough support; the full
    // certificate loop runs once the rate is within a hundredth of a bit
    let rough = RefineOptions {
        certificate_tol: search.refine.certificate_tol.max(1e-3),
        ..search.refine
    };
    let mut eval = |beta: f64| -> Result<RefinedPoint> {
        let mut out = refine_support(&grid, beta, &support, &weights, &rough)?;
        if (out.rate - rate).abs() < 1e-2 {
            out = refine_support(&grid, beta, &out.support, &out.weights, &search.refine)?;
        }
        support.clone_from(&out.support);
        weights.clone_from(&out.weights);
        Ok(out)
    };

    let mut current = eval(beta)?;
    if (current.rate - rate).abs() <= search.rate_tol {
        return Ok(current);
    }
    let grow = current.rate < rate;
    let (mut lo, mut hi) = (beta, beta);
    let (mut r_lo, mut r_hi) = (current.rate, current.rate);
    let mut expansions = 0;
    loop {
        if grow {
            r_lo = current.rate;
            lo = beta;
            beta *= 1.5;
        } else {
            r_hi = current.rate;
            hi = beta;
            beta /= 1.5;
        }
        expansions += 1;
        current = eval(beta)?;
        if (current.rate - rate).abs() <= search.rate_tol {
            return Ok(current);
        }
        if (current.rate > rate) == grow {
            if grow {
                hi = beta;
                r_hi = current.rate;
            } else {
                lo = beta;
                r_lo = current.rate;
            }
            break;
        }
        if expansions >= 60 {
            return Err(Error::RateNotBracketed {
                target: rate,
                last_rate: current.rate,
                last_beta: beta,
            });
        }
    }
    // regula falsi with the Illinois modification: rate is smooth and monotone
    // in the slope, so this needs far fewer refinements than plain halving
    let mut side = 0i8;
    for _ in 0..60 {
        let mut mid = lo + (rate - r_lo) * (hi - lo) / (r_hi - r_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        current = eval(mid)?;
        if (current.rate - rate).abs() <= search.rate_tol {
            return Ok(current);
        }
        if current.rate < rate {
            lo = mid;
            r_lo = current.rate;
            if side == -1 {
                r_hi = rate + 0.5 * (r_hi - rate);
            }
            side = -1;
        } else {
            hi = mid;
            r_hi = current.rate;
            if side == 1 {
                r_lo = rate + 0.5 * (r_lo - rate);
            }
            side = 1;
        }
    }
    Err(Error::RateNotBracketed {
        target: rate,
        last_rate: current.rate,
        last_beta: current.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_iv() -> ReproductionDistribution {
        ReproductionDistribution::discrete(vec![0.2, 0.5, 0.8], vec![0.368, 0.264, 0.368]).unwrap()
    }

    #[test]
    fn gaussian_rows() {
        for (rate, d) in [
            (1.0, 0.25),
            (2.0, 0.0625),
            (3.0, 0.015625),
            (4.0, 0.00390625),
        ] {
            let p = gaussian_distortion_rate(1.0, rate).unwrap();
            assert_eq!(p.distortion, d);
            assert_eq!(p.reproduction.variance(), 1.0 - d);
        }
        let zero = gaussian_distortion_rate(1.0, 0.0).unwrap();
        assert_eq!(zero.distortion, 1.0);
        assert_eq!(zero.reproduction.variance(), 0.0);
        assert_eq!(zero.reproduction.inverse_cdf(0.3).unwrap(), 0.0);
    }

    #[test]
    fn discrete_quantile_steps() {
        let d = table_iv();
        assert_eq!(d.inverse_cdf(0.30).unwrap(), 0.2);
        assert_eq!(d.inverse_cdf(0.50).unwrap(), 0.5);
        assert_eq!(d.inverse_cdf(0.70).unwrap(), 0.8);
        // boundary belongs to the lower atom
        assert_eq!(d.inverse_cdf(0.368).unwrap(), 0.2);
        assert!(d.inverse_cdf(1.0).is_err());
        assert_eq!(d.cdf(0.1), 0.0);
        assert!((d.cdf(0.5) - 0.632).abs() < 1e-12);
        assert_eq!(d.cdf(0.9), 1.0);
    }

    #[test]
    fn discrete_validation() {
        assert!(ReproductionDistribution::discrete(vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(ReproductionDistribution::discrete(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(ReproductionDistribution::discrete(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(ReproductionDistribution::discrete(vec![], vec![]).is_err());
    }

    #[test]
    fn json_document_shape() {
        let json = serde_json::to_value(table_iv()).unwrap();
        assert_eq!(json["kind"], "DiscretePMF");
        assert_eq!(json["support"].as_array().unwrap().len(), 3);
        assert!((json["mean"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        let back: ReproductionDistribution = serde_json::from_value(json).unwrap();
        assert_eq!(back, table_iv());

        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("GaussianCDF"));
        assert_eq!(
            serde_json::from_str::<ReproductionDistribution>(&json).unwrap(),
            g
        );
    }

    #[test]
    fn clustering_merges_neighbours_only() {
        let points = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let pmf = [0.25, 0.25, 1e-9, 0.0, 0.3, 0.2];
        let d = cluster_atoms(&points, &pmf, 1e-6).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.support()[0] - 0.5).abs() < 1e-12);
        assert!((d.support()[1] - 4.4).abs() < 1e-12);
        assert!((d.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(SourceGrid::new(vec![0.0], vec![1.0]).is_err());
        let g = SourceGrid::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(blahut(&g, 0.0, &[0.5, 0.5], &BlahutOptions::default()).is_err());
        assert!(blahut(&g, 1.0, &[0.5], &BlahutOptions::default()).is_err());
    }

    #[test]
    fn binary_source_becomes_lossless() {
        let g = SourceGrid::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let out = blahut(&g, 40.0, &[0.5, 0.5], &BlahutOptions::default()).unwrap();
        assert!((out.rate - 1.0).abs() < 1e-9, "rate {}", out.rate);
        assert!(out.distortion < 1e-60);
    }

    #[test]
    fn uniform_grid_is_cell_midpoints() {
        let g = SourceGrid::discretize(
            &SourceModel::uniform01(),
            &GridSpec {
                points: 4,
                half_width_sd: 8.0,
            },
        )
        .unwrap();
        assert_eq!(g.points(), &[0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.weights(), &[0.25; 4]);
    }

    fn fast() -> BlahutOptions {
        BlahutOptions {
            tol: 1e-4,
            ..Default::default()
        }
    }

    fn gaussian_grid() -> SourceGrid {
        SourceGrid::discretize(
            &SourceModel::standard_gaussian(),
            &GridSpec {
                points: 600,
                half_width_sd: 8.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn gaussian_tails_stay_ordered() {
        let g = SourceGrid::discretize(
            &SourceModel::standard_gaussian(),
            &GridSpec {
                points: 2000,
                half_width_sd: 8.0,
            },
        )
        .unwrap();
        assert!(g.mean().abs() < 1e-12);
        let p = g.points();
        assert!((p[0] + p[p.len() - 1]).abs() < 1e-9);
    }

    #[test]
    fn discretized_gaussian_matches_the_analytic_curve() {
        let tuned = tune_beta(&gaussian_grid(), 1.0, 1e-3, &fast()).unwrap();
        let d = tuned.outcome.distortion;
        assert!((d - 0.25).abs() / 0.25 < 0.01, "D = {d}");
    }

    #[test]
    fn lagrangian_never_increases() {
        let g = gaussian_grid();
        let uniform = vec![1.0 / g.len() as f64; g.len()];
        let out = blahut(&g, 2.0, &uniform, &fast()).unwrap();
        assert!(out.lagrangian.len() > 2);
        for w in out.lagrangian.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!((out.rate - 1.0).abs() < 1e-3 && (out.distortion - 0.25).abs() < 1e-3);
    }

    #[test]
    fn steeper_slopes_trade_distortion_for_rate() {
        let g = SourceGrid::discretize(
            &SourceModel::standard_gaussian(),
            &GridSpec {
                points: 200,
                half_width_sd: 8.0,
            },
        )
        .unwrap();
        let uniform = vec![1.0 / g.len() as f64; g.len()];
        let points: Vec<BlahutOutcome> = [1.5, 2.5, 4.0]
            .iter()
            .map(|&b| blahut(&g, b, &uniform, &fast()).unwrap())
            .collect();
        for w in points.windows(2) {
            assert!(w[0].distortion >= w[1].distortion);
            assert!(w[0].rate <= w[1].rate);
        }
    }

    #[test]
    fn uniform_grid_blahut_at_one_bit() {
        let g = SourceGrid::discretize(
            &SourceModel::uniform01(),
            &GridSpec {
                points: 400,
                half_width_sd: 8.0,
            },
        )
        .unwrap();
        let tuned = tune_beta(&g, 1.0, 1e-3, &fast()).unwrap();
        assert!((tuned.outcome.rate - 1.0).abs() <= 1e-3);
        assert!((tuned.outcome.distortion - 0.0173).abs() <= 2e-4);
    }

    #[test]
    fn uniform_reproduction_is_normalized_and_centred() {
        let point = find_shannon_reproduction(
            &SourceModel::uniform01(),
            1.0,
            &ReproductionSearch::default(),
        )
        .unwrap();
        let pmf = point.reproduction.as_discrete().unwrap();
        assert!((pmf.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((pmf.mean() - 0.5).abs() < 1e-3);
        assert!((point.distortion - 0.0173).abs() <= 2e-4);
    }

    #[test]
    fn valleys_split_mass() {
        let points = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let pmf = [0.1, 0.3, 0.1, 0.0, 0.2, 0.2, 0.1];
        let (support, weights) = valley_atoms(&points, &pmf);
        assert_eq!(weights.len(), 2);
        assert!((weights[0] - 0.5).abs() < 1e-12);
        assert!((support[0] - 1.0).abs() < 1e-12);
        assert!((support[1] - 4.8).abs() < 1e-12);
    }

    #[test]
    fn merging_respects_gap_and_threshold() {
        let support = [0.0, 0.005, 1.0, 2.0];
        let weights = [0.3, 0.3, 0.4 - 1e-8, 1e-8];
        let d = merge_atoms(&support, &weights, 0.01, 1e-6).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.support()[0] - 0.0025).abs() < 1e-12);
        assert!((d.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let only = merge_atoms(&[0.0, 1.0], &[1e-9, 2e-9], 0.1, 1e-6).unwrap();
        assert_eq!(only.support(), &[1.0]);
    }
}

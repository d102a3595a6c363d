//! Configuration-driven experiment runs and their CSV/JSON artifacts.
//!
//! Each runner returns typed rows so callers can inspect results directly;
//! the `write_*` helpers serialize them. Outputs contain no timestamps or
//! timings, so a config with fixed seeds always yields the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    viterbi_encode_with, EncoderOptions, SlidingBlockDecoder, DEFAULT_MEMORY_BUDGET,
    IDENTITY_PERMUTATION_SEED,
};
use crate::diagnostics::{
    pair_correlation, scatter_pairs, DiagnosticsInput, DiagnosticsReport, LagCovariance,
};
use crate::error::{Error, Result};
use crate::ratedist::{find_shannon_reproduction, RdPoint, ReproductionSearch};
use crate::rng;
use crate::sources::SourceModel;

/// What a config is meant to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Encode,
    Simulate,
    RateDistortion,
    Diagnose,
    PermutationSweep,
}

/// Every seed a run uses. None of them has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub source_seed: u64,
    pub permutation_seeds: Vec<u64>,
    pub simulation_seed: u64,
}

/// A JSON experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SourceModel,
    /// bits per symbol
    pub rate: u32,
    /// Rates tabulated by `rd`; just `rate` when absent.
    #[serde(default)]
    pub rates: Option<Vec<u32>>,
    pub lengths: Vec<u32>,
    pub n: usize,
    pub seeds: Seeds,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub memory_budget: u64,
    /// Spill traceback beyond the budget to disk instead of skipping the row.
    #[serde(default = "default_true")]
    pub allow_spill: bool,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Adjacent pairs written to `scatter.csv` per series.
    #[serde(default = "default_scatter")]
    pub scatter_points: usize,
    /// An `RdPoint` JSON file (as written by `rd`) to use instead of
    /// recomputing the reproduction law.
    #[serde(default)]
    pub reproduction_file: Option<PathBuf>,
    #[serde(default)]
    pub search: ReproductionSearch,
}

fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}

fn default_true() -> bool {
    true
}

fn default_max_lag() -> usize {
    10
}

fn default_scatter() -> usize {
    5000
}

/// Scale presets applied on top of a config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `n = 10^5`, `L <= 12`, one permutation seed.
    Ci,
    /// `n = 10^6`, `L <= 16`, up to three permutation seeds.
    Full,
}

impl Profile {
    /// Overrides sample size, register lengths and seed count. Permutation
    /// sweeps keep their own `n`.
    pub fn apply(self, config: &mut ExperimentConfig) {
        let (n, max_len, seeds) = match self {
            Profile::Ci => (100_000, 12, 1),
            Profile::Full => (1_000_000, 16, 3),
        };
        if config.mode != Some(Mode::PermutationSweep) {
            config.n = n;
        }
        config.lengths.retain(|&l| l <= max_len);
        config.seeds.permutation_seeds.truncate(seeds);
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the config against what `mode` needs.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!(
                    "config is for {m:?} but {mode:?} was requested"
                )));
            }
        }
        let rate_ok = |r: u32| (1..=4).contains(&r);
        if !rate_ok(self.rate) {
            return Err(Error::Config(format!(
                "rate must be in 1..=4, got {}",
                self.rate
            )));
        }
        if let Some(rates) = &self.rates {
            if rates.is_empty() || !rates.iter().all(|&r| rate_ok(r)) {
                return Err(Error::Config(
                    "rates must be a non-empty list in 1..=4".into(),
                ));
            }
        }
        if mode == Mode::RateDistortion {
            return Ok(());
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.lengths.is_empty() {
            return Err(Error::Config("lengths must not be empty".into()));
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l <= self.rate) {
            return Err(Error::Config(format!(
                "every register length must exceed the rate; got L = {l} at R = {}",
                self.rate
            )));
        }
        if self.seeds.permutation_seeds.is_empty() && mode != Mode::PermutationSweep {
            return Err(Error::Config(
                "at least one permutation seed is required".into(),
            ));
        }
        if mode == Mode::PermutationSweep && self.lengths != [3] {
            return Err(Error::Config(
                "permutation sweeps enumerate all 40320 permutations and need lengths = [3]".into(),
            ));
        }
        if matches!(mode, Mode::Simulate | Mode::Diagnose | Mode::Encode)
            && self.max_lag * 10 >= self.n
        {
            return Err(Error::Config(format!(
                "n = {} is too short for max_lag = {}",
                self.n, self.max_lag
            )));
        }
        Ok(())
    }

    fn rd_rates(&self) -> Vec<u32> {
        self.rates.clone().unwrap_or_else(|| vec![self.rate])
    }

    /// The reproduction law and `D(R)` at `rate`, from `reproduction_file`
    /// when it matches, else computed.
    pub fn rd_point(&self) -> Result<RdPoint> {
        if let Some(path) = &self.reproduction_file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let point: RdPoint =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if (point.rate - self.rate as f64).abs() > 1e-3 {
                return Err(Error::Config(format!(
                    "reproduction file is for rate {} but the config rate is {}",
                    point.rate, self.rate
                )));
            }
            return Ok(point);
        }
        find_shannon_reproduction(&self.source, self.rate as f64, &self.search)
    }
}

/// One row of `rd.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub source: String,
    pub rate: u32,
    pub distortion: f64,
    pub achieved_rate: f64,
    pub snr_db: f64,
    /// Atoms of a discrete law; 0 for a Gaussian law.
    pub support_size: usize,
}

/// Distortion-rate points for every configured rate.
pub fn run_rd(config: &ExperimentConfig) -> Result<Vec<(RdRow, RdPoint)>> {
    config.validate(Mode::RateDistortion)?;
    config
        .rd_rates()
        .par_iter()
        .map(|&r| {
            let point = find_shannon_reproduction(&config.source, r as f64, &config.search)?;
            let row = RdRow {
                source: config.source.family().name().to_string(),
                rate: r,
                distortion: point.distortion,
                achieved_rate: point.rate,
                snr_db: crate::codec::snr_db(config.source.variance(), point.distortion),
                support_size: point.reproduction.as_discrete().map_or(0, |d| d.len()),
            };
            Ok((row, point))
        })
        .collect()
}

/// Decoders for every configured length and permutation seed, in that order.
pub fn design(config: &ExperimentConfig, point: &RdPoint) -> Result<Vec<SlidingBlockDecoder>> {
    config.validate(config.mode.unwrap_or(Mode::Encode))?;
    let mut out = Vec::new();
    for &l in &config.lengths {
        for &seed in &config.seeds.permutation_seeds {
            out.push(SlidingBlockDecoder::build_with_budget(
                &point.reproduction,
                l,
                config.rate,
                seed,
                config.memory_budget,
            )?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// The row did not fit in the memory budget.
    Skipped,
}

/// One encoder run: a length, a permutation seed and its fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeRow {
    pub source: String,
    pub rate: u32,
    pub length: u32,
    pub permutation_seed: u64,
    pub n: usize,
    pub status: RowStatus,
    pub mse: Option<f64>,
    pub snr_db: Option<f64>,
    pub entropy_rate: Option<f64>,
    pub marton_bound: Option<f64>,
    /// `D(R)` of the source at this rate.
    pub distortion_rate: f64,
}

/// An encoder row with its full diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodeRecord {
    pub row: EncodeRow,
    pub report: Option<DiagnosticsReport>,
}

/// Viterbi encodings of one source sample for every length and seed.
///
/// Rows run in parallel on the current rayon pool and come back in config
/// order. A row whose decoder or traceback exceeds the memory budget is
/// marked skipped; other errors abort the run.
pub fn run_encode(config: &ExperimentConfig, point: &RdPoint) -> Result<Vec<EncodeRecord>> {
    config.validate(config.mode.unwrap_or(Mode::Encode))?;
    let x = config.source.sample(config.n, config.seeds.source_seed)?;
    let jobs: Vec<(u32, u64)> = config
        .lengths
        .iter()
        .flat_map(|&l| config.seeds.permutation_seeds.iter().map(move |&s| (l, s)))
        .collect();
    jobs.par_iter()
        .map(|&(l, seed)| encode_row(config, point, &x, l, seed))
        .collect()
}

fn encode_row(
    config: &ExperimentConfig,
    point: &RdPoint,
    x: &[f64],
    length: u32,
    seed: u64,
) -> Result<EncodeRecord> {
    let mut row = EncodeRow {
        source: config.source.family().name().to_string(),
        rate: config.rate,
        length,
        permutation_seed: seed,
        n: x.len(),
        status: RowStatus::Skipped,
        mse: None,
        snr_db: None,
        entropy_rate: None,
        marton_bound: None,
        distortion_rate: point.distortion,
    };
    let encoded = SlidingBlockDecoder::build_with_budget(
        &point.reproduction,
        length,
        config.rate,
        seed,
        config.memory_budget,
    )
    .and_then(|decoder| {
        let options = EncoderOptions {
            memory_budget: config.memory_budget,
            allow_spill: config.allow_spill,
            spill_dir: None,
            source_variance: Some(config.source.variance()),
        };
        viterbi_encode_with(&decoder, x, &options)
    });
    let result = match encoded {
        Ok(r) => r,
        Err(Error::MemoryBudget { .. }) => return Ok(EncodeRecord { row, report: None }),
        Err(e) => return Err(e),
    };
    let report = DiagnosticsReport::compute(&DiagnosticsInput {
        source: Some(x),
        reproduction: &result.reproduction,
        symbols: &result.bits,
        rate: config.rate,
        d_target: point.distortion,
        target: &point.reproduction,
        max_lag: config.max_lag,
        word_length: None,
    })?;
    row.status = RowStatus::Ok;
    row.mse = Some(result.mse);
    row.snr_db = Some(result.snr_db);
    row.entropy_rate = Some(report.entropy_rate_estimate);
    row.marton_bound = Some(report.marton_bound);
    Ok(EncodeRecord {
        row,
        report: Some(report),
    })
}

/// Mean encoder MSE at one register length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub length: u32,
    pub seeds: usize,
    pub mean_mse: f64,
    pub min_mse: f64,
    pub max_mse: f64,
    pub mean_snr_db: f64,
}

/// MSE against register length, averaged over permutation seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub points: Vec<CurvePoint>,
    /// Whether mean MSE never increases along the configured lengths; absent
    /// for a single length.
    pub monotone: Option<bool>,
}

/// Encodes every row and summarizes it per length. Skipped rows are left out
/// of the averages.
pub fn run_performance_curve(
    config: &ExperimentConfig,
    point: &RdPoint,
) -> Result<(PerformanceCurve, Vec<EncodeRecord>)> {
    let records = run_encode(config, point)?;
    Ok((performance_curve(config, &records), records))
}

/// Per-length summary of encoder records.
pub fn performance_curve(config: &ExperimentConfig, records: &[EncodeRecord]) -> PerformanceCurve {
    let mut points = Vec::new();
    for &l in &config.lengths {
        let rows: Vec<&EncodeRow> = records
            .iter()
            .map(|r| &r.row)
            .filter(|r| r.length == l && r.status == RowStatus::Ok)
            .collect();
        let mses: Vec<f64> = rows.iter().filter_map(|r| r.mse).collect();
        if mses.is_empty() {
            continue;
        }
        let k = mses.len() as f64;
        points.push(CurvePoint {
            length: l,
            seeds: mses.len(),
            mean_mse: mses.iter().sum::<f64>() / k,
            min_mse: mses.iter().copied().fold(f64::INFINITY, f64::min),
            max_mse: mses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_snr_db: rows.iter().filter_map(|r| r.snr_db).sum::<f64>() / k,
        });
    }
    let monotone =
        (points.len() > 1).then(|| points.windows(2).all(|w| w[1].mean_mse <= w[0].mean_mse));
    PerformanceCurve { points, monotone }
}

/// Which decoder produced a simulated series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Permuted,
    Identity,
}

/// Diagnostics of one simulated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub source: String,
    pub rate: u32,
    pub length: u32,
    pub variant: Variant,
    pub permutation_seed: u64,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub lag1_correlation: f64,
    /// Largest `|K̂(k)|` over the configured lags divided by the white-noise band.
    pub max_band_ratio: f64,
    pub white: bool,
    pub marginal_t2: f64,
    pub entropy_rate: f64,
    /// Largest gap between empirical and target atom frequencies; absent for
    /// continuous targets.
    pub max_frequency_error: Option<f64>,
}

/// Simulation rows with reports and the adjacent-pair scatter per series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub row: SimulationRow,
    pub report: DiagnosticsReport,
    pub scatter: Vec<(f64, f64)>,
}

/// Drives each decoder and its identity-permutation twin with the same fair
/// coin flips.
pub fn run_simulate(config: &ExperimentConfig, point: &RdPoint) -> Result<Vec<SimulationRecord>> {
    config.validate(config.mode.unwrap_or(Mode::Simulate))?;
    let symbols = rng::fair_symbols(
        &mut rng::seeded(config.seeds.simulation_seed),
        config.n,
        config.rate,
    );
    let mut jobs = Vec::new();
    for &l in &config.lengths {
        for &seed in &config.seeds.permutation_seeds {
            jobs.push((l, Variant::Permuted, seed));
        }
        jobs.push((l, Variant::Identity, IDENTITY_PERMUTATION_SEED));
    }
    jobs.par_iter()
        .map(|&(l, variant, seed)| {
            let decoder = SlidingBlockDecoder::build_with_budget(
                &point.reproduction,
                l,
                config.rate,
                seed,
                config.memory_budget,
            )?;
            let y = decoder.decode(&symbols)?;
            simulation_record(config, point, l, variant, seed, &symbols, &y)
        })
        .collect()
}

fn simulation_record(
    config: &ExperimentConfig,
    point: &RdPoint,
    length: u32,
    variant: Variant,
    seed: u64,
    symbols: &[u32],
    y: &[f64],
) -> Result<SimulationRecord> {
    let report = DiagnosticsReport::compute(&DiagnosticsInput {
        source: None,
        reproduction: y,
        symbols,
        rate: config.rate,
        d_target: point.distortion,
        target: &point.reproduction,
        max_lag: config.max_lag,
        word_length: None,
    })?;
    let max_band_ratio = report
        .covariance_seq
        .iter()
        .map(|c| c.value.abs() / report.whiteness_band)
        .fold(0.0, f64::max);
    let max_frequency_error = point.reproduction.as_discrete().map(|pmf| {
        let mut counts = vec![0usize; pmf.len()];
        for v in y {
            if let Some(k) = pmf.support().iter().position(|s| s == v) {
                counts[k] += 1;
            }
        }
        counts
            .iter()
            .zip(pmf.pmf())
            .map(|(&c, &p)| (c as f64 / y.len() as f64 - p).abs())
            .fold(0.0, f64::max)
    });
    let scatter = scatter_pairs(&y[..y.len().min(config.scatter_points + 1)]);
    let lag1 = pair_correlation(&scatter_pairs(y));
    Ok(SimulationRecord {
        row: SimulationRow {
            source: config.source.family().name().to_string(),
            rate: config.rate,
            length,
            variant,
            permutation_seed: seed,
            n: y.len(),
            mean: report.mean_hat,
            variance: report.var_hat,
            lag1_correlation: lag1,
            max_band_ratio,
            white: report.white,
            marginal_t2: report.marginal_t2,
            entropy_rate: report.entropy_rate_estimate,
            max_frequency_error,
        },
        report,
        scatter,
    })
}

/// Summary of an exhaustive permutation sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub source: String,
    pub rate: u32,
    pub length: u32,
    pub n: usize,
    pub permutations: usize,
    pub best_mse: f64,
    pub mean_mse: f64,
    pub worst_mse: f64,
    pub best_snr_db: f64,
    pub mean_snr_db: f64,
    /// Position of the best permutation in lexicographic order.
    pub best_index: usize,
    pub best_permutation: Vec<u32>,
}

/// All permutations of `0..size` in lexicographic order.
pub fn all_permutations(size: u32) -> Vec<Vec<u32>> {
    let mut p: Vec<u32> = (0..size).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..p.len())
            .rev()
            .find(|&j| p[j] > p[i - 1])
            .expect("suffix has a larger entry");
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

/// Encodes one source sample with every permutation of the `L = 3` register
/// and reports the best and average MSE.
pub fn run_permutation_sweep(config: &ExperimentConfig, point: &RdPoint) -> Result<SweepSummary> {
    config.validate(Mode::PermutationSweep)?;
    let length = config.lengths[0];
    let x = config.source.sample(config.n, config.seeds.source_seed)?;
    let options = EncoderOptions {
        memory_budget: config.memory_budget,
        allow_spill: config.allow_spill,
        spill_dir: None,
        source_variance: Some(config.source.variance()),
    };
    let perms = all_permutations(1 << length);
    let results: Vec<(f64, f64)> = perms
        .par_iter()
        .map(|p| {
            let d = SlidingBlockDecoder::with_permutation(
                &point.reproduction,
                length,
                config.rate,
                p.clone(),
            )?;
            let r = viterbi_encode_with(&d, &x, &options)?;
            Ok((r.mse, r.snr_db))
        })
        .collect::<Result<_>>()?;
    let k = results.len() as f64;
    let (best_index, &(best_mse, best_snr_db)) = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("at least one permutation");
    Ok(SweepSummary {
        source: config.source.family().name().to_string(),
        rate: config.rate,
        length,
        n: config.n,
        permutations: results.len(),
        best_mse,
        mean_mse: results.iter().map(|r| r.0).sum::<f64>() / k,
        worst_mse: results
            .iter()
            .map(|r| r.0)
            .fold(f64::NEG_INFINITY, f64::max),
        best_snr_db,
        mean_snr_db: results.iter().map(|r| r.1).sum::<f64>() / k,
        best_index,
        best_permutation: perms[best_index].clone(),
    })
}

/// Process exit code for an error: 2 configuration, 3 resource budget,
/// 4 numerical non-convergence, 1 anything else.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) => 2,
        Error::MemoryBudget { .. } | Error::AllRowsSkipped { .. } | Error::InstanceTooLarge(_) => 3,
        Error::NotConverged { .. } | Error::RateNotBracketed { .. } => 4,
        _ => 1,
    }
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct ScatterRow {
    length: u32,
    variant: Variant,
    permutation_seed: u64,
    x0: f64,
    x1: f64,
}

#[derive(Serialize)]
struct CovarianceRow {
    length: u32,
    permutation_seed: u64,
    lag: usize,
    value: f64,
}

#[derive(Serialize)]
struct SweepRow<'a> {
    source: &'a str,
    rate: u32,
    length: u32,
    n: usize,
    permutations: usize,
    best_mse: f64,
    mean_mse: f64,
    worst_mse: f64,
    best_snr_db: f64,
    mean_snr_db: f64,
    best_index: usize,
    best_permutation: String,
}

/// Writes `results.csv` with the sweep summary and `report.json`.
pub fn write_sweep(dir: &Path, s: &SweepSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let row = SweepRow {
        source: &s.source,
        rate: s.rate,
        length: s.length,
        n: s.n,
        permutations: s.permutations,
        best_mse: s.best_mse,
        mean_mse: s.mean_mse,
        worst_mse: s.worst_mse,
        best_snr_db: s.best_snr_db,
        mean_snr_db: s.mean_snr_db,
        best_index: s.best_index,
        best_permutation: s
            .best_permutation
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    };
    write_csv(&dir.join("results.csv"), &[row])?;
    write_json(&dir.join("report.json"), s)
}

/// Writes `rd.csv` and one `reproduction_r{R}.json` per rate.
pub fn write_rd(dir: &Path, rows: &[(RdRow, RdPoint)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let table: Vec<&RdRow> = rows.iter().map(|r| &r.0).collect();
    write_csv(&dir.join("rd.csv"), &table)?;
    for (row, point) in rows {
        write_json(&dir.join(format!("reproduction_r{}.json", row.rate)), point)?;
    }
    Ok(())
}

/// Writes `decoder.json`, a list of decoder headers.
pub fn write_design(dir: &Path, decoders: &[SlidingBlockDecoder]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let headers: Vec<_> = decoders.iter().map(|d| d.header()).collect();
    write_json(&dir.join("decoder.json"), &headers)
}

/// Writes `results.csv` and `report.json` for encoder runs.
pub fn write_encode(dir: &Path, records: &[EncodeRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rows: Vec<&EncodeRow> = records.iter().map(|r| &r.row).collect();
    write_csv(&dir.join("results.csv"), &rows)?;
    write_json(&dir.join("report.json"), records)
}

/// Writes `results.csv` with one row per length and `report.json` with the
/// curve and every encoder row.
pub fn write_curve(dir: &Path, curve: &PerformanceCurve, records: &[EncodeRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &curve.points)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        curve: &'a PerformanceCurve,
        rows: &'a [EncodeRecord],
    }
    write_json(
        &dir.join("report.json"),
        &Doc {
            curve,
            rows: records,
        },
    )
}

/// Writes `results.csv`, `report.json` and `scatter.csv` for simulations.
pub fn write_simulate(dir: &Path, records: &[SimulationRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rows: Vec<&SimulationRow> = records.iter().map(|r| &r.row).collect();
    write_csv(&dir.join("results.csv"), &rows)?;
    #[derive(Serialize)]
    struct Entry<'a> {
        length: u32,
        variant: Variant,
        permutation_seed: u64,
        report: &'a DiagnosticsReport,
    }
    let reports: Vec<Entry> = records
        .iter()
        .map(|r| Entry {
            length: r.row.length,
            variant: r.row.variant,
            permutation_seed: r.row.permutation_seed,
            report: &r.report,
        })
        .collect();
    write_json(&dir.join("report.json"), &reports)?;
    let scatter: Vec<ScatterRow> = records
        .iter()
        .flat_map(|r| {
            r.scatter.iter().map(|&(x0, x1)| ScatterRow {
                length: r.row.length,
                variant: r.row.variant,
                permutation_seed: r.row.permutation_seed,
                x0,
                x1,
            })
        })
        .collect();
    write_csv(&dir.join("scatter.csv"), &scatter)
}

/// Encoder outputs plus `covariance.csv` and the reproduction's adjacent
/// pairs in `scatter.csv`.
pub fn write_diagnose(
    dir: &Path,
    config: &ExperimentConfig,
    point: &RdPoint,
    records: &[EncodeRecord],
) -> Result<()> {
    write_encode(dir, records)?;
    let mut cov = Vec::new();
    for r in records {
        if let Some(report) = &r.report {
            cov.extend(
                report
                    .covariance_seq
                    .iter()
                    .map(|c: &LagCovariance| CovarianceRow {
                        length: r.row.length,
                        permutation_seed: r.row.permutation_seed,
                        lag: c.lag,
                        value: c.value,
                    }),
            );
        }
    }
    write_csv(&dir.join("covariance.csv"), &cov)?;
    // scatter of the first encoded row; re-encoding a prefix keeps the file small
    let mut scatter = Vec::new();
    if let Some(r) = records.iter().find(|r| r.row.status == RowStatus::Ok) {
        let x = config.source.sample(config.n, config.seeds.source_seed)?;
        let decoder = SlidingBlockDecoder::build_with_budget(
            &point.reproduction,
            r.row.length,
            config.rate,
            r.row.permutation_seed,
            config.memory_budget,
        )?;
        let m = x.len().min(config.scatter_points + 1);
        let enc = viterbi_encode_with(
            &decoder,
            &x[..m],
            &EncoderOptions {
                memory_budget: config.memory_budget,
                allow_spill: config.allow_spill,
                spill_dir: None,
                source_variance: Some(config.source.variance()),
            },
        )?;
        scatter = scatter_pairs(&enc.reproduction)
            .into_iter()
            .map(|(x0, x1)| ScatterRow {
                length: r.row.length,
                variant: Variant::Permuted,
                permutation_seed: r.row.permutation_seed,
                x0,
                x1,
            })
            .collect();
    }
    write_csv(&dir.join("scatter.csv"), &scatter)
}

/// Output directory: explicit override, then the config's, then `out`.
pub fn output_dir(config: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "source": {"family": "Gaussian"},
                "rate": 1,
                "lengths": [4, 6],
                "n": 2000,
                "seeds": {"source_seed": 7, "permutation_seeds": [1, 2], "simulation_seed": 11}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn permutations_of_four() {
        let p = all_permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(p[23], vec![3, 2, 1, 0]);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let e = ExperimentConfig::from_json(
            r#"{"source": {"family": "Gaussian"}, "rate": 1, "lengths": [4], "n": 10,
                "seeds": {"source_seed": 1, "permutation_seeds": [1]}}"#,
        )
        .unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn length_must_exceed_rate() {
        let mut c = config();
        c.lengths = vec![1];
        assert!(matches!(c.validate(Mode::Encode), Err(Error::Config(_))));
        c.lengths = vec![4];
        assert!(matches!(
            c.validate(Mode::PermutationSweep),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn profiles_scale_the_run() {
        let mut c = config();
        c.lengths = vec![8, 12, 16, 20];
        c.seeds.permutation_seeds = vec![1, 2, 3, 4];
        Profile::Ci.apply(&mut c);
        assert_eq!(
            (c.n, c.lengths.clone(), c.seeds.permutation_seeds.len()),
            (100_000, vec![8, 12], 1)
        );
    }

    #[test]
    fn tight_budget_skips_rows() {
        let mut c = config();
        c.memory_budget = 400;
        c.allow_spill = false;
        let point = c.rd_point().unwrap();
        let rows = run_encode(&c, &point).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().any(|r| r.row.status == RowStatus::Skipped));
    }

    #[test]
    fn encode_rows_respect_the_rd_bound() {
        let c = config();
        let point = c.rd_point().unwrap();
        let rows = run_encode(&c, &point).unwrap();
        for r in &rows {
            assert!(r.row.mse.unwrap() >= point.distortion);
            assert!(r.row.entropy_rate.unwrap() <= 1.0);
        }
        let curve = performance_curve(&c, &rows);
        assert_eq!(curve.points.len(), 2);
    }
}

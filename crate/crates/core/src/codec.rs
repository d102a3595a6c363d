//! Random-permutation inverse-CDF sliding-block decoder and its matched
//! full-search Viterbi encoder.
//!
//! The decoder keeps an `L`-bit shift register. Each output symbol shifts `R`
//! fresh bits in at the most significant end, and the register index `r` maps
//! to the label `F_Y^{-1}(b(P(r)))` where `P` is a fixed permutation of
//! `{0, .., 2^L - 1}` and `b(v) = (v + 1/2) / 2^L` is the midpoint binary
//! expansion. The trellis state is the `L - R` bits that survive a shift.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratedist::ReproductionDistribution;
use crate::rng;

/// Permutation seed reserved for the identity permutation ("no permutation").
pub const IDENTITY_PERMUTATION_SEED: u64 = u64::MAX;

/// Longest shift register the label table may address.
pub const MAX_REGISTER_BITS: u32 = 28;

/// Default working-memory budget of the encoder, 1 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

/// Largest `n * R` accepted by [`exhaustive_encode`].
pub const EXHAUSTIVE_MAX_BITS: usize = 24;

/// `b(u) = sum_i u_i 2^(-i-1) + 2^(-L-1)` for a bit vector `u` of length `L`.
pub fn b_expansion(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::invalid("binary expansion needs at least one bit"));
    }
    let mut value = 0.0;
    let mut weight = 0.5;
    for &bit in bits {
        if bit {
            value += weight;
        }
        weight *= 0.5;
    }
    Ok(value + weight)
}

/// Register index whose bits, most significant first, are `bits`.
pub fn register_from_bits(bits: &[bool]) -> Result<u64> {
    if bits.len() > 64 {
        return Err(Error::invalid("register longer than 64 bits"));
    }
    Ok(bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
}

/// Label table of an `L`-bit sliding-block decoder at `R` bits per symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct SlidingBlockDecoder {
    length: u32,
    rate: u32,
    permutation: Vec<u32>,
    labels: Vec<f64>,
    reproduction: ReproductionDistribution,
    permutation_seed: Option<u64>,
}

/// JSON header of a decoder. Tables are rebuilt from the seed on load; an
/// explicit permutation is stored only when the decoder was not seeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderHeader {
    #[serde(rename = "L")]
    pub length: u32,
    #[serde(rename = "R")]
    pub rate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<u32>>,
    pub reproduction: ReproductionDistribution,
}

fn check_shape(length: u32, rate: u32) -> Result<()> {
    if rate == 0 || rate > length {
        return Err(Error::invalid(format!(
            "need 1 <= R <= L, got R = {rate}, L = {length}"
        )));
    }
    if length > MAX_REGISTER_BITS {
        return Err(Error::InstanceTooLarge(format!(
            "register length {length} exceeds {MAX_REGISTER_BITS} bits"
        )));
    }
    Ok(())
}

/// Bytes held by a decoder's tables: the permutation and the labels.
pub fn decoder_table_bytes(length: u32) -> u64 {
    (1u64 << length) * (4 + 8)
}

impl SlidingBlockDecoder {
    /// Draws the permutation by Fisher-Yates shuffle under `permutation_seed`
    /// ([`IDENTITY_PERMUTATION_SEED`] selects the identity) and tabulates the
    /// labels.
    pub fn build(
        reproduction: &ReproductionDistribution,
        length: u32,
        rate: u32,
        permutation_seed: u64,
    ) -> Result<Self> {
        Self::build_with_budget(
            reproduction,
            length,
            rate,
            permutation_seed,
            DEFAULT_MEMORY_BUDGET,
        )
    }

    /// As [`SlidingBlockDecoder::build`], refusing tables larger than `budget` bytes.
    pub fn build_with_budget(
        reproduction: &ReproductionDistribution,
        length: u32,
        rate: u32,
        permutation_seed: u64,
        budget: u64,
    ) -> Result<Self> {
        check_shape(length, rate)?;
        let needed = decoder_table_bytes(length);
        if needed > budget {
            return Err(Error::MemoryBudget { needed, budget });
        }
        let mut permutation: Vec<u32> = (0..1u32 << length).collect();
        if permutation_seed != IDENTITY_PERMUTATION_SEED {
            permutation.shuffle(&mut rng::seeded(permutation_seed));
        }
        let mut decoder = Self::tabulate(reproduction, length, rate, permutation)?;
        decoder.permutation_seed = Some(permutation_seed);
        Ok(decoder)
    }

    /// Decoder with an explicitly given permutation of `{0, .., 2^L - 1}`.
    pub fn with_permutation(
        reproduction: &ReproductionDistribution,
        length: u32,
        rate: u32,
        permutation: Vec<u32>,
    ) -> Result<Self> {
        check_shape(length, rate)?;
        let size = 1usize << length;
        if permutation.len() != size {
            return Err(Error::LengthMismatch {
                left: permutation.len(),
                right: size,
            });
        }
        let mut seen = vec![false; size];
        for &p in &permutation {
            let slot = seen
                .get_mut(p as usize)
                .ok_or_else(|| Error::invalid(format!("permutation entry {p} out of range")))?;
            if *slot {
                return Err(Error::invalid(format!("permutation repeats {p}")));
            }
            *slot = true;
        }
        Self::tabulate(reproduction, length, rate, permutation)
    }

    fn tabulate(
        reproduction: &ReproductionDistribution,
        length: u32,
        rate: u32,
        permutation: Vec<u32>,
    ) -> Result<Self> {
        let scale = 1.0 / (1u64 << length) as f64;
        let labels = permutation
            .iter()
            .map(|&p| reproduction.inverse_cdf((p as f64 + 0.5) * scale))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(i) = labels.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(SlidingBlockDecoder {
            length,
            rate,
            permutation,
            labels,
            reproduction: reproduction.clone(),
            permutation_seed: None,
        })
    }

    /// Rebuilds a decoder from its header.
    pub fn from_header(header: &DecoderHeader) -> Result<Self> {
        match (&header.permutation, header.permutation_seed) {
            (Some(p), _) => {
                Self::with_permutation(&header.reproduction, header.length, header.rate, p.clone())
            }
            (None, Some(seed)) => {
                Self::build(&header.reproduction, header.length, header.rate, seed)
            }
            (None, None) => Err(Error::invalid(
                "decoder header needs a permutation seed or an explicit permutation",
            )),
        }
    }

    pub fn header(&self) -> DecoderHeader {
        DecoderHeader {
            length: self.length,
            rate: self.rate,
            permutation_seed: self.permutation_seed,
            permutation: match self.permutation_seed {
                Some(_) => None,
                None => Some(self.permutation.clone()),
            },
            reproduction: self.reproduction.clone(),
        }
    }

    /// Shift-register length `L` in bits.
    pub fn length(&self) -> u32 {
        self.length
    }

    /// Bits per output symbol `R`.
    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn permutation(&self) -> &[u32] {
        &self.permutation
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn reproduction(&self) -> &ReproductionDistribution {
        &self.reproduction
    }

    pub fn permutation_seed(&self) -> Option<u64> {
        self.permutation_seed
    }

    pub fn trellis(&self) -> TrellisSpec {
        TrellisSpec {
            length: self.length,
            rate: self.rate,
        }
    }

    fn alphabet(&self) -> u32 {
        1 << self.rate
    }

    /// Decodes from the all-zero register.
    pub fn decode(&self, symbols: &[u32]) -> Result<Vec<f64>> {
        self.decode_from(symbols, 0)
    }

    /// Output `n` is `labels[register_n]`, where `register_n` holds symbol `n`
    /// in its top `R` bits above the top `L - R` bits of `register_{n-1}`.
    pub fn decode_from(&self, symbols: &[u32], initial_register: u64) -> Result<Vec<f64>> {
        let trellis = self.trellis();
        if initial_register >= 1u64 << self.length {
            return Err(Error::invalid(format!(
                "initial register {initial_register} does not fit in {} bits",
                self.length
            )));
        }
        let mut register = initial_register as usize;
        symbols
            .iter()
            .enumerate()
            .map(|(position, &symbol)| {
                if symbol >= self.alphabet() {
                    return Err(Error::SymbolOutOfAlphabet {
                        symbol,
                        position,
                        alphabet: self.alphabet(),
                    });
                }
                register = trellis.shift(register, symbol);
                Ok(self.labels[register])
            })
            .collect()
    }

    /// Drives the decoder with `n * R` fair coin flips.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::invalid("simulation length must be at least 1"));
        }
        let symbols = rng::fair_symbols(&mut rng::seeded(seed), n, self.rate);
        self.decode(&symbols)
    }
}

/// Trellis geometry of a decoder: `2^(L-R)` states, `2^R` branches each way.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrellisSpec {
    pub length: u32,
    pub rate: u32,
}

impl TrellisSpec {
    pub fn num_states(&self) -> usize {
        1 << (self.length - self.rate)
    }

    pub fn branches_per_state(&self) -> usize {
        1 << self.rate
    }

    /// Register after shifting `symbol` into `register`.
    #[inline]
    pub fn shift(&self, register: usize, symbol: u32) -> usize {
        ((symbol as usize) << (self.length - self.rate)) | (register >> self.rate)
    }

    /// State carried forward by a register.
    #[inline]
    pub fn state_of(&self, register: usize) -> usize {
        register >> self.rate
    }

    /// Register reached from `state` on input `symbol`; its label is the branch label.
    #[inline]
    pub fn branch(&self, state: usize, symbol: u32) -> usize {
        ((symbol as usize) << (self.length - self.rate)) | state
    }

    pub fn next_state(&self, state: usize, symbol: u32) -> usize {
        self.state_of(self.branch(state, symbol))
    }
}

/// Encoder output with its reproduction and fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingResult {
    /// Channel symbols in `{0, .., 2^R - 1}`.
    pub bits: Vec<u32>,
    pub reproduction: Vec<f64>,
    pub mse: f64,
    pub snr_db: f64,
}

impl EncodingResult {
    /// Builds the result from the chosen symbols, recomputing the error in
    /// forward order.
    pub fn from_symbols(
        decoder: &SlidingBlockDecoder,
        x: &[f64],
        bits: Vec<u32>,
        variance: f64,
    ) -> Result<Self> {
        let reproduction = decoder.decode(&bits)?;
        let mse = squared_error(x, &reproduction) / x.len() as f64;
        Ok(EncodingResult {
            bits,
            reproduction,
            mse,
            snr_db: snr_db(variance, mse),
        })
    }
}

/// `10 log10(variance / mse)`.
pub fn snr_db(variance: f64, mse: f64) -> f64 {
    10.0 * (variance / mse).log10()
}

fn squared_error(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Resources and SNR reference for the Viterbi encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOptions {
    /// Working memory for state metrics and in-memory traceback, bytes.
    pub memory_budget: u64,
    /// Traceback beyond the budget goes to a temporary file; when false the
    /// encoder fails with [`Error::MemoryBudget`] instead.
    pub allow_spill: bool,
    /// Directory for the spill file; the system temporary directory if unset.
    pub spill_dir: Option<PathBuf>,
    /// Variance used for the SNR; the sample variance of the input if unset.
    pub source_variance: Option<f64>,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            memory_budget: DEFAULT_MEMORY_BUDGET,
            allow_spill: true,
            spill_dir: None,
            source_variance: None,
        }
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Full-search Viterbi encoder with the default [`EncoderOptions`].
pub fn viterbi_encode(decoder: &SlidingBlockDecoder, x: &[f64]) -> Result<EncodingResult> {
    viterbi_encode_with(decoder, x, &EncoderOptions::default())
}

/// Minimum squared-error path through the whole trellis, starting from the
/// all-zero state. Ties go to the lowest predecessor index and, at the end,
/// the lowest final state.
pub fn viterbi_encode_with(
    decoder: &SlidingBlockDecoder,
    x: &[f64],
    options: &EncoderOptions,
) -> Result<EncodingResult> {
    check_input(x)?;
    let t = decoder.trellis();
    let states = t.num_states();
    let rate = decoder.rate as usize;
    let shift_in = (decoder.length - decoder.rate) as usize;
    let mask = states - 1;
    let labels = decoder.labels();

    let metric_bytes = 2 * states as u64 * 8;
    let mut store = TracebackStore::new(
        states,
        rate,
        x.len(),
        options.memory_budget.saturating_sub(metric_bytes),
        options,
    )?;

    let mut metric = vec![f64::INFINITY; states];
    metric[0] = 0.0;
    let mut next = vec![0.0; states];
    let mut row = vec![0u64; store.row_words];
    let per_word = store.per_word;

    // metrics are stored relative to the previous step's minimum, which keeps
    // them bounded over long inputs without changing any comparison
    let mut offset = 0.0;
    for &xt in x {
        offset = if rate == 1 && states >= 128 {
            acs_binary(&metric, labels, xt, offset, &mut next, &mut row)
        } else {
            acs_general(
                &metric, labels, xt, offset, &mut next, &mut row, rate, per_word, mask,
            )
        };
        std::mem::swap(&mut metric, &mut next);
        store.push(&row)?;
    }

    let mut state = metric
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, &m)| {
            if m < acc.1 {
                (i, m)
            } else {
                acc
            }
        })
        .0;
    let mut bits = vec![0u32; x.len()];
    let field = (1u64 << rate) - 1;
    store.traceback(|step, row| {
        let j = ((row[state / per_word] >> ((state % per_word) * rate)) & field) as usize;
        let reg = (state << rate) | j;
        bits[step] = (reg >> shift_in) as u32;
        state = reg & mask;
    })?;

    let variance = options
        .source_variance
        .unwrap_or_else(|| sample_variance(x));
    EncodingResult::from_symbols(decoder, x, bits, variance)
}

/// Add-compare-select for one step; returns the smallest new metric.
/// Registers entering state `ns` are `(ns << R) | j` and their predecessor is
/// the low `L - R` bits. Strict comparison keeps the lowest `j` on ties.
#[allow(clippy::too_many_arguments)]
fn acs_general(
    metric: &[f64],
    labels: &[f64],
    xt: f64,
    offset: f64,
    next: &mut [f64],
    row: &mut [u64],
    rate: usize,
    per_word: usize,
    mask: usize,
) -> f64 {
    row.iter_mut().for_each(|w| *w = 0);
    let width = 1usize << rate;
    let mut best = f64::INFINITY;
    let (mut word, mut field) = (0usize, 0usize);
    for (ns, slot) in next.iter_mut().enumerate() {
        let base = ns << rate;
        let mut m = f64::INFINITY;
        let mut arg = 0usize;
        for j in 0..width {
            let reg = base | j;
            let e = xt - labels[reg];
            let cand = (metric[reg & mask] - offset) + e * e;
            let take = cand < m;
            m = if take { cand } else { m };
            arg = if take { j } else { arg };
        }
        *slot = m;
        best = best.min(m);
        row[word] |= (arg as u64) << (field * rate);
        field += 1;
        if field == per_word {
            field = 0;
            word += 1;
        }
    }
    best
}

/// [`acs_general`] for one bit per symbol with at least 128 states, written
/// branch-free over blocks of 64 states so each block fills one traceback word.
fn acs_binary(
    metric: &[f64],
    labels: &[f64],
    xt: f64,
    offset: f64,
    next: &mut [f64],
    row: &mut [u64],
) -> f64 {
    let half = metric.len() / 2;
    let mut best = f64::INFINITY;
    for (w, (out, word)) in next.chunks_exact_mut(64).zip(row.iter_mut()).enumerate() {
        let first = w * 64;
        // predecessors of states first..first+64 are 2k and 2k+1, k = ns mod half
        let k0 = first % half;
        let prev = &metric[2 * k0..2 * k0 + 128];
        let lab = &labels[2 * first..2 * first + 128];
        let mut bits = 0u64;
        let mut block_best = f64::INFINITY;
        for i in 0..64 {
            let e0 = xt - lab[2 * i];
            let e1 = xt - lab[2 * i + 1];
            let c0 = (prev[2 * i] - offset) + e0 * e0;
            let c1 = (prev[2 * i + 1] - offset) + e1 * e1;
            let take = c1 < c0;
            let m = if take { c1 } else { c0 };
            out[i] = m;
            block_best = block_best.min(m);
            bits |= (take as u64) << i;
        }
        best = best.min(block_best);
        *word = bits;
    }
    best
}

/// Exact minimum over all `2^(n R)` symbol sequences from the all-zero state;
/// the first minimizer in lexicographic symbol order wins ties.
pub fn exhaustive_encode(decoder: &SlidingBlockDecoder, x: &[f64]) -> Result<EncodingResult> {
    check_input(x)?;
    let rate = decoder.rate as usize;
    let total_bits = x.len() * rate;
    if total_bits > EXHAUSTIVE_MAX_BITS {
        return Err(Error::InstanceTooLarge(format!(
            "exhaustive search over {total_bits} bits exceeds {EXHAUSTIVE_MAX_BITS}"
        )));
    }
    let t = decoder.trellis();
    let field = (1u64 << rate) - 1;
    let labels = decoder.labels();
    let symbol_at =
        |code: u64, i: usize| -> u32 { ((code >> ((x.len() - 1 - i) * rate)) & field) as u32 };
    let mut best = (f64::INFINITY, 0u64);
    for code in 0..1u64 << total_bits {
        let mut register = 0usize;
        let mut err = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            register = t.shift(register, symbol_at(code, i));
            let d = xi - labels[register];
            err += d * d;
        }
        if err < best.0 {
            best = (err, code);
        }
    }
    let bits = (0..x.len()).map(|i| symbol_at(best.1, i)).collect();
    EncodingResult::from_symbols(decoder, x, bits, sample_variance(x))
}

/// Bit-packed backpointers, `R` bits per state per step, kept in memory up to
/// a budget and spilled to a temporary file in fixed-size chunks beyond it.
struct TracebackStore {
    row_words: usize,
    per_word: usize,
    chunk_rows: usize,
    memory: Vec<u64>,
    spill: Option<BufWriter<File>>,
    spilled_rows: usize,
}

impl TracebackStore {
    fn new(
        states: usize,
        rate: usize,
        steps: usize,
        budget: u64,
        options: &EncoderOptions,
    ) -> Result<Self> {
        let per_word = 64 / rate;
        let row_words = states.div_ceil(per_word);
        let row_bytes = row_words as u64 * 8;
        let total = row_bytes * steps as u64;
        if total <= budget {
            return Ok(TracebackStore {
                row_words,
                per_word,
                chunk_rows: steps.max(1),
                memory: Vec::with_capacity(row_words * steps),
                spill: None,
                spilled_rows: 0,
            });
        }
        // half the budget fills while encoding, half reads back during traceback
        let chunk_rows = (budget / 2 / row_bytes) as usize;
        if !options.allow_spill || chunk_rows == 0 {
            return Err(Error::MemoryBudget {
                needed: total,
                budget,
            });
        }
        let file = match &options.spill_dir {
            Some(dir) => tempfile::tempfile_in(dir)?,
            None => tempfile::tempfile()?,
        };
        Ok(TracebackStore {
            row_words,
            per_word,
            chunk_rows,
            memory: Vec::with_capacity(row_words * chunk_rows),
            spill: Some(BufWriter::new(file)),
            spilled_rows: 0,
        })
    }

    fn push(&mut self, row: &[u64]) -> Result<()> {
        self.memory.extend_from_slice(row);
        if let Some(out) = self.spill.as_mut() {
            if self.memory.len() == self.chunk_rows * self.row_words {
                for w in &self.memory {
                    out.write_all(&w.to_le_bytes())?;
                }
                self.memory.clear();
                self.spilled_rows += self.chunk_rows;
            }
        }
        Ok(())
    }

    /// Visits rows from the last step back to the first.
    fn traceback(mut self, mut visit: impl FnMut(usize, &[u64])) -> Result<()> {
        let w = self.row_words;
        let in_memory = self.memory.len() / w;
        for k in (0..in_memory).rev() {
            visit(self.spilled_rows + k, &self.memory[k * w..(k + 1) * w]);
        }
        let Some(out) = self.spill.take() else {
            return Ok(());
        };
        let mut file = out.into_inner().map_err(|e| e.into_error())?;
        let chunk_bytes = self.chunk_rows * w * 8;
        let mut raw = vec![0u8; chunk_bytes];
        let mut words = vec![0u64; self.chunk_rows * w];
        for c in (0..self.spilled_rows / self.chunk_rows).rev() {
            file.seek(SeekFrom::Start((c * chunk_bytes) as u64))?;
            file.read_exact(&mut raw)?;
            for (word, bytes) in words.iter_mut().zip(raw.chunks_exact(8)) {
                *word = u64::from_le_bytes(bytes.try_into().expect("8-byte chunk"));
            }
            for k in (0..self.chunk_rows).rev() {
                visit(c * self.chunk_rows + k, &words[k * w..(k + 1) * w]);
            }
        }
        Ok(())
    }
}

const BITS_MAGIC: &[u8; 4] = b"RPTB";

/// Expands symbols into their bits, most significant first.
pub fn symbols_to_bits(symbols: &[u32], rate: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * rate as usize);
    for &s in symbols {
        for b in (0..rate).rev() {
            out.push(((s >> b) & 1) as u8);
        }
    }
    out
}

/// Writes symbols as a packed bit file: `RPTB`, rate (1 byte), symbol count
/// (u64 little-endian), then the bit stream of [`symbols_to_bits`] with bit
/// `g` stored at position `g % 8` of byte `g / 8`.
pub fn write_bits(path: &Path, symbols: &[u32], rate: u32) -> Result<()> {
    if !(1..=32).contains(&rate) {
        return Err(Error::invalid(format!("rate {rate} outside 1..=32")));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(BITS_MAGIC)?;
    out.write_all(&[rate as u8])?;
    out.write_all(&(symbols.len() as u64).to_le_bytes())?;
    let bits = symbols_to_bits(symbols, rate);
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | (b << i));
        out.write_all(&[byte])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file written by [`write_bits`]; returns the symbols and the rate.
pub fn read_bits(path: &Path) -> Result<(Vec<u32>, u32)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut head = [0u8; 13];
    input.read_exact(&mut head)?;
    if &head[..4] != BITS_MAGIC {
        return Err(Error::invalid("not a packed bit file"));
    }
    let rate = head[4] as u32;
    if !(1..=32).contains(&rate) {
        return Err(Error::invalid(format!("rate {rate} outside 1..=32")));
    }
    let count = u64::from_le_bytes(head[5..13].try_into().expect("8 bytes")) as usize;
    let total_bits = count
        .checked_mul(rate as usize)
        .ok_or_else(|| Error::invalid("bit file length overflows"))?;
    let mut bytes = vec![0u8; total_bits.div_ceil(8)];
    input.read_exact(&mut bytes)?;
    let bit = |g: usize| ((bytes[g / 8] >> (g % 8)) & 1) as u32;
    let symbols = (0..count)
        .map(|k| (0..rate as usize).fold(0u32, |acc, b| (acc << 1) | bit(k * rate as usize + b)))
        .collect();
    Ok((symbols, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_iv() -> ReproductionDistribution {
        ReproductionDistribution::discrete(vec![0.2, 0.5, 0.8], vec![0.368, 0.264, 0.368]).unwrap()
    }

    #[test]
    fn expansion_examples() {
        assert_eq!(b_expansion(&[false, false, false]).unwrap(), 0.0625);
        assert_eq!(b_expansion(&[true, true, true]).unwrap(), 0.9375);
        assert_eq!(b_expansion(&[true, false, true]).unwrap(), 0.6875);
        assert!(b_expansion(&[]).is_err());
    }

    #[test]
    fn identity_labels_for_uniform_table() {
        let d = SlidingBlockDecoder::build(&table_iv(), 2, 1, IDENTITY_PERMUTATION_SEED).unwrap();
        // b = 0.125, 0.375, 0.625, 0.875 against cumulative masses 0.368, 0.632
        let oracle: Vec<f64> = [0.125, 0.375, 0.625, 0.875]
            .iter()
            .map(|&u| {
                if u <= 0.368 {
                    0.2
                } else if u <= 0.632 {
                    0.5
                } else {
                    0.8
                }
            })
            .collect();
        assert_eq!(d.labels(), oracle.as_slice());
        assert_eq!(d.labels(), &[0.2, 0.5, 0.5, 0.8]);
        assert_eq!(d.permutation(), &[0, 1, 2, 3]);
    }

    #[test]
    fn gaussian_labels_are_antisymmetric() {
        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        let d = SlidingBlockDecoder::build(&g, 1, 1, IDENTITY_PERMUTATION_SEED).unwrap();
        assert_eq!(d.labels()[0], -d.labels()[1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        assert!(SlidingBlockDecoder::build(&g, 3, 0, 1).is_err());
        assert!(SlidingBlockDecoder::build(&g, 3, 4, 1).is_err());
        assert!(matches!(
            SlidingBlockDecoder::build(&g, 29, 1, 1),
            Err(Error::InstanceTooLarge(_))
        ));
        assert!(matches!(
            SlidingBlockDecoder::build_with_budget(&g, 20, 1, 1, 1 << 20),
            Err(Error::MemoryBudget { .. })
        ));
        assert!(SlidingBlockDecoder::with_permutation(&g, 2, 1, vec![0, 1, 1, 3]).is_err());
    }

    #[test]
    fn decode_checks_alphabet() {
        let d = SlidingBlockDecoder::build(&table_iv(), 4, 2, 5).unwrap();
        assert!(matches!(
            d.decode(&[0, 3, 4]),
            Err(Error::SymbolOutOfAlphabet {
                symbol: 4,
                position: 2,
                alphabet: 4
            })
        ));
    }

    #[test]
    fn all_zero_input_repeats_the_lowest_label() {
        let d = SlidingBlockDecoder::build(&table_iv(), 6, 1, IDENTITY_PERMUTATION_SEED).unwrap();
        let out = d.decode(&[0; 20]).unwrap();
        assert!(out.iter().all(|&y| y == 0.2));
    }

    #[test]
    fn trellis_shape() {
        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        let t = SlidingBlockDecoder::build(&g, 5, 2, 1).unwrap().trellis();
        assert_eq!(t.num_states(), 8);
        assert_eq!(t.branches_per_state(), 4);
        let mut incoming = [0; 8];
        for s in 0..8 {
            for u in 0..4 {
                incoming[t.next_state(s, u)] += 1;
            }
        }
        assert!(incoming.iter().all(|&c| c == 4));
    }

    #[test]
    fn viterbi_matches_exhaustive_small() {
        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        let x = crate::sources::SourceModel::standard_gaussian()
            .sample(10, 4)
            .unwrap();
        for (l, r, n) in [(4, 1, 10), (4, 2, 6), (3, 1, 1)] {
            let d = SlidingBlockDecoder::build(&g, l, r, 17).unwrap();
            let v = viterbi_encode(&d, &x[..n]).unwrap();
            let e = exhaustive_encode(&d, &x[..n]).unwrap();
            assert_eq!(v.mse, e.mse, "L={l} R={r} n={n}");
            assert_eq!(d.decode(&v.bits).unwrap(), v.reproduction);
        }
    }

    #[test]
    fn spilled_traceback_matches_in_memory() {
        let g = ReproductionDistribution::gaussian(0.0, 0.75).unwrap();
        let d = SlidingBlockDecoder::build(&g, 8, 1, 3).unwrap();
        let x = crate::sources::SourceModel::standard_gaussian()
            .sample(5_000, 8)
            .unwrap();
        let full = viterbi_encode(&d, &x).unwrap();
        let tight = EncoderOptions {
            memory_budget: 20_000,
            ..EncoderOptions::default()
        };
        let spilled = viterbi_encode_with(&d, &x, &tight).unwrap();
        assert_eq!(full.bits, spilled.bits);
        let strict = EncoderOptions {
            allow_spill: false,
            ..tight
        };
        assert!(matches!(
            viterbi_encode_with(&d, &x, &strict),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn rejects_nan_input() {
        let d = SlidingBlockDecoder::build(&table_iv(), 3, 1, 2).unwrap();
        assert!(matches!(
            viterbi_encode(&d, &[0.1, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(
            exhaustive_encode(&d, &[0.5; 25]),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn bit_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.bin");
        let symbols = vec![3, 0, 1, 2, 2, 1, 3];
        write_bits(&path, &symbols, 2).unwrap();
        assert_eq!(read_bits(&path).unwrap(), (symbols, 2));
        // 13-byte header plus 14 bits
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 15);
    }

    #[test]
    fn header_round_trip() {
        let d = SlidingBlockDecoder::build(&table_iv(), 5, 1, 44).unwrap();
        let json = serde_json::to_string(&d.header()).unwrap();
        assert!(json.contains("\"L\":5"));
        let back: DecoderHeader = serde_json::from_str(&json).unwrap();
        assert_eq!(SlidingBlockDecoder::from_header(&back).unwrap(), d);

        let custom =
            SlidingBlockDecoder::with_permutation(&table_iv(), 2, 1, vec![3, 1, 0, 2]).unwrap();
        let back = SlidingBlockDecoder::from_header(&custom.header()).unwrap();
        assert_eq!(back, custom);
    }
}

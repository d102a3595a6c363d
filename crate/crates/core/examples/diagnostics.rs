//! Necessary-condition diagnostics for an encoded Gaussian sequence.

use rptrellis::codec::{viterbi_encode, SlidingBlockDecoder};
use rptrellis::diagnostics::{DiagnosticsInput, DiagnosticsReport};
use rptrellis::ratedist::gaussian_distortion_rate;
use rptrellis::sources::SourceModel;

fn main() -> rptrellis::error::Result<()> {
    let point = gaussian_distortion_rate(1.0, 1.0)?;
    let x = SourceModel::standard_gaussian().sample(100_000, 7)?;
    let decoder = SlidingBlockDecoder::build(&point.reproduction, 10, 1, 1)?;
    let encoded = viterbi_encode(&decoder, &x)?;
    let report = DiagnosticsReport::compute(&DiagnosticsInput {
        source: Some(&x),
        reproduction: &encoded.reproduction,
        symbols: &encoded.bits,
        rate: 1,
        d_target: point.distortion,
        target: &point.reproduction,
        max_lag: 10,
        word_length: None,
    })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

//! Viterbi encoding of an IID Gaussian sequence at one bit per sample.

use rptrellis::codec::{viterbi_encode, SlidingBlockDecoder};
use rptrellis::ratedist::gaussian_distortion_rate;
use rptrellis::sources::SourceModel;

fn main() -> rptrellis::error::Result<()> {
    let point = gaussian_distortion_rate(1.0, 1.0)?;
    let x = SourceModel::standard_gaussian().sample(100_000, 7)?;
    for length in [4, 6, 8, 10] {
        let decoder = SlidingBlockDecoder::build(&point.reproduction, length, 1, 1)?;
        let out = viterbi_encode(&decoder, &x)?;
        println!(
            "L = {length:>2}  mse = {:.4}  SNR = {:.3} dB  (D(1) = {:.4})",
            out.mse, out.snr_db, point.distortion
        );
    }
    Ok(())
}

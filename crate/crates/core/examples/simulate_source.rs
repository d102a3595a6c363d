//! Drives the decoder with fair coin flips. The random permutation makes the
//! output nearly white; the identity permutation leaves it strongly
//! correlated.

use rptrellis::codec::{SlidingBlockDecoder, IDENTITY_PERMUTATION_SEED};
use rptrellis::diagnostics::{autocovariance, marginal_t2};
use rptrellis::ratedist::gaussian_distortion_rate;

fn main() -> rptrellis::error::Result<()> {
    let point = gaussian_distortion_rate(1.0, 1.0)?;
    for (name, seed) in [("permuted", 1), ("identity", IDENTITY_PERMUTATION_SEED)] {
        let decoder = SlidingBlockDecoder::build(&point.reproduction, 12, 1, seed)?;
        let y = decoder.simulate(200_000, 11)?;
        let k0 = autocovariance(&y, 0)?;
        let k1 = autocovariance(&y, 1)?;
        println!(
            "{name:<9} variance = {k0:.4}  lag-1 correlation = {:+.4}  t2 = {:.2e}",
            k1 / k0,
            marginal_t2(&y, &point.reproduction)?
        );
    }
    Ok(())
}

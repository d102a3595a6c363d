//! Builds a random-permutation decoder and prints its labels and header.

use rptrellis::codec::SlidingBlockDecoder;
use rptrellis::ratedist::gaussian_distortion_rate;

fn main() -> rptrellis::error::Result<()> {
    let point = gaussian_distortion_rate(1.0, 1.0)?;
    let decoder = SlidingBlockDecoder::build(&point.reproduction, 4, 1, 1)?;
    println!("permutation: {:?}", decoder.permutation());
    for (register, label) in decoder.labels().iter().enumerate() {
        println!("{register:04b} -> {label:+.4}");
    }
    let header = serde_json::to_string_pretty(&decoder.header()).expect("header serializes");
    println!("{header}");
    Ok(())
}

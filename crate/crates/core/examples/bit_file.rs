//! Writes the encoder's channel symbols to a bit file and decodes them back.

use rptrellis::codec::{read_bits, viterbi_encode, write_bits, SlidingBlockDecoder};
use rptrellis::ratedist::gaussian_distortion_rate;
use rptrellis::sources::SourceModel;

fn main() -> rptrellis::error::Result<()> {
    let point = gaussian_distortion_rate(1.0, 2.0)?;
    let x = SourceModel::standard_gaussian().sample(10_000, 7)?;
    let decoder = SlidingBlockDecoder::build(&point.reproduction, 8, 2, 1)?;
    let encoded = viterbi_encode(&decoder, &x)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("gaussian.rptb");
    write_bits(&path, &encoded.bits, decoder.rate())?;
    let (symbols, rate) = read_bits(&path)?;
    let decoded = decoder.decode(&symbols)?;
    println!(
        "{} symbols at R = {rate} in {} bytes, decoded identically: {}",
        symbols.len(),
        std::fs::metadata(&path)?.len(),
        decoded == encoded.reproduction
    );
    Ok(())
}

//! Distortion-rate points and Shannon optimal reproduction laws at one bit.

use rptrellis::ratedist::{find_shannon_reproduction, ReproductionSearch};
use rptrellis::sources::SourceModel;

fn main() -> rptrellis::error::Result<()> {
    let search = ReproductionSearch::default();
    for model in [
        SourceModel::standard_gaussian(),
        SourceModel::uniform01(),
        SourceModel::unit_laplacian(),
    ] {
        let point = find_shannon_reproduction(&model, 1.0, &search)?;
        println!(
            "{:<10} D(1) = {:.5}  SNR = {:.3} dB",
            model.family().name(),
            point.distortion,
            10.0 * (model.variance() / point.distortion).log10()
        );
        if let Some(pmf) = point.reproduction.as_discrete() {
            for (y, p) in pmf.support().iter().zip(pmf.pmf()) {
                if *y >= model.mean() - 1e-9 {
                    println!("    y = {y:>8.4}  p = {p:.4}");
                }
            }
        }
    }
    Ok(())
}

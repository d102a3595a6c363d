//! Fixed-grid Blahut iteration, tuned to one bit, against `D(R) = 2^(-2R)`.

use rptrellis::ratedist::{tune_beta, BlahutOptions, GridSpec, SourceGrid};
use rptrellis::sources::SourceModel;

fn main() -> rptrellis::error::Result<()> {
    let grid = SourceGrid::discretize(
        &SourceModel::standard_gaussian(),
        &GridSpec {
            points: 600,
            half_width_sd: 8.0,
        },
    )?;
    let options = BlahutOptions {
        tol: 1e-4,
        ..Default::default()
    };
    let tuned = tune_beta(&grid, 1.0, 1e-3, &options)?;
    let out = &tuned.outcome;
    println!(
        "beta = {:.4}  R = {:.5}  D = {:.5} (exact 0.25)  iterations = {}",
        out.beta, out.rate, out.distortion, out.iterations
    );
    Ok(())
}

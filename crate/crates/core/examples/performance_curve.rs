//! Mean encoder distortion against decoder length over three permutations.

use rptrellis::experiment::{run_performance_curve, ExperimentConfig};

fn main() -> rptrellis::error::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{"source": {"family": "Uniform01"}, "rate": 1, "lengths": [4, 6, 8, 10],
            "n": 50000,
            "seeds": {"source_seed": 7, "permutation_seeds": [1, 2, 3], "simulation_seed": 11}}"#,
    )?;
    let point = config.rd_point()?;
    let (curve, _) = run_performance_curve(&config, &point)?;
    println!("D(1) = {:.5}", point.distortion);
    for p in &curve.points {
        println!(
            "L = {:>2}  mean mse = {:.5}  range [{:.5}, {:.5}]  SNR = {:.3} dB",
            p.length, p.mean_mse, p.min_mse, p.max_mse, p.mean_snr_db
        );
    }
    println!("monotone: {:?}", curve.monotone);
    Ok(())
}

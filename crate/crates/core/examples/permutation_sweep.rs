//! Encodes one sequence with every permutation of an `L = 3` decoder.

use rptrellis::experiment::{run_permutation_sweep, ExperimentConfig};

fn main() -> rptrellis::error::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{"source": {"family": "Gaussian"}, "rate": 1, "lengths": [3], "n": 2000,
            "seeds": {"source_seed": 7, "permutation_seeds": [1], "simulation_seed": 11}}"#,
    )?;
    let summary = run_permutation_sweep(&config, &config.rd_point()?)?;
    println!(
        "{} permutations: best {:.4}  mean {:.4}  worst {:.4}",
        summary.permutations, summary.best_mse, summary.mean_mse, summary.worst_mse
    );
    println!(
        "best permutation #{}: {:?}",
        summary.best_index, summary.best_permutation
    );
    Ok(())
}

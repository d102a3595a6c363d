use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rptrellis::error::Result;
use rptrellis::experiment::{self, ExperimentConfig, Mode, Profile, RowStatus};

#[derive(Parser)]
#[command(
    name = "rptrellis",
    version,
    about = "Random-permutation trellis coding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distortion-rate values and Shannon optimal reproduction laws
    Rd(Common),
    /// Build decoders and write their headers
    Design(Common),
    /// Viterbi-encode a source sample for every length and seed
    Encode(Common),
    /// Drive decoders with fair coin flips
    Simulate(Common),
    /// Encode and write the full diagnostics
    Diagnose(Common),
    /// Try every permutation of a 3-bit register
    SweepPerm(Common),
    /// Mean MSE against register length
    Curve(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Worker threads (all cores when absent)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ci,
    Full,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(experiment::exit_code(&e) as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    let (mode, common, name) = match &command {
        Command::Rd(c) => (Mode::RateDistortion, c, "rd"),
        Command::Design(c) => (Mode::Encode, c, "design"),
        Command::Encode(c) => (Mode::Encode, c, "encode"),
        Command::Simulate(c) => (Mode::Simulate, c, "simulate"),
        Command::Diagnose(c) => (Mode::Diagnose, c, "diagnose"),
        Command::SweepPerm(c) => (Mode::PermutationSweep, c, "sweep-perm"),
        Command::Curve(c) => (Mode::Encode, c, "curve"),
    };
    let mut config = ExperimentConfig::load(&common.config)?;
    if config.mode.is_none() || name == "design" {
        config.mode = Some(mode);
    }
    if let Some(p) = common.profile {
        match p {
            ProfileArg::Ci => Profile::Ci,
            ProfileArg::Full => Profile::Full,
        }
        .apply(&mut config);
    }
    config.validate(mode)?;
    let dir = experiment::output_dir(&config, common.out.as_deref());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| rptrellis::error::Error::Config(e.to_string()))?;
    pool.install(|| execute(&command, &config, &dir))
}

fn execute(command: &Command, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    if let Command::Rd(_) = command {
        let rows = experiment::run_rd(config)?;
        for (row, _) in &rows {
            println!(
                "{} R={} D={:.6} SNR={:.4} dB",
                row.source, row.rate, row.distortion, row.snr_db
            );
        }
        return experiment::write_rd(dir, &rows);
    }
    let point = config.rd_point()?;
    match command {
        Command::Rd(_) => unreachable!(),
        Command::Design(_) => {
            let decoders = experiment::design(config, &point)?;
            experiment::write_design(dir, &decoders)
        }
        Command::Encode(_) | Command::Diagnose(_) => {
            let records = experiment::run_encode(config, &point)?;
            let mut done = 0;
            for r in &records {
                match (r.row.status, r.row.mse) {
                    (RowStatus::Ok, Some(mse)) => {
                        done += 1;
                        println!(
                            "L={} seed={} mse={mse:.4}",
                            r.row.length, r.row.permutation_seed
                        );
                    }
                    _ => eprintln!(
                        "L={} seed={} skipped: memory budget",
                        r.row.length, r.row.permutation_seed
                    ),
                }
            }
            if matches!(command, Command::Diagnose(_)) {
                experiment::write_diagnose(dir, config, &point, &records)?;
            } else {
                experiment::write_encode(dir, &records)?;
            }
            if done == 0 {
                return Err(rptrellis::error::Error::AllRowsSkipped {
                    rows: records.len(),
                    budget: config.memory_budget,
                });
            }
            Ok(())
        }
        Command::Simulate(_) => {
            let records = experiment::run_simulate(config, &point)?;
            for r in &records {
                println!(
                    "L={} {:?} t2={:.3e} lag1={:.4} white={}",
                    r.row.length,
                    r.row.variant,
                    r.row.marginal_t2,
                    r.row.lag1_correlation,
                    r.row.white
                );
            }
            experiment::write_simulate(dir, &records)
        }
        Command::SweepPerm(_) => {
            let summary = experiment::run_permutation_sweep(config, &point)?;
            println!(
                "{} permutations: best mse {:.4} ({:.4} dB), mean mse {:.4}",
                summary.permutations, summary.best_mse, summary.best_snr_db, summary.mean_mse
            );
            experiment::write_sweep(dir, &summary)
        }
        Command::Curve(_) => {
            let (curve, records) = experiment::run_performance_curve(config, &point)?;
            for p in &curve.points {
                println!(
                    "L={} mean mse {:.4} over {} seeds",
                    p.length, p.mean_mse, p.seeds
                );
            }
            if curve.monotone == Some(false) {
                eprintln!("warning: mean MSE is not monotone in L");
            }
            experiment::write_curve(dir, &curve, &records)
        }
    }
}

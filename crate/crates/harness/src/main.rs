use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use sara_core::matcore::{gaussian_matrix, set_deterministic, RngStream};
use sara_core::subspace::SelectorKind;
use sara_core::theory::{schedule_report, verify_projection_bound, TheoryParams};
use sara_harness::artifacts::METRICS_FILE;
use sara_harness::compare::spectrum_file;
use sara_harness::{checkpoint_diff, compare_runs, resume_experiment, run_experiment, HarnessError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "sara", version, about = "Importance-sampled subspace selection for low-rank optimizers")]
struct Cli {
    /// Pin reduction order and zero wall-time columns so artifacts are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Master seed (overrides the config's seed for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's output_dir for `run`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train according to a TOML or JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the checkpoint saved at this step.
        #[arg(long)]
        resume: Option<u64>,
    },
    /// Tabulate run summaries against the first one.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Singular spectrum of the weight difference between two checkpoints.
    Diff {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        from: u64,
        #[arg(long)]
        to: u64,
    },
    /// Monte Carlo check of the expected projection residual bound on a
    /// seeded Gaussian matrix.
    VerifyLemma {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Step size, momentum and refresh period from the convergence theorem.
    Schedule {
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long = "sigma-sq")]
        sigma_sq: f64,
        #[arg(long = "Delta")]
        delta_gap: f64,
        #[arg(long = "T")]
        t: u64,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_out(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| HarnessError::Io { path, source })?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if cli.deterministic {
        set_deterministic(true);
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Run { config, resume } => {
            let mut c = RunConfig::from_path(&config)?;
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            if let Some(o) = cli.out {
                c.output_dir = Some(o);
            }
            c.deterministic |= cli.deterministic;
            let outcome = match resume {
                Some(step) => resume_experiment(&c, step)?,
                None => run_experiment(&c)?,
            };
            eprintln!("metrics written to {}", outcome.dir.join(METRICS_FILE).display());
            print_json(&outcome.summary)
        }
        Command::Compare { summaries } => {
            let cmp = compare_runs(&summaries)?;
            write_out(cli.out.as_deref(), "comparison.csv", &cmp.to_csv())?;
            write_out(cli.out.as_deref(), "comparison.txt", &cmp.to_text())?;
            print!("{}", cmp.to_text());
            Ok(())
        }
        Command::Diff { run, from, to } => {
            let reports = checkpoint_diff(&run, from, to)?;
            eprintln!("spectrum written to {}", run.join(spectrum_file(from, to)).display());
            for r in &reports {
                println!("{} stable_rank {:?}", r.layer, r.stable_rank);
            }
            Ok(())
        }
        Command::VerifyLemma { m, n, r, trials } => {
            let mut rng = RngStream::derive(seed, &[0x1E]);
            let g = gaussian_matrix(&mut rng, m, n);
            let reports = [SelectorKind::Sara, SelectorKind::RandomOrthonormal]
                .into_iter()
                .map(|kind| verify_projection_bound(kind, &g, r, trials, &mut rng))
                .collect::<sara_core::Result<Vec<_>>>()?;
            write_out(cli.out.as_deref(), "lemma.json", &serde_json::to_string_pretty(&reports)?)?;
            print_json(&reports)?;
            if reports.iter().all(|r| r.pass) {
                Ok(())
            } else {
                Err(HarnessError::Core(sara_core::Error::InvalidParameter(
                    "projection bound violated beyond 3 standard errors".into(),
                )))
            }
        }
        Command::Schedule {
            l,
            delta,
            sigma_sq,
            delta_gap,
            t,
        } => {
            let report = schedule_report(&TheoryParams {
                l,
                delta_gap,
                sigma_sq,
                delta,
                t,
            })?;
            write_out(cli.out.as_deref(), "schedule.json", &serde_json::to_string_pretty(&report)?)?;
            print_json(&report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geostream_core::harness::{load_dataset, load_words, read_kg, run_eval, sweep_csv, sweep_reward, train_to_dir};
use geostream_core::kgstore::EntityKind;
use geostream_core::metrics::MetricReport;
use geostream_core::{Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "geostream",
    version,
    about = "Streaming next-POI recommendation over a dynamic knowledge graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay the training split and write artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "artifacts")]
        out: PathBuf,
    },
    /// Evaluate saved artifacts on the test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Train and evaluate over a simplex grid of reward weights; CSV on stdout.
    SweepReward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        grid_steps: usize,
    },
    /// Print triple and entity counts of a saved graph.
    InspectKg {
        #[arg(long)]
        artifacts: PathBuf,
    },
}

fn print_report(label: &str, r: &MetricReport) {
    println!(
        "{label}: prec_cat={:.4} rec_cat={:.4} avg_sim={:.4} avg_dist_km={:.3} wall_s={:.2}",
        r.prec_cat, r.rec_cat, r.avg_sim, r.avg_dist_km, r.wall_s
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = train_to_dir(&cfg, &out)?;
            println!("{} training events, artifacts in {}", outcome.log.len(), out.display());
            if let Some(r) = &outcome.report {
                print_report("train", r);
            }
        }
        Command::Eval { config, artifacts } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = run_eval(&cfg, &artifacts)?;
            println!("{} test events", outcome.log.len());
            print_report("eval", &outcome.report);
        }
        Command::SweepReward { config, grid_steps } => {
            let cfg = RunConfig::load(&config)?;
            let data = load_dataset(&cfg)?;
            let words = load_words(&cfg)?;
            let rows = sweep_reward(&cfg, &data, &words, grid_steps)?;
            print!("{}", sweep_csv(&rows));
        }
        Command::InspectKg { artifacts } => {
            let kg = read_kg(&artifacts)?;
            println!("version {}", kg.version());
            println!("triples {}", kg.triple_count());
            println!("  skeleton {}", kg.static_triples().len());
            println!("  visit {}", kg.visit_edge_count());
            println!("  also_visit {}", kg.also_visit_count());
            println!("entities {}", kg.entity_count());
            for kind in EntityKind::ALL {
                println!("  {} {}", kind.as_str(), kg.kind_count(kind));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

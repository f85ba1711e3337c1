use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mutcon::synthlab::{SynthWorld, WorldBatch};
use mutcon::KernelKind;
use mutcon_cli::commands::{self, TheoremRun};
use mutcon_cli::config::{load_structured, RunArgs};
use mutcon_cli::Result;
use serde_json::{json, Value};

/// Label-free model evaluation from mutual prediction consistency.
#[derive(Debug, Parser)]
#[command(name = "mutcon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Consistency matrix, estimates, affinity and correlations for a set of prediction files.
    Eval(RunArgs),
    /// Generate a synthetic world as prediction records.
    Synth {
        /// World description (TOML or .json).
        #[arg(long, short = 'w')]
        world: PathBuf,
        #[arg(long, short = 'o')]
        output: PathBuf,
        /// Also write the analytic capability vector here.
        #[arg(long)]
        expected: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check reference-consistency ordering against true capability over a batch of worlds.
    Theorem {
        /// Batch description (TOML or .json).
        #[arg(long, short = 'b')]
        batch: PathBuf,
        #[arg(long)]
        kernel: Option<KernelKind>,
        /// best, index:<n> or external:<quality>
        #[arg(long, default_value = "best")]
        reference: String,
        #[arg(long, default_value_t = 0.05)]
        gap: f64,
        /// Also report the three insight statistics.
        #[arg(long)]
        insights: bool,
        #[arg(long, short = 'o')]
        output: PathBuf,
    },
    /// Subsampling protocol sweep over q_sample.
    Protocol(RunArgs),
    /// Human-as-reference baseline against PoEM over a q_sample grid.
    HumanCompare(RunArgs),
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Eval(args) => commands::run_eval(&args.resolve()?),
        Command::Protocol(args) => commands::run_protocol(&args.resolve()?),
        Command::HumanCompare(args) => commands::run_human_compare(&args.resolve()?),
        Command::Synth { world, output, expected, seed } => {
            let mut w: SynthWorld = load_structured(&world)?;
            w.seed = seed.unwrap_or(w.seed);
            commands::run_synth(&w, &output, expected.as_deref())
        }
        Command::Theorem { batch, kernel, reference, gap, insights, output } => {
            let batch: WorldBatch = load_structured(&batch)?;
            let run = TheoremRun {
                kernel: kernel.map_or_else(|| commands::default_kernel(&batch), Into::into),
                reference: commands::parse_reference(&reference)?,
                batch,
                gap,
                insights,
            };
            commands::run_theorem(&run, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": e.to_string().trim_end() } }));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

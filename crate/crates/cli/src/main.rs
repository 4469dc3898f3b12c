mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmvdr_core::{Method, ShiftStrategy, SweepVariable};

/// Cyclic MVDR beamforming for speech in cyclostationary noise.
#[derive(Debug, Parser)]
#[command(name = "cmvdr", version)]
pub struct Cli {
    /// TOML file with experiment, scene and enhancement settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all outputs; created if missing.
    #[arg(long, global = true, default_value = "cmvdr-out")]
    pub out_dir: PathBuf,
    /// Monte Carlo trials per sweep value.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Comma-separated methods: MVDR, MVDR+, cMVDR, cMVDR+.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Candidate-shift strategy.
    #[arg(long, global = true, value_name = "x|delta")]
    pub strategy: Option<ShiftStrategy>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate resonant frequencies, the coherence map and per-bin modulation sets.
    Analyze {
        /// Signal to analyse (the noisy mixture); the first channel is used.
        #[arg(long)]
        input: PathBuf,
        /// Noise-only recording used for frequency estimation.
        #[arg(long)]
        noise: Option<PathBuf>,
    },
    /// Beamform a multichannel recording.
    Enhance {
        /// Multichannel noisy recording.
        #[arg(long)]
        noisy: PathBuf,
        /// Noise-only recording from the same array.
        #[arg(long)]
        noise: Option<PathBuf>,
        /// Clean target at the reference microphone; enables SI-SDR scoring.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Comma-separated resonant frequencies in Hz, skipping estimation.
        #[arg(long, value_delimiter = ',')]
        known_freqs: Option<Vec<f64>>,
    },
    /// Synthesize one scene and write its signals plus a JSON manifest.
    Simulate,
    /// Run a Monte Carlo parameter sweep and write a CSV and a JSON summary.
    Sweep {
        /// Parameter to sweep: beta, c_max, n_mics, isnr_db, rt60_s, inharmonicity_pct.
        #[arg(long)]
        variable: Option<SweepVariable>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
        /// Use the generator's true resonant frequencies.
        #[arg(long)]
        known_frequencies: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined with `: `, skipping causes whose text the
/// previous message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

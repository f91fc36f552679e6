//! `bprsim`: regenerate the κ table, beam patterns, spectral-efficiency and
//! BER curves into a run directory.

use std::path::PathBuf;
use std::process::ExitCode;

use bpr_core::beamformer::Scheme;
use bpr_core::harness::{run, write_run, ChannelKind, ExperimentConfig, Verb};
use bpr_core::stbc::NormalizationMode;
use bpr_core::Error;
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "bprsim",
    version,
    about = "Beamformed Alamouti link experiments"
)]
struct Cli {
    #[command(subcommand)]
    verb: Command,
    /// TOML experiment file; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Run directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trial cap per BER point, also used as the channel count for fig2.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<u64>,
    /// Comma-separated schemes: dft, hadamard, bpr-real, bpr-complex.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    scheme: Option<Vec<String>>,
    /// Constellation order: 2, 4, 16 or 64.
    #[arg(long = "mod", global = true, value_name = "M")]
    modulation: Option<usize>,
    /// mmwave or rayleigh.
    #[arg(long, global = true)]
    channel: Option<String>,
    /// eq1 or eq10; restricts the run to that normalization.
    #[arg(long, global = true)]
    norm: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// κ per scheme.
    Table1,
    /// Beamspace patterns.
    Fig1,
    /// Spectral efficiency against SNR.
    Fig2,
    /// Monte Carlo BER with bound and MGF references.
    Fig3,
    /// Everything above.
    All,
}

impl From<Command> for Verb {
    fn from(c: Command) -> Self {
        match c {
            Command::Table1 => Verb::Table1,
            Command::Fig1 => Verb::Fig1,
            Command::Fig2 => Verb::Fig2,
            Command::Fig3 => Verb::Fig3,
            Command::All => Verb::All,
        }
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(n) = cli.trials {
        cfg.max_trials = n;
        cfg.min_trials = cfg.min_trials.min(n);
        cfg.fig2_realizations = n;
    }
    if let Some(list) = &cli.scheme {
        cfg.schemes = list
            .iter()
            .map(|s| s.parse::<Scheme>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(m) = cli.modulation {
        cfg.modulation = m;
    }
    if let Some(c) = &cli.channel {
        cfg.channel = c.parse::<ChannelKind>()?;
    }
    if let Some(n) = &cli.norm {
        cfg.norm_modes = vec![n.parse::<NormalizationMode>()?];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            return fail("usage", e.to_string().trim().to_string(), 2);
        }
    };
    let verb = Verb::from(cli.verb);
    let outcome = build_config(&cli).and_then(|cfg| {
        let result = run(verb, &cfg)?;
        let manifest = write_run(&result, &cfg.output_dir)?;
        Ok((cfg, manifest))
    });
    match outcome {
        Ok((cfg, manifest)) => {
            let record = json!({
                "status": "ok",
                "verb": verb.name(),
                "out": cfg.output_dir,
                "manifest": manifest,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&record).expect("manifest serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}

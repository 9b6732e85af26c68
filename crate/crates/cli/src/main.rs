use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use whsid_cli::{load_config, pipeline, CampaignConfig};

#[derive(Parser)]
#[command(name = "whsid", version, about = "Locate process noise in Wiener-Hammerstein systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Campaign configuration (JSON). Reference defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "WHSID_OUT", default_value = "whsid-out")]
    out: PathBuf,
    /// Base seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Design the input period of experiment 0 (u0.csv, u0.json).
    DesignInput,
    /// Simulate a campaign (output_<m>.csv, input_<m>.csv, campaign.json).
    Simulate,
    /// Normalize an external campaign described by a manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Detect on a campaign directory or manifest (profile.csv, bins.csv,
    /// report.json).
    Detect {
        #[arg(long)]
        campaign: PathBuf,
    },
    /// Simulate and detect in one go.
    Run,
    /// Calibrate noise gains against experiment 0 (calibration.json).
    Calibrate,
}

fn config(common: &Common) -> Result<CampaignConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.campaign.base_seed = seed;
    }
    Ok(cfg)
}

fn announce(out: &Path, what: &str) {
    println!("{what} written to {}", out.display());
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build_global()
        .context("cannot start worker threads")?;
    match &cli.command {
        Command::DesignInput => {
            let s = pipeline::design_input(&config(c)?, &c.out)?;
            println!(
                "designed N = {} over {} bins, envelope error {:.4} after {} iterations",
                s.n,
                s.grid.len(),
                s.envelope_error,
                s.iterations
            );
            announce(&c.out, "u0.csv, u0.json");
        }
        Command::Simulate => {
            let sim = pipeline::simulate(&config(c)?, &c.out)?;
            announce(&sim.manifest, "campaign");
        }
        Command::Ingest { manifest } => {
            let path = pipeline::ingest(manifest, &c.out)?;
            announce(&path, "campaign");
        }
        Command::Detect { campaign } => {
            let detector = config(c)?.resolve()?.detector;
            let report = pipeline::detect(campaign, &detector, &c.out)?;
            print!("{}", pipeline::summary(&report));
            announce(&c.out, "profile.csv, bins.csv, report.json");
        }
        Command::Run => {
            let report = pipeline::run(&config(c)?, &c.out)?;
            print!("{}", pipeline::summary(&report));
            announce(&c.out, "campaign and report");
        }
        Command::Calibrate => {
            let r = pipeline::calibrate(&config(c)?, &c.out)?;
            if let Some(p) = &r.process {
                println!("process noise gain     {:.6e} (reference {})", p.gain, p.reference);
            }
            println!(
                "measurement noise gain {:.6e} (reference {})",
                r.measurement.gain, r.measurement.reference
            );
            announce(&c.out, "calibration.json");
        }
    }
    Ok(())
}

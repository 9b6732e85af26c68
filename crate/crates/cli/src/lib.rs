//! Configuration, file formats and the command pipeline of the `whsid` tool.
//!
//! A campaign on disk is a directory holding `output_<m>.csv`
//! (`t, period_1..period_P`), `input_<m>.csv` (`t, u0`), `envelope.csv`
//! (`t, rms`) and the `campaign.json` manifest, which is written last.

pub mod config;
pub mod io;
pub mod pipeline;

pub use config::{load_config, parse_config, CampaignConfig, ConfigError, Resolved};
pub use io::{ingest_measurements, write_campaign, CampaignFiles, CliError, Manifest, ManifestEntry};

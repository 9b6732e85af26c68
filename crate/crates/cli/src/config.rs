//! Campaign configuration files.
//!
//! Every field is optional; missing fields take the reference setup (the
//! plant, noise filters, SNRs and dimensions used throughout the crate
//! documentation). Unknown fields are rejected so that typos surface.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use whsid_core::presets;
use whsid_core::{
    CampaignPlan, DesignOptions, DetectorConfig, EnvelopeTarget, ExcitedGrid,
    LocationThresholds, NoiseLocation, NoiseModel, SignalNode, SignatureThresholds,
    StaticNonlinearity, TransferFunction, WhSystem,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid config at `{field}`: {message}")]
    Validation { field: String, message: String },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl FilterConfig {
    fn from_arrays(num: &[f64], den: &[f64]) -> Self {
        Self {
            num: num.to_vec(),
            den: den.to_vec(),
        }
    }

    fn build(&self, field: &str) -> Result<TransferFunction<f64>, ConfigError> {
        TransferFunction::new(self.num.clone(), self.den.clone()).map_err(|e| invalid(field, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Polynomial { coefficients: Vec<f64> },
    Saturation { lo: f64, hi: f64 },
    DeadZone { lo: f64, hi: f64 },
}

impl NonlinearityConfig {
    fn build(&self, field: &str) -> Result<StaticNonlinearity<f64>, ConfigError> {
        match self {
            Self::Polynomial { coefficients } => StaticNonlinearity::polynomial(coefficients.clone()),
            Self::Saturation { lo, hi } => StaticNonlinearity::saturation(*lo, *hi),
            Self::DeadZone { lo, hi } => StaticNonlinearity::dead_zone(*lo, *hi),
        }
        .map_err(|e| invalid(field, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationConfig {
    Before,
    After,
    None,
}

impl From<LocationConfig> for NoiseLocation {
    fn from(l: LocationConfig) -> Self {
        match l {
            LocationConfig::Before => NoiseLocation::Before,
            LocationConfig::After => NoiseLocation::After,
            LocationConfig::None => NoiseLocation::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeConfig {
    X,
    Nonlinearity,
    Output,
}

impl From<NodeConfig> for SignalNode {
    fn from(n: NodeConfig) -> Self {
        match n {
            NodeConfig::X => SignalNode::X,
            NodeConfig::Nonlinearity => SignalNode::Nonlinearity,
            NodeConfig::Output => SignalNode::Output,
        }
    }
}

/// A filtered white-noise source. The level is either an SNR against
/// `reference` (calibrated per campaign) or a fixed `gain`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub filter: Option<FilterConfig>,
    pub snr_db: Option<f64>,
    pub reference: Option<NodeConfig>,
    pub gain: Option<f64>,
}

impl NoiseConfig {
    fn build(
        &self,
        field: &str,
        default_filter: FilterConfig,
        default_snr: f64,
        default_reference: SignalNode,
    ) -> Result<NoiseModel<f64>, ConfigError> {
        let filter = self
            .filter
            .clone()
            .unwrap_or(default_filter)
            .build(&format!("{field}.filter"))?;
        let reference = self.reference.map(SignalNode::from).unwrap_or(default_reference);
        match (self.gain, self.snr_db) {
            (Some(_), Some(_)) => Err(invalid(field, "give either `gain` or `snr_db`, not both")),
            (Some(g), None) => {
                if !(g.is_finite() && g >= 0.0) {
                    return Err(invalid(&format!("{field}.gain"), "must be finite and >= 0"));
                }
                Ok(NoiseModel::with_gain(filter, g, reference))
            }
            (None, snr) => NoiseModel::with_snr(filter, snr.unwrap_or(default_snr), reference)
                .map_err(|e| invalid(&format!("{field}.snr_db"), e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub r: FilterConfig,
    pub s: FilterConfig,
    pub nonlinearity: NonlinearityConfig,
    pub location: LocationConfig,
    /// Defaults depend on `location`.
    pub process_noise: NoiseConfig,
    pub measurement_noise: NoiseConfig,
    /// Standard deviation of white noise on the recorded input.
    pub input_noise_std: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            r: FilterConfig::from_arrays(&presets::R_NUM, &presets::R_DEN),
            s: FilterConfig::from_arrays(&presets::S_NUM, &presets::S_DEN),
            nonlinearity: NonlinearityConfig::Polynomial {
                coefficients: presets::POLYNOMIAL.to_vec(),
            },
            location: LocationConfig::Before,
            process_noise: NoiseConfig::default(),
            measurement_noise: NoiseConfig::default(),
            input_noise_std: 0.0,
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<WhSystem<f64>, ConfigError> {
        let location = NoiseLocation::from(self.location);
        let (process_snr, measurement_snr) = presets::default_snrs_db(location);
        let r = self.r.build("system.r")?;
        let s = self.s.build("system.s")?;
        let f = self.nonlinearity.build("system.nonlinearity")?;
        let process = self.process_noise.build(
            "system.process_noise",
            FilterConfig::from_arrays(&presets::PROCESS_NUM, &presets::PROCESS_DEN),
            process_snr,
            presets::default_process_reference(location),
        )?;
        let measurement = self.measurement_noise.build(
            "system.measurement_noise",
            FilterConfig::from_arrays(&presets::MEASUREMENT_NUM, &presets::MEASUREMENT_DEN),
            measurement_snr,
            SignalNode::Output,
        )?;
        if !(self.input_noise_std.is_finite() && self.input_noise_std >= 0.0) {
            return Err(invalid("system.input_noise_std", "must be finite and >= 0"));
        }
        let mut sys = WhSystem::new(r, s, f, location, process, measurement);
        sys.input_noise_gain = self.input_noise_std;
        Ok(sys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvelopeConfig {
    /// Triangle peaking mid-period.
    Trapezoid,
    Flat,
    /// Arbitrary RMS shape, one value per sample.
    Custom { rms: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    pub n: usize,
    /// Excited DFT bins; all of `1..n/2` when absent.
    pub grid: Option<Vec<usize>>,
    pub envelope: EnvelopeConfig,
    pub amplitude: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub segments: Option<usize>,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            n: presets::PERIOD_LEN,
            grid: None,
            envelope: EnvelopeConfig::Trapezoid,
            amplitude: 1.0,
            max_iter: d.max_iter,
            tol: d.tol,
            segments: d.segments,
        }
    }
}

impl ExcitationConfig {
    fn grid(&self) -> Result<ExcitedGrid, ConfigError> {
        match &self.grid {
            None => ExcitedGrid::full(self.n).map_err(|e| invalid("excitation.n", e)),
            Some(bins) => {
                ExcitedGrid::new(self.n, bins.clone()).map_err(|e| invalid("excitation.grid", e))
            }
        }
    }

    /// Target envelope scaled to the power the grid carries at the
    /// configured amplitude; only its shape is a free choice.
    fn target(&self, grid: &ExcitedGrid) -> Result<EnvelopeTarget<f64>, ConfigError> {
        let power = grid.power(self.amplitude);
        let field = "excitation.envelope";
        let shaped = match &self.envelope {
            EnvelopeConfig::Trapezoid => {
                whsid_core::unit_power_trapezoid(self.n).map_err(|e| invalid("excitation.n", e))?
            }
            EnvelopeConfig::Flat => {
                EnvelopeTarget::flat(self.n, 1.0).map_err(|e| invalid("excitation.n", e))?
            }
            EnvelopeConfig::Custom { rms } => {
                if rms.len() != self.n {
                    return Err(invalid(
                        &format!("{field}.rms"),
                        format!("has {} values, expected n = {}", rms.len(), self.n),
                    ));
                }
                EnvelopeTarget::custom(rms.clone()).map_err(|e| invalid(&format!("{field}.rms"), e))?
            }
        };
        Ok(shaped.scaled_to_power(power))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiments: usize,
    pub periods: usize,
    pub base_seed: u64,
    pub sampling_rate_hz: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiments: presets::EXPERIMENTS,
            periods: presets::PERIODS,
            base_seed: 0,
            sampling_rate_hz: presets::SAMPLING_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub bins: usize,
    pub rho_min: f64,
    pub ratio_min: f64,
    pub plateau_frac: f64,
    pub floor_tol: f64,
    pub peak_dip: f64,
    pub shoulder_min: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        Self {
            bins: d.bins,
            rho_min: d.location.rho_min,
            ratio_min: d.location.ratio_min,
            plateau_frac: d.signature.plateau_frac,
            floor_tol: d.signature.floor_tol,
            peak_dip: d.signature.peak_dip,
            shoulder_min: d.signature.shoulder_min,
        }
    }
}

impl DetectorSection {
    pub fn build(&self) -> Result<DetectorConfig, ConfigError> {
        for (name, v) in [
            ("rho_min", self.rho_min),
            ("ratio_min", self.ratio_min),
            ("plateau_frac", self.plateau_frac),
            ("floor_tol", self.floor_tol),
            ("peak_dip", self.peak_dip),
            ("shoulder_min", self.shoulder_min),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(&format!("detector.{name}"), "must be finite and >= 0"));
            }
        }
        if self.plateau_frac > 1.0 {
            return Err(invalid("detector.plateau_frac", "must not exceed 1"));
        }
        if self.bins < 4 {
            return Err(invalid("detector.bins", "need at least 4 bins"));
        }
        Ok(DetectorConfig {
            bins: self.bins,
            location: LocationThresholds {
                rho_min: self.rho_min,
                ratio_min: self.ratio_min,
            },
            signature: SignatureThresholds {
                plateau_frac: self.plateau_frac,
                floor_tol: self.floor_tol,
                peak_dip: self.peak_dip,
                shoulder_min: self.shoulder_min,
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub system: SystemConfig,
    pub excitation: ExcitationConfig,
    pub campaign: RunConfig,
    pub detector: DetectorSection,
}

/// Everything a pipeline run needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: WhSystem<f64>,
    pub plan: CampaignPlan<f64>,
    pub detector: DetectorConfig,
}

impl CampaignConfig {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let system = self.system.build()?;
        let x = &self.excitation;
        if !(x.amplitude.is_finite() && x.amplitude > 0.0) {
            return Err(invalid("excitation.amplitude", "must be finite and > 0"));
        }
        if !(x.tol.is_finite() && x.tol > 0.0) {
            return Err(invalid("excitation.tol", "must be finite and > 0"));
        }
        if let Some(seg) = x.segments {
            if seg < 2 || seg > x.n {
                return Err(invalid("excitation.segments", format!("must lie in 2..={}", x.n)));
            }
        }
        let grid = x.grid()?;
        let target = x.target(&grid)?;

        let c = &self.campaign;
        if c.experiments == 0 {
            return Err(invalid("campaign.experiments", "need at least one experiment"));
        }
        if c.periods < 2 {
            return Err(invalid("campaign.periods", "need at least two periods"));
        }
        if !(c.sampling_rate_hz.is_finite() && c.sampling_rate_hz > 0.0) {
            return Err(invalid("campaign.sampling_rate_hz", "must be finite and > 0"));
        }

        let detector = self.detector.build()?;
        if detector.bins > x.n / 16 {
            return Err(invalid(
                "detector.bins",
                format!("at most n/16 = {} bins", x.n / 16),
            ));
        }

        Ok(Resolved {
            system,
            plan: CampaignPlan {
                target,
                grid,
                amplitude: x.amplitude,
                experiments: c.experiments,
                periods: c.periods,
                base_seed: c.base_seed,
                sampling_rate_hz: c.sampling_rate_hz,
                design: DesignOptions {
                    max_iter: x.max_iter,
                    tol: x.tol,
                    segments: x.segments,
                },
            },
            detector,
        })
    }
}

pub fn parse_config(text: &str, origin: &str) -> Result<CampaignConfig, ConfigError> {
    let cfg: CampaignConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
        path: origin.to_string(),
        source,
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Read, fill defaults and validate.
pub fn load_config(path: &Path) -> Result<CampaignConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

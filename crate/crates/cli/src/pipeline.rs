//! Subcommand bodies. Each writes its artifacts into an output directory and
//! returns what it wrote for the caller to summarize.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use whsid_core::seed::{derive_seed, Stream};
use whsid_core::{
    analyze_profile, default_segments, design_nonstationary_multisine, envelope_from_inputs,
    experiment_variance, Campaign, DetectionReport, DetectorConfig, EnvelopeTarget,
    SignalNode, VarianceProfile, Verdict,
};

use crate::config::{CampaignConfig, Resolved};
use crate::io::{
    finish_manifest, fmt_num, write_columns, write_experiment, write_json,
    CalibrationInfo, CampaignFiles, CliError, Manifest, ENVELOPE_NAME, MANIFEST_FORMAT,
};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Sidecar of a designed input period.
#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub grid: Vec<usize>,
    #[serde(rename = "A0")]
    pub a0: f64,
    pub seed: u64,
    pub base_seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub envelope_error: f64,
}

/// Design the input period of experiment 0 and write `u0.csv` plus
/// `u0.json`.
pub fn design_input(cfg: &CampaignConfig, out: &Path) -> Result<DesignSummary, CliError> {
    let res = cfg.resolve()?;
    ensure_dir(out)?;
    let plan = &res.plan;
    let seed = derive_seed(plan.base_seed, 0, Stream::Phases);
    let outcome =
        design_nonstationary_multisine(&plan.target, &plan.grid, plan.amplitude, seed, &plan.design)?;
    write_columns(
        &out.join("u0.csv"),
        &["u0".to_string()],
        &[outcome.signal.samples()],
    )?;
    let summary = DesignSummary {
        n: plan.period_len(),
        grid: plan.grid.bins().to_vec(),
        a0: plan.amplitude,
        seed,
        base_seed: plan.base_seed,
        iterations: outcome.iterations,
        converged: outcome.converged,
        envelope_error: outcome.envelope_error(),
    };
    write_json(&out.join("u0.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseCalibration {
    pub reference: &'static str,
    pub snr_db: Option<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    /// Absent when the system has no process noise.
    pub process: Option<NoiseCalibration>,
    pub measurement: NoiseCalibration,
    /// Noise levels are set against the designed input of this experiment.
    pub reference_experiment: usize,
}

fn node_name(node: SignalNode) -> &'static str {
    match node {
        SignalNode::X => "x",
        SignalNode::Nonlinearity => "nonlinearity",
        SignalNode::Output => "output",
    }
}

fn calibration_report(campaign: &Campaign<f64>) -> CalibrationReport {
    let sys = campaign.system();
    let noise = |m: &whsid_core::NoiseModel<f64>| NoiseCalibration {
        reference: node_name(m.reference()),
        snr_db: m.snr_db(),
        gain: m.gain(),
    };
    CalibrationReport {
        process: (sys.location != whsid_core::NoiseLocation::None).then(|| noise(&sys.process)),
        measurement: noise(&sys.measurement),
        reference_experiment: 0,
    }
}

/// Calibrate noise gains and write `calibration.json`.
pub fn calibrate(cfg: &CampaignConfig, out: &Path) -> Result<CalibrationReport, CliError> {
    let res = cfg.resolve()?;
    ensure_dir(out)?;
    let campaign = Campaign::new(&res.system, res.plan)?;
    let report = calibration_report(&campaign);
    write_json(&out.join("calibration.json"), &report)?;
    Ok(report)
}

/// What `simulate` left on disk, plus the variance profile computed on the
/// fly so `run` need not read the campaign back.
pub struct Simulated {
    pub manifest: PathBuf,
    pub profile: VarianceProfile<f64>,
    pub envelope: EnvelopeTarget<f64>,
    pub detector: DetectorConfig,
}

/// Simulate the configured campaign into `out`. Experiments are written as
/// they finish; `campaign.json` comes last.
pub fn simulate(cfg: &CampaignConfig, out: &Path) -> Result<Simulated, CliError> {
    let Resolved {
        system,
        plan,
        detector,
    } = cfg.resolve()?;
    ensure_dir(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let envelope = plan.target.clone();
    let campaign = Campaign::new(&system, plan)?;
    let plan = campaign.plan();
    let done = (0..plan.experiments)
        .into_par_iter()
        .map(|m| {
            let exp = campaign.experiment(m)?;
            let entry = write_experiment(out, m, &exp)?;
            let var = experiment_variance(&exp.periods)?;
            Ok((entry, var))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (files, variances): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    let profile = VarianceProfile::from_experiments(variances, plan.periods)?;

    write_columns(&out.join(ENVELOPE_NAME), &["rms".to_string()], &[envelope.rms()])?;
    let cal = campaign.calibration();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        period_len: plan.period_len(),
        experiments: plan.experiments,
        periods: plan.periods,
        discard: 0,
        sampling_rate_hz: plan.sampling_rate_hz,
        files,
        envelope: Some(ENVELOPE_NAME.to_string()),
        base_seed: Some(plan.base_seed),
        calibration: Some(CalibrationInfo {
            process_gain: cal.process_gain,
            measurement_gain: cal.measurement_gain,
        }),
    };
    let manifest = finish_manifest(out, &manifest)?;
    Ok(Simulated {
        manifest,
        profile,
        envelope,
        detector,
    })
}

/// Normalize an external campaign (applying its discard) into `out`.
pub fn ingest(manifest: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let src = CampaignFiles::open(manifest)?;
    let record = crate::io::ingest_measurements(manifest)?;
    let envelope = src.envelope()?;
    crate::io::write_campaign(out, &record, envelope.as_deref(), src.manifest.base_seed)
}

/// Variance profile and envelope of a campaign on disk, one experiment in
/// memory per worker.
pub fn profile_from_disk(
    files: &CampaignFiles,
) -> Result<(VarianceProfile<f64>, EnvelopeTarget<f64>), CliError> {
    let variances = (0..files.experiment_count())
        .into_par_iter()
        .map(|m| {
            let exp = files.experiment(m)?;
            Ok(experiment_variance(&exp.periods)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let profile = VarianceProfile::from_experiments(variances, files.manifest.kept_periods())?;
    let envelope = match files.envelope()? {
        Some(rms) => EnvelopeTarget::custom(rms)?,
        None => {
            let inputs = (0..files.experiment_count())
                .map(|m| files.input(m))
                .collect::<Result<Vec<_>, _>>()?;
            let views: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
            envelope_from_inputs(&views, default_segments(files.manifest.period_len))?
        }
    };
    Ok((profile, envelope))
}

/// Detect on a campaign directory or manifest and write the report files.
pub fn detect(
    campaign: &Path,
    detector: &DetectorConfig,
    out: &Path,
) -> Result<DetectionReport<f64>, CliError> {
    let files = CampaignFiles::open(campaign)?;
    let (profile, envelope) = profile_from_disk(&files)?;
    finish_detection(&profile, &envelope, detector, out)
}

/// Full pipeline: design, simulate, detect.
pub fn run(cfg: &CampaignConfig, out: &Path) -> Result<DetectionReport<f64>, CliError> {
    let sim = simulate(cfg, out)?;
    finish_detection(&sim.profile, &sim.envelope, &sim.detector, out)
}

fn finish_detection(
    profile: &VarianceProfile<f64>,
    envelope: &EnvelopeTarget<f64>,
    detector: &DetectorConfig,
    out: &Path,
) -> Result<DetectionReport<f64>, CliError> {
    let report = analyze_profile(profile, envelope, detector)?;
    ensure_dir(out)?;
    write_columns(&out.join("profile.csv"), &["sigma2_e".to_string()], &[&profile.sigma2])?;
    write_bins(&out.join("bins.csv"), &report, profile.len())?;
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("summary.txt"), summary(&report)).map_err(|source| CliError::Io {
        path: out.join("summary.txt"),
        source,
    })?;
    Ok(report)
}

fn write_bins(path: &Path, report: &DetectionReport<f64>, n: usize) -> Result<(), CliError> {
    let bins = &report.bins;
    let count = bins.len();
    let start: Vec<f64> = bins.starts.iter().map(|&s| s as f64).collect();
    let end: Vec<f64> = (0..count)
        .map(|b| bins.starts.get(b + 1).copied().unwrap_or(n) as f64)
        .collect();
    let names = ["start", "end", "sigma2_e", "envelope_sq"].map(String::from);
    // `t` doubles as the bin index here.
    write_columns(
        path,
        &names,
        &[&start, &end, &bins.variance, &bins.envelope_sq],
    )
}

/// Human-readable report.
pub fn summary(r: &DetectionReport<f64>) -> String {
    let mut s = String::new();
    let verdict = match r.verdict {
        Verdict::Before => "process noise enters BEFORE the nonlinearity",
        Verdict::AfterOrAbsent => "process noise enters AFTER the nonlinearity, or is absent",
    };
    let _ = writeln!(s, "verdict:    {verdict}");
    let _ = writeln!(s, "signature:  {:?}", r.signature);
    let _ = writeln!(
        s,
        "rho:        {} (verdict needs |rho| >= {})",
        r.rho.map_or("undefined (flat envelope)".to_string(), fmt_num),
        r.thresholds.location.rho_min
    );
    let _ = writeln!(
        s,
        "ratio:      {} (or ratio >= {})",
        fmt_num(r.ratio),
        r.thresholds.location.ratio_min
    );
    let _ = writeln!(s, "mean var:   {}", fmt_num(r.mean_sigma2));
    let _ = writeln!(s, "dof/sample: {}", r.dof);
    if let Some(f) = &r.features {
        let _ = writeln!(
            s,
            "features:   peak_dip {:.4}, edge_to_floor {:.4}, shoulder_to_peak {:.4}, peak_is_max {}",
            f.peak_dip, f.edge_to_floor, f.shoulder_to_peak, f.peak_is_max
        );
    }
    let _ = writeln!(s, "note:       both decision rules are heuristic thresholds");
    s
}


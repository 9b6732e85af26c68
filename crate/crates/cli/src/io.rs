//! On-disk formats: CSV sample files, JSON manifests and reports.
//!
//! Floating-point values are written as `{:.16e}` (17 significant digits),
//! which round-trips every `f64` exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;
use whsid_core::{CampaignRecord, DetectError, ExcitationError, ExperimentRecord, SimError};

use crate::config::ConfigError;

pub const MANIFEST_FORMAT: &str = "whsid-campaign";
pub const MANIFEST_NAME: &str = "campaign.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{file}: non-finite or unparsable sample at line {line}, column `{column}`")]
    NonFiniteSample {
        file: PathBuf,
        line: usize,
        column: String,
    },
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("detector: {0}")]
    Detect(#[from] DetectError),
    #[error("excitation design: {0}")]
    Excitation(#[from] ExcitationError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with every float at full precision.
struct PreciseFormatter(PrettyFormatter<'static>);

impl Formatter for PreciseFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt_num(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let bytes = to_json(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_json(&tmp, value)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// CSV with a leading 0-based sample index column `t`.
pub fn write_columns(path: &Path, names: &[String], columns: &[&[f64]]) -> Result<(), CliError> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) || names.len() != columns.len() {
        return Err(CliError::DimensionMismatch(format!(
            "{}: ragged columns",
            path.display()
        )));
    }
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(columns.len() + 1);
    for t in 0..n {
        row.clear();
        row.push(t.to_string());
        row.extend(columns.iter().map(|c| fmt_num(c[t])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Columns of a CSV written by [`write_columns`] (or any CSV with a header
/// whose first column is the time index). The time column is dropped.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(CliError::DimensionMismatch(format!(
            "{}: need a time column and at least one data column",
            path.display()
        )));
    }
    let names = header[1..].to_vec();
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        if rec.len() != header.len() {
            return Err(CliError::DimensionMismatch(format!(
                "{} line {line}: {} fields, expected {}",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        for (c, field) in rec.iter().skip(1).enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => columns[c].push(v),
                _ => {
                    return Err(CliError::NonFiniteSample {
                        file: path.to_path_buf(),
                        line,
                        column: names[c].clone(),
                    })
                }
            }
        }
    }
    Ok((names, columns))
}

/// One experiment's files, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// CSV with `t` followed by one column per stored period.
    pub output: String,
    /// CSV with `t` and one column holding the input period.
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInfo {
    pub process_gain: f64,
    pub measurement_gain: f64,
}

/// Describes a campaign on disk, simulated or measured.
///
/// `periods` counts the period columns stored in each output file; the
/// first `discard` of them are dropped on ingestion.
#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_format")]
    pub format: String,
    pub period_len: usize,
    pub experiments: usize,
    pub periods: usize,
    #[serde(default)]
    pub discard: usize,
    pub sampling_rate_hz: f64,
    pub files: Vec<ManifestEntry>,
    /// CSV `t, rms` with the target input envelope, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
}

fn default_format() -> String {
    MANIFEST_FORMAT.to_string()
}

impl Manifest {
    pub fn kept_periods(&self) -> usize {
        self.periods.saturating_sub(self.discard)
    }

    fn check(&self, path: &Path) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::DimensionMismatch(format!("{}: {msg}", path.display())));
        if self.files.len() != self.experiments {
            return bad(format!(
                "{} files listed for {} experiments",
                self.files.len(),
                self.experiments
            ));
        }
        if self.discard >= self.periods {
            return bad(format!(
                "discarding {} of {} periods leaves none",
                self.discard, self.periods
            ));
        }
        if self.period_len == 0 {
            return bad("period_len is zero".into());
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return bad("sampling_rate_hz must be positive".into());
        }
        Ok(())
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct CampaignFiles {
    pub manifest: Manifest,
    pub dir: PathBuf,
}

impl CampaignFiles {
    /// Accepts the manifest file or a directory containing `campaign.json`.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let manifest: Manifest = read_json(&file)?;
        manifest.check(&file)?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, dir })
    }

    pub fn experiment_count(&self) -> usize {
        self.manifest.experiments
    }

    pub fn input(&self, m: usize) -> Result<Vec<f64>, CliError> {
        let path = self.dir.join(&self.manifest.files[m].input);
        let (_, mut cols) = read_columns(&path)?;
        if cols.len() != 1 || cols[0].len() != self.manifest.period_len {
            return Err(CliError::DimensionMismatch(format!(
                "{}: expected one column of {} samples",
                path.display(),
                self.manifest.period_len
            )));
        }
        Ok(cols.remove(0))
    }

    /// Experiment `m` with the declared discard applied.
    pub fn experiment(&self, m: usize) -> Result<ExperimentRecord<f64>, CliError> {
        let entry = &self.manifest.files[m];
        let path = self.dir.join(&entry.output);
        let (_, cols) = read_columns(&path)?;
        let (n, p) = (self.manifest.period_len, self.manifest.periods);
        if cols.len() != p || cols.iter().any(|c| c.len() != n) {
            return Err(CliError::DimensionMismatch(format!(
                "{}: found {} period columns of {} samples, expected {p} of {n}",
                path.display(),
                cols.len(),
                cols.first().map_or(0, Vec::len)
            )));
        }
        Ok(ExperimentRecord {
            input: self.input(m)?,
            periods: cols.into_iter().skip(self.manifest.discard).collect(),
            seed: entry.seed,
        })
    }

    pub fn envelope(&self) -> Result<Option<Vec<f64>>, CliError> {
        let Some(name) = &self.manifest.envelope else {
            return Ok(None);
        };
        let path = self.dir.join(name);
        let (_, mut cols) = read_columns(&path)?;
        if cols.len() != 1 || cols[0].len() != self.manifest.period_len {
            return Err(CliError::DimensionMismatch(format!(
                "{}: expected one column of {} samples",
                path.display(),
                self.manifest.period_len
            )));
        }
        Ok(Some(cols.remove(0)))
    }
}

/// Assemble a record from a manifest and its CSV files, applying the
/// declared discard and checking dimensions and finiteness.
pub fn ingest_measurements(manifest: &Path) -> Result<CampaignRecord<f64>, CliError> {
    let files = CampaignFiles::open(manifest)?;
    let experiments = (0..files.experiment_count())
        .into_par_iter()
        .map(|m| files.experiment(m))
        .collect::<Result<Vec<_>, _>>()?;
    let m = &files.manifest;
    let mut record =
        CampaignRecord::new(m.period_len, m.kept_periods(), m.sampling_rate_hz, experiments)?;
    if let Some(c) = m.calibration {
        record = record.with_calibration(whsid_core::Calibration {
            process_gain: c.process_gain,
            measurement_gain: c.measurement_gain,
        });
    }
    Ok(record)
}

pub fn output_name(m: usize) -> String {
    format!("output_{m}.csv")
}

pub fn input_name(m: usize) -> String {
    format!("input_{m}.csv")
}

pub fn period_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("period_{k}")).collect()
}

/// Write the output and input files of experiment `m` into `dir`.
pub fn write_experiment(
    dir: &Path,
    m: usize,
    exp: &ExperimentRecord<f64>,
) -> Result<ManifestEntry, CliError> {
    let cols: Vec<&[f64]> = exp.periods.iter().map(Vec::as_slice).collect();
    write_columns(&dir.join(output_name(m)), &period_names(cols.len()), &cols)?;
    write_columns(&dir.join(input_name(m)), &["u0".to_string()], &[&exp.input])?;
    Ok(ManifestEntry {
        output: output_name(m),
        input: input_name(m),
        seed: exp.seed,
    })
}

pub const ENVELOPE_NAME: &str = "envelope.csv";

/// Write every experiment, then the manifest last and atomically.
pub fn write_campaign(
    dir: &Path,
    record: &CampaignRecord<f64>,
    envelope: Option<&[f64]>,
    base_seed: Option<u64>,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = record
        .experiments()
        .par_iter()
        .enumerate()
        .map(|(m, e)| write_experiment(dir, m, e))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = Manifest {
        format: default_format(),
        period_len: record.period_len(),
        experiments: record.experiment_count(),
        periods: record.periods(),
        discard: 0,
        sampling_rate_hz: record.sampling_rate_hz(),
        files,
        envelope: match envelope {
            Some(env) => {
                write_columns(&dir.join(ENVELOPE_NAME), &["rms".to_string()], &[env])?;
                Some(ENVELOPE_NAME.to_string())
            }
            None => None,
        },
        base_seed,
        calibration: record.calibration().map(|c| CalibrationInfo {
            process_gain: c.process_gain,
            measurement_gain: c.measurement_gain,
        }),
    };
    finish_manifest(dir, &manifest)
}

pub fn finish_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let path = dir.join(MANIFEST_NAME);
    write_json_atomic(&path, manifest)?;
    Ok(path)
}

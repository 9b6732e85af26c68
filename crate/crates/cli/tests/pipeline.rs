use std::fs;
use std::path::Path;

use whsid_cli::io::{read_columns, write_columns, Manifest, ManifestEntry};
use whsid_cli::{ingest_measurements, parse_config, pipeline, write_campaign, CampaignConfig, CliError};
use whsid_core::{DetectorConfig, Signature, Verdict};

fn desk_config(nonlinearity: &str, location: &str, seed: u64) -> CampaignConfig {
    let text = format!(
        r#"{{
            "system": {{"nonlinearity": {nonlinearity}, "location": "{location}"}},
            "excitation": {{"n": 4096, "amplitude": 2.0}},
            "campaign": {{"experiments": 20, "periods": 20, "base_seed": {seed}}}
        }}"#
    );
    parse_config(&text, "inline").unwrap()
}

fn small_config() -> CampaignConfig {
    parse_config(
        r#"{"excitation": {"n": 256}, "campaign": {"experiments": 3, "periods": 4, "base_seed": 5},
            "detector": {"bins": 8}}"#,
        "inline",
    )
    .unwrap()
}

#[test]
fn written_campaign_ingests_to_the_same_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let res = cfg.resolve().unwrap();
    let record = whsid_core::run_campaign(&res.system, res.plan.clone()).unwrap();
    let manifest = write_campaign(dir.path(), &record, Some(res.plan.target.rms()), Some(5)).unwrap();
    let back = ingest_measurements(&manifest).unwrap();
    assert_eq!(back, record);
}

#[test]
fn simulate_then_detect_matches_run() {
    let cfg = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sim = pipeline::simulate(&cfg, a.path()).unwrap();
    let detected = pipeline::detect(&sim.manifest, &sim.detector, &a.path().join("det")).unwrap();
    let ran = pipeline::run(&cfg, b.path()).unwrap();
    assert_eq!(detected, ran);
    let ra = fs::read(a.path().join("det/report.json")).unwrap();
    let rb = fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    for name in ["profile.csv", "bins.csv"] {
        assert_eq!(
            fs::read(a.path().join("det").join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn campaign_layout_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let sim = pipeline::simulate(&small_config(), dir.path()).unwrap();
    assert!(!dir.path().join("campaign.json.tmp").exists());
    let manifest: Manifest = serde_json::from_slice(&fs::read(&sim.manifest).unwrap()).unwrap();
    assert_eq!((manifest.experiments, manifest.periods, manifest.period_len), (3, 4, 256));
    let (names, cols) = read_columns(&dir.path().join("output_2.csv")).unwrap();
    assert_eq!(names, ["period_1", "period_2", "period_3", "period_4"]);
    assert!(cols.iter().all(|c| c.len() == 256));
    let text = fs::read_to_string(dir.path().join("input_0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,u0"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,"));
    let mantissa = first.split(',').nth(1).unwrap().split('e').next().unwrap();
    assert!(mantissa.chars().filter(char::is_ascii_digit).count() >= 15);
}

fn write_external(dir: &Path, files: usize, periods: usize, n: usize, poison: Option<(usize, usize)>) -> std::path::PathBuf {
    let mut entries = Vec::new();
    for m in 0..files {
        let mut cols: Vec<Vec<f64>> = (0..periods)
            .map(|p| (0..n).map(|t| ((t * 7 + p * 13 + m) % 17) as f64 - 8.0).collect())
            .collect();
        if let Some((pm, t)) = poison {
            if pm == m {
                cols[1][t] = f64::NAN;
            }
        }
        let views: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        let names: Vec<String> = (0..periods).map(|p| format!("y{p}")).collect();
        write_columns(&dir.join(format!("y{m}.csv")), &names, &views).unwrap();
        let u: Vec<f64> = (0..n).map(|t| (t as f64).sin()).collect();
        write_columns(&dir.join(format!("u{m}.csv")), &["u".into()], &[&u]).unwrap();
        entries.push(ManifestEntry {
            output: format!("y{m}.csv"),
            input: format!("u{m}.csv"),
            seed: None,
        });
    }
    let manifest = Manifest {
        format: "whsid-campaign".into(),
        period_len: n,
        experiments: files,
        periods,
        discard: 1,
        sampling_rate_hz: 78125.0,
        files: entries,
        envelope: None,
        base_seed: None,
        calibration: None,
    };
    let path = dir.join("measured.json");
    fs::write(&path, serde_json::to_vec(&manifest).unwrap()).unwrap();
    path
}

#[test]
fn benchmark_layout_discards_the_first_period() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_external(dir.path(), 32, 33, 2048, None);
    let record = ingest_measurements(&path).unwrap();
    assert_eq!(record.experiment_count(), 32);
    assert_eq!(record.periods(), 32);
    assert_eq!(record.period_len(), 2048);
    // Stored period 2 is the first one kept.
    let (_, cols) = read_columns(&dir.path().join("y0.csv")).unwrap();
    assert_eq!(record.experiments()[0].periods[0], cols[1]);
}

#[test]
fn nan_sample_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_external(dir.path(), 2, 3, 64, Some((1, 10)));
    match ingest_measurements(&path) {
        Err(CliError::NonFiniteSample { file, line, column }) => {
            assert!(file.ends_with("y1.csv"));
            assert_eq!(line, 12);
            assert_eq!(column, "y1");
        }
        other => panic!("expected NonFiniteSample, got {other:?}"),
    }
}

#[test]
fn single_kept_period_is_rejected_by_detection() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_external(dir.path(), 2, 2, 256, None);
    let record = ingest_measurements(&path).unwrap();
    assert_eq!(record.periods(), 1);
    let err = pipeline::detect(&path, &DetectorConfig { bins: 8, ..Default::default() }, &dir.path().join("d"));
    assert!(matches!(err, Err(CliError::Detect(_))), "{err:?}");
}

#[test]
fn ingested_envelope_is_estimated_from_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_external(dir.path(), 3, 4, 256, None);
    let out = dir.path().join("norm");
    let manifest = pipeline::ingest(&path, &out).unwrap();
    let report = pipeline::detect(&manifest, &DetectorConfig { bins: 8, ..Default::default() }, &out).unwrap();
    assert!(report.ratio.is_finite());
    assert!(out.join("report.json").exists());
}

const SATURATION: &str = r#"{"kind": "saturation", "lo": -3, "hi": 3}"#;

#[test]
fn saturation_before_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let report = pipeline::run(&desk_config(SATURATION, "before", 1), dir.path()).unwrap();
    assert_eq!(report.verdict, Verdict::Before);
    assert_eq!(report.signature, Signature::SaturationLike);
}

#[test]
fn case_two_end_to_end_and_deterministic() {
    let cfg = desk_config(SATURATION, "after", 2);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let report = pipeline::run(&cfg, a.path()).unwrap();
    assert_eq!(report.verdict, Verdict::AfterOrAbsent);
    assert_eq!(report.signature, Signature::NotApplicable);
    pipeline::run(&cfg, b.path()).unwrap();
    assert_eq!(
        fs::read(a.path().join("report.json")).unwrap(),
        fs::read(b.path().join("report.json")).unwrap()
    );
}

#[test]
fn design_input_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let s = pipeline::design_input(&small_config(), dir.path()).unwrap();
    assert_eq!(s.n, 256);
    assert_eq!(s.grid.len(), 127);
    let side: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("u0.json")).unwrap()).unwrap();
    for key in ["N", "grid", "A0", "seed", "iterations", "envelope_error"] {
        assert!(side.get(key).is_some(), "{key}");
    }
    let (names, cols) = read_columns(&dir.path().join("u0.csv")).unwrap();
    assert_eq!(names, ["u0"]);
    assert_eq!(cols[0].len(), 256);
}

#[test]
fn calibration_file_lists_both_sources() {
    let dir = tempfile::tempdir().unwrap();
    let r = pipeline::calibrate(&small_config(), dir.path()).unwrap();
    assert_eq!(r.process.as_ref().unwrap().reference, "x");
    assert!(r.measurement.gain > 0.0);
    assert!(dir.path().join("calibration.json").exists());
}

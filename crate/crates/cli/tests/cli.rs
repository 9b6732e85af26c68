use std::process::Command;

fn whsid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_whsid"))
}

#[test]
fn run_subcommand_honours_env_out_dir_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"system": {"location": "none"}, "excitation": {"n": 512},
            "campaign": {"experiments": 2, "periods": 3}, "detector": {"bins": 8}}"#,
    )
    .unwrap();
    let out = dir.path().join("res");
    let status = whsid()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "9", "--threads", "1"])
        .env("WHSID_OUT", &out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["campaign.json", "report.json", "profile.csv", "bins.csv", "output_1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("campaign.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 9);
}

#[test]
fn invalid_config_fails_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"system": {"r": {"num": [1], "den": [1, -2]}}}"#).unwrap();
    let out = whsid()
        .args(["calibrate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("system.r"), "{stderr}");
}

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn mqtcn(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mqtcn"))
        .args(args)
        .env_remove("MQTCN_OUT_ROOT")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn ok(args: &[&str]) -> String {
    let (code, text) = mqtcn(args);
    assert_eq!(code, 0, "mqtcn {}: {text}", args.join(" "));
    text
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    let (code, text) = mqtcn(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["synth", "ingest", "train", "cv", "evaluate", "dtw", "transfer", "forecast"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(mqtcn(&["train", "--bogus"]).0, 1);
    assert_eq!(mqtcn(&["train", "--frame", "x.csv", "--horizon", "0"]).0, 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = mqtcn(&["ingest", "--sessions", "/nonexistent/sessions.csv", "--out", &s(dir.path())]);
    assert_eq!(code, 2);
    assert!(text.contains("/nonexistent/sessions.csv"), "{text}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"lookbak": 24}"#).unwrap();
    let (code, text) = mqtcn(&["synth", "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(code, 1);
    assert!(text.contains("lookbak"), "{text}");
}

#[test]
fn pipeline_train_evaluate_forecast() {
    let dir = tempfile::tempdir().unwrap();
    let d = |x: &str| s(&dir.path().join(x));
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"lookback": 24, "epochs": 2, "patience": 1, "seed": 3, "synth": {"months": 2},
            "hyper_params": {"blocks": 2, "channels": 8, "head_hidden": 8}}"#,
    )
    .unwrap();
    let c = s(&cfg);
    ok(&["synth", "--config", &c, "--out", &d("synth")]);
    ok(&["ingest", "--sessions", &d("synth/sessions.csv"), "--holidays", &d("synth/holidays.csv"), "--out", &d("frame")]);
    ok(&["train", "--config", &c, "--lookback", "48", "--frame", &d("frame/frame.csv"), "--out", &d("train")]);

    let written: Value = serde_json::from_str(&std::fs::read_to_string(d("train/config.json")).unwrap()).unwrap();
    assert_eq!(written["lookback"], 48, "flag beats config file");
    assert_eq!(written["epochs"], 2, "config file beats default");
    assert_eq!(written["horizon"], 24, "default fills the rest");

    for f in ["best.ckpt", "report.json", "forecasts.csv", "plot_data.csv", "coverage.csv", "manifest.json"] {
        assert!(dir.path().join("train").join(f).exists(), "missing {f}");
    }
    ok(&["evaluate", "--ckpt", &d("train/best.ckpt"), "--frame", &d("frame/frame.csv"), "--out", &d("eval")]);
    assert_eq!(
        std::fs::read(d("train/report.json")).unwrap(),
        std::fs::read(d("eval/report.json")).unwrap()
    );

    ok(&[
        "forecast",
        "--ckpt",
        &d("train/best.ckpt"),
        "--frame",
        &d("frame/frame.csv"),
        "--origin",
        "2019-02-20T00:00:00Z",
        "--out",
        &d("fc"),
    ]);
    let text = std::fs::read_to_string(d("fc/forecasts.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("q05") && header.contains("q50") && header.contains("q90"), "{header}");
    assert_eq!(lines.count(), 24);

    let (code, _) = mqtcn(&[
        "forecast",
        "--ckpt",
        &d("train/best.ckpt"),
        "--frame",
        &d("frame/frame.csv"),
        "--origin",
        "2030-01-01T00:00:00Z",
        "--out",
        &d("fc2"),
    ]);
    assert_eq!(code, 2);
}

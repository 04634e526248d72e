//! Drives the command-line interface end to end in a temporary directory:
//! synth, ingest, train, forecast and replay.
//!
//! cargo run --release --example cli_pipeline

fn run(args: &[&str]) {
    println!("$ mqtcn {}", args.join(" "));
    let code = mqtcn::cli::run(std::iter::once("mqtcn").chain(args.iter().copied()));
    assert_eq!(code, 0, "command failed with exit code {code}");
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    std::fs::write(
        p("config.json"),
        r#"{"lookback": 48, "epochs": 10, "patience": 3, "synth": {"months": 3},
            "hyper_params": {"blocks": 2, "channels": 16, "head_hidden": 16, "dropout": 0.0, "lr": 0.005}}"#,
    )
    .expect("config written");
    run(&["synth", "--config", &p("config.json"), "--out", &p("synth")]);
    run(&["ingest", "--sessions", &p("synth/sessions.csv"), "--holidays", &p("synth/holidays.csv"), "--out", &p("frame")]);
    run(&["train", "--config", &p("config.json"), "--frame", &p("frame/frame.csv"), "--out", &p("train")]);
    run(&[
        "forecast",
        "--ckpt",
        &p("train/best.ckpt"),
        "--frame",
        &p("frame/frame.csv"),
        "--origin",
        "2019-03-15T00:00:00Z",
        "--out",
        &p("forecast"),
    ]);
    run(&["replay", "--manifest", &p("train/manifest.json"), "--out", &p("replay")]);
    let same = std::fs::read(p("train/report.json")).ok() == std::fs::read(p("replay/report.json")).ok();
    println!("replayed report identical: {same}");
    print!("{}", std::fs::read_to_string(p("forecast/forecasts.csv")).expect("forecast written"));
}

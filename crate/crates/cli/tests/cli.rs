use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/experiment.json")
}

fn positron(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_positron")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn dynamic_range_values() {
    let out = positron(&["dynamic-range", "posit8es0", "fixed8q4", "posit7es0", "float7e3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let range = |tag: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(tag)).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert_eq!(format!("{:.3}", range("posit8es0")), "3.612");
    assert_eq!(format!("{:.3}", range("fixed8q4")), "2.104");
    assert!(range("posit7es0") > range("float7e3"));
}

#[test]
fn unknown_format_tag_is_rejected() {
    let out = positron(&["dynamic-range", "posit8es9"]);
    assert!(!out.status.success());
    let out = positron(&["dynamic-range", "bfloat16"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bfloat16"));
}

#[test]
fn train_quantize_infer() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("iris.json");
    let quant = dir.path().join("iris-posit8.json");
    let cfg = config();
    let cfg = cfg.to_str().unwrap();

    let out = positron(&["train", "--dataset", "iris", "--config", cfg, "-o", model.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(model.exists());
    let acc: f64 = stdout(&out)
        .split("test accuracy ")
        .nth(1)
        .and_then(|s| s.split('%').next())
        .and_then(|s| s.parse().ok())
        .expect("accuracy printed");
    assert!(acc >= 96.0, "iris accuracy {acc}");

    let out = positron(&["quantize", "--model", model.to_str().unwrap(), "--format", "posit8es0", "-o", quant.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = positron(&["infer", "--model", quant.to_str().unwrap(), "--dataset", "iris", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("row ")).count(), 50);
    assert!(text.lines().last().unwrap().starts_with("iris posit8es0: accuracy"));

    let out = positron(&["infer", "--model", model.to_str().unwrap(), "--dataset", "iris", "--config", cfg, "--quiet"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("iris real: accuracy"));

    // a quantized model cannot be reinterpreted in another format
    let out = positron(&["infer", "--model", quant.to_str().unwrap(), "--dataset", "iris", "--config", cfg, "--format", "fixed8q4"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("posit8es0"), "{}", stderr(&out));

    // feature count mismatch
    let out = positron(&["infer", "--model", quant.to_str().unwrap(), "--dataset", "wdbc", "--config", cfg]);
    assert!(!out.status.success());
}

#[test]
fn missing_model_file_fails() {
    let out = positron(&["quantize", "--model", "/nonexistent/model.json", "--format", "posit8es0", "-o", "/tmp/x.json"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

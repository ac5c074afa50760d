//! CLI integration tests: subcommand behavior, exit codes, reproducibility,
//! and golden files for every JSON/CSV output schema.
//!
//! Golden files live in `tests/golden/`; set `UPDATE_GOLDEN=1` to rewrite
//! them after an intentional schema change.

use lightator::fixtures;
use lightator::netir;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lightator")
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/paper-calibration.toml")
}

fn run_cli(args: &[&str]) -> Output {
    run_cli_in(Path::new("."), args)
}

/// Run from a working directory so paths embedded in outputs stay relative
/// and reproducible.
fn run_cli_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .arg("--config")
        .arg(shipped_config().canonicalize().unwrap())
        .args(args)
        .output()
        .expect("spawn CLI")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "CLI failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn check_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {name} ({e}); run with UPDATE_GOLDEN=1"));
    assert_eq!(actual, expected, "{name} drifted from its golden file");
}

fn write_conv7(dir: &Path) -> PathBuf {
    fixtures::write_fixture(&fixtures::conv7_demo(), dir).unwrap()
}

#[test]
fn map_reports_paper_counts() {
    let dir = tempfile::tempdir().unwrap();
    let lenet = fixtures::write_fixture(&fixtures::lenet_like(), dir.path()).unwrap();
    let out = stdout_of(&run_cli(&["map", lenet.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    // First conv layer: 3x3 kernels run six strides per bank.
    assert_eq!(v["layers"][0]["strides_per_bank"], 6);
    assert_eq!(v["layers"][0]["unused_mrs_per_stride"], 0);

    let conv7 = write_conv7(dir.path());
    let out = stdout_of(&run_cli(&["map", conv7.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["layers"][0]["unused_mrs_per_stride"], 5);
    assert_eq!(v["layers"][0]["strides_per_bank"], 1);
    check_golden("map_conv7.json", &out);
}

#[test]
fn malformed_manifest_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = run_cli(&["map", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());

    // Structurally invalid model: validation exit code.
    let invalid = dir.path().join("invalid.json");
    std::fs::write(
        &invalid,
        serde_json::json!({
            "schema_version": 1,
            "name": "x",
            "input": {"height": 8, "width": 8, "channels": 1},
            "layers": [
                {"kind": "fc", "n_in": 99, "n_out": 4, "weight_bits": 4, "weights": "none.f32"}
            ]
        })
        .to_string(),
    )
    .unwrap();
    let out = run_cli(&["map", invalid.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn run_is_deterministic_and_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let conv7 = write_conv7(dir.path());
    let img = conv7.parent().unwrap().join("in.pgm");
    let frame = fixtures::digit_frame();
    // Crop the 28x28 digit to the demo model's 16x16 input.
    let mut crop = Vec::with_capacity(256);
    for y in 6..22 {
        for x in 6..22 {
            crop.push(frame.source[y * 28 + x]);
        }
    }
    netir::save_pgm(&img, 16, 16, &crop).unwrap();

    let args = ["run", "conv7-demo.json", "in.pgm"];
    let first = stdout_of(&run_cli_in(conv7.parent().unwrap(), &args));
    let second = stdout_of(&run_cli_in(conv7.parent().unwrap(), &args));
    assert_eq!(first, second, "identical inputs must give identical bytes");
    check_golden("run_conv7.json", &first);
}

#[test]
fn freeze_scales_writes_back_into_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let lenet = fixtures::write_fixture(&fixtures::lenet_like(), dir.path()).unwrap();
    let img = dir.path().join("digit.pgm");
    let frame = fixtures::digit_frame();
    netir::save_pgm(&img, 28, 28, &frame.source).unwrap();

    let base = dir.path();
    let args = ["run", "lenet-like.json", "digit.pgm", "--freeze-scales"];
    let first = stdout_of(&run_cli_in(base, &args));
    // The manifest now carries the resolved scales and reloads cleanly.
    let frozen = netir::load_model(&lenet).unwrap();
    let scales = frozen.act_scales.expect("scales frozen");
    assert!(scales.iter().any(|&s| s > 0.0));
    // A rerun against the frozen manifest reproduces the outputs.
    let second = stdout_of(&run_cli_in(base, &["run", "lenet-like.json", "digit.pgm"]));
    let a: serde_json::Value = serde_json::from_str(&first).unwrap();
    let b: serde_json::Value = serde_json::from_str(&second).unwrap();
    assert_eq!(a["frames"][0]["outputs"], b["frames"][0]["outputs"]);
}

#[test]
fn power_emits_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let conv7 = write_conv7(dir.path());
    let csv_path = dir.path().join("power.csv");
    let out = stdout_of(&run_cli(&[
        "power",
        conv7.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]));
    check_golden("power_conv7.json", &out);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    check_golden("power_conv7.csv", &csv);
    assert!(csv.starts_with("layer,component,watts\n"));
    // One row per component for the single mapped layer.
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn power_shows_dac_dominance_on_the_cifar_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let vgg = fixtures::write_fixture(&fixtures::vgg9_like_ca(), dir.path()).unwrap();
    let out = stdout_of(&run_cli(&[
        "power",
        vgg.to_str().unwrap(),
        "--precision",
        "3:4",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let layers = v["report"]["layers"].as_array().unwrap();
    let mut convs = 0;
    for l in layers {
        if l["is_conv"].as_bool().unwrap() {
            convs += 1;
            assert!(
                l["dac_share"].as_f64().unwrap() > 0.85,
                "conv layer {} below 85% DAC share",
                l["layer_index"]
            );
        }
    }
    assert_eq!(convs, 6);
}

#[test]
fn compress_white_frame_to_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("white.ppm");
    netir::save_ppm(&input, 4, 4, &[255u8; 48]).unwrap();
    let output = dir.path().join("white_out.pgm");
    stdout_of(&run_cli_in(
        dir.path(),
        &[
            "compress",
            "white.ppm",
            "white_out.pgm",
            "--pool",
            "2x2",
            "--fuse",
            "--path",
            "optical",
        ],
    ));
    let frame = netir::load_image(&output).unwrap();
    assert_eq!(frame.dims.h, 2);
    assert_eq!(frame.dims.w, 2);
    assert!(frame.source.iter().all(|&v| v == 255));
    let sidecar = std::fs::read_to_string(output.with_extension("json")).unwrap();
    check_golden("compress_white.json", &sidecar);
}

#[test]
fn calibrate_matches_reference_points() {
    let out = stdout_of(&run_cli(&[
        "calibrate",
        "--point",
        "4:5.28",
        "--point",
        "3:2.71",
        "--predict",
        "2",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["alpha"].as_f64().unwrap() - 0.32125).abs() < 1e-9);
    assert!((v["beta"].as_f64().unwrap() - 0.46125).abs() < 1e-9);
    assert!((v["predictions"][0]["watts"].as_f64().unwrap() - 1.425).abs() < 1e-9);
    check_golden("calibrate.json", &out);

    let out = run_cli(&["calibrate", "--point", "4:5.28", "--point", "4:5.00"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn precision_override_changes_power() {
    let dir = tempfile::tempdir().unwrap();
    let conv7 = write_conv7(dir.path());
    let net_w = |precision: &str| -> f64 {
        let out = stdout_of(&run_cli(&[
            "power",
            conv7.to_str().unwrap(),
            "--precision",
            precision,
        ]));
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        v["report"]["network_w"].as_f64().unwrap()
    };
    let p4 = net_w("4:4");
    let p3 = net_w("3:4");
    let p2 = net_w("2:4");
    assert!(p4 > p3 && p3 > p2);

    // Activation bits are fixed by the hardware.
    let dir2 = tempfile::tempdir().unwrap();
    let conv7b = write_conv7(dir2.path());
    let out = run_cli(&["power", conv7b.to_str().unwrap(), "--precision", "4:8"]);
    assert_eq!(out.status.code(), Some(4));
}

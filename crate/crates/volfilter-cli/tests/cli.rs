//! End-to-end smoke tests of the CLI binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_volfilter"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("volfilter_cli_tests").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_sample_chain(path: &PathBuf) {
    // 2005-03-01 chain, one ~31-day maturity, strikes straddling the spot
    let mut rows = String::from("date,maturity_date,strike,type,bid,ask,spot,underlying_id\n");
    for (k, c, p) in [
        (90.0, 10.30, 0.10),
        (95.0, 5.80, 0.55),
        (100.0, 2.30, 2.05),
        (105.0, 0.55, 5.30),
        (110.0, 0.08, 9.85),
    ] {
        rows.push_str(&format!("2005-03-01,2005-04-01,{k},C,{:.2},{:.2},100.0,TEST\n", c - 0.05, c + 0.05));
        rows.push_str(&format!("2005-03-01,2005-04-01,{k},P,{:.2},{:.2},100.0,TEST\n", (p - 0.05_f64).max(0.0), p + 0.05));
    }
    std::fs::write(path, rows).unwrap();
}

#[test]
fn help_lists_all_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "price",
        "build-matrix",
        "invert",
        "select-alpha",
        "filter",
        "calibrate",
        "varswap",
        "vix",
        "experiment",
        "pipeline",
    ] {
        assert!(text.contains(cmd), "--help does not list {cmd}");
    }
}

#[test]
fn price_black_scholes_known_value() {
    let out = bin()
        .args([
            "price",
            "--model",
            "black-scholes",
            "--spot",
            "100",
            "--rate",
            "0.02",
            "--strike",
            "100",
            "--maturity",
            "0.03968253968253968",
            "--x0",
            "0.15",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let price = v["price"].as_f64().unwrap();
    assert!((price - 1.231637924548240).abs() < 1e-9, "price {price}");
}

#[test]
fn build_matrix_invert_select_alpha_round_trip() {
    let dir = tmp_dir("matrix_invert");
    let chain = dir.join("chain.csv");
    write_sample_chain(&chain);
    let matrix = dir.join("matrix.csv");
    let out = bin()
        .args([
            "build-matrix",
            "--chain",
            chain.to_str().unwrap(),
            "--model",
            "heston",
            "--grid-size",
            "21",
            "--grid-dx",
            "0.005",
            "--out",
            matrix.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let diag: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(diag["singular_values"].as_array().unwrap().len(), 10);

    let density = dir.join("density.csv");
    let out = bin()
        .args([
            "invert",
            "--matrix",
            matrix.to_str().unwrap(),
            "--alpha0",
            "1e-3",
            "--out-density",
            density.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let weights: Vec<f64> = rep["density"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .collect();
    let sum: f64 = weights.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9, "weights sum {sum}");
    assert!(density.exists());

    let out = bin()
        .args([
            "select-alpha",
            "--matrix",
            matrix.to_str().unwrap(),
            "--precision",
            "0.05",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let sel: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(sel["alpha0"].as_f64().unwrap() > 0.0);
}

#[test]
fn vix_command_on_sample_chain() {
    let dir = tmp_dir("vix");
    let chain = dir.join("chain.csv");
    write_sample_chain(&chain);
    let out = bin()
        .args(["vix", "--chain", chain.to_str().unwrap(), "--rate", "0.0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let vix = v["vix"].as_f64().unwrap();
    assert!(vix > 5.0 && vix < 40.0, "vix {vix}");
}

#[test]
fn experiment_bs_emits_density_and_smile() {
    let dir = tmp_dir("experiment_bs");
    let out = bin()
        .args(["experiment", "bs", "--out-dir", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = rep["inversion"]["moments"]["mean"].as_f64().unwrap();
    assert!((mean - 0.15).abs() < 1e-4);
    assert!(dir.join("density.csv").exists());
    assert!(dir.join("smile.csv").exists());
    assert!(dir.join("report.json").exists());
}

#[test]
fn config_overrides_reach_the_experiment() {
    let dir = tmp_dir("experiment_cfg");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "alpha0 = 1\n").unwrap();
    let out = bin()
        .args([
            "experiment",
            "bs",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // extreme entropy regularization flattens the density, inflating std
    let std_extreme = rep["inversion"]["moments"]["std"].as_f64().unwrap();
    assert!(std_extreme > 0.06, "std {std_extreme}");
}

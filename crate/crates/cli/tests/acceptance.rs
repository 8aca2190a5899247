//! CLI acceptance: byte-identical outputs across parallelism widths
//! (criterion 10), exit statuses, and manifest reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn kpp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kpp"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("kpp_acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run_ok(sub: &str, config: &Path, out: &Path) {
    let status = kpp()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "{sub} failed");
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_10_byte_identical_across_parallelism_widths() {
    let base = scratch("determinism");
    let cases = [
        (
            "extinction",
            "[mc]\nreps = 200\nseed = 99\nparallelism = WIDTH\n",
        ),
        (
            "couple",
            "[mc]\nreps = 16\nseed = 5\nparallelism = WIDTH\n[physical]\nhorizon = 1.0\n",
        ),
        (
            "upper",
            "[mc]\nreps = 48\nseed = 7\nparallelism = WIDTH\n[physical]\nlevels = [5.0]\nt_grid = [0.25, 0.5]\n",
        ),
        (
            "recurrence",
            "[mc]\nreps = 32\nseed = 11\nparallelism = WIDTH\n[physical]\ntheta = 4.0\nhorizon = 4.0\ncenter = 4.0\n[numerics]\nx_lo = -60.0\nx_hi = 60.0\n",
        ),
    ];
    let mut checked = 0;
    for (sub, template) in cases {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for width in [1usize, 4, 8] {
            let cfg = write_config(
                &base,
                &format!("{sub}_{width}.toml"),
                &template.replace("WIDTH", &width.to_string()),
            );
            let out = base.join(format!("{sub}_w{width}"));
            run_ok(sub, &cfg, &out);
            let csvs = read_csvs(&out);
            assert!(!csvs.is_empty(), "{sub} produced no CSVs");
            match &reference {
                None => reference = Some(csvs),
                Some(r) => {
                    assert_eq!(r, &csvs, "{sub}: width {width} CSVs differ from width 1");
                    checked += csvs.len();
                }
            }
        }
    }
    println!(
        "criterion 10 PASS — extinction/couple/upper/recurrence CSVs byte-identical at widths \
         1, 4, 8 ({checked} file comparisons)"
    );
}

#[test]
fn config_errors_exit_2_naming_the_field() {
    let base = scratch("exit2");
    let cfg = write_config(&base, "bad.toml", "[numerics]\ndt = 1.0\n");
    let out = kpp()
        .args(["extinction", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(base.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("numerics.dt"), "stderr: {msg}");
}

#[test]
fn zero_survivors_exit_3() {
    let base = scratch("exit3");
    let cfg = write_config(
        &base,
        "doomed.toml",
        "[physical]\nprofile = \"zero\"\nhorizon = 1.0\n[mc]\nreps = 8\n",
    );
    let out = kpp()
        .args(["recurrence", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(base.join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn zero_profile_simulate_is_extinct_at_zero() {
    let base = scratch("zero_sim");
    let cfg = write_config(
        &base,
        "zero.toml",
        "[physical]\nprofile = \"zero\"\nhorizon = 0.5\n",
    );
    let out_dir = base.join("out");
    run_ok("simulate", &cfg, &out_dir);
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "0", "mass column: {line}");
        assert_eq!(cols[2], "-inf", "R0 column: {line}");
        assert_eq!(cols[3], "inf", "L0 column: {line}");
    }
}

#[test]
fn env_var_overrides_output_dir() {
    let base = scratch("envdir");
    let cfg = write_config(
        &base,
        "c.toml",
        "[mc]\nreps = 4\n[physical]\nhorizon = 0.25\n",
    );
    let env_out = base.join("env_out");
    let status = kpp()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(base.join("flag_out"))
        .env("KPP_OUT_DIR", &env_out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(env_out.join("manifest.json").exists());
    assert!(!base.join("flag_out").exists());
}

#[test]
fn manifest_reproduces_run_and_echoes_config() {
    let base = scratch("manifest");
    let cfg = write_config(&base, "c.toml", "[mc]\nreps = 50\nseed = 31\n");
    let out1 = base.join("one");
    run_ok("extinction", &cfg, &out1);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 31);
    assert_eq!(manifest["replicates"], 50);
    assert!(manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "estimates.csv"));

    // Re-running from the echoed config reproduces the CSV bytes.
    let echoed = manifest["config"].clone();
    let cfg2 = write_config(
        &base,
        "echo.toml",
        &toml::to_string(&echoed).expect("config echo serializes to toml"),
    );
    let out2 = base.join("two");
    run_ok("extinction", &cfg2, &out2);
    assert_eq!(
        fs::read(out1.join("estimates.csv")).unwrap(),
        fs::read(out2.join("estimates.csv")).unwrap()
    );
}

#[test]
fn print_config_round_trips() {
    let out = kpp().args(["print-config", "wave"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: toml::Value = text.parse().unwrap();
    assert_eq!(parsed["physical"]["theta"].as_float(), Some(5.0));
    assert_eq!(parsed["numerics"]["dx"].as_float(), Some(0.2));
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nfc_core::io::read_raw;
use nfc_core::{LinearOperator, StepRecord};
use tempfile::TempDir;

const QUICK: &str = r#"{
  "task": "identity",
  "scene": {"kind": "synthetic", "id": 7},
  "shape": {"channels": 1, "height": 32, "width": 32},
  "prior": {"kind": "gaussian", "mean": {"constant": 0.5}, "std": 1000.0},
  "sigma_y": 0.0,
  "sampler": {"schedule": {"n_outer": 12, "c_tau": 0.001, "eta_base": 0.9, "langevin_steps": 64,
                           "detail_gate": {"mode": "constant", "value": 1.0}}},
  "seeds": [0, 1],
  "verify": {"power_iters": 300, "lipschitz_trials": 10, "descent_trials": 100, "wiener_trials": 20,
             "detail_chains": 16, "detail_retained": 512}
}"#;

fn nfc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfc"))
        .current_dir(dir)
        .env("NFC_DETERMINISTIC", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = nfc(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    out
}

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.json"), config).unwrap();
    dir
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn every_command_is_byte_reproducible() {
    let dir = workspace(QUICK);
    for out in ["a", "b"] {
        for cmd in ["degrade", "restore", "ablate", "verify", "report"] {
            ok(
                dir.path(),
                &["--config", "run.json", "--out", out, "--dump-stride", "5", cmd],
            );
        }
    }
    let (a, b) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(a.len() > 20);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (path, bytes) in &a {
        assert!(&b[path] == bytes, "{} differs", path.display());
    }
}

#[test]
fn restore_outputs_per_seed_and_meets_the_noiseless_bound() {
    let dir = workspace(QUICK);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "degrade"]);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "restore"]);
    let o = dir.path().join("o/restore");
    for seed in ["seed_0000", "seed_0001"] {
        assert!(o.join(seed).join("record.jsonl").is_file());
        assert!(o.join(seed).join("x0.png").is_file());
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert!(summary["aggregate"]["psnr_median"].as_f64().unwrap() >= 40.0);
    assert_eq!(summary["schedule"].as_array().unwrap().len(), 12);
}

#[test]
fn dump_stride_ten_over_two_hundred_steps_gives_twenty_images() {
    let cfg = QUICK
        .replace("\"n_outer\": 12", "\"n_outer\": 200")
        .replace("\"langevin_steps\": 64", "\"langevin_steps\": 1");
    let dir = workspace(&cfg);
    ok(
        dir.path(),
        &["--config", "run.json", "--out", "o", "--seed-list", "3", "degrade"],
    );
    ok(
        dir.path(),
        &[
            "--config",
            "run.json",
            "--out",
            "o",
            "--seed-list",
            "3",
            "--dump-stride",
            "10",
            "restore",
        ],
    );
    let steps = fs::read_dir(dir.path().join("o/restore/seed_0003/steps"))
        .unwrap()
        .count();
    assert_eq!(steps, 20);
}

#[test]
fn ablate_nfc_matches_restore_and_full_band_is_all_pass() {
    let cfg = QUICK.replace("\"sigma_y\": 0.0", "\"sigma_y\": 0.05");
    let dir = workspace(&cfg);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "degrade"]);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "restore"]);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "ablate"]);
    let o = dir.path().join("o");
    for seed in ["seed_0000", "seed_0001"] {
        assert_eq!(
            fs::read(o.join("restore").join(seed).join("x0.nfct")).unwrap(),
            fs::read(o.join("ablate/nfc").join(seed).join("x0.nfct")).unwrap()
        );
        let text = fs::read_to_string(o.join("ablate/full_band").join(seed).join("record.jsonl")).unwrap();
        for line in text.lines() {
            let r: StepRecord = serde_json::from_str(line).unwrap();
            assert_eq!((r.omega_frac, r.lambda), (1.0, 0.0));
        }
    }
    assert!(o.join("ablate/comparison.txt").is_file());
}

#[test]
fn degrade_contracts() {
    // noiseless measurement equals A x exactly
    let dir = workspace(QUICK);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "degrade"]);
    let d = dir.path().join("o/degrade/seed_0000");
    assert_eq!(
        read_raw(&d.join("y.nfct")).unwrap(),
        read_raw(&d.join("x.nfct")).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sigma_y"].as_f64(), Some(0.0));

    // inpainting keeps exactly 30% of pixels, and the manifest regenerates y
    let cfg = QUICK
        .replace("\"identity\"", "\"inpaint_random\"")
        .replace("\"sigma_y\": 0.0", "\"sigma_y\": 0.05");
    let dir = workspace(&cfg);
    ok(dir.path(), &["--config", "run.json", "--out", "o", "degrade"]);
    let d = dir.path().join("o/degrade/seed_0001");
    let op: LinearOperator = serde_json::from_slice(&fs::read(d.join("operator.json")).unwrap()).unwrap();
    let ones = nfc_core::ImageTensor::filled(op.input_shape(), 1.0);
    let kept = op.apply(&ones).unwrap().data().iter().filter(|v| **v == 1.0).count();
    assert_eq!(kept, (0.3f64 * 32.0 * 32.0).round() as usize);
    let manifest = d.join("manifest.json");
    ok(
        dir.path(),
        &["--config", manifest.to_str().unwrap(), "--out", "again", "degrade"],
    );
    assert_eq!(
        fs::read(d.join("y.nfct")).unwrap(),
        fs::read(dir.path().join("again/degrade/seed_0001/y.nfct")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = workspace(QUICK);
    assert_eq!(
        nfc(dir.path(), &["--config", "missing.json", "restore"]).status.code(),
        Some(2)
    );
    fs::write(dir.path().join("bad.json"), r#"{"sigmay": 1}"#).unwrap();
    assert_eq!(
        nfc(dir.path(), &["--config", "bad.json", "degrade"]).status.code(),
        Some(2)
    );
    assert_eq!(
        nfc(dir.path(), &["--config", "run.json", "--out", "nothing", "restore"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        nfc(dir.path(), &["--config", "run.json", "--seed-list", "1,1", "degrade"])
            .status
            .code(),
        Some(2)
    );

    let fail = nfc(
        dir.path(),
        &[
            "--config",
            "run.json",
            "--out",
            "v",
            "verify",
            "--tol",
            "parseval=1e-18",
        ],
    );
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("parseval_relative"));
    assert_eq!(
        nfc(dir.path(), &["--config", "run.json", "--out", "v", "verify"])
            .status
            .code(),
        Some(0)
    );

    let diverging = QUICK.replace(
        "\"c_tau\": 0.001",
        "\"c_tau\": 0.001, \"step_rule\": {\"rule\": \"fixed\", \"eta\": 50.0}",
    );
    fs::write(dir.path().join("div.json"), diverging).unwrap();
    ok(dir.path(), &["--config", "div.json", "--out", "d", "degrade"]);
    let out = nfc(dir.path(), &["--config", "div.json", "--out", "d", "restore"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outer step"));
}

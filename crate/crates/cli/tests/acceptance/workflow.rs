//! Criteria exercised through the `mecdl` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use mecdl::io::{load, save, DatasetFile};
use mecdl::kspace::{forward, make_mask, AcquiredData, EchoStack, SamplingMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::desk::{trace_stability, GAMMA, INNER_ITERS, LAMBDA, OUTER_ITERS, PATCH_SIZE, STRIDE};
use crate::ensure;
use crate::oracles::random_complex;
use crate::Check;

fn mecdl(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mecdl"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| format!("cannot start mecdl: {e}"))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`mecdl {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Every manifest in `dir` is re-run into `dir/again`; all recorded outputs
/// except JSON reports (which carry wall times) must match byte for byte.
fn rerun_all(dir: &Path) -> Result<usize, String> {
    let again = dir.join("again");
    std::fs::create_dir_all(&again).map_err(|e| e.to_string())?;
    let mut manifests: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    manifests.sort();
    let mut compared = 0;
    for m in &manifests {
        mecdl(
            &["rerun", &m.to_string_lossy(), "--output-dir", &again.to_string_lossy()],
            dir,
        )?;
        let recorded = read_json(m)?;
        let outputs = recorded["outputs"].as_array().ok_or("manifest without outputs")?;
        for o in outputs {
            let original = PathBuf::from(o.as_str().ok_or("non-string output path")?);
            if original.extension().is_some_and(|e| e == "json") {
                continue;
            }
            let rel = original
                .strip_prefix(dir)
                .map_err(|_| "output outside the run directory")?;
            // PNGs sit one level down in their own directory.
            let copy = match rel.parent().filter(|p| !p.as_os_str().is_empty()) {
                Some(sub) => again.join(sub.file_name().unwrap()).join(rel.file_name().unwrap()),
                None => again.join(rel),
            };
            let a = std::fs::read(&original).map_err(|e| format!("{}: {e}", original.display()))?;
            let b = std::fs::read(&copy).map_err(|e| format!("{}: {e}", copy.display()))?;
            ensure!(a == b, "{} differs after rerunning {}", rel.display(), m.display());
            compared += 1;
        }
    }
    Ok(compared)
}

fn random_masks(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> Vec<SamplingMask> {
    (0..n)
        .map(|_| make_mask(h, w, rng.random_range(1..=h), 0.33, rng.random()).unwrap())
        .collect()
}

/// `save(load(f))` reproduces `f` byte for byte on 20 random files.
fn load_save_identity(dir: &Path) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for case in 0..20 {
        let h = rng.random_range(2..24);
        let w = rng.random_range(1..24);
        let n = rng.random_range(1..5);
        let first = dir.join(format!("random{case}.mec"));
        let second = dir.join(format!("random{case}.copy.mec"));
        let x = EchoStack::<f32>::from_vec(
            h,
            w,
            n,
            random_complex(&mut rng, h * w * n)
                .into_iter()
                .map(|z| mecdl::Complex::new(z.re as f32, z.im as f32))
                .collect(),
        )
        .unwrap();
        let err = |e: mecdl::Error| format!("file {case}: {e}");
        match case % 3 {
            0 => {
                save(&first, &x).map_err(err)?;
                let back: EchoStack<f32> = load(&first).map_err(err)?;
                ensure!(back == x, "file {case}: images changed on load");
                save(&second, &back).map_err(err)?;
            }
            1 => {
                let masks = random_masks(&mut rng, h, w, n);
                let sigma = rng.random_range(0.0..0.1f32);
                let d: AcquiredData<f32> = forward(&x, &masks, sigma, case as u64).map_err(err)?;
                save(&first, &d).map_err(err)?;
                let back: AcquiredData<f32> = load(&first).map_err(err)?;
                ensure!(back == d, "file {case}: K-space changed on load");
                save(&second, &back).map_err(err)?;
            }
            _ => {
                let masks = random_masks(&mut rng, h, w, n);
                save(&first, &masks).map_err(err)?;
                let back: Vec<SamplingMask> = load(&first).map_err(err)?;
                ensure!(back == masks, "file {case}: masks changed on load");
                save(&second, &back).map_err(err)?;
            }
        }
        let a = std::fs::read(&first).map_err(|e| e.to_string())?;
        let b = std::fs::read(&second).map_err(|e| e.to_string())?;
        ensure!(a == b, "file {case}: bytes differ after load and save");
        let raw = DatasetFile::read(&first).map_err(err)?;
        ensure!(
            raw.to_bytes().map_err(err)? == a,
            "file {case}: raw re-encoding differs"
        );
    }
    Ok(())
}

/// Criterion 7.
pub fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let run = |args: &[&str]| mecdl(args, dir).map(|_| ());
    run(&[
        "phantom", "--size", "64", "--echoes", "4", "--seed", "3", "-o", "ph.mec",
    ])?;
    run(&[
        "mask", "--size", "64", "--echoes", "4", "--accel", "4", "--seed", "11", "-o", "m.mec",
    ])?;
    run(&[
        "undersample",
        "-i",
        "ph.mec",
        "--masks",
        "m.mec",
        "--seed",
        "11",
        "-o",
        "ks.mec",
    ])?;
    run(&[
        "undersample",
        "-i",
        "ph.mec",
        "--accel",
        "8",
        "--noise-sigma",
        "0.01",
        "--seed",
        "12",
        "-o",
        "ksn.mec",
    ])?;
    let short = [
        "--outer-iters",
        "4",
        "--inner-iters",
        "5",
        "--seed",
        "1",
        "--truth",
        "ph.mec",
    ];
    for (method, layers, input, out) in [
        ("zero-fill", None, "ks.mec", "zf.mec"),
        ("shallow-dl", None, "ks.mec", "sh.mec"),
        ("rsddl", Some("2"), "ks.mec", "rs.mec"),
        ("lrddl", Some("3"), "ksn.mec", "lr.mec"),
    ] {
        let mut args = vec!["recon", "-i", input, "--method", method, "-o", out];
        if let Some(l) = layers {
            args.extend(["--layers", l]);
        }
        if method != "zero-fill" {
            args.extend(short);
        }
        run(&args)?;
    }
    let mut tuned = vec![
        "recon",
        "-i",
        "ks.mec",
        "--method",
        "rsddl",
        "--layers",
        "2",
        "--tune",
        "-o",
        "tuned.mec",
    ];
    tuned.extend(["--lambda-grid", "0.05,0.2", "--gamma-grid", "0.1,0.4"]);
    tuned.extend(short);
    run(&tuned)?;
    run(&[
        "eval",
        "--truth",
        "ph.mec",
        "--recon",
        "zf.mec",
        "sh.mec",
        "rs.mec",
        "lr.mec",
        "tuned.mec",
        "--csv",
        "snr.csv",
        "--png-dir",
        "png",
    ])?;
    let compared = rerun_all(dir)?;
    load_save_identity(dir)?;
    Ok(format!(
        "{compared} data outputs identical after rerunning every manifest; load/save identity on 20 random files"
    ))
}

/// Criterion 8: RSDDL and LRDDL at 2, 3 and 4 layers on the default phantom.
pub fn layer_sweep() -> Check {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-layer-sweep");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let run = |args: &[&str]| mecdl(args, &dir);
    run(&[
        "phantom", "--size", "256", "--echoes", "8", "--seed", "0", "-o", "ph.mec",
    ])?;
    run(&[
        "undersample",
        "-i",
        "ph.mec",
        "--lines",
        "32",
        "--seed",
        "0",
        "-o",
        "ks.mec",
    ])?;
    run(&["recon", "-i", "ks.mec", "--method", "zero-fill", "-o", "zero-fill.mec"])?;

    let (lambda, gamma) = (LAMBDA.to_string(), GAMMA.to_string());
    let (outer, inner) = (OUTER_ITERS.to_string(), INNER_ITERS.to_string());
    let (patch, stride) = (PATCH_SIZE.to_string(), STRIDE.to_string());
    let mut recons = vec!["zero-fill.mec".to_string()];
    let mut worst: f64 = f64::NEG_INFINITY;
    for method in ["rsddl", "lrddl"] {
        for layers in ["2", "3", "4"] {
            let out = format!("{method}-{layers}.mec");
            let line = run(&[
                "recon",
                "-i",
                "ks.mec",
                "--method",
                method,
                "--layers",
                layers,
                "--lambda",
                &lambda,
                "--gamma",
                &gamma,
                "--outer-iters",
                &outer,
                "--inner-iters",
                &inner,
                "--patch-size",
                &patch,
                "--stride",
                &stride,
                "--seed",
                "0",
                "--truth",
                "ph.mec",
                "-o",
                &out,
            ])?;
            print!("  {line}");
            let report = read_json(&dir.join(format!("{out}.report.json")))?;
            let solver = &report["solver"];
            let initial = solver["initial_objective"]
                .as_f64()
                .ok_or("report lacks the initial objective")?;
            let trace: Vec<f64> = solver["objective_trace"]
                .as_array()
                .ok_or("report lacks the objective trace")?
                .iter()
                .filter_map(|v| v.as_f64())
                .collect();
            ensure!(!trace.is_empty(), "{out}: empty objective trace");
            let (rise, settled) = trace_stability(initial, &trace);
            ensure!(
                rise <= 0.01,
                "{out}: objective rose {:.3}% in one iteration",
                100.0 * rise
            );
            ensure!(settled, "{out}: final objective above initial");
            worst = worst.max(rise);
            recons.push(out);
        }
    }
    let mut args = vec!["eval", "--truth", "ph.mec", "--csv", "layer_sweep.csv", "--recon"];
    args.extend(recons.iter().map(String::as_str));
    let table = run(&args)?;
    print!("{table}");

    let csv_path = dir.join("layer_sweep.csv");
    let csv = std::fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    let rows: Vec<&str> = csv.lines().collect();
    ensure!(
        rows.first() == Some(&"method,layers,lines,snr_db"),
        "unexpected CSV header"
    );
    ensure!(
        rows.len() == 1 + recons.len(),
        "CSV has {} rows for {} runs",
        rows.len() - 1,
        recons.len()
    );
    for method in ["rsddl", "lrddl"] {
        for layers in 2..=4 {
            let prefix = format!("{method},{layers},32,");
            ensure!(
                rows.iter().any(|r| r.starts_with(&prefix)),
                "CSV lacks a {method}-{layers} row"
            );
        }
    }
    Ok(format!(
        "6 deep runs completed and stable (largest relative step {worst:+.2e}); CSV at {}",
        csv_path.display()
    ))
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use mecdl::dictlearn::shallow_config;
use mecdl::io::{export_png, save_with_attributes, Dataset, DatasetFile};
use mecdl::kspace::make_mask;
use mecdl::{
    adjoint, difference_image, forward, lcurve_tune, make_phantom, snr_db, solve, AcquiredData, Boundary, EchoStack,
    PatchConfig, PhantomSpec, ReconReport, Regularizer, SamplingMask, SolverConfig, TuneGrid,
};

use crate::args::{sibling, BoundaryArg, EvalArgs, MaskArgs, Method, PhantomArgs, ReconArgs, UndersampleArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::Outcome;

fn read(path: &Path) -> CliResult<DatasetFile> {
    DatasetFile::read(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn load<D: Dataset>(path: &Path) -> CliResult<D> {
    D::from_dataset(read(path)?).map_err(|e| CliError::from(e).context(path.display()))
}

fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| {
        CliError::validation(format!(
            "--seed is required for {what}; seeds are never defaulted so every run can be reproduced"
        ))
    })
}

fn attrs<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Per-echo masks with seeds `base ^ j`.
fn draw_masks(
    size: usize,
    echoes: usize,
    lines: usize,
    center_fraction: f64,
    base: u64,
) -> CliResult<Vec<SamplingMask>> {
    (0..echoes as u64)
        .map(|j| make_mask(size, size, lines, center_fraction, base ^ j).map_err(CliError::from))
        .collect()
}

fn line_budget(height: usize, accel: Option<usize>, lines: Option<usize>) -> CliResult<usize> {
    match (accel, lines) {
        (Some(0), _) => Err(CliError::validation("--accel must be at least 1")),
        (Some(a), None) => Ok(height / a),
        (None, Some(l)) => Ok(l),
        _ => Err(CliError::validation("give exactly one of --accel and --lines")),
    }
}

pub fn phantom(a: &PhantomArgs) -> CliResult<Outcome> {
    let seed = require_seed(a.seed, "phantom")?;
    let spec = PhantomSpec {
        echo_spacing_ms: a.echo_spacing_ms,
        ..PhantomSpec::spinal_cord(a.size, a.echoes, seed)
    };
    let x = make_phantom::<f64>(&spec)?;
    save_with_attributes(
        &a.output,
        &x,
        attrs([("kind", "phantom".into()), ("seed", seed.to_string())]),
    )?;
    println!(
        "phantom {}x{}x{} (seed {seed}) -> {}",
        a.size,
        a.size,
        a.echoes,
        a.output.display()
    );
    Ok(Outcome {
        resolved: serde_json::to_value(&spec)?,
        seeds: BTreeMap::from([("phantom".into(), seed)]),
        outputs: vec![a.output.clone()],
        manifest_path: Some(
            a.manifest
                .clone()
                .unwrap_or_else(|| sibling(&a.output, ".manifest.json")),
        ),
        ..Outcome::default()
    })
}

pub fn mask(a: &MaskArgs) -> CliResult<Outcome> {
    let seed = require_seed(a.seed, "mask")?;
    let lines = line_budget(a.size, a.budget.accel, a.budget.lines)?;
    let masks = draw_masks(a.size, a.echoes, lines, a.center_fraction, seed)?;
    mecdl::io::save(&a.output, &masks)?;
    println!(
        "{} masks of {lines} lines (base seed {seed}) -> {}",
        a.echoes,
        a.output.display()
    );
    Ok(Outcome {
        resolved: json!({ "lines": lines, "echo_seeds": (0..a.echoes as u64).map(|j| seed ^ j).collect::<Vec<_>>() }),
        seeds: BTreeMap::from([("mask".into(), seed)]),
        outputs: vec![a.output.clone()],
        manifest_path: Some(
            a.manifest
                .clone()
                .unwrap_or_else(|| sibling(&a.output, ".manifest.json")),
        ),
        ..Outcome::default()
    })
}

pub fn undersample(a: &UndersampleArgs) -> CliResult<Outcome> {
    let seed = require_seed(a.seed, "undersample")?;
    let truth: EchoStack<f64> = load(&a.input)?;
    if truth.height() != truth.width() {
        return Err(CliError::validation("undersample expects square images"));
    }
    let mut inputs = vec![a.input.clone()];
    let masks = match &a.masks {
        Some(path) => {
            inputs.push(path.clone());
            load::<Vec<SamplingMask>>(path)?
        }
        None => {
            let lines = line_budget(truth.height(), a.accel, a.lines)?;
            draw_masks(truth.height(), truth.n_echoes(), lines, a.center_fraction, seed)?
        }
    };
    if !a.noise_sigma.is_finite() || a.noise_sigma < 0.0 {
        return Err(CliError::validation("--noise-sigma must be finite and non-negative"));
    }
    let data = forward(&truth, &masks, a.noise_sigma, seed)?;
    save_with_attributes(&a.output, &data, attrs([("seed", seed.to_string())]))?;
    let lines: Vec<usize> = masks.iter().map(|m| m.n_lines()).collect();
    println!(
        "{} echoes, lines per echo {:?}, noise sigma {} -> {}",
        data.n_echoes(),
        lines,
        a.noise_sigma,
        a.output.display()
    );
    Ok(Outcome {
        resolved: json!({ "lines": lines, "echo_seeds": masks.iter().map(|m| m.seed()).collect::<Vec<_>>() }),
        seeds: BTreeMap::from([("undersample".into(), seed)]),
        inputs,
        outputs: vec![a.output.clone()],
        manifest_path: Some(
            a.manifest
                .clone()
                .unwrap_or_else(|| sibling(&a.output, ".manifest.json")),
        ),
        ..Outcome::default()
    })
}

/// The JSON report written by `recon`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReconSummary {
    pub method: String,
    pub layers: Option<usize>,
    pub lines: usize,
    pub snr_db: Option<f64>,
    pub solver: Option<ReconReport<f64>>,
    /// Candidate table from L-curve tuning, when requested.
    pub tuning: Option<String>,
}

fn solver_config(a: &ReconArgs, seed: u64) -> SolverConfig<f64> {
    let base = SolverConfig {
        lambda: a.lambda,
        gamma: a.gamma,
        mu1: a.mu1,
        mu2: a.mu2,
        layers: a.layers.unwrap_or(3),
        regularizer: if a.method == Method::Lrddl {
            Regularizer::LowRank
        } else {
            Regularizer::RowSparse
        },
        patch: PatchConfig::new(
            a.patch_size,
            a.stride,
            match a.boundary {
                BoundaryArg::Wraparound => Boundary::Wraparound,
                BoundaryArg::InteriorOnly => Boundary::InteriorOnly,
            },
        ),
        outer_iters: a.outer_iters,
        inner_iters: a.inner_iters,
        warmup_sweeps: a.warmup_sweeps,
        tol: a.tol,
        seed,
    };
    if a.method == Method::ShallowDl {
        shallow_config(&base)
    } else {
        base
    }
}

fn validate_recon(a: &ReconArgs) -> CliResult<()> {
    match (a.method.is_deep(), a.layers) {
        (false, Some(_)) => {
            return Err(CliError::validation(format!(
                "--layers applies only to rsddl and lrddl, not {}",
                a.method.as_str()
            )))
        }
        (true, Some(l)) if !(2..=4).contains(&l) => {
            return Err(CliError::validation(format!("--layers must be 2, 3 or 4, got {l}")))
        }
        _ => {}
    }
    if a.method == Method::ZeroFill && a.tune {
        return Err(CliError::validation("--tune needs a learning method"));
    }
    Ok(())
}

pub fn recon(a: &ReconArgs) -> CliResult<Outcome> {
    validate_recon(a)?;
    let d: AcquiredData<f64> = load(&a.input)?;
    let mut inputs = vec![a.input.clone()];
    let truth: Option<EchoStack<f64>> = match &a.truth {
        Some(p) => {
            inputs.push(p.clone());
            Some(load(p)?)
        }
        None => None,
    };
    let lines = d.masks()[0].n_lines();
    let layers = match a.method {
        Method::ZeroFill => None,
        Method::ShallowDl => Some(1),
        _ => Some(a.layers.unwrap_or(3)),
    };

    let mut seeds = BTreeMap::new();
    let mut tuning = None;
    let (x, report, resolved) = if a.method == Method::ZeroFill {
        (adjoint(&d)?, None, json!({ "method": "zero-fill" }))
    } else {
        let seed = require_seed(a.seed, a.method.as_str())?;
        seeds.insert("dictionary".to_string(), seed);
        let mut cfg = solver_config(a, seed);
        cfg.validate()?;
        if a.tune {
            let grid = TuneGrid::new(a.lambda_grid.clone(), a.gamma_grid.clone(), cfg.clone())?;
            let outcome = lcurve_tune(&grid, &d)?;
            let table = outcome.report();
            print!("{table}");
            tuning = Some(table);
            cfg = SolverConfig {
                lambda: outcome.config.lambda,
                gamma: outcome.config.gamma,
                ..cfg
            };
        }
        let (x, report) = solve(&d, &cfg, truth.as_ref())?;
        let resolved = serde_json::to_value(&cfg)?;
        (x, Some(report), resolved)
    };
    let snr = match &truth {
        Some(t) => Some(snr_db(&x, t)?),
        None => None,
    };

    let mut attributes = attrs([("method", a.method.as_str().to_string()), ("lines", lines.to_string())]);
    if let Some(l) = layers {
        attributes.insert("layers".into(), l.to_string());
    }
    if let Some(r) = &report {
        attributes.insert("lambda".into(), r.config.lambda.to_string());
        attributes.insert("gamma".into(), r.config.gamma.to_string());
    }
    save_with_attributes(&a.output, &x, attributes)?;

    let report_path = a.report.clone().unwrap_or_else(|| sibling(&a.output, ".report.json"));
    let mut metrics = BTreeMap::new();
    if let Some(s) = snr {
        metrics.insert("snr_db".to_string(), json!(s));
    }
    if let Some(r) = &report {
        metrics.insert("iterations".to_string(), json!(r.iterations_run));
        metrics.insert("initial_objective".to_string(), json!(r.initial_objective));
        metrics.insert("final_objective".to_string(), json!(r.final_terms.total));
    }
    let summary = ReconSummary {
        method: a.method.as_str().to_string(),
        layers,
        lines,
        snr_db: snr,
        solver: report,
        tuning,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&report_path, text)?;

    match snr {
        Some(s) => println!(
            "{} ({lines} lines): SNR {s:.2} dB -> {}",
            a.method.as_str(),
            a.output.display()
        ),
        None => println!("{} ({lines} lines) -> {}", a.method.as_str(), a.output.display()),
    }
    Ok(Outcome {
        resolved,
        seeds,
        inputs,
        outputs: vec![a.output.clone(), report_path],
        metrics,
        manifest_path: Some(
            a.manifest
                .clone()
                .unwrap_or_else(|| sibling(&a.output, ".manifest.json")),
        ),
    })
}

/// One row of the comparison CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub method: String,
    pub layers: Option<usize>,
    pub lines: Option<usize>,
    pub snr_db: f64,
}

fn png_name(dir: &Path, recon: &Path, tag: &str, echo: usize) -> PathBuf {
    let stem = recon
        .file_stem()
        .map_or_else(|| "recon".into(), |s| s.to_string_lossy().into_owned());
    dir.join(format!("{stem}_{tag}{echo:02}.png"))
}

pub fn eval(a: &EvalArgs) -> CliResult<Outcome> {
    let truth_path = a
        .truth
        .as_ref()
        .ok_or_else(|| CliError::validation("eval needs the ground truth (--truth)"))?;
    let truth: EchoStack<f64> = load(truth_path)?;
    let peak = (0..truth.n_echoes())
        .map(|j| truth.magnitude(j).max())
        .fold(0.0, f64::max);
    // One window for every image so darkness is comparable across methods.
    let window = (peak > 0.0).then_some((0.0, peak));
    if let Some(dir) = &a.png_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut rows = Vec::with_capacity(a.recon.len());
    let mut outputs = Vec::new();
    for path in &a.recon {
        let file = read(path)?;
        let attr = |k: &str| file.header.attributes.get(k).and_then(|v| v.parse::<usize>().ok());
        let method = ["method", "kind"]
            .iter()
            .find_map(|k| file.header.attributes.get(*k).cloned())
            .unwrap_or_else(|| "unknown".into());
        let (layers, lines) = (attr("layers"), attr("lines"));
        let x = EchoStack::<f64>::from_dataset(file).map_err(|e| CliError::from(e).context(path.display()))?;
        let snr = snr_db(&x, &truth)?;
        if let Some(dir) = &a.png_dir {
            for j in 0..x.n_echoes() {
                let p = png_name(dir, path, "echo", j);
                export_png(&x.magnitude(j), &p, window)?;
                outputs.push(p);
                let p = png_name(dir, path, "diff_echo", j);
                export_png(&difference_image(&x, &truth, j)?, &p, window)?;
                outputs.push(p);
            }
        }
        rows.push(SnrRow {
            method,
            layers,
            lines,
            snr_db: snr,
        });
    }

    let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
    println!("{:<12} {:>6} {:>6} {:>10}", "method", "layers", "lines", "snr_db");
    for r in &rows {
        println!(
            "{:<12} {:>6} {:>6} {:>10.2}",
            r.method,
            opt(r.layers),
            opt(r.lines),
            r.snr_db
        );
    }
    if let Some(csv_path) = &a.csv {
        let mut w = csv::Writer::from_path(csv_path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        outputs.insert(0, csv_path.clone());
    }

    let mut inputs = vec![truth_path.clone()];
    inputs.extend(a.recon.iter().cloned());
    let metrics = rows
        .iter()
        .zip(&a.recon)
        .map(|(r, p)| (p.display().to_string(), json!(r.snr_db)))
        .collect();
    Ok(Outcome {
        resolved: json!({ "window": window }),
        inputs,
        outputs,
        metrics,
        manifest_path: a
            .manifest
            .clone()
            .or_else(|| a.csv.as_ref().map(|c| sibling(c, ".manifest.json"))),
        ..Outcome::default()
    })
}

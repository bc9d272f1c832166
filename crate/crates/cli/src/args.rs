use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "mecdl",
    version,
    about = "Multi-echo MRI reconstruction with deep dictionary learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Every subcommand. The serialised form is what a run manifest stores.
#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate the synthetic multi-echo phantom.
    Phantom(PhantomArgs),
    /// Generate per-echo phase-encode sampling masks.
    Mask(MaskArgs),
    /// Simulate an undersampled acquisition of a ground-truth image stack.
    Undersample(UndersampleArgs),
    /// Reconstruct images from undersampled K-space.
    Recon(ReconArgs),
    /// Score reconstructions against the ground truth.
    Eval(EvalArgs),
    /// Re-execute the command recorded in a run manifest.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Mask(_) => "mask",
            Command::Undersample(_) => "undersample",
            Command::Recon(_) => "recon",
            Command::Eval(_) => "eval",
            Command::Rerun(_) => "rerun",
        }
    }

    /// Rewrites every path to an absolute one so the manifest does not depend
    /// on the working directory.
    pub fn absolutize(&mut self) -> std::io::Result<()> {
        for p in self.inputs_mut() {
            *p = std::path::absolute(&*p)?;
        }
        for p in self.outputs_mut() {
            *p = std::path::absolute(&*p)?;
        }
        Ok(())
    }

    /// Moves every output into `dir`, keeping file names.
    pub fn relocate_outputs(&mut self, dir: &Path) {
        for p in self.outputs_mut() {
            if let Some(name) = p.file_name() {
                *p = dir.join(name);
            }
        }
    }

    fn inputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Phantom(_) | Command::Mask(_) => vec![],
            Command::Undersample(a) => std::iter::once(&mut a.input).chain(a.masks.as_mut()).collect(),
            Command::Recon(a) => std::iter::once(&mut a.input).chain(a.truth.as_mut()).collect(),
            Command::Eval(a) => a.truth.as_mut().into_iter().chain(a.recon.iter_mut()).collect(),
            Command::Rerun(a) => vec![&mut a.manifest],
        }
    }

    fn outputs_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Phantom(a) => std::iter::once(&mut a.output).chain(a.manifest.as_mut()).collect(),
            Command::Mask(a) => std::iter::once(&mut a.output).chain(a.manifest.as_mut()).collect(),
            Command::Undersample(a) => std::iter::once(&mut a.output).chain(a.manifest.as_mut()).collect(),
            Command::Recon(a) => std::iter::once(&mut a.output)
                .chain(a.report.as_mut())
                .chain(a.manifest.as_mut())
                .collect(),
            Command::Eval(a) => a
                .csv
                .as_mut()
                .into_iter()
                .chain(a.png_dir.as_mut())
                .chain(a.manifest.as_mut())
                .collect(),
            Command::Rerun(a) => a.output_dir.as_mut().into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct PhantomArgs {
    /// Image side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub echoes: usize,
    #[arg(long, default_value_t = mecdl::phantom::DEFAULT_ECHO_SPACING_MS)]
    pub echo_spacing_ms: f64,
    /// Required; seeds are never defaulted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Manifest path; defaults to `<output>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Line budget, given directly or as an acceleration factor.
#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
#[group(required = true, multiple = false)]
pub struct LineBudget {
    /// Acceleration factor: `lines = height / accel`.
    #[arg(long)]
    pub accel: Option<usize>,
    /// Phase-encode lines per echo.
    #[arg(long)]
    pub lines: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct MaskArgs {
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 8)]
    pub echoes: usize,
    #[command(flatten)]
    pub budget: LineBudget,
    #[arg(long, default_value_t = mecdl::kspace::DEFAULT_CENTER_FRACTION)]
    pub center_fraction: f64,
    /// Base seed; echo `j` uses `seed ^ j`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct UndersampleArgs {
    /// Ground-truth image stack.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Use these masks instead of drawing new ones.
    #[arg(long, conflicts_with_all = ["accel", "lines", "center_fraction"])]
    pub masks: Option<PathBuf>,
    #[arg(long, conflicts_with = "lines")]
    pub accel: Option<usize>,
    #[arg(long)]
    pub lines: Option<usize>,
    #[arg(long, default_value_t = mecdl::kspace::DEFAULT_CENTER_FRACTION)]
    pub center_fraction: f64,
    /// Standard deviation of the complex Gaussian noise added to each sample.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Base seed for the masks (`seed ^ j` per echo) and the noise.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Deep dictionary learning with row-sparse codes.
    Rsddl,
    /// Deep dictionary learning with low-rank codes.
    Lrddl,
    /// One-layer group-sparse dictionary learning.
    ShallowDl,
    /// Inverse FFT of the zero-filled K-space.
    ZeroFill,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rsddl => "rsddl",
            Method::Lrddl => "lrddl",
            Method::ShallowDl => "shallow-dl",
            Method::ZeroFill => "zero-fill",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, Method::Rsddl | Method::Lrddl)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryArg {
    Wraparound,
    InteriorOnly,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReconArgs {
    /// Undersampled K-space file.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// 2, 3 or 4; deep methods only (default 3).
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu2: f64,
    #[arg(long, default_value_t = 50)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 30)]
    pub inner_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup_sweeps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 12)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub stride: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Wraparound)]
    pub boundary: BoundaryArg,
    /// Dictionary initialisation seed; required for learning methods.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Choose lambda and gamma from the grids by the greedy L-curve rule.
    #[arg(long)]
    pub tune: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [0.025, 0.05, 0.1, 0.2, 0.4])]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0125, 0.025, 0.05, 0.1, 0.2])]
    pub gamma_grid: Vec<f64>,
    /// Ground truth; when given the report includes the SNR.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Report path; defaults to `<output>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// One or more reconstructions written by `recon`.
    #[arg(long, required = true, num_args = 1..)]
    pub recon: Vec<PathBuf>,
    /// SNR table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Directory for per-echo reconstruction and difference PNGs.
    #[arg(long)]
    pub png_dir: Option<PathBuf>,
    /// Manifest path; defaults to `<csv>.manifest.json` when a CSV is written.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write outputs here, keeping their file names, instead of the recorded paths.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

/// `<path>.<suffix>` with the suffix appended to the full file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

//! Reconstruction quality metrics and L-curve hyperparameter selection.

use std::fmt::Write as _;

use crate::dictlearn::{Solver, SolverConfig};
use crate::error::{Error, Result};
use crate::kspace::{AcquiredData, EchoStack, RealImage};
use crate::scalar::Scalar;

/// Value returned by [`snr_db`] when the reconstruction matches exactly.
pub const SNR_CAP_DB: f64 = 300.0;

/// Outer iterations used for each candidate during tuning.
pub const TUNING_OUTER_ITERS: usize = 10;

/// `10 log10(||truth||^2 / || |truth| - |recon| ||^2)` over all echoes,
/// comparing magnitudes, capped at [`SNR_CAP_DB`].
pub fn snr_db<T: Scalar>(recon: &EchoStack<T>, truth: &EchoStack<T>) -> Result<f64> {
    recon.check_same_dims(truth)?;
    let mut signal = 0.0f64;
    let mut error = 0.0f64;
    for (r, t) in recon.data().iter().zip(truth.data()) {
        let tm = T::magnitude_of(t).as_f64();
        let d = tm - T::magnitude_of(r).as_f64();
        signal += tm * tm;
        error += d * d;
    }
    if !(signal > 0.0) {
        return Err(Error::InvalidArgument("ground truth is identically zero".into()));
    }
    if !error.is_finite() {
        return Err(Error::NonFinite("reconstruction"));
    }
    if error == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / error).log10()).min(SNR_CAP_DB))
}

/// `| |truth| - |recon| |` for one echo.
pub fn difference_image<T: Scalar>(recon: &EchoStack<T>, truth: &EchoStack<T>, echo: usize) -> Result<RealImage<T>> {
    recon.check_same_dims(truth)?;
    if echo >= truth.n_echoes() {
        return Err(Error::InvalidArgument(format!(
            "echo {echo} out of range ({} echoes)",
            truth.n_echoes()
        )));
    }
    Ok(RealImage {
        height: truth.height(),
        width: truth.width(),
        data: truth
            .echo(echo)
            .iter()
            .zip(recon.echo(echo))
            .map(|(t, r)| (T::magnitude_of(t) - T::magnitude_of(r)).abs())
            .collect(),
    })
}

/// Candidate values for greedy L-curve tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct TuneGrid<T: Scalar> {
    pub lambda_values: Vec<T>,
    pub gamma_values: Vec<T>,
    pub fixed: SolverConfig<T>,
}

impl<T: Scalar> TuneGrid<T> {
    /// Sorts and deduplicates both value lists.
    pub fn new(lambda_values: Vec<T>, gamma_values: Vec<T>, fixed: SolverConfig<T>) -> Result<Self> {
        let grid = Self {
            lambda_values: sorted(lambda_values),
            gamma_values: sorted(gamma_values),
            fixed,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", &self.lambda_values), ("gamma", &self.gamma_values)] {
            if v.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} grid is empty")));
            }
            if !v.iter().all(|x| *x > T::zero() && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} grid must be strictly positive")));
            }
        }
        Ok(())
    }
}

fn sorted<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup();
    v
}

/// One evaluated candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LCurvePoint {
    pub value: f64,
    /// `||y - R F x||_2` after the short solve.
    pub residual: f64,
    /// Size of the term the tuned parameter weights.
    pub regularizer: f64,
    /// Signed discrete curvature on the log-log curve (interior points only).
    pub curvature: Option<f64>,
}

/// Index of the L-curve corner.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerPick {
    pub index: usize,
    pub curvatures: Vec<Option<f64>>,
    /// No convex corner was found; the median point was returned.
    pub degenerate: bool,
}

/// Picks the point of maximum signed Menger curvature on
/// `(log residual, log regularizer)`. Points must be ordered by increasing
/// parameter, so a proper L-curve turns counter-clockwise at its corner.
pub fn lcurve_corner(points: &[(f64, f64)]) -> CornerPick {
    let n = points.len();
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(r, e)| (r.max(f64::MIN_POSITIVE).ln(), e.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let mut curvatures = vec![None; n];
    let mut best: Option<(usize, f64)> = None;
    for i in 1..n.saturating_sub(1) {
        let (a, b, c) = (logs[i - 1], logs[i], logs[i + 1]);
        let ab = (b.0 - a.0, b.1 - a.1);
        let bc = (c.0 - b.0, c.1 - b.1);
        let ac = (c.0 - a.0, c.1 - a.1);
        let lens = ab.0.hypot(ab.1) * bc.0.hypot(bc.1) * ac.0.hypot(ac.1);
        let cross = ab.0 * bc.1 - ab.1 * bc.0;
        let scale = ab.0.hypot(ab.1) * bc.0.hypot(bc.1);
        let k = if lens > 0.0 && cross.abs() > 1e-12 * scale {
            2.0 * cross / lens
        } else {
            0.0
        };
        curvatures[i] = Some(k);
        if k > 0.0 && best.is_none_or(|(_, bk)| k > bk) {
            best = Some((i, k));
        }
    }
    match (n, best) {
        (1, _) => CornerPick {
            index: 0,
            curvatures,
            degenerate: false,
        },
        (_, Some((i, _))) => CornerPick {
            index: i,
            curvatures,
            degenerate: false,
        },
        _ => CornerPick {
            index: n.saturating_sub(1) / 2,
            curvatures,
            degenerate: true,
        },
    }
}

/// Result of [`lcurve_tune`].
#[derive(Clone, Debug)]
pub struct TuneOutcome<T: Scalar> {
    pub config: SolverConfig<T>,
    pub lambda_curve: Vec<LCurvePoint>,
    pub gamma_curve: Vec<LCurvePoint>,
    /// At least one sweep had no usable corner.
    pub flagged: bool,
}

impl<T: Scalar> TuneOutcome<T> {
    /// Text table of every candidate.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>14} {:>14} {:>14} {:>12}",
            "param", "value", "residual", "regularizer", "curvature"
        );
        for (name, curve) in [("lambda", &self.lambda_curve), ("gamma", &self.gamma_curve)] {
            for p in curve {
                let k = p.curvature.map_or_else(|| "-".to_string(), |k| format!("{k:.4}"));
                let _ = writeln!(
                    out,
                    "{:<8} {:>14.6e} {:>14.6e} {:>14.6e} {:>12}",
                    name, p.value, p.residual, p.regularizer, k
                );
            }
        }
        let _ = writeln!(
            out,
            "selected lambda = {:e}, gamma = {:e}{}",
            self.config.lambda.as_f64(),
            self.config.gamma.as_f64(),
            if self.flagged {
                " (flagged: degenerate curve)"
            } else {
                ""
            }
        );
        out
    }
}

fn sweep<T: Scalar>(
    values: &[T],
    d: &AcquiredData<T>,
    make_cfg: impl Fn(T) -> SolverConfig<T>,
    measure: impl Fn(&crate::dictlearn::ObjectiveTerms<T>, T) -> f64,
) -> Result<(usize, Vec<LCurvePoint>, bool)> {
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = make_cfg(v);
        let (_, report) = Solver::new(cfg, d.clone())?.run(None)?;
        let terms = &report.final_terms;
        points.push(LCurvePoint {
            value: v.as_f64(),
            residual: terms.data.as_f64().max(0.0).sqrt(),
            regularizer: measure(terms, v),
            curvature: None,
        });
    }
    let pick = lcurve_corner(&points.iter().map(|p| (p.residual, p.regularizer)).collect::<Vec<_>>());
    for (p, k) in points.iter_mut().zip(&pick.curvatures) {
        p.curvature = *k;
    }
    Ok((pick.index, points, pick.degenerate))
}

/// Greedy L-curve tuning: sweep `lambda` with `gamma` at the grid median,
/// then sweep `gamma` at the chosen `lambda`. Each candidate runs a short
/// solve of [`TUNING_OUTER_ITERS`] outer iterations.
pub fn lcurve_tune<T: Scalar>(grid: &TuneGrid<T>, d: &AcquiredData<T>) -> Result<TuneOutcome<T>> {
    grid.validate()?;
    let lambdas = sorted(grid.lambda_values.clone());
    let gammas = sorted(grid.gamma_values.clone());
    let mut base = grid.fixed.clone();
    base.outer_iters = TUNING_OUTER_ITERS;
    let gamma_mid = gammas[(gammas.len() - 1) / 2];

    let (li, lambda_curve, lambda_flag) = sweep(
        &lambdas,
        d,
        |l| SolverConfig {
            lambda: l,
            gamma: gamma_mid,
            ..base.clone()
        },
        |t, _| (t.coupling_total() + gamma_mid * t.penalty).as_f64().max(0.0).sqrt(),
    )?;
    let lambda = lambdas[li];
    let (gi, gamma_curve, gamma_flag) = sweep(
        &gammas,
        d,
        |g| SolverConfig {
            lambda,
            gamma: g,
            ..base.clone()
        },
        |t, _| t.penalty.as_f64(),
    )?;
    let config = SolverConfig {
        lambda,
        gamma: gammas[gi],
        ..grid.fixed.clone()
    };
    Ok(TuneOutcome {
        config,
        lambda_curve,
        gamma_curve,
        flagged: lambda_flag || gamma_flag,
    })
}

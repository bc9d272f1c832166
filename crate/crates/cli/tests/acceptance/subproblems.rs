use mecdl::dictlearn::{ImageSolve, Solver, SolverConfig};
use mecdl::kspace::{adjoint, forward, make_mask, AcquiredData, EchoStack, SamplingMask};
use mecdl::patches::{coverage, Boundary, PatchConfig};
use mecdl::phantom::{make_phantom, PhantomSpec};
use mecdl::prox::{default_damp, ista_l21, ista_nuclear, Regularizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensure;
use crate::oracles::{fista_reference, random_matrix, Pen};
use crate::Check;

fn small_solver(layers: usize, regularizer: Regularizer) -> Solver<f64> {
    let truth = make_phantom(&PhantomSpec::spinal_cord(32, 3, 7)).unwrap();
    let masks: Vec<SamplingMask> = (0..3).map(|j| make_mask(32, 32, 10, 0.33, 70 ^ j).unwrap()).collect();
    let data = forward(&truth, &masks, 0.0, 0).unwrap();
    let cfg = SolverConfig {
        layers,
        regularizer,
        lambda: 0.1,
        gamma: 0.3,
        mu1: 0.7,
        mu2: 1.3,
        patch: PatchConfig::new(4, 2, Boundary::Wraparound),
        inner_iters: 20,
        ..SolverConfig::default()
    };
    let mut s = Solver::new(cfg, data).unwrap();
    for it in 0..3 {
        s.sweep(it).unwrap();
    }
    s
}

fn stack_norm(x: &EchoStack<f64>) -> f64 {
    x.norm_sqr().sqrt()
}

/// P1: gradient `A^H (A x - y) + lambda (c x - t)` of the image sub-problem.
fn image_stationarity(s: &Solver<f64>) -> Result<(f64, f64), String> {
    let cfg = s.config();
    let d = s.data();
    let (h, w) = (d.height(), d.width());
    let cov = coverage(&cfg.patch, h, w).unwrap();
    let c = cov[0] as f64;
    ensure!(
        cov.iter().all(|&v| v == cov[0]),
        "test profile must have uniform coverage"
    );

    let x = s.image_update(ImageSolve::ClosedForm).map_err(|e| e.to_string())?;
    let t = s.patch_model_image().map_err(|e| e.to_string())?;
    let ax = forward(&x, d.masks(), 0.0, 0).unwrap();
    let residual = ax
        .samples()
        .iter()
        .zip(d.samples())
        .map(|(a, y)| a.iter().zip(y).map(|(a, y)| a - y).collect())
        .collect();
    let r = AcquiredData::new(h, w, d.masks().to_vec(), residual, 0.0).unwrap();
    let mut grad = adjoint(&r).unwrap();
    for ((g, xv), tv) in grad.data_mut().iter_mut().zip(x.data()).zip(t.data()) {
        *g += (xv * c - tv) * cfg.lambda;
    }
    let mut rhs = adjoint(d).unwrap();
    for (b, tv) in rhs.data_mut().iter_mut().zip(t.data()) {
        *b += tv * cfg.lambda;
    }
    let stationarity = stack_norm(&grad) / stack_norm(&rhs);

    let x_cg = s
        .image_update(ImageSolve::ConjugateGradient)
        .map_err(|e| e.to_string())?;
    let diff: f64 = x
        .data()
        .iter()
        .zip(x_cg.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((stationarity, diff / stack_norm(&x)))
}

/// P2-P4: `(D Z - U) Z^T + damp D = 0` for every dictionary level.
fn dictionary_stationarity(s: &Solver<f64>) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for k in 0..s.config().layers {
        let d = s
            .dictionary_least_squares(k)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("level {k} codes are zero"))?;
        let z = &s.codes()[k];
        let u = if k == 0 { s.patches() } else { &s.codes()[k - 1] };
        let damp = default_damp(&(z * z.transpose()));
        let grad = (&d * z - u) * z.transpose() + &d * damp;
        let err = grad.norm() / (u * z.transpose()).norm();
        ensure!(err <= 1e-8, "dictionary level {k}: relative gradient {err:e}");
        worst = worst.max(err);
    }
    Ok(worst)
}

/// P5-P6: `w_lo D_k^T (D_k Z - U) + w_hi (Z - D_{k+1} Z_{k+1}) = 0` before projection.
fn proxy_stationarity(s: &Solver<f64>) -> Result<f64, String> {
    let cfg = s.config();
    let dict = &s.dictionary().layers;
    let mut worst: f64 = 0.0;
    for k in 0..cfg.layers - 1 {
        let z = s.proxy_least_squares(k).map_err(|e| e.to_string())?;
        let u = if k == 0 { s.patches() } else { &s.codes()[k - 1] };
        let (w_lo, w_hi) = (cfg.coupling_weight(k), cfg.coupling_weight(k + 1));
        let below = &dict[k + 1] * &s.codes()[k + 1];
        let grad = dict[k].transpose() * (&dict[k] * &z - u) * w_lo + (&z - &below) * w_hi;
        let scale = (dict[k].transpose() * u * w_lo + below * w_hi).norm();
        let err = grad.norm() / scale;
        ensure!(err <= 1e-8, "proxy level {k}: relative gradient {err:e}");
        worst = worst.max(err);
    }
    Ok(worst)
}

fn ista_against_reference() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let a = random_matrix(&mut rng, 8, 5, 1.0);
        let b = random_matrix(&mut rng, 8, 4, 1.0);
        let gamma = rng.random_range(0.05..1.0);
        let weight = rng.random_range(0.5..2.0);
        let p = if case % 2 == 0 { Pen::Rows } else { Pen::Nuclear };
        let out = match p {
            Pen::Rows => ista_l21(&a, &b, gamma, weight, 2000),
            Pen::Nuclear => ista_nuclear(&a, &b, gamma, weight, 2000),
        }
        .map_err(|e| e.to_string())?;
        let got = *out.objective_trace.last().unwrap();
        let reference = fista_reference(&a, &b, gamma, weight, p);
        let gap = (got - reference).abs();
        ensure!(
            gap <= 1e-3 * reference.abs().max(1.0),
            "{p:?} instance {case}: {got} vs reference {reference}"
        );
        worst = worst.max(gap);
    }
    Ok(worst)
}

pub fn check() -> Check {
    let mut p1 = (0.0f64, 0.0f64);
    let (mut dict, mut proxy) = (0.0f64, 0.0f64);
    for (layers, reg) in [
        (4, Regularizer::RowSparse),
        (3, Regularizer::LowRank),
        (2, Regularizer::RowSparse),
    ] {
        let s = small_solver(layers, reg);
        let (stat, cg) = image_stationarity(&s)?;
        ensure!(stat <= 1e-8, "{layers}-layer {reg:?}: image gradient {stat:e}");
        ensure!(
            cg <= 1e-6,
            "{layers}-layer {reg:?}: closed form and CG differ by {cg:e}"
        );
        p1 = (p1.0.max(stat), p1.1.max(cg));
        dict = dict.max(dictionary_stationarity(&s)?);
        proxy = proxy.max(proxy_stationarity(&s)?);
    }
    let ista = ista_against_reference()?;
    Ok(format!(
        "relative gradients: P1 {:.1e} (CG agreement {:.1e}), P2-P4 {dict:.1e}, P5-P6 {proxy:.1e}; \
         ISTA worst gap to 1e5-step reference {ista:.1e}",
        p1.0, p1.1
    ))
}

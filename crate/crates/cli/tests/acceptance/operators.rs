use mecdl::kspace::{adjoint, fft2c, forward, ifft2c, make_mask, AcquiredData, SamplingMask};
use mecdl::patches::{aggregate_stacked, coverage, extract_all, Boundary, PatchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensure;
use crate::oracles::{cdot, random_complex, random_stack};
use crate::Check;

fn fft_identities(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let h = rng.random_range(1..33);
        let w = rng.random_range(1..33);
        let x = random_complex(rng, h * w);
        let y = random_complex(rng, h * w);
        let (fx, fy) = (fft2c(&x, h, w).unwrap(), fft2c(&y, h, w).unwrap());
        let ex = cdot(&x, &x).re;
        let energy = (cdot(&fx, &fx).re - ex).abs() / ex.max(1.0);
        let rhs = cdot(&x, &y);
        let inner = (cdot(&fx, &fy) - rhs).norm() / rhs.norm().max(1.0);
        let back = ifft2c(&fx, h, w).unwrap();
        let inverse = back.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / ex.sqrt().max(1.0);
        let err = energy.max(inner).max(inverse);
        ensure!(err <= 1e-8, "FFT case {case} ({h}x{w}): relative error {err:e}");
        worst = worst.max(err);
    }
    Ok(worst)
}

fn forward_adjoint(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let h = rng.random_range(4..33);
        let w = rng.random_range(2..33);
        let n = rng.random_range(1..5);
        let lines = rng.random_range(1..=h);
        let masks: Vec<SamplingMask> = (0..n as u64)
            .map(|j| make_mask(h, w, lines, 0.33, case ^ j).unwrap())
            .collect();
        let x = random_stack(rng, h, w, n);
        let ax = forward(&x, &masks, 0.0, 0).unwrap();
        let samples = masks.iter().map(|m| random_complex(rng, m.n_lines() * w)).collect();
        let y = AcquiredData::new(h, w, masks, samples, 0.0).unwrap();
        let lhs = ax.inner(&y).unwrap();
        let rhs = x.inner(&adjoint(&y).unwrap()).unwrap();
        let err = (lhs - rhs).norm() / lhs.norm().max(1.0);
        ensure!(err <= 1e-8, "forward/adjoint case {case}: relative error {err:e}");
        worst = worst.max(err);
    }
    Ok(worst)
}

fn patch_adjoint(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (size, stride, boundary) in [
        (12, 1, Boundary::Wraparound),
        (12, 4, Boundary::Wraparound),
        (5, 2, Boundary::Wraparound),
        (4, 3, Boundary::InteriorOnly),
        (6, 1, Boundary::InteriorOnly),
    ] {
        let cfg = PatchConfig::new(size, stride, boundary);
        let (h, w, n) = (24, 20, 3);
        let x = random_stack(rng, h, w, n);
        let p = extract_all(&x, &cfg).unwrap();
        let q = nalgebra::DMatrix::from_fn(p.nrows(), p.ncols(), |_, _| rng.random_range(-1.0..1.0));
        let back = aggregate_stacked(&q, &cfg, (h, w, n)).unwrap();
        let lhs = p.dot(&q);
        let rhs: f64 = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        let err = (lhs - rhs).abs() / lhs.abs().max(1.0);
        ensure!(
            err <= 1e-10,
            "patch adjoint {size}/{stride}/{boundary:?}: relative error {err:e}"
        );
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let fft = fft_identities(&mut rng)?;
    let fa = forward_adjoint(&mut rng)?;
    let pa = patch_adjoint(&mut rng)?;
    let cfg = PatchConfig::new(12, 1, Boundary::Wraparound);
    for (h, w) in [(256, 256), (37, 50)] {
        let cov = coverage(&cfg, h, w).map_err(|e| e.to_string())?;
        ensure!(
            cov.iter().all(|&c| c == 144),
            "coverage on {h}x{w} is not identically 144"
        );
    }
    Ok(format!(
        "worst relative errors: FFT {fft:.1e}, forward/adjoint {fa:.1e}, patch adjoint {pa:.1e}; coverage(12,1,wrap) = 144"
    ))
}

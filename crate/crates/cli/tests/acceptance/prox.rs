use mecdl::prox::{row_soft_threshold, svt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensure;
use crate::oracles::{numerical_prox, prox_objective, random_matrix, Pen};
use crate::Check;

pub fn check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_gap: f64 = 0.0;
    for p in [Pen::Rows, Pen::Nuclear] {
        for case in 0..50 {
            let z = random_matrix(&mut rng, 5, 4, 2.0);
            let tau = rng.random_range(0.05..2.0);
            let exact = match p {
                Pen::Rows => row_soft_threshold(&z, tau),
                Pen::Nuclear => svt(&z, tau),
            }
            .map_err(|e| e.to_string())?;
            let numeric = numerical_prox(&z, tau, p);
            let gap = prox_objective(&exact, &z, tau, p) - prox_objective(&numeric, &z, tau, p);
            ensure!(gap.abs() <= 1e-4, "{p:?} case {case}: objective gap {gap:e}");
            worst_gap = worst_gap.max(gap.abs());
        }
    }

    let mut worst_ratio: f64 = 0.0;
    for case in 0..100 {
        let a = random_matrix(&mut rng, 5, 4, 3.0);
        let b = random_matrix(&mut rng, 5, 4, 3.0);
        let tau = rng.random_range(0.0..2.0);
        let d = (&a - &b).norm();
        let rs = (row_soft_threshold(&a, tau).unwrap() - row_soft_threshold(&b, tau).unwrap()).norm();
        let lr = (svt(&a, tau).unwrap() - svt(&b, tau).unwrap()).norm();
        ensure!(
            rs <= d + 1e-12 && lr <= d + 1e-12,
            "pair {case} expands: {rs} / {lr} > {d}"
        );
        worst_ratio = worst_ratio.max(rs.max(lr) / d);
    }
    Ok(format!(
        "worst objective gap {worst_gap:.1e} over 2 x 50 matrices; largest distance ratio {worst_ratio:.4} over 100 pairs"
    ))
}

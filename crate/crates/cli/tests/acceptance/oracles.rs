//! Reference computations written independently of the library's solvers.

use mecdl::prox::{l21_norm, nuclear_norm, row_soft_threshold, svt};
use mecdl::{Complex, EchoStack};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

pub fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
    (0..n)
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn random_stack(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> EchoStack<f64> {
    EchoStack::from_vec(h, w, n, random_complex(rng, h * w * n)).unwrap()
}

pub fn cdot(a: &[Complex<f64>], b: &[Complex<f64>]) -> Complex<f64> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Copy, Debug)]
pub enum Pen {
    Rows,
    Nuclear,
}

pub fn pen(x: &DMatrix<f64>, p: Pen) -> f64 {
    match p {
        Pen::Rows => l21_norm(x, x.ncols()).unwrap(),
        Pen::Nuclear => nuclear_norm(x, x.ncols()).unwrap(),
    }
}

pub fn prox_objective(x: &DMatrix<f64>, z: &DMatrix<f64>, tau: f64, p: Pen) -> f64 {
    0.5 * (x - z).norm_squared() + tau * pen(x, p)
}

// Gradient of the smoothed penalty: rows use sqrt(|x_r|^2 + eps^2), the
// nuclear norm uses tr((X^T X + eps^2 I)^{1/2}).
fn smoothed_grad(x: &DMatrix<f64>, p: Pen, eps: f64) -> DMatrix<f64> {
    match p {
        Pen::Rows => {
            let mut g = x.clone();
            for mut row in g.row_iter_mut() {
                let n = (row.norm_squared() + eps * eps).sqrt();
                row /= n;
            }
            g
        }
        Pen::Nuclear => {
            let mut gram = x.transpose() * x;
            for i in 0..gram.nrows() {
                gram[(i, i)] += eps * eps;
            }
            let eig = SymmetricEigen::new(gram);
            let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
            x * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
        }
    }
}

/// Minimiser of the prox objective by accelerated gradient descent on a
/// smoothed penalty.
pub fn numerical_prox(z: &DMatrix<f64>, tau: f64, p: Pen) -> DMatrix<f64> {
    let eps = 1e-6;
    let lip = 1.0 + tau / eps;
    let q = 1.0 / lip;
    let momentum = (1.0 - q.sqrt()) / (1.0 + q.sqrt());
    let mut x = z.clone();
    let mut prev = x.clone();
    for _ in 0..40_000 {
        let y = &x + (&x - &prev) * momentum;
        let g = (&y - z) + smoothed_grad(&y, p, eps) * tau;
        prev = x;
        x = y - g / lip;
    }
    x
}

/// Objective reached by 1e5 FISTA steps on `weight ||B - A Z||^2 + gamma pen(Z)`,
/// with the step from a power-iteration estimate of `||A||^2`.
pub fn fista_reference(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64, weight: f64, p: Pen) -> f64 {
    let ata = a.transpose() * a;
    let mut v = DMatrix::from_element(ata.nrows(), 1, 1.0);
    let mut lmax = 0.0;
    for _ in 0..500 {
        let w = &ata * &v;
        lmax = w.norm() / v.norm();
        v = w / lmax.max(1e-300);
    }
    let lip = 2.0 * weight * lmax * 1.01;
    let prox = |m: &DMatrix<f64>| match p {
        Pen::Rows => row_soft_threshold(m, gamma / lip).unwrap(),
        Pen::Nuclear => svt(m, gamma / lip).unwrap(),
    };
    let mut z = DMatrix::zeros(a.ncols(), b.ncols());
    let mut y = z.clone();
    let mut t = 1.0f64;
    for _ in 0..100_000 {
        let g = a.transpose() * (a * &y - b) * (2.0 * weight);
        let next = prox(&(&y - g / lip));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &z) * ((t - 1.0) / t_next);
        z = next;
        t = t_next;
    }
    weight * (b - a * &z).norm_squared() + gamma * pen(&z, p)
}

/// Blocks of `group` columns of `z`, one per patch.
pub fn blocks(z: &DMatrix<f64>, group: usize) -> impl Iterator<Item = DMatrix<f64>> + '_ {
    z.as_slice()
        .chunks(z.nrows() * group)
        .map(move |b| DMatrix::from_column_slice(z.nrows(), group, b))
}

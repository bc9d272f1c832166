//! Proximal operators and the least-squares kernels behind the sub-problems.
//!
//! Matrices are `nalgebra::DMatrix` (column-major). The structured penalties
//! act on column blocks: a stacked code matrix holding many per-patch
//! matrices side by side is shrunk block by block, `group_cols` columns at a
//! time, which is the same as shrinking each patch matrix on its own.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Structure imposed on the per-patch code matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `l2,1` norm: sum of row norms, shared support across echo columns.
    RowSparse,
    /// Nuclear norm: sum of singular values.
    LowRank,
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if tau >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("threshold must be non-negative".into()))
    }
}

fn check_group(z_cols: usize, group_cols: usize) -> Result<()> {
    if group_cols == 0 || !z_cols.is_multiple_of(group_cols) {
        return Err(Error::DimensionMismatch(format!(
            "{z_cols} columns do not split into blocks of {group_cols}"
        )));
    }
    Ok(())
}

/// Prox of `tau * ||Z||_{2,1}`: each row is scaled by `max(0, 1 - tau / ||row||)`.
pub fn row_soft_threshold<T: Scalar>(z: &DMatrix<T>, tau: T) -> Result<DMatrix<T>> {
    check_tau(tau)?;
    let mut out = z.clone();
    if z.ncols() > 0 {
        group_soft_threshold(&mut out, z.ncols(), tau);
    }
    Ok(out)
}

/// In-place row shrinkage inside every block of `group_cols` columns.
/// Returns the `l2,1` norm of the result summed over blocks.
pub(crate) fn group_soft_threshold<T: Scalar>(z: &mut DMatrix<T>, group_cols: usize, tau: T) -> T {
    let rows = z.nrows();
    let mut norms = vec![T::zero(); rows];
    let mut total = T::zero();
    for block in z.as_mut_slice().chunks_mut(rows * group_cols) {
        norms.iter_mut().for_each(|n| *n = T::zero());
        for col in block.chunks(rows) {
            for (n, &v) in norms.iter_mut().zip(col) {
                *n += v * v;
            }
        }
        for n in norms.iter_mut() {
            let norm = n.sqrt();
            let scale = if norm > tau { T::one() - tau / norm } else { T::zero() };
            total += norm * scale;
            *n = scale;
        }
        for col in block.chunks_mut(rows) {
            for (v, &s) in col.iter_mut().zip(&norms) {
                *v *= s;
            }
        }
    }
    total
}

/// `l2,1` norm summed over column blocks.
pub fn l21_norm<T: Scalar>(z: &DMatrix<T>, group_cols: usize) -> Result<T> {
    check_group(z.ncols(), group_cols)?;
    let mut copy = z.clone();
    Ok(group_soft_threshold(&mut copy, group_cols, T::zero()))
}

/// Prox of `tau * ||Z||_*`: singular value soft-thresholding.
pub fn svt<T: Scalar>(z: &DMatrix<T>, tau: T) -> Result<DMatrix<T>> {
    check_tau(tau)?;
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::SvdFailed);
    }
    Ok(svt_block(z.clone(), tau)?.0)
}

fn svt_block<T: Scalar>(z: DMatrix<T>, tau: T) -> Result<(DMatrix<T>, T)> {
    let (r, c) = z.shape();
    if r == 0 || c == 0 {
        return Ok((z, T::zero()));
    }
    // Work on the orientation with fewer columns.
    let wide = c > r;
    let a = if wide { z.transpose() } else { z };
    let (mut u, v, sigma) = jacobi_svd(a)?;
    let mut kept = T::zero();
    for (j, mut col) in u.column_iter_mut().enumerate() {
        let s = sigma[j];
        let shrunk = if s > tau { s - tau } else { T::zero() };
        kept += shrunk;
        col *= if s > T::zero() { shrunk / s } else { T::zero() };
    }
    let out = u * v.transpose();
    Ok((if wide { out.transpose() } else { out }, kept))
}

// One-sided Jacobi: rotates the columns of `a` until they are mutually
// orthogonal. Returns `(A V, V, column norms)`, so `A = (A V) V^T` and the
// norms are the singular values. nalgebra's bidiagonal SVD loses accuracy on
// exactly rank-deficient blocks, which the codes routinely are.
fn jacobi_svd<T: Scalar>(mut a: DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>, Vec<T>)> {
    let n = a.ncols();
    let mut v = DMatrix::<T>::identity(n, n);
    let eps = T::default_epsilon();
    let tol = eps * T::of(a.nrows() as f64).sqrt();
    // Columns below this squared norm are numerically zero.
    let negligible = eps * eps * a.norm_squared();
    let mut converged = false;
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = a.column(p);
                    let cq = a.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let sign = if zeta < T::zero() { -T::one() } else { T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut a, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdFailed);
    }
    let sigma = a.column_iter().map(|col| col.norm()).collect();
    Ok((a, v, sigma))
}

fn rotate<T: Scalar>(m: &mut DMatrix<T>, p: usize, q: usize, cs: T, sn: T) {
    for i in 0..m.nrows() {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = cs * x - sn * y;
        m[(i, q)] = sn * x + cs * y;
    }
}

/// Singular value thresholding of every block of `group_cols` columns, in place.
/// Returns the nuclear norm of the result summed over blocks.
pub(crate) fn group_svt<T: Scalar>(z: &mut DMatrix<T>, group_cols: usize, tau: T) -> Result<T> {
    let rows = z.nrows();
    let mut total = T::zero();
    for block in z.as_mut_slice().chunks_mut(rows * group_cols) {
        let m = DMatrix::from_column_slice(rows, group_cols, block);
        let (shrunk, norm) = svt_block(m, tau)?;
        block.copy_from_slice(shrunk.as_slice());
        total += norm;
    }
    Ok(total)
}

/// Nuclear norm summed over column blocks.
pub fn nuclear_norm<T: Scalar>(z: &DMatrix<T>, group_cols: usize) -> Result<T> {
    check_group(z.ncols(), group_cols)?;
    let mut copy = z.clone();
    group_svt(&mut copy, group_cols, T::zero())
}

/// Penalty value of `reg` summed over column blocks.
pub fn penalty<T: Scalar>(z: &DMatrix<T>, group_cols: usize, reg: Regularizer) -> Result<T> {
    match reg {
        Regularizer::RowSparse => l21_norm(z, group_cols),
        Regularizer::LowRank => nuclear_norm(z, group_cols),
    }
}

/// Elementwise `max(z, 0)`.
pub fn relu_project<T: Scalar>(z: &DMatrix<T>) -> DMatrix<T> {
    z.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_in_place<T: Scalar>(z: &mut DMatrix<T>) {
    z.iter_mut().for_each(|v| {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    });
}

/// Damping used for dictionary updates: `1e-6 * trace(G) / n` for an `n x n` Gram matrix.
pub fn default_damp<T: Scalar>(gram: &DMatrix<T>) -> T {
    let n = gram.nrows().max(1);
    T::of(1e-6) * gram.trace() / T::of(n as f64)
}

fn solve_spd<T: Scalar>(mut gram: DMatrix<T>, damp: T, rhs: DMatrix<T>) -> Result<DMatrix<T>> {
    if damp < T::zero() {
        return Err(Error::InvalidArgument("damping must be non-negative".into()));
    }
    for i in 0..gram.nrows() {
        gram[(i, i)] += damp;
    }
    let n = gram.nrows();
    let max_diag = (0..n).fold(T::zero(), |m, i| m.max(gram[(i, i)]));
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    // Pivots at rounding level mean the normal matrix is numerically singular.
    let floor = T::default_epsilon() * T::of(n.max(1) as f64) * max_diag;
    if (0..n).any(|i| {
        let l = chol.l_dirty()[(i, i)];
        l * l <= floor
    }) {
        return Err(Error::Singular);
    }
    let x = chol.solve(&rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular)
    }
}

/// `argmin_X ||B - A X||_F^2 + damp ||X||_F^2 = (A^T A + damp I)^{-1} A^T B`.
pub fn ridge_lstsq<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, damp: T) -> Result<DMatrix<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    solve_spd(a.tr_mul(a), damp, a.tr_mul(b))
}

/// `argmin_X ||B - X A||_F^2 + damp ||X||_F^2 = B A^T (A A^T + damp I)^{-1}`.
///
/// This is the dictionary-update form: `B` holds targets as columns and `A`
/// the matching codes.
pub fn ridge_right<T: Scalar>(b: &DMatrix<T>, a: &DMatrix<T>, damp: T) -> Result<DMatrix<T>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let a_t = a.transpose();
    let gram = a * &a_t;
    let rhs = (b * &a_t).transpose();
    Ok(solve_spd(gram, damp, rhs)?.transpose())
}

/// Same as [`ridge_right`] with [`default_damp`] applied to `A A^T`.
pub fn ridge_right_default<T: Scalar>(b: &DMatrix<T>, a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "A is {:?}, B is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let a_t = a.transpose();
    let gram = a * &a_t;
    let damp = default_damp(&gram);
    let rhs = (b * &a_t).transpose();
    Ok(solve_spd(gram, damp, rhs)?.transpose())
}

/// Result of a proximal-gradient run.
#[derive(Clone, Debug)]
pub struct IstaOutcome<T: Scalar> {
    pub solution: DMatrix<T>,
    /// Objective at the starting point and after every iteration.
    pub objective_trace: Vec<T>,
    /// `A` was zero; the minimiser `Z = 0` was returned without iterating.
    pub degenerate: bool,
}

/// Proximal gradient for `weight * ||B - A Z||_F^2 + gamma * pen(Z)`, with the
/// penalty applied per block of `group_cols` columns of `Z`.
///
/// The step is `1 / Lip` where `Lip = 2 * weight * lambda_max(A^T A)` is the
/// exact gradient Lipschitz constant, so the objective never increases.
#[derive(Clone, Debug)]
pub struct Ista<'a, T: Scalar> {
    a: &'a DMatrix<T>,
    b: &'a DMatrix<T>,
    gamma: T,
    weight: T,
    regularizer: Regularizer,
    group_cols: usize,
}

impl<'a, T: Scalar> Ista<'a, T> {
    pub fn new(a: &'a DMatrix<T>, b: &'a DMatrix<T>, regularizer: Regularizer) -> Self {
        Self {
            a,
            b,
            gamma: T::zero(),
            weight: T::one(),
            regularizer,
            group_cols: b.ncols().max(1),
        }
    }

    pub fn gamma(mut self, gamma: T) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn weight(mut self, weight: T) -> Self {
        self.weight = weight;
        self
    }

    pub fn group_cols(mut self, group_cols: usize) -> Self {
        self.group_cols = group_cols;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {:?}, B is {:?}",
                self.a.shape(),
                self.b.shape()
            )));
        }
        if !(self.gamma >= T::zero()) || !(self.weight >= T::zero()) {
            return Err(Error::InvalidArgument("gamma and weight must be non-negative".into()));
        }
        check_group(self.b.ncols(), self.group_cols)
    }

    /// Objective evaluated directly from the residual.
    pub fn objective(&self, z: &DMatrix<T>) -> Result<T> {
        self.validate()?;
        let resid = self.b - self.a * z;
        let pen = if self.gamma > T::zero() {
            penalty(z, self.group_cols, self.regularizer)?
        } else {
            T::zero()
        };
        Ok(self.weight * resid.norm_squared() + self.gamma * pen)
    }

    fn prox(&self, z: &mut DMatrix<T>, tau: T) -> Result<T> {
        match self.regularizer {
            Regularizer::RowSparse => Ok(group_soft_threshold(z, self.group_cols, tau)),
            Regularizer::LowRank => group_svt(z, self.group_cols, tau),
        }
    }

    /// Runs `n_iters` iterations from `init` (zeros when `None`).
    pub fn run(&self, init: Option<DMatrix<T>>, n_iters: usize) -> Result<IstaOutcome<T>> {
        self.validate()?;
        let (k, m) = (self.a.ncols(), self.b.ncols());
        let mut z = match init {
            Some(z) if z.shape() == (k, m) => z,
            Some(z) => {
                return Err(Error::DimensionMismatch(format!(
                    "initial code is {:?}, expected ({k}, {m})",
                    z.shape()
                )))
            }
            None => DMatrix::zeros(k, m),
        };
        let gram = self.a.tr_mul(self.a);
        let lambda_max = SymmetricEigen::new(gram.clone())
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, &v| if v > acc { v } else { acc });
        let lip = T::of(2.0) * self.weight * lambda_max;
        if !(lip > T::zero()) || !lip.is_finite() {
            let zero = DMatrix::zeros(k, m);
            let obj = self.weight * self.b.norm_squared();
            return Ok(IstaOutcome {
                solution: zero,
                objective_trace: vec![obj],
                degenerate: true,
            });
        }
        let step = T::one() / lip;
        let tau = step * self.gamma;
        let atb = self.a.tr_mul(self.b);
        let bb = self.b.norm_squared();
        let two = T::of(2.0);
        let mut pen = if self.gamma > T::zero() {
            penalty(&z, self.group_cols, self.regularizer)?
        } else {
            T::zero()
        };
        let mut trace = Vec::with_capacity(n_iters + 1);
        for it in 0..=n_iters {
            let mut gz = &gram * &z;
            let quad = bb - two * atb.dot(&z) + z.dot(&gz);
            trace.push(self.weight * quad + self.gamma * pen);
            if it == n_iters {
                break;
            }
            gz -= &atb;
            gz *= two * self.weight * step;
            z -= &gz;
            pen = if self.gamma > T::zero() {
                self.prox(&mut z, tau)?
            } else {
                T::zero()
            };
        }
        Ok(IstaOutcome {
            solution: z,
            objective_trace: trace,
            degenerate: false,
        })
    }
}

/// Approximately minimises `weight ||B - A Z||_F^2 + gamma ||Z||_{2,1}` from `Z = 0`.
pub fn ista_l21<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    gamma: T,
    weight: T,
    n_iters: usize,
) -> Result<IstaOutcome<T>> {
    Ista::new(a, b, Regularizer::RowSparse)
        .gamma(gamma)
        .weight(weight)
        .run(None, n_iters)
}

/// Approximately minimises `weight ||B - A Z||_F^2 + gamma ||Z||_*` from `Z = 0`.
pub fn ista_nuclear<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    gamma: T,
    weight: T,
    n_iters: usize,
) -> Result<IstaOutcome<T>> {
    Ista::new(a, b, Regularizer::LowRank)
        .gamma(gamma)
        .weight(weight)
        .run(None, n_iters)
}

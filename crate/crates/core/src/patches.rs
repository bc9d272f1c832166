//! Patch extraction `P_i` applied jointly across echoes, its adjoint, and
//! per-pixel coverage counts.
//!
//! A patch of a stack with `n` echoes is a real `patch_size^2 x 2n` matrix:
//! column `2j` holds the real part of echo `j`, column `2j + 1` the imaginary
//! part. Within a column, pixels are vectorised column-major, so entry
//! `c * patch_size + r` is the pixel at offset `(r, c)` from the patch origin.
//!
//! Patch `i` has origin `(row_origins[i / n_cols], col_origins[i % n_cols])`.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::kspace::EchoStack;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Origins step by `stride` across the whole image; patches wrap modulo the image size.
    Wraparound,
    /// Origins step by `stride` while the patch stays inside the image.
    InteriorOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatchConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub boundary: Boundary,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 12,
            stride: 1,
            boundary: Boundary::Wraparound,
        }
    }
}

impl PatchConfig {
    pub fn new(patch_size: usize, stride: usize, boundary: Boundary) -> Self {
        Self {
            patch_size,
            stride,
            boundary,
        }
    }

    /// Number of pixels in one patch.
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 || self.stride > self.patch_size {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= stride ({}) <= patch size ({})",
                self.stride, self.patch_size
            )));
        }
        if self.patch_size > height || self.patch_size > width {
            return Err(Error::InvalidArgument(format!(
                "patch size {} exceeds image {height}x{width}",
                self.patch_size
            )));
        }
        Ok(())
    }

    pub fn grid(&self, height: usize, width: usize) -> Result<PatchGrid> {
        self.validate(height, width)?;
        let origins = |side: usize| -> Vec<usize> {
            match self.boundary {
                Boundary::Wraparound => (0..side).step_by(self.stride).collect(),
                Boundary::InteriorOnly => (0..=side - self.patch_size).step_by(self.stride).collect(),
            }
        };
        Ok(PatchGrid {
            cfg: *self,
            height,
            width,
            row_origins: origins(height),
            col_origins: origins(width),
        })
    }
}

/// Patch origins for one image size.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    cfg: PatchConfig,
    height: usize,
    width: usize,
    row_origins: Vec<usize>,
    col_origins: Vec<usize>,
}

impl PatchGrid {
    pub fn config(&self) -> &PatchConfig {
        &self.cfg
    }

    pub fn count(&self) -> usize {
        self.row_origins.len() * self.col_origins.len()
    }

    pub fn origin(&self, i: usize) -> (usize, usize) {
        let nc = self.col_origins.len();
        (self.row_origins[i / nc], self.col_origins[i % nc])
    }

    /// Flat pixel indices (row-major in the image) covered by patch `i`, in
    /// patch vectorisation order.
    fn pixel_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let (r0, c0) = self.origin(i);
        let p = self.cfg.patch_size;
        let (h, w) = (self.height, self.width);
        (0..p).flat_map(move |c| (0..p).map(move |r| ((r0 + r) % h) * w + (c0 + c) % w))
    }
}

/// One patch of a stack, all echoes side by side.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix<T: Scalar> {
    pub values: DMatrix<T>,
    pub patch_index: usize,
    pub origin: (usize, usize),
}

/// Extracts patch `i`.
pub fn extract<T: Scalar>(x: &EchoStack<T>, cfg: &PatchConfig, i: usize) -> Result<PatchMatrix<T>> {
    let grid = cfg.grid(x.height(), x.width())?;
    if i >= grid.count() {
        return Err(Error::PatchIndex {
            index: i,
            count: grid.count(),
        });
    }
    let n = x.n_echoes();
    let mut values = DMatrix::zeros(cfg.patch_len(), 2 * n);
    fill_patch(x, &grid, i, values.as_mut_slice());
    Ok(PatchMatrix {
        values,
        patch_index: i,
        origin: grid.origin(i),
    })
}

// `out` is a column-major patch_len x 2n block.
fn fill_patch<T: Scalar>(x: &EchoStack<T>, grid: &PatchGrid, i: usize, out: &mut [T]) {
    let len = grid.cfg.patch_len();
    for j in 0..x.n_echoes() {
        let echo = x.echo(j);
        let (re, rest) = out[2 * j * len..].split_at_mut(len);
        let im = &mut rest[..len];
        for (k, px) in grid.pixel_indices(i).enumerate() {
            re[k] = echo[px].re;
            im[k] = echo[px].im;
        }
    }
}

/// All patches stacked side by side: a `patch_size^2 x (count * 2n)` matrix
/// whose columns `2n*i .. 2n*(i+1)` hold patch `i`.
pub fn extract_all<T: Scalar>(x: &EchoStack<T>, cfg: &PatchConfig) -> Result<DMatrix<T>> {
    let grid = cfg.grid(x.height(), x.width())?;
    Ok(extract_all_on(x, &grid))
}

pub(crate) fn extract_all_on<T: Scalar>(x: &EchoStack<T>, grid: &PatchGrid) -> DMatrix<T> {
    let len = grid.cfg.patch_len();
    let block = len * 2 * x.n_echoes();
    let mut out = DMatrix::zeros(len, grid.count() * 2 * x.n_echoes());
    for (i, chunk) in out.as_mut_slice().chunks_mut(block).enumerate() {
        fill_patch(x, grid, i, chunk);
    }
    out
}

/// Adjoint of [`extract`] summed over a complete patch set.
pub fn aggregate<T: Scalar>(
    patches: &[PatchMatrix<T>],
    cfg: &PatchConfig,
    dims: (usize, usize, usize),
) -> Result<EchoStack<T>> {
    let (h, w, n) = dims;
    let grid = cfg.grid(h, w)?;
    let mut seen = vec![false; grid.count()];
    for p in patches {
        if p.patch_index >= grid.count() {
            return Err(Error::PatchIndex {
                index: p.patch_index,
                count: grid.count(),
            });
        }
        if p.values.shape() != (cfg.patch_len(), 2 * n) {
            return Err(Error::DimensionMismatch(format!(
                "patch {} has shape {:?}",
                p.patch_index,
                p.values.shape()
            )));
        }
        seen[p.patch_index] = true;
    }
    let got = seen.iter().filter(|s| **s).count();
    if got != grid.count() || patches.len() != grid.count() {
        return Err(Error::IncompletePatchSet {
            expected: grid.count(),
            got,
        });
    }
    let mut x = EchoStack::zeros(h, w, n)?;
    for p in patches {
        scatter_patch(&mut x, &grid, p.patch_index, p.values.as_slice());
    }
    Ok(x)
}

/// Adjoint of [`extract_all`].
pub fn aggregate_stacked<T: Scalar>(
    stacked: &DMatrix<T>,
    cfg: &PatchConfig,
    dims: (usize, usize, usize),
) -> Result<EchoStack<T>> {
    let (h, w, n) = dims;
    let grid = cfg.grid(h, w)?;
    if stacked.nrows() != cfg.patch_len() || stacked.ncols() != grid.count() * 2 * n {
        return Err(Error::DimensionMismatch(format!(
            "stacked patches {:?}, expected ({}, {})",
            stacked.shape(),
            cfg.patch_len(),
            grid.count() * 2 * n
        )));
    }
    aggregate_stacked_on(stacked, &grid, n)
}

pub(crate) fn aggregate_stacked_on<T: Scalar>(
    stacked: &DMatrix<T>,
    grid: &PatchGrid,
    n_echoes: usize,
) -> Result<EchoStack<T>> {
    let mut x = EchoStack::zeros(grid.height, grid.width, n_echoes)?;
    let block = grid.cfg.patch_len() * 2 * n_echoes;
    for (i, chunk) in stacked.as_slice().chunks(block).enumerate() {
        scatter_patch(&mut x, grid, i, chunk);
    }
    Ok(x)
}

fn scatter_patch<T: Scalar>(x: &mut EchoStack<T>, grid: &PatchGrid, i: usize, block: &[T]) {
    let len = grid.cfg.patch_len();
    for j in 0..x.n_echoes() {
        let re = &block[2 * j * len..(2 * j + 1) * len];
        let im = &block[(2 * j + 1) * len..(2 * j + 2) * len];
        let echo = x.echo_mut(j);
        for (k, px) in grid.pixel_indices(i).enumerate() {
            echo[px] += Complex::new(re[k], im[k]);
        }
    }
}

/// Number of patches covering each pixel, row-major.
pub fn coverage(cfg: &PatchConfig, height: usize, width: usize) -> Result<Vec<usize>> {
    let grid = cfg.grid(height, width)?;
    Ok(coverage_on(&grid))
}

pub(crate) fn coverage_on(grid: &PatchGrid) -> Vec<usize> {
    let mut counts = vec![0usize; grid.height * grid.width];
    for i in 0..grid.count() {
        for px in grid.pixel_indices(i) {
            counts[px] += 1;
        }
    }
    counts
}

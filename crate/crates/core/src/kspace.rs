//! Centered unitary 2-D Fourier operators, phase-encode sampling masks and the
//! block-diagonal multi-echo acquisition model `y_j = R_j F x_j + noise`.
//!
//! Images are stored row-major. Row index is the phase-encode direction, so a
//! mask selects whole rows of K-space and every selected row is read out in
//! full.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default fraction of the line budget placed contiguously around the K-space centre.
pub const DEFAULT_CENTER_FRACTION: f64 = 0.33;

/// A stack of complex 2-D images of one cross-section, one per echo.
#[derive(Clone, PartialEq)]
pub struct EchoStack<T> {
    height: usize,
    width: usize,
    n_echoes: usize,
    data: Vec<Complex<T>>,
}

impl<T> fmt::Debug for EchoStack<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EchoStack")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("n_echoes", &self.n_echoes)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> EchoStack<T> {
    pub fn zeros(height: usize, width: usize, n_echoes: usize) -> Result<Self> {
        check_dims(height, width, n_echoes)?;
        Ok(Self {
            height,
            width,
            n_echoes,
            data: vec![Complex::new(T::zero(), T::zero()); height * width * n_echoes],
        })
    }

    /// Builds a stack from echo-major, row-major samples.
    pub fn from_vec(height: usize, width: usize, n_echoes: usize, data: Vec<Complex<T>>) -> Result<Self> {
        check_dims(height, width, n_echoes)?;
        if data.len() != height * width * n_echoes {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {height}x{width}x{n_echoes} stack",
                data.len()
            )));
        }
        check_finite(&data, "echo stack")?;
        Ok(Self {
            height,
            width,
            n_echoes,
            data,
        })
    }

    pub fn from_echoes(height: usize, width: usize, echoes: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let n = echoes.len();
        if echoes.iter().any(|e| e.len() != height * width) {
            return Err(Error::DimensionMismatch("echoes must all be height*width long".into()));
        }
        Self::from_vec(height, width, n, echoes.into_iter().flatten().collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_echoes(&self) -> usize {
        self.n_echoes
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.n_echoes)
    }

    pub fn pixels_per_echo(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn echo(&self, j: usize) -> &[Complex<T>] {
        let n = self.pixels_per_echo();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn echo_mut(&mut self, j: usize) -> &mut [Complex<T>] {
        let n = self.pixels_per_echo();
        &mut self.data[j * n..(j + 1) * n]
    }

    #[inline]
    pub fn get(&self, echo: usize, row: usize, col: usize) -> Complex<T> {
        self.data[(echo * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, echo: usize, row: usize, col: usize, v: Complex<T>) {
        self.data[(echo * self.height + row) * self.width + col] = v;
    }

    /// Squared Euclidean norm over all echoes.
    pub fn norm_sqr(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc + v.norm_sqr())
    }

    /// `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        self.check_same_dims(other)?;
        Ok(inner(&self.data, &other.data))
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Magnitude image of one echo.
    pub fn magnitude(&self, echo: usize) -> RealImage<T> {
        RealImage {
            height: self.height,
            width: self.width,
            data: self.echo(echo).iter().map(T::magnitude_of).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Converts to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> EchoStack<U> {
        EchoStack {
            height: self.height,
            width: self.width,
            n_echoes: self.n_echoes,
            data: self
                .data
                .iter()
                .map(|v| Complex::new(U::of(v.re.as_f64()), U::of(v.im.as_f64())))
                .collect(),
        }
    }
}

/// A real-valued 2-D image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage<T> {
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> RealImage<T> {
    pub fn max(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| if v > m { v } else { m })
    }
}

fn check_dims(height: usize, width: usize, n_echoes: usize) -> Result<()> {
    if height == 0 || width == 0 || n_echoes == 0 {
        return Err(Error::InvalidArgument(format!(
            "stack dimensions must be positive, got {height}x{width}x{n_echoes}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite<T: Scalar>(v: &[Complex<T>], what: &'static str) -> Result<()> {
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn inner<T: Scalar>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

/// Planned centered unitary 2-D FFT for one image size.
#[derive(Clone)]
pub struct Fft2<T: Scalar> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Scalar> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            scale: T::one() / T::of((height * width) as f64).sqrt(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// In-place centered forward transform (DC lands at `(height/2, width/2)`).
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, true);
    }

    /// In-place centered inverse transform.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, false);
    }

    fn transform(&self, buf: &mut [Complex<T>], forward: bool) {
        let (h, w) = (self.height, self.width);
        assert_eq!(buf.len(), h * w, "buffer does not match planned size");
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        let mut tmp = ifftshift2(buf, h, w);
        row.process(&mut tmp);
        let mut t = transpose(&tmp, h, w);
        col.process(&mut t);
        let tmp = transpose(&t, w, h);
        let shifted = fftshift2(&tmp, h, w);
        for (dst, src) in buf.iter_mut().zip(shifted) {
            *dst = src * self.scale;
        }
    }
}

fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(src[r * cols + c]);
        }
    }
    out
}

// fftshift moves index 0 to n/2; ifftshift undoes it.
fn fftshift2<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = src.to_vec();
    for r in 0..h {
        for c in 0..w {
            out[((r + h / 2) % h) * w + (c + w / 2) % w] = src[r * w + c];
        }
    }
    out
}

fn ifftshift2<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = src.to_vec();
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = src[((r + h / 2) % h) * w + (c + w / 2) % w];
        }
    }
    out
}

/// Centered unitary 2-D DFT of a row-major `height x width` image.
pub fn fft2c<T: Scalar>(image: &[Complex<T>], height: usize, width: usize) -> Result<Vec<Complex<T>>> {
    if image.len() != height * width || height == 0 || width == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for a {height}x{width} image",
            image.len()
        )));
    }
    check_finite(image, "fft2c input")?;
    let mut out = image.to_vec();
    Fft2::new(height, width).forward(&mut out);
    Ok(out)
}

/// Inverse of [`fft2c`].
pub fn ifft2c<T: Scalar>(spectrum: &[Complex<T>], height: usize, width: usize) -> Result<Vec<Complex<T>>> {
    if spectrum.len() != height * width || height == 0 || width == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} samples for a {height}x{width} spectrum",
            spectrum.len()
        )));
    }
    check_finite(spectrum, "ifft2c input")?;
    let mut out = spectrum.to_vec();
    Fft2::new(height, width).inverse(&mut out);
    Ok(out)
}

/// A set of fully read-out phase-encode rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    lines: Vec<usize>,
    center_fraction: f64,
    seed: u64,
}

impl SamplingMask {
    /// Rebuilds a mask from its parts (sorted and deduplicated).
    pub fn from_lines(
        height: usize,
        width: usize,
        mut lines: Vec<usize>,
        center_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        lines.sort_unstable();
        lines.dedup();
        if let Some(&last) = lines.last() {
            if last >= height {
                return Err(Error::InvalidArgument(format!(
                    "line {last} outside a {height}-row K-space"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            lines,
            center_fraction,
            seed,
        })
    }

    /// A mask selecting every row.
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            lines: (0..height).collect(),
            center_fraction: 1.0,
            seed: 0,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Selected rows in ascending order.
    pub fn lines(&self) -> &[usize] {
        &self.lines
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn center_fraction(&self) -> f64 {
        self.center_fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn contains(&self, row: usize) -> bool {
        self.lines.binary_search(&row).is_ok()
    }

    /// Per-row indicator of length `height`.
    pub fn row_indicator(&self) -> Vec<bool> {
        let mut v = vec![false; self.height];
        for &l in &self.lines {
            v[l] = true;
        }
        v
    }
}

/// Number of rows in the contiguous centre block: `round(center_fraction * n_lines)`
/// with ties rounded up.
pub fn center_line_count(n_lines: usize, center_fraction: f64) -> usize {
    (center_fraction * n_lines as f64 + 0.5).floor() as usize
}

/// Rows of the centre block for a given size, centred on `height / 2`.
pub fn center_block(height: usize, n_center: usize) -> std::ops::Range<usize> {
    let start = (height / 2).saturating_sub(n_center / 2);
    let start = start.min(height - n_center.min(height));
    start..start + n_center
}

/// Phase-encode undersampling mask: a centre block of
/// `round(center_fraction * n_lines)` rows plus the rest drawn uniformly
/// without replacement from the periphery.
pub fn make_mask(height: usize, width: usize, n_lines: usize, center_fraction: f64, seed: u64) -> Result<SamplingMask> {
    if n_lines == 0 || n_lines > height {
        return Err(Error::InvalidArgument(format!(
            "line budget {n_lines} must be in 1..={height}"
        )));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "center fraction {center_fraction} must lie strictly inside (0, 1)"
        )));
    }
    let n_center = center_line_count(n_lines, center_fraction);
    if n_center > n_lines {
        return Err(Error::InvalidArgument(format!(
            "centre block of {n_center} rows exceeds the line budget {n_lines}"
        )));
    }
    let center = center_block(height, n_center);
    let periphery: Vec<usize> = (0..height).filter(|r| !center.contains(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, periphery.len(), n_lines - n_center);
    let mut lines: Vec<usize> = center.collect();
    lines.extend(picks.iter().map(|k| periphery[k]));
    SamplingMask::from_lines(height, width, lines, center_fraction, seed)
}

/// Per-echo undersampled K-space samples together with the masks that produced them.
#[derive(Clone, PartialEq)]
pub struct AcquiredData<T> {
    height: usize,
    width: usize,
    masks: Vec<SamplingMask>,
    samples: Vec<Vec<Complex<T>>>,
    noise_sigma: T,
}

impl<T> fmt::Debug for AcquiredData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AcquiredData")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("n_echoes", &self.masks.len())
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> AcquiredData<T> {
    /// `samples[j]` holds the selected rows of echo `j`, in ascending row order.
    pub fn new(
        height: usize,
        width: usize,
        masks: Vec<SamplingMask>,
        samples: Vec<Vec<Complex<T>>>,
        noise_sigma: T,
    ) -> Result<Self> {
        check_dims(height, width, masks.len())?;
        if masks.len() != samples.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} masks for {} sample vectors",
                masks.len(),
                samples.len()
            )));
        }
        for (j, (m, y)) in masks.iter().zip(&samples).enumerate() {
            if m.height() != height || m.width() != width {
                return Err(Error::DimensionMismatch(format!(
                    "mask {j} is {}x{}, data is {height}x{width}",
                    m.height(),
                    m.width()
                )));
            }
            if y.len() != m.n_lines() * width {
                return Err(Error::DimensionMismatch(format!(
                    "echo {j} has {} samples, mask selects {} lines of {width}",
                    y.len(),
                    m.n_lines()
                )));
            }
            check_finite(y, "K-space samples")?;
        }
        if !(noise_sigma >= T::zero()) {
            return Err(Error::InvalidArgument("noise sigma must be non-negative".into()));
        }
        Ok(Self {
            height,
            width,
            masks,
            samples,
            noise_sigma,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_echoes(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[SamplingMask] {
        &self.masks
    }

    pub fn samples(&self) -> &[Vec<Complex<T>>] {
        &self.samples
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    /// Echo `j`'s samples scattered into a full grid, zeros at unsampled rows.
    pub fn zero_filled_spectrum(&self, j: usize) -> Vec<Complex<T>> {
        let w = self.width;
        let mut k = vec![Complex::new(T::zero(), T::zero()); self.height * w];
        for (slot, &row) in self.masks[j].lines().iter().enumerate() {
            k[row * w..(row + 1) * w].copy_from_slice(&self.samples[j][slot * w..(slot + 1) * w]);
        }
        k
    }

    /// Inner product with another data set on the same sampling pattern.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if self.masks != other.masks || self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch("data sets use different masks".into()));
        }
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + inner(a, b)))
    }

    /// Same masks, new sample values.
    pub fn with_samples(&self, samples: Vec<Vec<Complex<T>>>) -> Result<Self> {
        Self::new(self.height, self.width, self.masks.clone(), samples, self.noise_sigma)
    }

    /// `sum_j ||y_j - R_j F x_j||^2`.
    pub fn residual_sqr(&self, x: &EchoStack<T>, fft: &Fft2<T>) -> Result<T> {
        let pred = apply_forward(x, &self.masks, fft)?;
        Ok(pred
            .iter()
            .zip(&self.samples)
            .flat_map(|(p, y)| p.iter().zip(y))
            .fold(T::zero(), |acc, (p, y)| acc + (y - p).norm_sqr()))
    }

    pub fn cast<U: Scalar>(&self) -> AcquiredData<U> {
        AcquiredData {
            height: self.height,
            width: self.width,
            masks: self.masks.clone(),
            samples: self
                .samples
                .iter()
                .map(|y| {
                    y.iter()
                        .map(|v| Complex::new(U::of(v.re.as_f64()), U::of(v.im.as_f64())))
                        .collect()
                })
                .collect(),
            noise_sigma: U::of(self.noise_sigma.as_f64()),
        }
    }
}

fn apply_forward<T: Scalar>(x: &EchoStack<T>, masks: &[SamplingMask], fft: &Fft2<T>) -> Result<Vec<Vec<Complex<T>>>> {
    if masks.len() != x.n_echoes() {
        return Err(Error::DimensionMismatch(format!(
            "{} masks for {} echoes",
            masks.len(),
            x.n_echoes()
        )));
    }
    let (h, w) = (x.height(), x.width());
    if fft.dims() != (h, w) {
        return Err(Error::DimensionMismatch("FFT plan does not match image size".into()));
    }
    masks
        .iter()
        .enumerate()
        .map(|(j, m)| {
            if m.height() != h || m.width() != w {
                return Err(Error::DimensionMismatch(format!(
                    "mask {j} is {}x{}, image is {h}x{w}",
                    m.height(),
                    m.width()
                )));
            }
            let mut k = x.echo(j).to_vec();
            fft.forward(&mut k);
            let mut y = Vec::with_capacity(m.n_lines() * w);
            for &row in m.lines() {
                y.extend_from_slice(&k[row * w..(row + 1) * w]);
            }
            Ok(y)
        })
        .collect()
}

/// Acquisition model: selected rows of `fft2c(x_j)` plus optional complex
/// Gaussian noise with `E|n|^2 = noise_sigma^2`.
pub fn forward<T: Scalar>(
    x: &EchoStack<T>,
    masks: &[SamplingMask],
    noise_sigma: T,
    noise_seed: u64,
) -> Result<AcquiredData<T>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("forward input"));
    }
    let fft = Fft2::new(x.height(), x.width());
    let mut samples = apply_forward(x, masks, &fft)?;
    if noise_sigma > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let s = noise_sigma.as_f64() / std::f64::consts::SQRT_2;
        for y in &mut samples {
            for v in y.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *v += Complex::new(T::of(s * re), T::of(s * im));
            }
        }
    }
    AcquiredData::new(x.height(), x.width(), masks.to_vec(), samples, noise_sigma)
}

/// Adjoint of the acquisition model; also the zero-filled reconstruction.
pub fn adjoint<T: Scalar>(d: &AcquiredData<T>) -> Result<EchoStack<T>> {
    let fft = Fft2::new(d.height(), d.width());
    let mut x = EchoStack::zeros(d.height(), d.width(), d.n_echoes())?;
    for j in 0..d.n_echoes() {
        let mut k = d.zero_filled_spectrum(j);
        fft.inverse(&mut k);
        x.echo_mut(j).copy_from_slice(&k);
    }
    Ok(x)
}

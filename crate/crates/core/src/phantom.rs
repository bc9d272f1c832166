//! Synthetic multi-echo phantom: overlapping ellipses with their own proton
//! density and T2, decaying as in a CPMG echo train.
//!
//! Pixel `(r, c)` of a `size x size` image sits at normalised coordinates
//! `x = 2 (c + 0.5) / size - 1`, `y = 2 (r + 0.5) / size - 1`. Echo `j`
//! (zero-based) of a pixel covered by region `k` (the last covering region
//! wins) has magnitude `rho_k * exp(-(j + 1) * echo_spacing / t2_k)`. Every
//! echo is multiplied by the same smooth phase `exp(i (p0 + px x + py y))`,
//! where `p0 ~ U[-pi/2, pi/2)`, `px, py ~ U[-pi/4, pi/4)` are drawn in that
//! order from `ChaCha8Rng::seed_from_u64(seed)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::EchoStack;
use crate::scalar::Scalar;

/// Echo spacing of the reference CPMG protocol, in milliseconds.
pub const DEFAULT_ECHO_SPACING_MS: f64 = 6.738;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseRegion {
    /// `(x, y)` in normalised image coordinates.
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle_deg: f64,
    pub proton_density: f64,
    pub t2_ms: f64,
}

impl EllipseRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axes.0).powi(2) + (v / self.semi_axes.1).powi(2) <= 1.0
    }

    fn validate(&self, k: usize) -> Result<()> {
        let (a, b) = self.semi_axes;
        let finite = [
            self.center.0,
            self.center.1,
            a,
            b,
            self.angle_deg,
            self.proton_density,
            self.t2_ms,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || !(a > 0.0) || !(b > 0.0) {
            return Err(Error::InvalidArgument(format!("region {k} is a degenerate ellipse")));
        }
        if !(self.t2_ms > 0.0) {
            return Err(Error::InvalidArgument(format!("region {k} needs t2_ms > 0")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    pub n_echoes: usize,
    pub echo_spacing_ms: f64,
    pub regions: Vec<EllipseRegion>,
    pub seed: u64,
}

impl PhantomSpec {
    /// Four-region cord-like cross-section (surrounding tissue, white
    /// matter, grey matter, central canal).
    pub fn spinal_cord(size: usize, n_echoes: usize, seed: u64) -> Self {
        let region = |center, semi_axes, angle_deg, proton_density, t2_ms| EllipseRegion {
            center,
            semi_axes,
            angle_deg,
            proton_density,
            t2_ms,
        };
        Self {
            size,
            n_echoes,
            echo_spacing_ms: DEFAULT_ECHO_SPACING_MS,
            regions: vec![
                region((0.0, 0.0), (0.9, 0.75), 0.0, 0.5, 35.0),
                region((0.0, 0.02), (0.62, 0.48), 0.0, 0.8, 55.0),
                region((0.0, 0.05), (0.32, 0.22), 10.0, 1.0, 75.0),
                region((0.0, 0.08), (0.05, 0.07), 0.0, 0.9, 250.0),
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.n_echoes == 0 {
            return Err(Error::InvalidArgument(
                "phantom size and echo count must be positive".into(),
            ));
        }
        if !(self.echo_spacing_ms >= 0.0) || !self.echo_spacing_ms.is_finite() {
            return Err(Error::InvalidArgument(
                "echo spacing must be finite and non-negative".into(),
            ));
        }
        for (k, r) in self.regions.iter().enumerate() {
            r.validate(k)?;
        }
        Ok(())
    }
}

impl Default for PhantomSpec {
    /// 256 x 256, 8 echoes, seed 0.
    fn default() -> Self {
        Self::spinal_cord(256, 8, 0)
    }
}

/// Renders the phantom.
pub fn make_phantom<T: Scalar>(spec: &PhantomSpec) -> Result<EchoStack<T>> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p0: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let px: f64 = rng.random_range(-FRAC_PI_4..FRAC_PI_4);
    let py: f64 = rng.random_range(-FRAC_PI_4..FRAC_PI_4);

    let mut x = EchoStack::zeros(n, n, spec.n_echoes)?;
    for r in 0..n {
        let yc = 2.0 * (r as f64 + 0.5) / n as f64 - 1.0;
        for c in 0..n {
            let xc = 2.0 * (c as f64 + 0.5) / n as f64 - 1.0;
            let Some(region) = spec.regions.iter().rev().find(|reg| reg.contains(xc, yc)) else {
                continue;
            };
            let phase = Complex::from_polar(1.0, p0 + px * xc + py * yc);
            for j in 0..spec.n_echoes {
                let mag = region.proton_density * (-((j + 1) as f64) * spec.echo_spacing_ms / region.t2_ms).exp();
                let v = phase * mag;
                x.set(j, r, c, Complex::new(T::of(v.re), T::of(v.im)));
            }
        }
    }
    Ok(x)
}

//! Dataset persistence and PNG export.
//!
//! A dataset file is a UTF-8 header followed by a binary payload:
//!
//! ```text
//! MECDL-DATASET 1\n
//! <TOML header>
//! END-HEADER\n
//! <payload>
//! ```
//!
//! The payload is `height * width * echoes` complex samples stored as
//! little-endian IEEE-754 `f32` pairs `(re, im)`, echo-major then row-major,
//! so it is always exactly `8 * height * width * echoes` bytes.
//!
//! * `images`: the samples are the image stack.
//! * `kspace`: the samples are the centered spectra with unsampled rows set
//!   to zero; the header's `[[masks]]` tables (one per echo) list the sampled
//!   rows, and `noise_sigma` is recorded.
//! * `mask`: the samples are `1 + 0i` on selected rows and `0` elsewhere, one
//!   image per mask; `[[masks]]` lists the rows as well.
//!
//! Data held in `f64` is narrowed to `f32` on save.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{AcquiredData, EchoStack, RealImage, SamplingMask};
use crate::scalar::Scalar;

pub const MAGIC: &str = "MECDL-DATASET 1";
pub const HEADER_END: &str = "END-HEADER";
pub const DTYPE: &str = "complex64";
pub const BYTE_ORDER: &str = "little-endian";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Images,
    Kspace,
    Mask,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Images => "images",
            Role::Kspace => "kspace",
            Role::Mask => "mask",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "images" => Ok(Role::Images),
            "kspace" => Ok(Role::Kspace),
            "mask" => Ok(Role::Mask),
            other => Err(Error::UnknownRole(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub lines: Vec<usize>,
    pub center_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub role: String,
    pub height: usize,
    pub width: usize,
    pub echoes: usize,
    pub dtype: String,
    pub byte_order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    /// Free-form provenance, e.g. method and layer count of a reconstruction.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<MaskHeader>,
}

impl Header {
    fn new(role: Role, height: usize, width: usize, echoes: usize) -> Self {
        Self {
            role: role.as_str().to_string(),
            height,
            width,
            echoes,
            dtype: DTYPE.to_string(),
            byte_order: BYTE_ORDER.to_string(),
            noise_sigma: None,
            attributes: BTreeMap::new(),
            masks: Vec::new(),
        }
    }

    pub fn role(&self) -> Result<Role> {
        Role::parse(&self.role)
    }

    pub fn payload_bytes(&self) -> usize {
        8 * self.height * self.width * self.echoes
    }

    fn validate(&self) -> Result<Role> {
        let role = self.role()?;
        if self.dtype != DTYPE {
            return Err(Error::Header(format!("unsupported dtype `{}`", self.dtype)));
        }
        if self.byte_order != BYTE_ORDER {
            return Err(Error::Header(format!("unsupported byte order `{}`", self.byte_order)));
        }
        if self.height == 0 || self.width == 0 || self.echoes == 0 {
            return Err(Error::Header("dimensions must be positive".into()));
        }
        if matches!(role, Role::Kspace | Role::Mask) && self.masks.len() != self.echoes {
            return Err(Error::Header(format!(
                "{} mask tables for {} echoes",
                self.masks.len(),
                self.echoes
            )));
        }
        Ok(role)
    }

    fn sampling_masks(&self) -> Result<Vec<SamplingMask>> {
        self.masks
            .iter()
            .map(|m| {
                SamplingMask::from_lines(self.height, self.width, m.lines.clone(), m.center_fraction, m.seed)
                    .map_err(|e| Error::Header(e.to_string()))
            })
            .collect()
    }
}

/// Header plus decoded payload.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: Header,
    pub payload: Vec<Complex<f32>>,
}

impl DatasetFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.header.validate()?;
        if self.payload.len() * 8 != self.header.payload_bytes() {
            return Err(Error::SizeMismatch {
                expected: self.header.payload_bytes(),
                found: self.payload.len() * 8,
            });
        }
        if !self.payload.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("dataset payload"));
        }
        let text = toml::to_string(&self.header).map_err(|e| Error::Header(e.to_string()))?;
        let mut out = Vec::with_capacity(text.len() + 64 + self.payload.len() * 8);
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(text.as_bytes());
        if !text.ends_with('\n') {
            out.push(b'\n');
        }
        out.extend_from_slice(HEADER_END.as_bytes());
        out.push(b'\n');
        for v in &self.payload {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let magic = format!("{MAGIC}\n");
        if !bytes.starts_with(magic.as_bytes()) {
            if magic.as_bytes().starts_with(bytes) {
                return Err(Error::TruncatedHeader);
            }
            return Err(Error::Header("missing dataset magic line".into()));
        }
        let terminator = format!("\n{HEADER_END}\n");
        let body = &bytes[magic.len() - 1..];
        let pos = find(body, terminator.as_bytes()).ok_or(Error::TruncatedHeader)?;
        let text = std::str::from_utf8(&body[1..pos + 1]).map_err(|e| Error::Header(e.to_string()))?;
        let header: Header = toml::from_str(text).map_err(|e| Error::Header(e.to_string()))?;
        header.validate()?;
        let payload = &body[pos + terminator.len()..];
        if payload.len() != header.payload_bytes() {
            return Err(Error::SizeMismatch {
                expected: header.payload_bytes(),
                found: payload.len(),
            });
        }
        let payload = payload
            .chunks_exact(8)
            .map(|c| {
                Complex::new(
                    f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                    f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                )
            })
            .collect();
        Ok(Self { header, payload })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    fn expect_role(&self, expected: Role) -> Result<()> {
        let found = self.header.role()?;
        if found != expected {
            return Err(Error::WrongRole {
                expected: expected.as_str(),
                found: found.as_str(),
            });
        }
        Ok(())
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn narrow<T: Scalar>(v: &Complex<T>) -> Complex<f32> {
    Complex::new(v.re.as_f64() as f32, v.im.as_f64() as f32)
}

fn widen<T: Scalar>(v: &Complex<f32>) -> Complex<T> {
    Complex::new(T::of(v.re as f64), T::of(v.im as f64))
}

fn mask_header(m: &SamplingMask) -> MaskHeader {
    MaskHeader {
        lines: m.lines().to_vec(),
        center_fraction: m.center_fraction(),
        seed: m.seed(),
    }
}

/// Types that can be stored as a dataset file.
pub trait Dataset: Sized {
    fn to_dataset(&self) -> Result<DatasetFile>;
    fn from_dataset(file: DatasetFile) -> Result<Self>;
}

impl<T: Scalar> Dataset for EchoStack<T> {
    fn to_dataset(&self) -> Result<DatasetFile> {
        let (h, w, n) = self.dims();
        Ok(DatasetFile {
            header: Header::new(Role::Images, h, w, n),
            payload: self.data().iter().map(narrow).collect(),
        })
    }

    fn from_dataset(file: DatasetFile) -> Result<Self> {
        file.expect_role(Role::Images)?;
        let h = &file.header;
        EchoStack::from_vec(h.height, h.width, h.echoes, file.payload.iter().map(widen).collect())
    }
}

impl<T: Scalar> Dataset for AcquiredData<T> {
    fn to_dataset(&self) -> Result<DatasetFile> {
        let mut header = Header::new(Role::Kspace, self.height(), self.width(), self.n_echoes());
        header.noise_sigma = Some(self.noise_sigma().as_f64());
        header.masks = self.masks().iter().map(mask_header).collect();
        let payload = (0..self.n_echoes())
            .flat_map(|j| self.zero_filled_spectrum(j))
            .map(|v| narrow(&v))
            .collect();
        Ok(DatasetFile { header, payload })
    }

    fn from_dataset(file: DatasetFile) -> Result<Self> {
        file.expect_role(Role::Kspace)?;
        let h = &file.header;
        let masks = h.sampling_masks()?;
        let plane = h.height * h.width;
        let samples = masks
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let echo = &file.payload[j * plane..(j + 1) * plane];
                m.lines()
                    .iter()
                    .flat_map(|&r| echo[r * h.width..(r + 1) * h.width].iter().map(widen))
                    .collect()
            })
            .collect();
        let sigma = h.noise_sigma.unwrap_or(0.0);
        AcquiredData::new(h.height, h.width, masks, samples, T::of(sigma))
    }
}

impl Dataset for Vec<SamplingMask> {
    fn to_dataset(&self) -> Result<DatasetFile> {
        let first = self
            .first()
            .ok_or_else(|| Error::InvalidArgument("no masks to save".into()))?;
        let (h, w) = (first.height(), first.width());
        if self.iter().any(|m| m.height() != h || m.width() != w) {
            return Err(Error::DimensionMismatch("masks differ in size".into()));
        }
        let mut header = Header::new(Role::Mask, h, w, self.len());
        header.masks = self.iter().map(mask_header).collect();
        let one = Complex::new(1.0f32, 0.0);
        let zero = Complex::new(0.0f32, 0.0);
        let payload = self
            .iter()
            .flat_map(|m| {
                m.row_indicator()
                    .into_iter()
                    .flat_map(move |on| std::iter::repeat_n(if on { one } else { zero }, w))
            })
            .collect();
        Ok(DatasetFile { header, payload })
    }

    fn from_dataset(file: DatasetFile) -> Result<Self> {
        file.expect_role(Role::Mask)?;
        let masks = file.header.sampling_masks()?;
        let plane = file.header.height * file.header.width;
        let w = file.header.width;
        for (j, m) in masks.iter().enumerate() {
            let rows = m.row_indicator();
            let echo = &file.payload[j * plane..(j + 1) * plane];
            let consistent = rows.iter().enumerate().all(|(r, &on)| {
                let want = if on { 1.0 } else { 0.0 };
                echo[r * w..(r + 1) * w].iter().all(|v| v.re == want && v.im == 0.0)
            });
            if !consistent {
                return Err(Error::Header(format!("mask {j} payload disagrees with its line list")));
            }
        }
        Ok(masks)
    }
}

impl Dataset for SamplingMask {
    fn to_dataset(&self) -> Result<DatasetFile> {
        vec![self.clone()].to_dataset()
    }

    fn from_dataset(file: DatasetFile) -> Result<Self> {
        let mut masks = Vec::<SamplingMask>::from_dataset(file)?;
        if masks.len() != 1 {
            return Err(Error::Header(format!("expected one mask, file holds {}", masks.len())));
        }
        Ok(masks.remove(0))
    }
}

pub fn save<D: Dataset>(path: impl AsRef<Path>, value: &D) -> Result<()> {
    value.to_dataset()?.write(path)
}

/// Saves with extra header attributes.
pub fn save_with_attributes<D: Dataset>(
    path: impl AsRef<Path>,
    value: &D,
    attributes: BTreeMap<String, String>,
) -> Result<()> {
    let mut file = value.to_dataset()?;
    file.header.attributes = attributes;
    file.write(path)
}

pub fn load<D: Dataset>(path: impl AsRef<Path>) -> Result<D> {
    D::from_dataset(DatasetFile::read(path)?)
}

/// Linear 8-bit windowing: `byte = floor(255 * clamp((v - lo) / (hi - lo), 0, 1) + 0.5)`.
///
/// Without a window, `(0, max)` is used; an all-zero image renders black.
pub fn render_gray<T: Scalar>(image: &RealImage<T>, window: Option<(f64, f64)>) -> Result<Vec<u8>> {
    if image.data.len() != image.height * image.width {
        return Err(Error::DimensionMismatch("image buffer does not match its size".into()));
    }
    if !image.data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("image to export"));
    }
    let (lo, hi) = match window {
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, hi)) => {
            return Err(Error::InvalidArgument(format!("empty window ({lo}, {hi})")));
        }
        None => (0.0, image.max().as_f64()),
    };
    if !(hi > lo) {
        return Ok(vec![0; image.data.len()]);
    }
    Ok(image
        .data
        .iter()
        .map(|v| {
            let t = ((v.as_f64() - lo) / (hi - lo)).clamp(0.0, 1.0);
            (255.0 * t + 0.5).floor() as u8
        })
        .collect())
}

/// Writes an 8-bit grayscale PNG.
pub fn export_png<T: Scalar>(image: &RealImage<T>, path: impl AsRef<Path>, window: Option<(f64, f64)>) -> Result<()> {
    let bytes = render_gray(image, window)?;
    let img = image::GrayImage::from_raw(image.width as u32, image.height as u32, bytes)
        .ok_or_else(|| Error::DimensionMismatch("image buffer does not match its size".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

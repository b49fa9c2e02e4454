//! Real and complex `C×H×W` grids, the seeded generator and elementary norms.

use std::fmt;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

/// Real image grid stored row-major in `(c, h, w)` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorParts")]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct TensorParts {
    shape: Shape,
    data: Vec<f64>,
}

impl TryFrom<TensorParts> for ImageTensor {
    type Error = NfcError;

    fn try_from(p: TensorParts) -> Result<Self> {
        ImageTensor::new(p.shape, p.data)
    }
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(NfcError::InvalidShape(format!("empty shape {shape}")));
        }
        if data.len() != shape.len() {
            return Err(NfcError::InvalidShape(format!(
                "data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(ImageTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        ImageTensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for h in 0..shape.height {
                for w in 0..shape.width {
                    data.push(f(c, h, w));
                }
            }
        }
        ImageTensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, h, w)]
    }

    pub fn set(&mut self, c: usize, h: usize, w: usize, v: f64) {
        let i = self.index(c, h, w);
        self.data[i] = v;
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.shape.height + h) * self.shape.width + w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(NfcError::shape(expected, self.shape));
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &ImageTensor) -> Result<f64> {
        other.ensure_shape(self.shape)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<ImageTensor> {
        other.ensure_shape(self.shape)?;
        Ok(ImageTensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, a: f64) -> ImageTensor {
        self.map(|v| a * v)
    }

    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_map(other, |a, b| a + b)
    }

    /// In-place `self += a * y`.
    pub fn add_scaled(&mut self, y: &ImageTensor, a: f64) -> Result<()> {
        y.ensure_shape(self.shape)?;
        for (s, v) in self.data.iter_mut().zip(&y.data) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> ImageTensor {
        self.map(|v| v.clamp(lo, hi))
    }
}

/// Complex spectrum grid, same layout as [`ImageTensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    shape: Shape,
    data: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != shape.len() || shape.is_empty() {
            return Err(NfcError::InvalidShape(format!(
                "spectrum data length {} does not match shape {shape}",
                data.len()
            )));
        }
        Ok(ComplexSpectrum { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        ComplexSpectrum {
            shape,
            data: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> Complex64 {
        self.data[(c * self.shape.height + h) * self.shape.width + w]
    }

    /// Sum of squared magnitudes, accumulated as `re² + im²`.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.re * z.re + z.im * z.im).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// ChaCha8 stream with a Box–Muller normal sampler.
///
/// Uniforms take the top 53 bits of each `u64`. Normals are produced in
/// pairs and the sine branch is cached for the next call, so the draw order
/// is part of the reproducibility contract.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Unbiased integer in `0..n` by rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

pub fn gaussian_image(rng: &mut SeededRng, shape: Shape, mean: f64, std: f64) -> Result<ImageTensor> {
    if !mean.is_finite() {
        return Err(NfcError::param("mean", format!("must be finite, got {mean}")));
    }
    if !std.is_finite() || std < 0.0 {
        return Err(NfcError::param("std", format!("must be finite and >= 0, got {std}")));
    }
    if shape.is_empty() {
        return Err(NfcError::InvalidShape(format!("empty shape {shape}")));
    }
    let data = (0..shape.len()).map(|_| mean + std * rng.standard_normal()).collect();
    Ok(ImageTensor { shape, data })
}

pub fn l2_norm(x: &ImageTensor) -> f64 {
    x.norm_sq().sqrt()
}

/// `x + a·y`.
pub fn axpy(x: &ImageTensor, y: &ImageTensor, a: f64) -> Result<ImageTensor> {
    x.zip_map(y, |u, v| u + a * v)
}

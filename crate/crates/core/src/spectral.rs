//! Unitary 2D DFT, centre shifts, radial band masks and the band-limited
//! measurement objectives.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::forward_ops::LinearOperator;
use crate::grid::{ComplexSpectrum, ImageTensor, Shape};

type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    let forward = matches!(dir, FftDirection::Forward);
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, forward))
            .or_insert_with(|| planner.plan_fft(len, dir))
            .clone()
    })
}

/// Unnormalized 2D transform of one `h×w` plane in place.
fn fft_plane(buf: &mut [Complex64], h: usize, w: usize, dir: FftDirection, scratch: &mut Vec<Complex64>) {
    let rows = plan(w, dir);
    rows.process(buf);
    let cols = plan(h, dir);
    scratch.resize(h * w, Complex64::new(0.0, 0.0));
    for r in 0..h {
        for c in 0..w {
            scratch[c * h + r] = buf[r * w + c];
        }
    }
    cols.process(scratch);
    for r in 0..h {
        for c in 0..w {
            buf[r * w + c] = scratch[c * h + r];
        }
    }
}

fn transform(data: &mut [Complex64], shape: Shape, dir: FftDirection) {
    let (h, w) = (shape.height, shape.width);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut scratch = Vec::new();
    for plane in data.chunks_exact_mut(h * w) {
        fft_plane(plane, h, w, dir, &mut scratch);
    }
    for z in data.iter_mut() {
        *z *= norm;
    }
}

/// Unitary forward DFT, `Z(u,v) = (HW)^{-1/2} Σ x(h,w) e^{-2πi(uh/H + vw/W)}`,
/// applied per channel. Zero frequency sits at index `(0, 0)`.
pub fn dft2(x: &ImageTensor) -> ComplexSpectrum {
    let mut data: Vec<Complex64> = x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(&mut data, x.shape(), FftDirection::Forward);
    ComplexSpectrum::new(x.shape(), data).expect("shape preserved")
}

/// Full complex inverse of [`dft2`].
pub fn idft2_complex(z: &ComplexSpectrum) -> ComplexSpectrum {
    let mut data = z.data().to_vec();
    transform(&mut data, z.shape(), FftDirection::Inverse);
    ComplexSpectrum::new(z.shape(), data).expect("shape preserved")
}

/// Inverse unitary DFT, keeping the real part.
pub fn idft2(z: &ComplexSpectrum) -> ImageTensor {
    let full = idft2_complex(z);
    ImageTensor::new(z.shape(), full.data().iter().map(|c| c.re).collect()).expect("shape preserved")
}

/// Direct `O((HW)²)` evaluation of the unitary DFT. Any size; used as an oracle.
pub fn dft2_direct(x: &ImageTensor) -> ComplexSpectrum {
    let s = x.shape();
    let (h, w) = (s.height, s.width);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = ComplexSpectrum::zeros(s);
    let tau = 2.0 * std::f64::consts::PI;
    for c in 0..s.channels {
        let plane = x.channel(c);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for q in 0..w {
                        // reduce the phase index mod N before scaling to keep the angle small
                        let k1 = (u * r) % h;
                        let k2 = (v * q) % w;
                        let ang = -tau * (k1 as f64 / h as f64 + k2 as f64 / w as f64);
                        acc += plane[r * w + q] * Complex64::from_polar(1.0, ang);
                    }
                }
                out.data_mut()[(c * h + u) * w + v] = acc * norm;
            }
        }
    }
    out
}

fn roll(z: &ComplexSpectrum, dh: usize, dw: usize) -> ComplexSpectrum {
    let s = z.shape();
    let (h, w) = (s.height, s.width);
    let mut out = ComplexSpectrum::zeros(s);
    for c in 0..s.channels {
        for r in 0..h {
            for q in 0..w {
                let dst = (c * h + (r + dh) % h) * w + (q + dw) % w;
                out.data_mut()[dst] = z.data()[(c * h + r) * w + q];
            }
        }
    }
    out
}

/// Moves the zero frequency to `(⌊H/2⌋, ⌊W/2⌋)`.
pub fn fftshift(z: &ComplexSpectrum) -> ComplexSpectrum {
    let s = z.shape();
    roll(z, s.height / 2, s.width / 2)
}

/// Inverse of [`fftshift`], also for odd sizes.
pub fn ifftshift(z: &ComplexSpectrum) -> ComplexSpectrum {
    let s = z.shape();
    roll(z, s.height - s.height / 2, s.width - s.width / 2)
}

pub fn max_radius(height: usize, width: usize) -> f64 {
    let (h, w) = (height as f64 / 2.0, width as f64 / 2.0);
    (h * h + w * w).sqrt() + 1.0
}

/// Hard radial indicator `1(√(u²+v²) < ω)` on the shifted grid, with
/// `(u, v) = (row − ⌊H/2⌋, col − ⌊W/2⌋)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialMask {
    height: usize,
    width: usize,
    cutoff: f64,
    shifted: Vec<bool>,
    // same mask laid out for unshifted spectra
    unshifted: Vec<bool>,
}

impl RadialMask {
    pub fn new(height: usize, width: usize, cutoff: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(NfcError::InvalidShape(format!("mask of size {height}×{width}")));
        }
        if !(cutoff >= 0.0) {
            return Err(NfcError::param("cutoff", format!("must be >= 0, got {cutoff}")));
        }
        let (ch, cw) = ((height / 2) as f64, (width / 2) as f64);
        let mut shifted = vec![false; height * width];
        for r in 0..height {
            for q in 0..width {
                let u = r as f64 - ch;
                let v = q as f64 - cw;
                shifted[r * width + q] = (u * u + v * v).sqrt() < cutoff;
            }
        }
        let mut unshifted = vec![false; height * width];
        for r in 0..height {
            for q in 0..width {
                let rs = (r + height / 2) % height;
                let qs = (q + width / 2) % width;
                unshifted[r * width + q] = shifted[rs * width + qs];
            }
        }
        Ok(RadialMask {
            height,
            width,
            cutoff,
            shifted,
            unshifted,
        })
    }

    /// Cutoff given as a fraction of [`max_radius`]; `1.0` passes everything.
    pub fn from_fraction(height: usize, width: usize, omega_frac: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega_frac) {
            return Err(NfcError::param(
                "omega_frac",
                format!("must lie in [0, 1], got {omega_frac}"),
            ));
        }
        Self::new(height, width, omega_frac * max_radius(height, width))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Value on the centred grid.
    pub fn at(&self, row: usize, col: usize) -> bool {
        self.shifted[row * self.width + col]
    }

    pub fn values(&self) -> &[bool] {
        &self.shifted
    }

    pub fn passed(&self) -> usize {
        self.shifted.iter().filter(|&&b| b).count()
    }

    pub fn is_all_pass(&self) -> bool {
        self.shifted.iter().all(|&b| b)
    }

    pub fn is_empty(&self) -> bool {
        !self.shifted.iter().any(|&b| b)
    }

    fn check(&self, shape: Shape) -> Result<()> {
        if shape.height != self.height || shape.width != self.width {
            return Err(NfcError::shape(
                Shape::new(shape.channels, self.height, self.width),
                shape,
            ));
        }
        Ok(())
    }

    /// The mask as a `1×H×W` image, centred; handy for debug dumps.
    pub fn to_image(&self) -> ImageTensor {
        ImageTensor::from_fn(Shape::new(1, self.height, self.width), |_, r, c| {
            if self.at(r, c) {
                1.0
            } else {
                0.0
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    pub omega_frac: f64,
    pub lambda: f64,
}

impl GuidanceWeights {
    pub fn new(omega_frac: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega_frac) {
            return Err(NfcError::param(
                "omega_frac",
                format!("must lie in [0, 1], got {omega_frac}"),
            ));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(NfcError::param("lambda", format!("must lie in [0, 1], got {lambda}")));
        }
        Ok(GuidanceWeights { omega_frac, lambda })
    }
}

/// `M_ω ⊙ fftshift(dft2(z))`, mask broadcast across channels.
pub fn band_project(z: &ImageTensor, mask: &RadialMask) -> Result<ComplexSpectrum> {
    mask.check(z.shape())?;
    let mut spec = fftshift(&dft2(z));
    let plane = mask.height * mask.width;
    for (i, v) in spec.data_mut().iter_mut().enumerate() {
        if !mask.shifted[i % plane] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(spec)
}

/// Spatial projector `Re(idft2(ifftshift(band_project(z))))`.
pub fn spatial_band_projector(z: &ImageTensor, mask: &RadialMask) -> Result<ImageTensor> {
    mask.check(z.shape())?;
    if mask.is_all_pass() {
        return Ok(z.clone());
    }
    if mask.is_empty() {
        return Ok(ImageTensor::zeros(z.shape()));
    }
    // masking the unshifted spectrum is the same as shift, mask, unshift
    let mut spec = dft2(z);
    let plane = mask.height * mask.width;
    for (i, v) in spec.data_mut().iter_mut().enumerate() {
        if !mask.unshifted[i % plane] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(idft2(&spec))
}

fn residual(x: &ImageTensor, y: &ImageTensor, op: &LinearOperator) -> Result<ImageTensor> {
    op.apply(x)?.sub(y)
}

/// `‖P_ω(A x − y)‖²`.
pub fn freq_loss(x: &ImageTensor, y: &ImageTensor, op: &LinearOperator, mask: &RadialMask) -> Result<f64> {
    Ok(band_project(&residual(x, y, op)?, mask)?.norm_sq())
}

/// Band-limited guidance with a prebuilt mask on the measurement grid.
#[derive(Clone, Debug)]
pub struct BandGuidance {
    pub lambda: f64,
    pub mask: RadialMask,
}

impl BandGuidance {
    pub fn new(weights: GuidanceWeights, measurement_shape: Shape) -> Result<Self> {
        let w = GuidanceWeights::new(weights.omega_frac, weights.lambda)?;
        Ok(BandGuidance {
            lambda: w.lambda,
            mask: RadialMask::from_fraction(measurement_shape.height, measurement_shape.width, w.omega_frac)?,
        })
    }

    /// `(1−λ)‖r‖² + λ‖P_ω r‖²` for `r = A x − y`.
    pub fn loss(&self, x: &ImageTensor, y: &ImageTensor, op: &LinearOperator) -> Result<f64> {
        let r = residual(x, y, op)?;
        let full = r.norm_sq();
        if self.lambda == 0.0 {
            return Ok(full);
        }
        let band = band_project(&r, &self.mask)?.norm_sq();
        Ok((1.0 - self.lambda) * full + self.lambda * band)
    }

    /// `2(1−λ)Aᵀr + 2λAᵀP_ω r`.
    pub fn grad(&self, x: &ImageTensor, y: &ImageTensor, op: &LinearOperator) -> Result<ImageTensor> {
        let r = residual(x, y, op)?;
        let mixed = if self.lambda == 0.0 {
            r
        } else {
            let pr = spatial_band_projector(&r, &self.mask)?;
            r.zip_map(&pr, |a, b| (1.0 - self.lambda) * a + self.lambda * b)?
        };
        Ok(op.adjoint(&mixed)?.scale(2.0))
    }
}

pub fn guided_loss(x: &ImageTensor, y: &ImageTensor, op: &LinearOperator, weights: GuidanceWeights) -> Result<f64> {
    BandGuidance::new(weights, y.shape())?.loss(x, y, op)
}

pub fn guided_loss_grad(
    x: &ImageTensor,
    y: &ImageTensor,
    op: &LinearOperator,
    weights: GuidanceWeights,
) -> Result<ImageTensor> {
    BandGuidance::new(weights, y.shape())?.grad(x, y, op)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_ops::{LinearOperator, OperatorKind};
    use crate::grid::{gaussian_image, l2_norm, SeededRng};
    use proptest::prelude::*;

    fn rand(seed: u64, s: Shape) -> ImageTensor {
        gaussian_image(&mut SeededRng::new(seed), s, 0.0, 1.0).unwrap()
    }

    fn max_diff(a: &ComplexSpectrum, b: &ComplexSpectrum) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn fast_matches_direct_on_odd_and_even_sizes() {
        for (i, s) in [Shape::new(1, 8, 8), Shape::new(2, 5, 7), Shape::new(1, 6, 3)]
            .into_iter()
            .enumerate()
        {
            let x = rand(i as u64, s);
            assert!(max_diff(&dft2(&x), &dft2_direct(&x)) < 1e-12);
        }
    }

    #[test]
    fn constant_image_is_dc_only() {
        let x = ImageTensor::filled(Shape::new(1, 8, 4), 0.7);
        let z = dft2(&x);
        let dc = z.get(0, 0, 0);
        assert!((dc.re - 0.7 * 32f64.sqrt()).abs() < 1e-12 && dc.im.abs() < 1e-12);
        let rest: f64 = z.data()[1..].iter().map(|c| c.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn dc_spectrum_inverts_to_ones() {
        let s = Shape::new(1, 4, 8);
        let mut z = ComplexSpectrum::zeros(s);
        z.data_mut()[0] = Complex64::new(32f64.sqrt(), 0.0);
        let x = idft2(&z);
        assert!(x.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert_eq!(idft2(&ComplexSpectrum::zeros(s)), ImageTensor::zeros(s));
        assert_eq!(l2_norm(&ImageTensor::zeros(s)), dft2(&ImageTensor::zeros(s)).norm());
    }

    #[test]
    fn round_trip_and_imag_residue() {
        let x = rand(4, Shape::new(3, 16, 16));
        let full = idft2_complex(&dft2(&x));
        assert!(full.max_abs_imag() <= 1e-9);
        let back = idft2(&dft2(&x));
        let err = x.sub(&back).unwrap().data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-9);
    }

    #[test]
    fn parseval_against_direct_oracle() {
        let x = rand(11, Shape::new(1, 32, 32));
        let fast = dft2(&x).norm();
        let direct = dft2_direct(&x).norm();
        assert!((fast - l2_norm(&x)).abs() <= 1e-9 * l2_norm(&x));
        assert!((direct - l2_norm(&x)).abs() <= 1e-9 * l2_norm(&x));
    }

    #[test]
    fn shift_moves_dc_and_inverts() {
        let s = Shape::new(1, 6, 8);
        let mut z = ComplexSpectrum::zeros(s);
        z.data_mut()[0] = Complex64::new(1.0, 0.0);
        let sh = fftshift(&z);
        assert_eq!(sh.get(0, 3, 4), Complex64::new(1.0, 0.0));
        let x = dft2(&rand(3, Shape::new(2, 5, 7)));
        assert_eq!(ifftshift(&fftshift(&x)), x);
        assert!((fftshift(&x).norm_sq() - x.norm_sq()).abs() <= 1e-12 * x.norm_sq());
        let e = dft2(&rand(3, Shape::new(2, 6, 8)));
        assert_eq!(fftshift(&fftshift(&e)), e);
    }

    #[test]
    fn mask_edges() {
        let m = RadialMask::new(8, 8, 0.0).unwrap();
        assert!(m.is_empty());
        let big = RadialMask::new(8, 8, 32f64.sqrt() + 1e-9).unwrap();
        assert!(big.is_all_pass());
        assert!(RadialMask::from_fraction(8, 8, 1.0).unwrap().is_all_pass());
        // strict inequality: radius exactly 1 excluded at cutoff 1
        let one = RadialMask::new(8, 8, 1.0).unwrap();
        assert_eq!(one.passed(), 1);
        assert!(one.at(4, 4));
        assert!(RadialMask::new(8, 8, -1.0).is_err());
        assert!(RadialMask::from_fraction(8, 8, 1.5).is_err());
    }

    #[test]
    fn mask_symmetric_off_nyquist() {
        let (h, w) = (16, 16);
        for cutoff in [0.5, 2.0, 5.3, 8.0, 9.5, 11.4] {
            let m = RadialMask::new(h, w, cutoff).unwrap();
            for r in 1..h {
                for c in 1..w {
                    assert_eq!(m.at(r, c), m.at(h - r, w - c));
                }
            }
        }
    }

    #[test]
    fn band_project_cases() {
        let s = Shape::new(1, 8, 8);
        let z = rand(8, s);
        let all = RadialMask::from_fraction(8, 8, 1.0).unwrap();
        let p = band_project(&z, &all).unwrap();
        assert!(max_diff(&p, &fftshift(&dft2(&z))) == 0.0);
        assert!((p.norm() - l2_norm(&z)).abs() < 1e-9);
        let none = RadialMask::new(8, 8, 0.0).unwrap();
        assert_eq!(band_project(&z, &none).unwrap().norm_sq(), 0.0);
        let c = ImageTensor::filled(Shape::new(1, 4, 4), 2.0);
        let m = RadialMask::new(4, 4, 0.1).unwrap();
        let e = band_project(&c, &m).unwrap().norm_sq();
        assert!((e - dft2_direct(&c).norm_sq()).abs() < 1e-12);
        assert!(band_project(&z, &RadialMask::new(4, 8, 1.0).unwrap()).is_err());
    }

    #[test]
    fn spatial_projector_is_orthogonal_projector() {
        let s = Shape::new(2, 16, 16);
        for (k, frac) in [0.05, 0.2, 0.37, 0.5, 0.8].into_iter().enumerate() {
            let m = RadialMask::from_fraction(16, 16, frac).unwrap();
            let a = rand(10 + k as u64, s);
            let b = rand(20 + k as u64, s);
            let pa = spatial_band_projector(&a, &m).unwrap();
            let pb = spatial_band_projector(&b, &m).unwrap();
            assert!((pa.dot(&b).unwrap() - a.dot(&pb).unwrap()).abs() <= 1e-9);
            let ppa = spatial_band_projector(&pa, &m).unwrap();
            assert!(l2_norm(&ppa.sub(&pa).unwrap()) <= 1e-9);
            let spec = band_project(&a, &m).unwrap().norm_sq();
            assert!((spec - pa.norm_sq()).abs() <= 1e-8 * spec.max(1.0));
        }
        let z = rand(1, s);
        let all = RadialMask::from_fraction(16, 16, 1.0).unwrap();
        assert!(l2_norm(&spatial_band_projector(&z, &all).unwrap().sub(&z).unwrap()) <= 1e-9);
    }

    #[test]
    fn losses_and_gradient_cases() {
        let s = Shape::new(1, 16, 16);
        let id = LinearOperator::identity(s);
        let x = rand(1, s);
        let y = rand(2, s);
        let full = x.sub(&y).unwrap().norm_sq();
        let all = RadialMask::from_fraction(16, 16, 1.0).unwrap();
        assert_eq!(freq_loss(&x, &x, &id, &all).unwrap(), 0.0);
        assert_eq!(
            freq_loss(&x, &y, &id, &RadialMask::new(16, 16, 0.0).unwrap()).unwrap(),
            0.0
        );
        assert!((freq_loss(&x, &y, &id, &all).unwrap() - full).abs() <= 1e-8 * full);
        let w0 = GuidanceWeights::new(0.3, 0.0).unwrap();
        assert_eq!(guided_loss(&x, &y, &id, w0).unwrap(), full);
        assert_eq!(
            guided_loss(&x, &y, &id, GuidanceWeights::new(0.0, 1.0).unwrap()).unwrap(),
            0.0
        );
        let half = guided_loss(&x, &y, &id, GuidanceWeights::new(1.0, 0.5).unwrap()).unwrap();
        assert!((half - full).abs() <= 1e-8 * full);
        let g = guided_loss_grad(&x, &y, &id, w0).unwrap();
        let expect = x.sub(&y).unwrap().scale(2.0);
        assert!(l2_norm(&g.sub(&expect).unwrap()) < 1e-12);
        let g0 = guided_loss_grad(&y, &y, &id, GuidanceWeights::new(0.4, 0.35).unwrap()).unwrap();
        assert_eq!(l2_norm(&g0), 0.0);
        assert!(GuidanceWeights::new(0.5, 1.2).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = Shape::new(1, 16, 16);
        let mut rng = SeededRng::new(77);
        let ops = [
            LinearOperator::identity(s),
            LinearOperator::standard(OperatorKind::GaussianBlur, s, &mut rng).unwrap(),
            LinearOperator::standard(OperatorKind::Downsample, s, &mut rng).unwrap(),
        ];
        for op in &ops {
            let x = gaussian_image(&mut rng, s, 0.0, 1.0).unwrap();
            let y = gaussian_image(&mut rng, op.output_shape(), 0.0, 1.0).unwrap();
            let w = GuidanceWeights::new(0.3, 0.6).unwrap();
            let g = guided_loss_grad(&x, &y, op, w).unwrap();
            let h = 1e-4;
            let mut num = ImageTensor::zeros(s);
            for i in 0..x.len() {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                num.data_mut()[i] =
                    (guided_loss(&p, &y, op, w).unwrap() - guided_loss(&m, &y, op, w).unwrap()) / (2.0 * h);
            }
            let rel = l2_norm(&g.sub(&num).unwrap()) / l2_norm(&num);
            assert!(rel <= 1e-5, "{rel}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn parseval_property(seed in any::<u64>(), c in 1usize..3, h in 2usize..20, w in 2usize..20) {
            let x = rand(seed, Shape::new(c, h, w));
            let n = l2_norm(&x);
            prop_assert!((dft2(&x).norm() - n).abs() <= 1e-9 * n);
        }

        #[test]
        fn masking_is_nonexpansive_and_monotone(seed in any::<u64>()) {
            let r = rand(seed, Shape::new(1, 16, 16));
            let mut prev = 0.0;
            for i in 0..20 {
                let m = RadialMask::from_fraction(16, 16, i as f64 / 19.0).unwrap();
                let e = band_project(&r, &m).unwrap().norm_sq();
                prop_assert!(e.sqrt() <= l2_norm(&r) + 1e-12);
                prop_assert!(e >= prev - 1e-9);
                prev = e;
            }
        }

        #[test]
        fn projections_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, frac in 0.0f64..1.0) {
            let s = Shape::new(1, 8, 8);
            let u = rand(seed, s);
            let v = rand(seed.wrapping_add(1), s);
            let m = RadialMask::from_fraction(8, 8, frac).unwrap();
            let comb = u.zip_map(&v, |p, q| a * p + b * q).unwrap();
            let lhs = spatial_band_projector(&comb, &m).unwrap();
            let rhs = spatial_band_projector(&u, &m).unwrap()
                .zip_map(&spatial_band_projector(&v, &m).unwrap(), |p, q| a * p + b * q).unwrap();
            prop_assert!(l2_norm(&lhs.sub(&rhs).unwrap()) <= 1e-10 * (1.0 + l2_norm(&comb)));
            let bl = band_project(&comb, &m).unwrap();
            let bu = band_project(&u, &m).unwrap();
            let bv = band_project(&v, &m).unwrap();
            let err = bl.data().iter().zip(bu.data().iter().zip(bv.data()))
                .map(|(l, (p, q))| (l - (p * a + q * b)).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-10 * (1.0 + l2_norm(&comb)));
        }
    }
}

//! Orthonormal single-level 2D Haar transform and bandwise fusion.

use crate::error::{NfcError, Result};
use crate::grid::{ImageTensor, Shape};

#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoeffs {
    pub ll: ImageTensor,
    pub lh: ImageTensor,
    pub hl: ImageTensor,
    pub hh: ImageTensor,
}

impl HaarCoeffs {
    pub fn source_shape(&self) -> Shape {
        let s = self.ll.shape();
        Shape::new(s.channels, 2 * s.height, 2 * s.width)
    }

    pub fn details(&self) -> [&ImageTensor; 3] {
        [&self.lh, &self.hl, &self.hh]
    }

    pub fn energy(&self) -> f64 {
        self.ll.norm_sq() + self.lh.norm_sq() + self.hl.norm_sq() + self.hh.norm_sq()
    }

    fn check(&self) -> Result<()> {
        let s = self.ll.shape();
        for b in self.details() {
            b.ensure_shape(s)?;
        }
        Ok(())
    }
}

/// Per 2×2 block `[a b; c d]`: `LL=(a+b+c+d)/2`, `LH=(a−b+c−d)/2`,
/// `HL=(a+b−c−d)/2`, `HH=(a−b−c+d)/2`.
pub fn haar_forward(x: &ImageTensor) -> Result<HaarCoeffs> {
    let s = x.shape();
    if s.height % 2 != 0 || s.width % 2 != 0 {
        return Err(NfcError::InvalidShape(format!(
            "Haar needs even height and width, got {s}"
        )));
    }
    let half = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut out = [(); 4].map(|_| ImageTensor::zeros(half));
    for c in 0..s.channels {
        for r in 0..half.height {
            for q in 0..half.width {
                let a = x.get(c, 2 * r, 2 * q);
                let b = x.get(c, 2 * r, 2 * q + 1);
                let cc = x.get(c, 2 * r + 1, 2 * q);
                let d = x.get(c, 2 * r + 1, 2 * q + 1);
                out[0].set(c, r, q, (a + b + cc + d) / 2.0);
                out[1].set(c, r, q, (a - b + cc - d) / 2.0);
                out[2].set(c, r, q, (a + b - cc - d) / 2.0);
                out[3].set(c, r, q, (a - b - cc + d) / 2.0);
            }
        }
    }
    let [ll, lh, hl, hh] = out;
    Ok(HaarCoeffs { ll, lh, hl, hh })
}

pub fn haar_inverse(z: &HaarCoeffs) -> Result<ImageTensor> {
    z.check()?;
    let half = z.ll.shape();
    let mut x = ImageTensor::zeros(z.source_shape());
    for c in 0..half.channels {
        for r in 0..half.height {
            for q in 0..half.width {
                let (ll, lh, hl, hh) = (
                    z.ll.get(c, r, q),
                    z.lh.get(c, r, q),
                    z.hl.get(c, r, q),
                    z.hh.get(c, r, q),
                );
                x.set(c, 2 * r, 2 * q, (ll + lh + hl + hh) / 2.0);
                x.set(c, 2 * r, 2 * q + 1, (ll - lh + hl - hh) / 2.0);
                x.set(c, 2 * r + 1, 2 * q, (ll + lh - hl - hh) / 2.0);
                x.set(c, 2 * r + 1, 2 * q + 1, (ll - lh - hl + hh) / 2.0);
            }
        }
    }
    Ok(x)
}

fn blend(a: &ImageTensor, b: &ImageTensor, w: f64) -> Result<ImageTensor> {
    if w == 0.0 {
        b.ensure_shape(a.shape())?;
        return Ok(a.clone());
    }
    if w == 1.0 {
        b.ensure_shape(a.shape())?;
        return Ok(b.clone());
    }
    a.zip_map(b, |p, q| (1.0 - w) * p + w * q)
}

/// Convex combination per band: weight `w_coarse` on the refined LL band and
/// `w_detail` on each refined detail band.
pub fn fuse(z_hat: &HaarCoeffs, z_ref: &HaarCoeffs, w_coarse: f64, w_detail: f64) -> Result<HaarCoeffs> {
    for (name, w) in [("w_coarse", w_coarse), ("w_detail", w_detail)] {
        if !(0.0..=1.0).contains(&w) {
            return Err(NfcError::param(name, format!("must lie in [0, 1], got {w}")));
        }
    }
    Ok(HaarCoeffs {
        ll: blend(&z_hat.ll, &z_ref.ll, w_coarse)?,
        lh: blend(&z_hat.lh, &z_ref.lh, w_detail)?,
        hl: blend(&z_hat.hl, &z_ref.hl, w_detail)?,
        hh: blend(&z_hat.hh, &z_ref.hh, w_detail)?,
    })
}

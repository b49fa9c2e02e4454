//! PSNR and SSIM.

use crate::error::{NfcError, Result};
use crate::grid::ImageTensor;

/// Value reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(x: &ImageTensor, reference: &ImageTensor) -> Result<f64> {
    Ok(x.sub(reference)?.norm_sq() / x.len() as f64)
}

/// `10·log₁₀(peak²/MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(x: &ImageTensor, reference: &ImageTensor, peak: f64) -> Result<f64> {
    let m = mse(x, reference)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP))
}

const WIN: usize = 11;
const WIN_SIGMA: f64 = 1.5;

fn window() -> [f64; WIN] {
    let half = (WIN / 2) as f64;
    let mut w = [0.0; WIN];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * WIN_SIGMA * WIN_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.map(|v| v / total)
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; WIN]) -> Vec<f64> {
    let (oh, ow) = (h - WIN + 1, w - WIN + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..WIN).map(|k| g[k] * plane[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WIN).map(|k| g[k] * tmp[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (std 1.5), `C1=(0.01·peak)²`,
/// `C2=(0.03·peak)²`, averaged over valid positions and channels.
pub fn ssim(x: &ImageTensor, reference: &ImageTensor, peak: f64) -> Result<f64> {
    reference.ensure_shape(x.shape())?;
    let (h, w) = (x.height(), x.width());
    if h < WIN || w < WIN {
        return Err(NfcError::param(
            "image",
            format!("SSIM needs at least {WIN}×{WIN}, got {h}×{w}"),
        ));
    }
    let g = window();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    for c in 0..x.channels() {
        let a = x.channel(c);
        let b = reference.channel(c);
        let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect() };
        let mu_a = filter_valid(a, h, w, &g);
        let mu_b = filter_valid(b, h, w, &g);
        let aa = filter_valid(&prod(&|p, _| p * p), h, w, &g);
        let bb = filter_valid(&prod(&|_, q| q * q), h, w, &g);
        let ab = filter_valid(&prod(&|p, q| p * q), h, w, &g);
        let n = mu_a.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / n as f64;
    }
    Ok(total / x.channels() as f64)
}

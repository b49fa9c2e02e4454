//! Linear degradation operators with exact adjoints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::grid::{gaussian_image, ImageTensor, SeededRng, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    GaussianBlur,
    MotionBlur,
    Downsample,
    InpaintMask,
    DenseMatrix,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 6] = [
        OperatorKind::Identity,
        OperatorKind::GaussianBlur,
        OperatorKind::MotionBlur,
        OperatorKind::Downsample,
        OperatorKind::InpaintMask,
        OperatorKind::DenseMatrix,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Identity => "identity",
            OperatorKind::GaussianBlur => "gaussian_blur",
            OperatorKind::MotionBlur => "motion_blur",
            OperatorKind::Downsample => "downsample",
            OperatorKind::InpaintMask => "inpaint_mask",
            OperatorKind::DenseMatrix => "dense_matrix",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OperatorKind {
    type Err = NfcError;

    fn from_str(s: &str) -> Result<Self> {
        OperatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| NfcError::param("kind", format!("unknown operator kind `{s}`")))
    }
}

/// Square convolution kernel with its centre at `(side/2, side/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub side: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn gaussian(std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(NfcError::param("std", format!("must be positive, got {std}")));
        }
        let half = (2.0 * std).ceil() as usize;
        let side = 2 * half + 1;
        let mut weights = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                let (di, dj) = (i as f64 - half as f64, j as f64 - half as f64);
                weights.push((-(di * di + dj * dj) / (2.0 * std * std)).exp());
            }
        }
        Ok(Kernel { side, weights }.normalized())
    }

    /// Line segment of the given length through the centre, splatted
    /// bilinearly from points placed symmetrically about the centre.
    pub fn motion_line(length: f64, angle_deg: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || !angle_deg.is_finite() {
            return Err(NfcError::param("length", format!("need positive length, got {length}")));
        }
        let half = (length / 2.0).ceil() as usize + 1;
        let side = 2 * half + 1;
        let mut weights = vec![0.0; side * side];
        let samples = 8 * side + 1;
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        for s in 0..samples {
            let t = -length / 2.0 + length * s as f64 / (samples - 1) as f64;
            let col = half as f64 + t * cos;
            let row = half as f64 - t * sin;
            let (r0, c0) = (row.floor(), col.floor());
            let (fr, fc) = (row - r0, col - c0);
            for (dr, wr) in [(0usize, 1.0 - fr), (1, fr)] {
                for (dc, wc) in [(0usize, 1.0 - fc), (1, fc)] {
                    let (r, c) = (r0 as usize + dr, c0 as usize + dc);
                    if r < side && c < side {
                        weights[r * side + c] += wr * wc;
                    }
                }
            }
        }
        Ok(Kernel { side, weights }.normalized())
    }

    fn normalized(mut self) -> Self {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        self
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operator {
    Identity,
    GaussianBlur {
        std: f64,
        kernel: Kernel,
    },
    MotionBlur {
        length: f64,
        angle_deg: f64,
        kernel: Kernel,
    },
    Downsample {
        factor: usize,
    },
    InpaintMask {
        keep_fraction: f64,
        mask: Vec<bool>,
    },
    /// Row-major `rows × cols` matrix acting on flattened tensors.
    DenseMatrix {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOperator {
    pub input_shape: Shape,
    pub output_shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub op: Operator,
}

fn periodic_conv(x: &ImageTensor, k: &Kernel, flip: bool) -> ImageTensor {
    let s = x.shape();
    let (h, w) = (s.height as isize, s.width as isize);
    let half = (k.side / 2) as isize;
    let mut out = ImageTensor::zeros(s);
    for c in 0..s.channels {
        let src = x.channel(c);
        let dst = out.channel_mut(c);
        for i in 0..k.side {
            for j in 0..k.side {
                let wgt = k.weights[i * k.side + j];
                if wgt == 0.0 {
                    continue;
                }
                let (di, dj) = (i as isize - half, j as isize - half);
                // convolution reads x[n - m], its adjoint reads x[n + m]
                let (oi, oj) = if flip { (di, dj) } else { (-di, -dj) };
                for r in 0..h {
                    let rr = (r + oi).rem_euclid(h) as usize;
                    let row_src = &src[rr * w as usize..(rr + 1) * w as usize];
                    let row_dst = &mut dst[r as usize * w as usize..(r as usize + 1) * w as usize];
                    for q in 0..w {
                        let qq = (q + oj).rem_euclid(w) as usize;
                        row_dst[q as usize] += wgt * row_src[qq];
                    }
                }
            }
        }
    }
    out
}

impl LinearOperator {
    pub fn identity(shape: Shape) -> Self {
        LinearOperator {
            input_shape: shape,
            output_shape: shape,
            seed: None,
            op: Operator::Identity,
        }
    }

    pub fn gaussian_blur(shape: Shape, std: f64) -> Result<Self> {
        Ok(LinearOperator {
            input_shape: shape,
            output_shape: shape,
            seed: None,
            op: Operator::GaussianBlur {
                std,
                kernel: Kernel::gaussian(std)?,
            },
        })
    }

    pub fn motion_blur(shape: Shape, length: f64, angle_deg: f64) -> Result<Self> {
        Ok(LinearOperator {
            input_shape: shape,
            output_shape: shape,
            seed: None,
            op: Operator::MotionBlur {
                length,
                angle_deg,
                kernel: Kernel::motion_line(length, angle_deg)?,
            },
        })
    }

    pub fn downsample(shape: Shape, factor: usize) -> Result<Self> {
        if factor == 0 || shape.height % factor != 0 || shape.width % factor != 0 {
            return Err(NfcError::param(
                "factor",
                format!("{factor} does not divide {}×{}", shape.height, shape.width),
            ));
        }
        Ok(LinearOperator {
            input_shape: shape,
            output_shape: Shape::new(shape.channels, shape.height / factor, shape.width / factor),
            seed: None,
            op: Operator::Downsample { factor },
        })
    }

    /// Keeps exactly `round(keep_fraction·H·W)` pixel sites, chosen by a
    /// Fisher–Yates shuffle and shared by all channels.
    pub fn inpaint(shape: Shape, keep_fraction: f64, rng: &mut SeededRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep_fraction) {
            return Err(NfcError::param(
                "keep_fraction",
                format!("must lie in [0, 1], got {keep_fraction}"),
            ));
        }
        let n = shape.plane();
        let keep = (keep_fraction * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let mut mask = vec![false; n];
        for &i in &idx[..keep] {
            mask[i] = true;
        }
        Ok(LinearOperator {
            input_shape: shape,
            output_shape: shape,
            seed: Some(rng.seed()),
            op: Operator::InpaintMask { keep_fraction, mask },
        })
    }

    pub fn dense(input_shape: Shape, output_shape: Shape, data: Vec<f64>) -> Result<Self> {
        let (rows, cols) = (output_shape.len(), input_shape.len());
        if data.len() != rows * cols {
            return Err(NfcError::InvalidShape(format!(
                "dense matrix has {} entries, expected {rows}×{cols}",
                data.len()
            )));
        }
        Ok(LinearOperator {
            input_shape,
            output_shape,
            seed: None,
            op: Operator::DenseMatrix { rows, cols, data },
        })
    }

    /// Random dense operator with i.i.d. `N(0, 1/cols)` entries.
    pub fn random_dense(input_shape: Shape, output_shape: Shape, rng: &mut SeededRng) -> Result<Self> {
        let n = output_shape.len() * input_shape.len();
        let std = 1.0 / (input_shape.len() as f64).sqrt();
        let data = (0..n).map(|_| std * rng.standard_normal()).collect();
        let mut op = Self::dense(input_shape, output_shape, data)?;
        op.seed = Some(rng.seed());
        Ok(op)
    }

    /// Desk-scale operator for a task: Gaussian blur with std `H/32`, motion
    /// blur of length `H/8` at 30°, 4× average pooling, or a 30% pixel mask.
    pub fn standard(kind: OperatorKind, shape: Shape, rng: &mut SeededRng) -> Result<Self> {
        let h = shape.height as f64;
        match kind {
            OperatorKind::Identity => Ok(Self::identity(shape)),
            OperatorKind::GaussianBlur => Self::gaussian_blur(shape, h / 32.0),
            OperatorKind::MotionBlur => Self::motion_blur(shape, h / 8.0, 30.0),
            OperatorKind::Downsample => Self::downsample(shape, 4),
            OperatorKind::InpaintMask => Self::inpaint(shape, 0.3, rng),
            OperatorKind::DenseMatrix => {
                if shape.len() > 4096 {
                    return Err(NfcError::param("kind", "dense_matrix is limited to 4096 unknowns"));
                }
                Self::random_dense(shape, shape, rng)
            }
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self.op {
            Operator::Identity => OperatorKind::Identity,
            Operator::GaussianBlur { .. } => OperatorKind::GaussianBlur,
            Operator::MotionBlur { .. } => OperatorKind::MotionBlur,
            Operator::Downsample { .. } => OperatorKind::Downsample,
            Operator::InpaintMask { .. } => OperatorKind::InpaintMask,
            Operator::DenseMatrix { .. } => OperatorKind::DenseMatrix,
        }
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }

    pub fn apply(&self, x: &ImageTensor) -> Result<ImageTensor> {
        x.ensure_shape(self.input_shape)?;
        Ok(match &self.op {
            Operator::Identity => x.clone(),
            Operator::GaussianBlur { kernel, .. } | Operator::MotionBlur { kernel, .. } => {
                periodic_conv(x, kernel, false)
            }
            Operator::Downsample { factor } => {
                let f = *factor;
                let norm = 1.0 / (f * f) as f64;
                let mut out = ImageTensor::zeros(self.output_shape);
                for c in 0..x.channels() {
                    for r in 0..x.height() {
                        for q in 0..x.width() {
                            let i = out.index(c, r / f, q / f);
                            out.data_mut()[i] += norm * x.get(c, r, q);
                        }
                    }
                }
                out
            }
            Operator::InpaintMask { mask, .. } => self.masked(x, mask),
            Operator::DenseMatrix { rows, cols, data } => {
                let v = x.data();
                let out = (0..*rows)
                    .map(|r| data[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect();
                ImageTensor::new(self.output_shape, out)?
            }
        })
    }

    pub fn adjoint(&self, r: &ImageTensor) -> Result<ImageTensor> {
        r.ensure_shape(self.output_shape)?;
        Ok(match &self.op {
            Operator::Identity => r.clone(),
            Operator::GaussianBlur { kernel, .. } | Operator::MotionBlur { kernel, .. } => {
                periodic_conv(r, kernel, true)
            }
            Operator::Downsample { factor } => {
                let f = *factor;
                let norm = 1.0 / (f * f) as f64;
                ImageTensor::from_fn(self.input_shape, |c, h, w| norm * r.get(c, h / f, w / f))
            }
            Operator::InpaintMask { mask, .. } => self.masked(r, mask),
            Operator::DenseMatrix { rows, cols, data } => {
                let mut out = vec![0.0; *cols];
                for (row, &rv) in r.data().iter().enumerate().take(*rows) {
                    for (o, a) in out.iter_mut().zip(&data[row * cols..(row + 1) * cols]) {
                        *o += a * rv;
                    }
                }
                ImageTensor::new(self.input_shape, out)?
            }
        })
    }

    fn masked(&self, x: &ImageTensor, mask: &[bool]) -> ImageTensor {
        let p = self.input_shape.plane();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if !mask[i % p] {
                *v = 0.0;
            }
        }
        out
    }

    /// `AᵀA`.
    pub fn normal(&self, x: &ImageTensor) -> Result<ImageTensor> {
        self.adjoint(&self.apply(x)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub y: ImageTensor,
    pub sigma_y: f64,
    pub operator_kind: OperatorKind,
    pub seed: u64,
}

/// `y = A x + σ_y ε`.
pub fn degrade(x: &ImageTensor, op: &LinearOperator, sigma_y: f64, rng: &mut SeededRng) -> Result<Measurement> {
    if !(sigma_y >= 0.0 && sigma_y.is_finite()) {
        return Err(NfcError::param("sigma_y", format!("must be >= 0, got {sigma_y}")));
    }
    let clean = op.apply(x)?;
    let y = if sigma_y == 0.0 {
        clean
    } else {
        let noise = gaussian_image(rng, clean.shape(), 0.0, sigma_y)?;
        clean.add(&noise)?
    };
    Ok(Measurement {
        y,
        sigma_y,
        operator_kind: op.kind(),
        seed: rng.seed(),
    })
}

/// Largest eigenvalue of a symmetric positive semidefinite map by power
/// iteration, with the iterate that attains it. The returned Rayleigh
/// quotient is the running maximum, so it never decreases with more
/// iterations.
pub fn top_eigenpair(
    shape: Shape,
    iters: usize,
    rng: &mut SeededRng,
    mut map: impl FnMut(&ImageTensor) -> Result<ImageTensor>,
) -> Result<(f64, ImageTensor)> {
    if iters == 0 {
        return Err(NfcError::param("iters", "must be >= 1"));
    }
    let mut v = gaussian_image(rng, shape, 0.0, 1.0)?;
    let n = v.norm_sq().sqrt();
    v = v.scale(1.0 / n);
    let mut best = (0.0f64, v.clone());
    for _ in 0..iters {
        let w = map(&v)?;
        let rq = v.dot(&w)?;
        if rq > best.0 {
            best = (rq, v.clone());
        }
        let wn = w.norm_sq().sqrt();
        if wn == 0.0 || !wn.is_finite() {
            break;
        }
        v = w.scale(1.0 / wn);
    }
    Ok(best)
}

pub fn power_iteration(
    shape: Shape,
    iters: usize,
    rng: &mut SeededRng,
    map: impl FnMut(&ImageTensor) -> Result<ImageTensor>,
) -> Result<f64> {
    Ok(top_eigenpair(shape, iters, rng, map)?.0)
}

/// Spectral norm `‖A‖₂` from power iteration on `AᵀA`.
pub fn operator_norm(op: &LinearOperator, iters: usize, rng: &mut SeededRng) -> Result<f64> {
    Ok(power_iteration(op.input_shape, iters, rng, |v| op.normal(v))?.sqrt())
}

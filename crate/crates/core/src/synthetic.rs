//! Procedural test scenes and the blur benchmark built on them.

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::forward_ops::{degrade, LinearOperator, Measurement};
use crate::grid::{gaussian_image, ImageTensor, SeededRng, Shape};
use crate::prior::ScoreModel;

/// Piecewise-constant discs and rectangles over a linear ramp, with one
/// patch of oriented high-frequency texture. Values lie in `[0, 1]`.
pub fn scene(seed: u64, shape: Shape) -> ImageTensor {
    let mut r = SeededRng::new(seed);
    let (h, w) = (shape.height, shape.width);
    let scale = h as f64;
    let coord = |row: usize, col: usize| (col as f64 / scale, row as f64 / scale);

    let (a, b) = (r.uniform_range(-0.3, 0.3), r.uniform_range(-0.3, 0.3));
    let mut img = vec![0.0; h * w];
    for row in 0..h {
        for col in 0..w {
            let (xx, yy) = coord(row, col);
            img[row * w + col] = 0.45 + a * (xx - 0.5) + b * (yy - 0.5);
        }
    }
    let n_shapes = 3 + r.below(3);
    for _ in 0..n_shapes {
        let v = r.uniform_range(0.1, 0.9);
        let inside: Box<dyn Fn(f64, f64) -> bool> = if r.uniform() < 0.5 {
            let (cx, cy) = (r.uniform_range(0.2, 0.8), r.uniform_range(0.2, 0.8));
            let rad = r.uniform_range(0.08, 0.25);
            Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) < rad * rad)
        } else {
            let (x0, y0) = (r.uniform_range(0.0, 0.7), r.uniform_range(0.0, 0.7));
            let (bw, bh) = (r.uniform_range(0.1, 0.4), r.uniform_range(0.1, 0.4));
            Box::new(move |x, y| x > x0 && x < x0 + bw && y > y0 && y < y0 + bh)
        };
        for row in 0..h {
            for col in 0..w {
                let (xx, yy) = coord(row, col);
                if inside(xx, yy) {
                    img[row * w + col] = v;
                }
            }
        }
    }

    let f = r.uniform_range(0.18, 0.3) * scale;
    let th = r.uniform_range(0.0, std::f64::consts::PI);
    let (cx, cy) = (r.uniform_range(0.3, 0.7), r.uniform_range(0.3, 0.7));
    for row in 0..h {
        for col in 0..w {
            let (xx, yy) = coord(row, col);
            if (xx - cx).abs() < 0.2 && (yy - cy).abs() < 0.2 {
                let phase = 2.0 * std::f64::consts::PI * f * (th.cos() * xx + th.sin() * yy);
                img[row * w + col] += 0.06 * phase.sin();
            }
        }
    }

    // channels share geometry and differ by a mild gain
    ImageTensor::from_fn(shape, |c, row, col| {
        let gain = 1.0 - 0.1 * c as f64;
        (img[row * w + col] * gain).clamp(0.0, 1.0)
    })
}

/// Sum of `modes` periodic cosines with integer frequencies up to
/// `max_freq`, scaled so the peak magnitude is one.
pub fn smooth_field(rng: &mut SeededRng, shape: Shape, modes: usize, max_freq: u64) -> ImageTensor {
    let span = 2 * max_freq + 1;
    let waves: Vec<(f64, f64, f64)> = (0..modes)
        .map(|_| {
            let kx = rng.below(span) as f64 - max_freq as f64;
            let ky = rng.below(span) as f64 - max_freq as f64;
            (kx, ky, rng.uniform_range(0.0, 2.0 * std::f64::consts::PI))
        })
        .collect();
    let (h, w) = (shape.height as f64, shape.width as f64);
    let field = ImageTensor::from_fn(shape, |_, row, col| {
        waves
            .iter()
            .map(|(kx, ky, ph)| (2.0 * std::f64::consts::PI * (kx * col as f64 / w + ky * row as f64 / h) + ph).cos())
            .sum()
    });
    let peak = field.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        field.scale(1.0 / peak)
    } else {
        field
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub side: usize,
    pub templates: usize,
    pub template_seed: u64,
    pub template_std: f64,
    /// Amplitude of the smooth field that the prior does not model.
    pub field_amplitude: f64,
    pub pixel_noise: f64,
    pub blur_std: f64,
    pub sigma_y: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            side: 64,
            templates: 4,
            template_seed: 100,
            template_std: 0.05,
            field_amplitude: 0.2,
            pixel_noise: 0.01,
            blur_std: 2.0,
            sigma_y: 0.05,
        }
    }
}

/// Gaussian-mixture prior over template scenes with a blur operator.
/// Ground truths are templates plus structure the prior cannot explain.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub prior: ScoreModel,
    pub templates: Vec<ImageTensor>,
    pub operator: LinearOperator,
}

#[derive(Clone, Debug)]
pub struct BenchmarkInstance {
    pub seed: u64,
    pub ground_truth: ImageTensor,
    pub measurement: Measurement,
}

impl Benchmark {
    pub fn new(config: BenchmarkConfig) -> Result<Self> {
        if config.templates == 0 {
            return Err(NfcError::param("templates", "need at least one template"));
        }
        let shape = Shape::new(1, config.side, config.side);
        let templates: Vec<ImageTensor> = (0..config.templates as u64)
            .map(|k| scene(config.template_seed + k, shape))
            .collect();
        let k = config.templates;
        let prior = ScoreModel::gmm(vec![1.0 / k as f64; k], templates.clone(), vec![config.template_std; k])?;
        let operator = LinearOperator::gaussian_blur(shape, config.blur_std)?;
        Ok(Benchmark {
            config,
            prior,
            templates,
            operator,
        })
    }

    pub fn shape(&self) -> Shape {
        self.operator.input_shape()
    }

    /// Template `seed mod K` plus a smooth field and pixel noise, clipped to
    /// `[0, 1]`. The stream it draws from also feeds the measurement noise in
    /// [`Benchmark::instance`].
    pub fn ground_truth(&self, seed: u64) -> Result<ImageTensor> {
        self.ground_truth_with(seed, &mut SeededRng::new(1000 + seed))
    }

    fn ground_truth_with(&self, seed: u64, r: &mut SeededRng) -> Result<ImageTensor> {
        let cfg = &self.config;
        let template = &self.templates[(seed % cfg.templates as u64) as usize];
        let field = smooth_field(r, self.shape(), 4, 2);
        let noise = gaussian_image(r, self.shape(), 0.0, cfg.pixel_noise)?;
        Ok(template
            .zip_map(&field, |t, f| t + cfg.field_amplitude * f)?
            .add(&noise)?
            .clamp(0.0, 1.0))
    }

    pub fn instance(&self, seed: u64) -> Result<BenchmarkInstance> {
        let mut r = SeededRng::new(1000 + seed);
        let gt = self.ground_truth_with(seed, &mut r)?;
        let measurement = degrade(&gt, &self.operator, self.config.sigma_y, &mut r)?;
        Ok(BenchmarkInstance {
            seed,
            ground_truth: gt,
            measurement,
        })
    }
}

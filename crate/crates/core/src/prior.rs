//! Analytic score priors, the Tweedie estimate and a few-step Euler
//! probability-flow solver.

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::grid::{gaussian_image, ImageTensor, SeededRng, Shape};

/// Prior whose noise-smoothed score `∇ log p_σ` is known in closed form.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreModel {
    /// `N(mean, std² I)`.
    Gaussian { mean: ImageTensor, std: f64 },
    /// `Σ_m π_m N(μ_m, s_m² I)`.
    Gmm {
        weights: Vec<f64>,
        means: Vec<ImageTensor>,
        stds: Vec<f64>,
    },
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(NfcError::param(
            "sigma",
            format!("must be positive and finite, got {sigma}"),
        ));
    }
    Ok(())
}

impl ScoreModel {
    pub fn gaussian(mean: ImageTensor, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(NfcError::param("std", format!("must be positive, got {std}")));
        }
        Ok(ScoreModel::Gaussian { mean, std })
    }

    pub fn gmm(weights: Vec<f64>, means: Vec<ImageTensor>, stds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
            return Err(NfcError::param(
                "weights",
                "weights, means and stds must have equal nonzero length",
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(NfcError::param("weights", "all weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(NfcError::param("weights", format!("must sum to 1, got {total}")));
        }
        if stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(NfcError::param("stds", "all component stds must be positive"));
        }
        let shape = means[0].shape();
        for m in &means[1..] {
            m.ensure_shape(shape)?;
        }
        Ok(ScoreModel::Gmm { weights, means, stds })
    }

    pub fn shape(&self) -> Shape {
        match self {
            ScoreModel::Gaussian { mean, .. } => mean.shape(),
            ScoreModel::Gmm { means, .. } => means[0].shape(),
        }
    }

    /// Posterior component probabilities under `p_σ`, via log-sum-exp.
    pub fn responsibilities(&self, x: &ImageTensor, sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        x.ensure_shape(self.shape())?;
        match self {
            ScoreModel::Gaussian { .. } => Ok(vec![1.0]),
            ScoreModel::Gmm { weights, means, stds } => {
                let d = x.len() as f64;
                let logits: Vec<f64> = weights
                    .iter()
                    .zip(means)
                    .zip(stds)
                    .map(|((w, mu), s)| {
                        let v = s * s + sigma * sigma;
                        let sq: f64 = x.data().iter().zip(mu.data()).map(|(a, b)| (a - b) * (a - b)).sum();
                        w.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * v).ln() - sq / (2.0 * v)
                    })
                    .collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let z: f64 = exps.iter().sum();
                Ok(exps.into_iter().map(|e| e / z).collect())
            }
        }
    }

    pub fn score(&self, x: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
        check_sigma(sigma)?;
        x.ensure_shape(self.shape())?;
        match self {
            ScoreModel::Gaussian { mean, std } => {
                let v = std * std + sigma * sigma;
                mean.zip_map(x, |m, xi| (m - xi) / v)
            }
            ScoreModel::Gmm { means, stds, .. } => {
                let r = self.responsibilities(x, sigma)?;
                let mut out = ImageTensor::zeros(x.shape());
                for ((rm, mu), s) in r.iter().zip(means).zip(stds) {
                    if *rm == 0.0 {
                        continue;
                    }
                    let c = rm / (s * s + sigma * sigma);
                    for ((o, m), xi) in out.data_mut().iter_mut().zip(mu.data()).zip(x.data()) {
                        *o += c * (m - xi);
                    }
                }
                Ok(out)
            }
        }
    }
}

/// `x + σ²·score(x, σ)`.
pub fn tweedie_x0(model: &ScoreModel, x: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
    let s = model.score(x, sigma)?;
    crate::grid::axpy(x, &s, sigma * sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_steps: usize,
    pub sigma_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_steps: 5,
            sigma_floor: 1e-3,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(NfcError::param("n_steps", "must be >= 1"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(NfcError::param("sigma_floor", "must be positive"));
        }
        Ok(())
    }
}

/// Euler steps of `dx/dσ = −σ·score(x, σ)` on a geometric grid from
/// `sigma_start` down to `cfg.sigma_floor`.
pub fn pf_ode_denoise(
    model: &ScoreModel,
    x_t: &ImageTensor,
    sigma_start: f64,
    cfg: &SolverConfig,
) -> Result<ImageTensor> {
    cfg.validate()?;
    if !(sigma_start > cfg.sigma_floor) {
        return Err(NfcError::param(
            "sigma_start",
            format!("must exceed the floor {}, got {sigma_start}", cfg.sigma_floor),
        ));
    }
    let n = cfg.n_steps;
    let ratio = cfg.sigma_floor / sigma_start;
    let grid: Vec<f64> = (0..=n)
        .map(|j| {
            if j == n {
                cfg.sigma_floor
            } else {
                sigma_start * ratio.powf(j as f64 / n as f64)
            }
        })
        .collect();
    let mut x = x_t.clone();
    for j in 0..n {
        let (s0, s1) = (grid[j], grid[j + 1]);
        let score = model.score(&x, s0)?;
        x.add_scaled(&score, -(s1 - s0) * s0)?;
    }
    Ok(x)
}

/// `x0 + σ ε`.
pub fn forward_noise(x0: &ImageTensor, sigma: f64, rng: &mut SeededRng) -> Result<ImageTensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(NfcError::param("sigma", format!("must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x0.clone());
    }
    x0.add(&gaussian_image(rng, x0.shape(), 0.0, sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_norm;
    use proptest::prelude::*;

    fn scalar(v: f64) -> ImageTensor {
        ImageTensor::new(Shape::new(1, 1, 1), vec![v]).unwrap()
    }

    /// Closed-form probability flow for `N(μ, s²)`.
    fn exact_flow(mu: &ImageTensor, s: f64, x: &ImageTensor, sa: f64, sb: f64) -> ImageTensor {
        let k = ((s * s + sb * sb) / (s * s + sa * sa)).sqrt();
        mu.zip_map(x, |m, v| m + k * (v - m)).unwrap()
    }

    /// `log Σ π_m N(x; μ_m, (s_m²+σ²)I)` summed term by term.
    fn brute_log_density(w: &[f64], mus: &[ImageTensor], stds: &[f64], x: &ImageTensor, sigma: f64) -> f64 {
        let d = x.len() as f64;
        let mut total = 0.0;
        for ((pi, mu), s) in w.iter().zip(mus).zip(stds) {
            let v = s * s + sigma * sigma;
            let sq = x.sub(mu).unwrap().norm_sq();
            total += pi * (2.0 * std::f64::consts::PI * v).powf(-d / 2.0) * (-sq / (2.0 * v)).exp();
        }
        total.ln()
    }

    #[test]
    fn gaussian_hand_values() {
        let m = ScoreModel::gaussian(scalar(0.0), 1.0).unwrap();
        assert_eq!(m.score(&scalar(2.0), 1.0).unwrap().data(), &[-1.0]);
        assert_eq!(tweedie_x0(&m, &scalar(2.0), 1.0).unwrap().data(), &[1.0]);
        assert_eq!(m.score(&scalar(0.0), 3.0).unwrap().data(), &[0.0]);
        assert!(m.score(&scalar(0.0), 0.0).is_err());
    }

    #[test]
    fn gaussian_tweedie_is_posterior_mean() {
        let s = Shape::new(1, 4, 4);
        let mu = gaussian_image(&mut SeededRng::new(1), s, 0.5, 0.2).unwrap();
        let x = gaussian_image(&mut SeededRng::new(2), s, 0.0, 3.0).unwrap();
        let (sd, sig) = (0.7, 1.3);
        let m = ScoreModel::gaussian(mu.clone(), sd).unwrap();
        let got = tweedie_x0(&m, &x, sig).unwrap();
        let expect = x
            .zip_map(&mu, |a, b| (sd * sd * a + sig * sig * b) / (sd * sd + sig * sig))
            .unwrap();
        assert!(l2_norm(&got.sub(&expect).unwrap()) < 1e-12);
        let tiny = tweedie_x0(&m, &x, 1e-6).unwrap();
        assert!(l2_norm(&tiny.sub(&x).unwrap()) < 1e-9 * (1.0 + l2_norm(&x)));
    }

    #[test]
    fn gmm_score_matches_brute_force_gradient() {
        let s = Shape::new(1, 4, 4);
        let mut rng = SeededRng::new(5);
        let mus: Vec<_> = (0..3).map(|_| gaussian_image(&mut rng, s, 0.0, 0.5).unwrap()).collect();
        let w = vec![0.2, 0.5, 0.3];
        let stds = vec![0.3, 0.5, 0.4];
        let m = ScoreModel::gmm(w.clone(), mus.clone(), stds.clone()).unwrap();
        for sigma in [0.2, 0.6, 1.5] {
            let x = gaussian_image(&mut rng, s, 0.0, 0.6).unwrap();
            let g = m.score(&x, sigma).unwrap();
            let h = 1e-5;
            let mut num = ImageTensor::zeros(s);
            for i in 0..x.len() {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut q = x.clone();
                q.data_mut()[i] -= h;
                num.data_mut()[i] = (brute_log_density(&w, &mus, &stds, &p, sigma)
                    - brute_log_density(&w, &mus, &stds, &q, sigma))
                    / (2.0 * h);
            }
            assert!(l2_norm(&g.sub(&num).unwrap()) <= 1e-5 * l2_norm(&num));
        }
    }

    #[test]
    fn gmm_is_stable_at_large_sigma_and_far_points() {
        let s = Shape::new(1, 64, 64);
        let m = ScoreModel::gmm(
            vec![0.5, 0.5],
            vec![ImageTensor::filled(s, 0.0), ImageTensor::filled(s, 1.0)],
            vec![0.05, 0.05],
        )
        .unwrap();
        for sigma in [1e-3, 1.0, 100.0] {
            let x = ImageTensor::filled(s, 1e3);
            assert!(m.score(&x, sigma).unwrap().is_finite());
        }
    }

    #[test]
    fn euler_converges_to_closed_form() {
        let s = Shape::new(1, 4, 4);
        let mu = gaussian_image(&mut SeededRng::new(1), s, 0.5, 0.2).unwrap();
        let m = ScoreModel::gaussian(mu.clone(), 1.0).unwrap();
        let cfg = SolverConfig {
            n_steps: 4000,
            sigma_floor: 1e-3,
        };
        for s0 in [0.5, 5.0, 50.0] {
            let x = gaussian_image(&mut SeededRng::new(2), s, 0.5, s0).unwrap();
            let got = pf_ode_denoise(&m, &x, s0, &cfg).unwrap();
            let exact = exact_flow(&mu, 1.0, &x, s0, 1e-3);
            let rel = l2_norm(&got.sub(&exact).unwrap()) / l2_norm(&exact.sub(&mu).unwrap());
            assert!(rel <= 1e-3, "s0 {s0}: {rel}");
        }
    }

    #[test]
    fn euler_error_halves_with_double_steps() {
        let s = Shape::new(1, 1, 4);
        let mu = ImageTensor::zeros(s);
        let m = ScoreModel::gaussian(mu.clone(), 1.0).unwrap();
        let x = ImageTensor::filled(s, 5.0);
        let err = |n| {
            let got = pf_ode_denoise(
                &m,
                &x,
                5.0,
                &SolverConfig {
                    n_steps: n,
                    sigma_floor: 1e-3,
                },
            )
            .unwrap();
            l2_norm(&got.sub(&exact_flow(&mu, 1.0, &x, 5.0, 1e-3)).unwrap())
        };
        let (e1, e2) = (err(200), err(400));
        assert!((e1 / e2 - 2.0).abs() < 0.1, "ratio {}", e1 / e2);
    }

    #[test]
    fn fixed_point_and_component_dominance() {
        let s = Shape::new(1, 4, 4);
        let mu = ImageTensor::filled(s, 0.3);
        let m = ScoreModel::gaussian(mu.clone(), 0.5).unwrap();
        let out = pf_ode_denoise(&m, &mu, 5.0, &SolverConfig::default()).unwrap();
        assert!(l2_norm(&out.sub(&mu).unwrap()) < 1e-14);

        let mu1 = ImageTensor::filled(s, 0.0);
        let mu2 = ImageTensor::filled(s, 10.0);
        let g = ScoreModel::gmm(vec![0.5, 0.5], vec![mu1.clone(), mu2], vec![0.2, 0.2]).unwrap();
        let x = gaussian_image(&mut SeededRng::new(3), s, 0.0, 0.1).unwrap();
        let r = g.responsibilities(&x, 0.1).unwrap();
        assert!(r[0] >= 1.0 - 1e-9);
        let out = pf_ode_denoise(&g, &x, 0.1, &SolverConfig::default()).unwrap();
        let single = ScoreModel::gaussian(mu1, 0.2).unwrap();
        let target = pf_ode_denoise(&single, &x, 0.1, &SolverConfig::default()).unwrap();
        assert!(l2_norm(&out.sub(&target).unwrap()) <= 1e-3);
    }

    #[test]
    fn forward_noise_moments() {
        let s = Shape::new(1, 16, 16);
        let x0 = ImageTensor::filled(s, 0.2);
        assert_eq!(forward_noise(&x0, 0.0, &mut SeededRng::new(0)).unwrap(), x0);
        let mut rng = SeededRng::new(4);
        let mut acc = 0.0;
        for _ in 0..50 {
            acc += forward_noise(&x0, 1.0, &mut rng).unwrap().sub(&x0).unwrap().norm_sq() / s.len() as f64;
        }
        assert!((acc / 50.0 - 1.0).abs() <= 0.1);
        let a = forward_noise(&x0, 1.0, &mut SeededRng::new(8)).unwrap();
        let b = forward_noise(&x0, 1.0, &mut SeededRng::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_priors_and_solver_settings() {
        let s = Shape::new(1, 2, 2);
        let z = ImageTensor::zeros(s);
        assert!(ScoreModel::gaussian(z.clone(), 0.0).is_err());
        assert!(ScoreModel::gmm(vec![0.4, 0.4], vec![z.clone(), z.clone()], vec![1.0, 1.0]).is_err());
        assert!(ScoreModel::gmm(vec![1.0], vec![z.clone()], vec![-1.0]).is_err());
        let m = ScoreModel::gaussian(z.clone(), 1.0).unwrap();
        assert!(pf_ode_denoise(&m, &z, 1e-4, &SolverConfig::default()).is_err());
        assert!(pf_ode_denoise(
            &m,
            &z,
            1.0,
            &SolverConfig {
                n_steps: 0,
                sigma_floor: 1e-3
            }
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn tweedie_error_identity(seed in any::<u64>(), sigma in 0.05f64..60.0) {
            let s = Shape::new(1, 4, 4);
            let mut rng = SeededRng::new(seed);
            let mu = gaussian_image(&mut rng, s, 0.5, 0.3).unwrap();
            let m = ScoreModel::gaussian(mu, 0.8).unwrap();
            let x = gaussian_image(&mut rng, s, 0.0, sigma).unwrap();
            let e = gaussian_image(&mut rng, s, 0.0, 0.1).unwrap();
            let clean = tweedie_x0(&m, &x, sigma).unwrap();
            let perturbed = crate::grid::axpy(&x, &m.score(&x, sigma).unwrap().add(&e).unwrap(), sigma * sigma).unwrap();
            let lhs = l2_norm(&perturbed.sub(&clean).unwrap());
            let rhs = sigma * sigma * l2_norm(&e);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0) * (1.0 + l2_norm(&x)));
        }

        #[test]
        fn gaussian_flow_is_nonexpansive(seed in any::<u64>(), s0 in 0.01f64..80.0) {
            let s = Shape::new(1, 4, 4);
            let mut rng = SeededRng::new(seed);
            let m = ScoreModel::gaussian(gaussian_image(&mut rng, s, 0.5, 0.2).unwrap(), 0.6).unwrap();
            let x = gaussian_image(&mut rng, s, 0.0, s0).unwrap();
            let d = gaussian_image(&mut rng, s, 0.0, 1.0).unwrap();
            let cfg = SolverConfig::default();
            let a = pf_ode_denoise(&m, &x, s0, &cfg).unwrap();
            let b = pf_ode_denoise(&m, &x.add(&d).unwrap(), s0, &cfg).unwrap();
            prop_assert!(l2_norm(&b.sub(&a).unwrap()) <= l2_norm(&d) * (1.0 + 1e-9));
        }
    }
}

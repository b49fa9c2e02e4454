//! Intermediate posteriors, Langevin refinement and the outer
//! noise–frequency continuation loop.

use serde::{Deserialize, Serialize};

use crate::analysis::metrics::{psnr, ssim};
use crate::error::{NfcError, Result};
use crate::forward_ops::LinearOperator;
use crate::grid::{l2_norm, ImageTensor, SeededRng};
use crate::haar::{fuse, haar_forward, haar_inverse};
use crate::prior::{forward_noise, pf_ode_denoise, ScoreModel, SolverConfig};
use crate::schedules::{langevin_step_size, ContinuationState, ScheduleConfig};
use crate::spectral::{BandGuidance, GuidanceWeights};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    #[default]
    Nfc,
    /// `λ ≡ 0` and an all-pass mask.
    FullBand,
    /// The refined estimate is used as is, without Haar fusion.
    NoHaarFusion,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::Nfc, AblationMode::FullBand, AblationMode::NoHaarFusion];

    pub fn name(&self) -> &'static str {
        match self {
            AblationMode::Nfc => "nfc",
            AblationMode::FullBand => "full_band",
            AblationMode::NoHaarFusion => "no_haar_fusion",
        }
    }
}

/// What gets re-noised between outer steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenoiseSource {
    /// The fused estimate of the step just finished.
    #[default]
    RunningEstimate,
    /// The measurement back-projection used for initialization.
    Backprojection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub schedule: ScheduleConfig,
    pub solver: SolverConfig,
    pub mode: AblationMode,
    pub renoise: RenoiseSource,
    /// Disables the `√(2η)ε` term; for tests and diagnostics.
    pub langevin_noise: bool,
    pub divergence_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            schedule: ScheduleConfig::default(),
            solver: SolverConfig::default(),
            mode: AblationMode::Nfc,
            renoise: RenoiseSource::RunningEstimate,
            langevin_noise: true,
            divergence_threshold: 1e6,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.solver.validate()?;
        if !(self.solver.sigma_floor < self.schedule.sigma_min) {
            return Err(NfcError::param("sigma_floor", "must lie below sigma_min"));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(NfcError::param("divergence_threshold", "must be positive"));
        }
        Ok(())
    }

    /// Schedule state at sampler index `i`, with the ablation overrides applied.
    pub fn state(&self, i: usize, sigma_y: f64) -> Result<ContinuationState> {
        let mut st = ContinuationState::resolve(&self.schedule, i, sigma_y)?;
        if self.mode == AblationMode::FullBand {
            st.lambda = 0.0;
            st.omega_frac = 1.0;
            st.w_detail = crate::schedules::detail_gate_at(&self.schedule, st.k, self.schedule.n_outer - 1, 0.0)?;
        }
        Ok(st)
    }
}

/// `π_k(x) ∝ exp(−L_k(x)/(2τ_k²)) · N(x; x̂₀, σ_k² I)`.
pub struct IntermediatePosterior<'a> {
    pub y: &'a ImageTensor,
    pub op: &'a LinearOperator,
    pub anchor: &'a ImageTensor,
    pub state: ContinuationState,
    guidance: BandGuidance,
}

impl<'a> IntermediatePosterior<'a> {
    pub fn new(
        y: &'a ImageTensor,
        op: &'a LinearOperator,
        anchor: &'a ImageTensor,
        state: ContinuationState,
    ) -> Result<Self> {
        y.ensure_shape(op.output_shape())?;
        anchor.ensure_shape(op.input_shape())?;
        if !(state.tau > 0.0 && state.sigma > 0.0) {
            return Err(NfcError::param("tau", "temperature and noise level must be positive"));
        }
        let guidance = BandGuidance::new(GuidanceWeights::new(state.omega_frac, state.lambda)?, y.shape())?;
        Ok(IntermediatePosterior {
            y,
            op,
            anchor,
            state,
            guidance,
        })
    }

    pub fn guidance(&self) -> &BandGuidance {
        &self.guidance
    }

    pub fn guided_loss(&self, x: &ImageTensor) -> Result<f64> {
        self.guidance.loss(x, self.y, self.op)
    }

    /// `log π_k` up to its normalizing constant.
    pub fn log_density(&self, x: &ImageTensor) -> Result<f64> {
        let (tau, sigma) = (self.state.tau, self.state.sigma);
        let anchor = x.sub(self.anchor)?.norm_sq();
        Ok(-self.guided_loss(x)? / (2.0 * tau * tau) - anchor / (2.0 * sigma * sigma))
    }

    pub fn grad_log_pi(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let (tau, sigma) = (self.state.tau, self.state.sigma);
        let data = self.guidance.grad(x, self.y, self.op)?;
        let (a, b) = (-1.0 / (2.0 * tau * tau), 1.0 / (sigma * sigma));
        let mut g = data.scale(a);
        for ((gi, xi), mi) in g.data_mut().iter_mut().zip(x.data()).zip(self.anchor.data()) {
            *gi -= b * (xi - mi);
        }
        Ok(g)
    }
}

/// `T` unadjusted Langevin steps `x ← x + η∇log π + √(2η)ε`.
pub fn langevin_refine(
    p: &IntermediatePosterior<'_>,
    x_init: &ImageTensor,
    cfg: &SamplerConfig,
    rng: &mut SeededRng,
) -> Result<ImageTensor> {
    let mut x = x_init.clone();
    for ell in 0..cfg.schedule.langevin_steps {
        let eta = langevin_step_size(&cfg.schedule, p.state.tau, ell);
        let g = p.grad_log_pi(&x)?;
        x.add_scaled(&g, eta)?;
        if cfg.langevin_noise {
            let amp = (2.0 * eta).sqrt();
            for v in x.data_mut() {
                *v += amp * rng.standard_normal();
            }
        }
        let norm = l2_norm(&x);
        if !(norm <= cfg.divergence_threshold) {
            return Err(NfcError::Divergence {
                outer_step: p.state.k,
                inner_step: ell,
                eta,
                norm,
            });
        }
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub i: usize,
    pub sigma: f64,
    pub omega_frac: f64,
    pub lambda: f64,
    pub tau: f64,
    pub w_coarse: f64,
    pub w_detail: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_anchor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_refined: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub psnr_fused: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ssim_fused: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
}

impl RunRecord {
    pub fn first(&self) -> Option<&StepRecord> {
        self.steps.first()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.steps.last()
    }

    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Estimates produced inside one outer step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub anchor: ImageTensor,
    pub refined: ImageTensor,
    pub fused: ImageTensor,
    pub record: StepRecord,
    /// Noisy state for index `i − 1`; `None` after the last step.
    pub next: Option<ImageTensor>,
}

/// A configured sampler for one measurement.
pub struct Sampler<'a> {
    pub cfg: SamplerConfig,
    pub prior: &'a ScoreModel,
    pub op: &'a LinearOperator,
    pub y: &'a ImageTensor,
    pub sigma_y: f64,
    pub ground_truth: Option<&'a ImageTensor>,
    backprojection: ImageTensor,
}

/// `Aᵀy ⊘ Aᵀ1` where the divisor is nonzero, 0 elsewhere, clamped to `[0, 1]`.
pub fn backprojection(op: &LinearOperator, y: &ImageTensor) -> Result<ImageTensor> {
    let num = op.adjoint(y)?;
    let den = op.adjoint(&ImageTensor::filled(op.output_shape(), 1.0))?;
    num.zip_map(&den, |a, b| if b.abs() > 1e-12 { (a / b).clamp(0.0, 1.0) } else { 0.0 })
}

impl<'a> Sampler<'a> {
    pub fn new(
        cfg: SamplerConfig,
        prior: &'a ScoreModel,
        op: &'a LinearOperator,
        y: &'a ImageTensor,
        sigma_y: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(sigma_y >= 0.0) {
            return Err(NfcError::param("sigma_y", "must be >= 0"));
        }
        y.ensure_shape(op.output_shape())?;
        if prior.shape() != op.input_shape() {
            return Err(NfcError::shape(op.input_shape(), prior.shape()));
        }
        Ok(Sampler {
            cfg,
            prior,
            op,
            y,
            sigma_y,
            ground_truth: None,
            backprojection: backprojection(op, y)?,
        })
    }

    pub fn with_ground_truth(mut self, gt: &'a ImageTensor) -> Result<Self> {
        gt.ensure_shape(self.op.input_shape())?;
        self.ground_truth = Some(gt);
        Ok(self)
    }

    /// Noisy starting state at `sigma_max`.
    pub fn init(&self, rng: &mut SeededRng) -> Result<ImageTensor> {
        forward_noise(&self.backprojection, self.cfg.schedule.sigma_max, rng)
    }

    pub fn outer_step(&self, x_t: &ImageTensor, i: usize, rng: &mut SeededRng) -> Result<StepOutput> {
        let st = self.cfg.state(i, self.sigma_y)?;
        let anchor = pf_ode_denoise(self.prior, x_t, st.sigma, &self.cfg.solver)?;
        let post = IntermediatePosterior::new(self.y, self.op, &anchor, st)?;
        let refined = langevin_refine(&post, &anchor, &self.cfg, rng)?;
        let fused = match self.cfg.mode {
            AblationMode::NoHaarFusion => refined.clone(),
            _ => {
                let z = fuse(
                    &haar_forward(&anchor)?,
                    &haar_forward(&refined)?,
                    st.w_coarse,
                    st.w_detail,
                )?;
                haar_inverse(&z)?
            }
        };
        let mut record = StepRecord {
            k: st.k,
            i,
            sigma: st.sigma,
            omega_frac: st.omega_frac,
            lambda: st.lambda,
            tau: st.tau,
            w_coarse: st.w_coarse,
            w_detail: st.w_detail,
            loss_before: post.guided_loss(&anchor)?,
            loss_after: post.guided_loss(&refined)?,
            psnr_anchor: None,
            psnr_refined: None,
            psnr_fused: None,
            ssim_fused: None,
        };
        if let Some(gt) = self.ground_truth {
            record.psnr_anchor = Some(psnr(&anchor, gt, 1.0)?);
            record.psnr_refined = Some(psnr(&refined, gt, 1.0)?);
            record.psnr_fused = Some(psnr(&fused, gt, 1.0)?);
            if gt.height() >= 11 && gt.width() >= 11 {
                record.ssim_fused = Some(ssim(&fused, gt, 1.0)?);
            }
        }
        let next = if i == 0 {
            None
        } else {
            let sigma_next = crate::schedules::sigma_at(&self.cfg.schedule, i - 1)?;
            let base = match self.cfg.renoise {
                RenoiseSource::RunningEstimate => &fused,
                RenoiseSource::Backprojection => &self.backprojection,
            };
            Some(forward_noise(base, sigma_next, rng)?)
        };
        Ok(StepOutput {
            anchor,
            refined,
            fused,
            record,
            next,
        })
    }

    /// Runs every outer step, calling `observe` after each one.
    pub fn run_with(
        &self,
        rng: &mut SeededRng,
        mut observe: impl FnMut(&StepOutput) -> Result<()>,
    ) -> Result<(ImageTensor, RunRecord)> {
        let mut x = self.init(rng)?;
        let mut record = RunRecord::default();
        for i in (0..self.cfg.schedule.n_outer).rev() {
            let out = self.outer_step(&x, i, rng)?;
            observe(&out)?;
            record.steps.push(out.record);
            match out.next {
                Some(next) => x = next,
                None => return Ok((out.fused, record)),
            }
        }
        unreachable!("the loop always ends at i = 0")
    }

    pub fn run(&self, rng: &mut SeededRng) -> Result<(ImageTensor, RunRecord)> {
        self.run_with(rng, |_| Ok(()))
    }
}

/// Convenience wrapper around [`Sampler`].
pub fn run(
    cfg: &SamplerConfig,
    prior: &ScoreModel,
    op: &LinearOperator,
    y: &ImageTensor,
    sigma_y: f64,
    rng: &mut SeededRng,
) -> Result<(ImageTensor, RunRecord)> {
    Sampler::new(*cfg, prior, op, y, sigma_y)?.run(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::oracle::gaussian_posterior_oracle;
    use crate::forward_ops::{degrade, OperatorKind};
    use crate::grid::{gaussian_image, Shape};
    use crate::schedules::{DetailGate, StepRule};

    fn state(sigma: f64, tau: f64, omega: f64, lambda: f64) -> ContinuationState {
        ContinuationState {
            k: 0,
            i: 0,
            sigma,
            omega_frac: omega,
            lambda,
            tau,
            w_coarse: 1.0,
            w_detail: 0.2,
        }
    }

    #[test]
    fn grad_log_pi_matches_finite_differences() {
        let s = Shape::new(1, 16, 16);
        let mut rng = SeededRng::new(12);
        for kind in OperatorKind::ALL {
            let op = LinearOperator::standard(kind, s, &mut rng).unwrap();
            for _ in 0..3 {
                let y = gaussian_image(&mut rng, op.output_shape(), 0.0, 1.0).unwrap();
                let anchor = gaussian_image(&mut rng, s, 0.0, 1.0).unwrap();
                let x = gaussian_image(&mut rng, s, 0.0, 1.0).unwrap();
                let p = IntermediatePosterior::new(&y, &op, &anchor, state(0.8, 0.6, 0.35, 0.3)).unwrap();
                let g = p.grad_log_pi(&x).unwrap();
                let h = 1e-4;
                let mut num = ImageTensor::zeros(s);
                for i in 0..x.len() {
                    let mut a = x.clone();
                    a.data_mut()[i] += h;
                    let mut b = x.clone();
                    b.data_mut()[i] -= h;
                    num.data_mut()[i] = (p.log_density(&a).unwrap() - p.log_density(&b).unwrap()) / (2.0 * h);
                }
                let rel = l2_norm(&g.sub(&num).unwrap()) / l2_norm(&num);
                assert!(rel <= 1e-5, "{kind}: {rel}");
            }
        }
    }

    #[test]
    fn gradient_edge_cases() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let y = gaussian_image(&mut SeededRng::new(1), s, 0.0, 1.0).unwrap();
        let p = IntermediatePosterior::new(&y, &op, &y, state(1.0, 1.0, 0.5, 0.2)).unwrap();
        assert_eq!(l2_norm(&p.grad_log_pi(&y).unwrap()), 0.0);
        let anchor = ImageTensor::zeros(s);
        let hot = IntermediatePosterior::new(&y, &op, &anchor, state(2.0, 1e12, 0.5, 0.2)).unwrap();
        let x = gaussian_image(&mut SeededRng::new(2), s, 0.0, 1.0).unwrap();
        let expect = x.scale(-1.0 / 4.0);
        assert!(l2_norm(&hot.grad_log_pi(&x).unwrap().sub(&expect).unwrap()) < 1e-12);
    }

    #[test]
    fn zero_step_leaves_input_and_noiseless_converges_to_quadratic_maximizer() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let y = gaussian_image(&mut SeededRng::new(3), s, 0.5, 0.2).unwrap();
        let anchor = gaussian_image(&mut SeededRng::new(4), s, 0.5, 0.2).unwrap();
        let st = state(0.5, 0.3, 1.0, 0.0);
        let p = IntermediatePosterior::new(&y, &op, &anchor, st).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.step_rule = StepRule::Fixed { eta: 0.0 };
        assert_eq!(
            langevin_refine(&p, &anchor, &cfg, &mut SeededRng::new(0)).unwrap(),
            anchor
        );

        // maximizer of −‖x−y‖²/(2τ²) − ‖x−x̂₀‖²/(2σ²)
        let (a, b) = (1.0 / (st.tau * st.tau), 1.0 / (st.sigma * st.sigma));
        let target = y.zip_map(&anchor, |u, v| (a * u + b * v) / (a + b)).unwrap();
        cfg.langevin_noise = false;
        cfg.schedule.step_rule = StepRule::Fixed { eta: 0.5 / (a + b) };
        cfg.schedule.langevin_steps = 200;
        let mut prev = f64::INFINITY;
        let mut x = anchor.clone();
        for _ in 0..10 {
            cfg.schedule.langevin_steps = 20;
            x = langevin_refine(&p, &x, &cfg, &mut SeededRng::new(0)).unwrap();
            let energy = -p.log_density(&x).unwrap();
            assert!(energy <= prev + 1e-12);
            prev = energy;
        }
        assert!(l2_norm(&x.sub(&target).unwrap()) <= 1e-4);
    }

    #[test]
    fn noisy_langevin_matches_target_variance() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let y = ImageTensor::zeros(s);
        let anchor = ImageTensor::zeros(s);
        let st = state(1.0, 1.0, 1.0, 0.0);
        let p = IntermediatePosterior::new(&y, &op, &anchor, st).unwrap();
        // precision 1/τ² + 1/σ² = 2, target variance 0.5
        let mut cfg = SamplerConfig::default();
        cfg.schedule.step_rule = StepRule::Fixed { eta: 0.01 };
        cfg.schedule.langevin_steps = 10;
        let mut rng = SeededRng::new(9);
        let mut x = anchor.clone();
        let (mut sum, mut count) = (0.0, 0usize);
        for it in 0..600 {
            x = langevin_refine(&p, &x, &cfg, &mut rng).unwrap();
            if it >= 100 {
                sum += x.norm_sq();
                count += x.len();
            }
        }
        let var = sum / count as f64;
        assert!((var - 0.5).abs() <= 0.2 * 0.5, "{var}");
    }

    #[test]
    fn divergence_is_reported_with_context() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let y = ImageTensor::filled(s, 1.0);
        let anchor = ImageTensor::zeros(s);
        let p = IntermediatePosterior::new(&y, &op, &anchor, state(1.0, 1.0, 1.0, 0.0)).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.step_rule = StepRule::Fixed { eta: 50.0 };
        cfg.schedule.langevin_steps = 50;
        match langevin_refine(&p, &anchor, &cfg, &mut SeededRng::new(0)) {
            Err(NfcError::Divergence { inner_step, eta, .. }) => {
                assert!(inner_step < 50);
                assert_eq!(eta, 50.0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fusion_endpoint_keeps_anchor_details() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let prior = ScoreModel::gaussian(ImageTensor::filled(s, 0.5), 0.3).unwrap();
        let y = gaussian_image(&mut SeededRng::new(1), s, 0.5, 0.2).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.detail_gate = DetailGate::Constant { value: 0.0 };
        let sampler = Sampler::new(cfg, &prior, &op, &y, 0.05).unwrap();
        let x_t = gaussian_image(&mut SeededRng::new(2), s, 0.5, 1.0).unwrap();
        let out = sampler.outer_step(&x_t, 120, &mut SeededRng::new(3)).unwrap();
        let (za, zf, zr) = (
            haar_forward(&out.anchor).unwrap(),
            haar_forward(&out.fused).unwrap(),
            haar_forward(&out.refined).unwrap(),
        );
        for (a, f) in za.details().into_iter().zip(zf.details()) {
            assert!(l2_norm(&a.sub(f).unwrap()) < 1e-12);
        }
        assert!(l2_norm(&zf.ll.sub(&zr.ll).unwrap()) < 1e-12);
    }

    #[test]
    fn consistency_fixed_point_on_noiseless_identity() {
        let s = Shape::new(1, 8, 8);
        let op = LinearOperator::identity(s);
        let prior = ScoreModel::gaussian(ImageTensor::filled(s, 0.5), 0.3).unwrap();
        let y = gaussian_image(&mut SeededRng::new(5), s, 0.5, 0.2).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.lambda_start = 0.0;
        cfg.schedule.detail_gate = DetailGate::Constant { value: 1.0 };
        cfg.schedule.langevin_steps = 400;
        cfg.schedule.step_rule = StepRule::Fixed { eta: 1e-3 };
        cfg.langevin_noise = false;
        let sampler = Sampler::new(cfg, &prior, &op, &y, 0.0).unwrap();
        let x_t = gaussian_image(&mut SeededRng::new(6), s, 0.5, 0.1).unwrap();
        let out = sampler.outer_step(&x_t, 0, &mut SeededRng::new(0)).unwrap();
        // stationary point of ‖x − y‖²/(2τ²) + ‖x − x̂₀‖²/(2σ²)
        let (t2, s2) = (out.record.tau.powi(2), out.record.sigma.powi(2));
        let expected = y.zip_map(&out.anchor, |yv, a| (yv * s2 + a * t2) / (s2 + t2)).unwrap();
        assert!(l2_norm(&out.refined.sub(&expected).unwrap()) < 1e-9 * l2_norm(&expected));
        assert!(out.record.loss_after < out.record.loss_before);
    }

    #[test]
    fn near_noiseless_identity_run_is_accurate() {
        let s = Shape::new(1, 32, 32);
        let gt = crate::synthetic::scene(7, s);
        let op = LinearOperator::identity(s);
        let prior = ScoreModel::gaussian(ImageTensor::filled(s, 0.5), 1e3).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.n_outer = 2;
        cfg.schedule.c_tau = 1e-3;
        cfg.schedule.eta_base = 0.9;
        cfg.schedule.detail_gate = DetailGate::Constant { value: 1.0 };
        cfg.schedule.langevin_steps = 64;
        let sampler = Sampler::new(cfg, &prior, &op, &gt, 0.0).unwrap();
        let (x, rec) = sampler.run(&mut SeededRng::new(1)).unwrap();
        assert_eq!(rec.steps.len(), 2);
        let p = psnr(&x, &gt, 1.0).unwrap();
        assert!(p >= 40.0, "{p}");
    }

    #[test]
    fn runs_are_bit_identical_and_full_band_is_all_pass() {
        let s = Shape::new(1, 16, 16);
        let gt = crate::synthetic::scene(1, s);
        let mut rng = SeededRng::new(2);
        let op = LinearOperator::standard(OperatorKind::GaussianBlur, s, &mut rng).unwrap();
        let m = degrade(&gt, &op, 0.05, &mut rng).unwrap();
        let prior = ScoreModel::gaussian(ImageTensor::filled(s, 0.5), 0.3).unwrap();
        let mut cfg = SamplerConfig::default();
        cfg.schedule.n_outer = 20;
        let a = run(&cfg, &prior, &op, &m.y, 0.05, &mut SeededRng::new(4)).unwrap();
        let b = run(&cfg, &prior, &op, &m.y, 0.05, &mut SeededRng::new(4)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_json_lines(), b.1.to_json_lines());
        cfg.mode = AblationMode::FullBand;
        let (_, rec) = run(&cfg, &prior, &op, &m.y, 0.05, &mut SeededRng::new(4)).unwrap();
        assert!(rec.steps.iter().all(|r| r.omega_frac == 1.0 && r.lambda == 0.0));
        let sigmas: Vec<f64> = rec.steps.iter().map(|r| r.sigma).collect();
        assert!(sigmas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn refinement_moves_coarse_band_toward_posterior_mean() {
        let s = Shape::new(1, 16, 16);
        let op = LinearOperator::identity(s);
        let mu = ImageTensor::filled(s, 0.5);
        let prior_std = 0.3;
        let prior = ScoreModel::gaussian(mu.clone(), prior_std).unwrap();
        let cfg = SamplerConfig::default();
        let i = 60;
        let mut closer = 0;
        for seed in 0..20u64 {
            let mut rng = SeededRng::new(100 + seed);
            let gt = gaussian_image(&mut rng, s, 0.5, prior_std).unwrap();
            let m = degrade(&gt, &op, 0.05, &mut rng).unwrap();
            let oracle = gaussian_posterior_oracle(&mu, prior_std, &op, &m.y, 0.05).unwrap();
            let sampler = Sampler::new(cfg, &prior, &op, &m.y, 0.05).unwrap();
            let sigma = crate::schedules::sigma_at(&cfg.schedule, i).unwrap();
            let x_t = forward_noise(&gt, sigma, &mut rng).unwrap();
            let out = sampler.outer_step(&x_t, i, &mut rng).unwrap();
            let target = haar_forward(&oracle).unwrap().ll;
            let d_anchor = l2_norm(&haar_forward(&out.anchor).unwrap().ll.sub(&target).unwrap());
            let d_refined = l2_norm(&haar_forward(&out.refined).unwrap().ll.sub(&target).unwrap());
            if d_refined < d_anchor {
                closer += 1;
            }
        }
        assert!(closer > 10, "{closer}/20");
    }
}

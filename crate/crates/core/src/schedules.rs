//! Noise, cutoff, mixing, temperature, step-size and detail-gate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};

/// How the Haar detail weight is chosen at each outer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DetailGate {
    /// `(d_s + (d_e − d_s)(k/T)^γ)(1 − λ_k)`.
    Gated,
    /// The same weight at every step.
    Constant { value: f64 },
}

/// Inner Langevin step-size rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    /// `eta_base·τ_k²/(1+ℓ)`.
    TauScaled,
    /// A raw step size, identical for every inner step.
    Fixed { eta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub n_outer: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub omega_start: f64,
    pub omega_end: f64,
    pub lambda_start: f64,
    pub detail_start: f64,
    pub detail_end: f64,
    pub detail_gamma: f64,
    pub detail_gate: DetailGate,
    pub eta_base: f64,
    pub step_rule: StepRule,
    pub c_tau: f64,
    pub langevin_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            n_outer: 200,
            sigma_max: 100.0,
            sigma_min: 0.1,
            omega_start: 0.4,
            omega_end: 1.0,
            lambda_start: 0.35,
            detail_start: 0.0,
            detail_end: 0.2,
            detail_gamma: 1.0,
            detail_gate: DetailGate::Gated,
            eta_base: 0.2,
            step_rule: StepRule::TauScaled,
            c_tau: 0.3,
            langevin_steps: 8,
        }
    }
}

fn unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(NfcError::param(name, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_outer < 2 {
            return Err(NfcError::param(
                "n_outer",
                format!("must be >= 2, got {}", self.n_outer),
            ));
        }
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(NfcError::param(
                "sigma_max",
                format!(
                    "need sigma_max > sigma_min > 0, got {} and {}",
                    self.sigma_max, self.sigma_min
                ),
            ));
        }
        unit("omega_start", self.omega_start)?;
        unit("omega_end", self.omega_end)?;
        unit("lambda_start", self.lambda_start)?;
        unit("detail_start", self.detail_start)?;
        unit("detail_end", self.detail_end)?;
        if self.detail_start > self.detail_end {
            return Err(NfcError::param("detail_start", "need detail_start <= detail_end"));
        }
        if !(self.detail_gamma > 0.0) {
            return Err(NfcError::param(
                "detail_gamma",
                format!("must be positive, got {}", self.detail_gamma),
            ));
        }
        if let DetailGate::Constant { value } = self.detail_gate {
            unit("detail_gate.value", value)?;
        }
        match self.step_rule {
            StepRule::TauScaled if !(self.eta_base >= 0.0 && self.eta_base.is_finite()) => {
                return Err(NfcError::param(
                    "eta_base",
                    format!("must be >= 0, got {}", self.eta_base),
                ))
            }
            StepRule::Fixed { eta } if !(eta >= 0.0 && eta.is_finite()) => {
                return Err(NfcError::param("step_rule.eta", format!("must be >= 0, got {eta}")))
            }
            _ => {}
        }
        if !(self.c_tau >= 0.0 && self.c_tau.is_finite()) {
            return Err(NfcError::param("c_tau", format!("must be >= 0, got {}", self.c_tau)));
        }
        Ok(())
    }
}

/// Geometric noise level for sampler index `i` (`N−1` is the first step).
pub fn sigma_at(cfg: &ScheduleConfig, i: usize) -> Result<f64> {
    let n = cfg.n_outer;
    if i >= n {
        return Err(NfcError::param("i", format!("index {i} outside 0..{n}")));
    }
    if i == n - 1 {
        return Ok(cfg.sigma_max);
    }
    if i == 0 {
        return Ok(cfg.sigma_min);
    }
    let e = (n - 1 - i) as f64 / (n - 1) as f64;
    Ok(cfg.sigma_max * (cfg.sigma_min / cfg.sigma_max).powf(e))
}

/// Log-σ progress: 0 at `sigma_max`, 1 at `sigma_min`, clipped.
pub fn progress(cfg: &ScheduleConfig, sigma: f64) -> f64 {
    if sigma >= cfg.sigma_max {
        return 0.0;
    }
    if sigma <= cfg.sigma_min {
        return 1.0;
    }
    let p = (cfg.sigma_max.ln() - sigma.ln()) / (cfg.sigma_max.ln() - cfg.sigma_min.ln());
    p.clamp(0.0, 1.0)
}

pub fn omega_at(cfg: &ScheduleConfig, sigma: f64) -> f64 {
    let p = progress(cfg, sigma);
    if p == 0.0 {
        return cfg.omega_start;
    }
    if p == 1.0 {
        return cfg.omega_end;
    }
    cfg.omega_start + (cfg.omega_end - cfg.omega_start) * p
}

pub fn lambda_at(cfg: &ScheduleConfig, p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    if p == 0.0 {
        return cfg.lambda_start;
    }
    if p == 1.0 {
        return 0.0;
    }
    cfg.lambda_start * (1.0 + (std::f64::consts::PI * p).cos()) / 2.0
}

/// Progress-driven unlock scaled by `1 − λ_k`; `k` counts completed outer
/// steps out of `t_outer`.
pub fn detail_gate_at(cfg: &ScheduleConfig, k: usize, t_outer: usize, lambda_k: f64) -> Result<f64> {
    if !(cfg.detail_gamma > 0.0) {
        return Err(NfcError::param(
            "detail_gamma",
            format!("must be positive, got {}", cfg.detail_gamma),
        ));
    }
    if t_outer == 0 || k > t_outer {
        return Err(NfcError::param(
            "k",
            format!("need 0 <= k <= t_outer, got {k} of {t_outer}"),
        ));
    }
    if let DetailGate::Constant { value } = cfg.detail_gate {
        return Ok(value);
    }
    let frac = k as f64 / t_outer as f64;
    let unlock = cfg.detail_start + (cfg.detail_end - cfg.detail_start) * frac.powf(cfg.detail_gamma);
    Ok((unlock * (1.0 - lambda_k)).clamp(0.0, 1.0))
}

pub fn langevin_step_size(cfg: &ScheduleConfig, tau_k: f64, ell: usize) -> f64 {
    match cfg.step_rule {
        StepRule::TauScaled => cfg.eta_base * tau_k * tau_k / (1.0 + ell as f64),
        StepRule::Fixed { eta } => eta,
    }
}

pub fn tau_at(cfg: &ScheduleConfig, sigma_k: f64, sigma_y: f64) -> f64 {
    sigma_y.max(cfg.c_tau * sigma_k)
}

/// Everything the sampler needs at one outer step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationState {
    /// Completed outer steps, 0 at `sigma_max`.
    pub k: usize,
    /// Sampler index, `N−1` at `sigma_max`.
    pub i: usize,
    pub sigma: f64,
    pub omega_frac: f64,
    pub lambda: f64,
    pub tau: f64,
    pub w_coarse: f64,
    pub w_detail: f64,
}

impl ContinuationState {
    pub fn resolve(cfg: &ScheduleConfig, i: usize, sigma_y: f64) -> Result<Self> {
        let sigma = sigma_at(cfg, i)?;
        let p = progress(cfg, sigma);
        let lambda = lambda_at(cfg, p);
        let k = cfg.n_outer - 1 - i;
        Ok(ContinuationState {
            k,
            i,
            sigma,
            omega_frac: omega_at(cfg, sigma),
            lambda,
            tau: tau_at(cfg, sigma, sigma_y),
            w_coarse: 1.0,
            w_detail: detail_gate_at(cfg, k, cfg.n_outer - 1, lambda)?,
        })
    }
}

/// The full per-step table in sampling order.
pub fn resolve_all(cfg: &ScheduleConfig, sigma_y: f64) -> Result<Vec<ContinuationState>> {
    cfg.validate()?;
    (0..cfg.n_outer)
        .rev()
        .map(|i| ContinuationState::resolve(cfg, i, sigma_y))
        .collect()
}

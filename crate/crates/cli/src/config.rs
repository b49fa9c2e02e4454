//! Run configuration, its validation and the objects it resolves to.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nfc_core::analysis::theorems::VerifyConfig;
use nfc_core::io::read_png;
use nfc_core::synthetic::{scene, Benchmark, BenchmarkConfig};
use nfc_core::{ImageTensor, LinearOperator, OperatorKind, SamplerConfig, ScoreModel, SeededRng, Shape};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Sr4,
    GaussianDeblur,
    MotionDeblur,
    InpaintRandom,
    Identity,
}

impl Task {
    pub fn operator_kind(self) -> OperatorKind {
        match self {
            Task::Sr4 => OperatorKind::Downsample,
            Task::GaussianDeblur => OperatorKind::GaussianBlur,
            Task::MotionDeblur => OperatorKind::MotionBlur,
            Task::InpaintRandom => OperatorKind::InpaintMask,
            Task::Identity => OperatorKind::Identity,
        }
    }
}

/// Where ground-truth images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SceneSpec {
    /// One procedural scene shared by every seed.
    Synthetic { id: u64 },
    /// A PNG whose size must match `shape`.
    Image { path: PathBuf },
    /// The blur benchmark: a different template-plus-field image per seed.
    Benchmark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanSpec {
    Constant(f64),
    Synthetic(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        mean: MeanSpec,
        std: f64,
    },
    /// Equal-weight mixture over procedural scenes.
    Gmm {
        template_seeds: Vec<u64>,
        std: f64,
    },
    /// The mixture defined by the `benchmark` section.
    Benchmark,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub scene: SceneSpec,
    pub shape: Shape,
    pub sigma_y: f64,
    /// Seeds the random parts of the operator (inpainting mask).
    pub operator_seed: u64,
    pub prior: PriorSpec,
    pub benchmark: BenchmarkConfig,
    pub sampler: SamplerConfig,
    pub seeds: Vec<u64>,
    /// Write the fused estimate every this many outer steps; 0 disables.
    pub dump_stride: usize,
    /// Where outputs go. Not written back out, so that output trees do not
    /// depend on their own location.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::GaussianDeblur,
            scene: SceneSpec::Benchmark,
            shape: Shape::new(1, 64, 64),
            sigma_y: 0.05,
            operator_seed: 0,
            prior: PriorSpec::Benchmark,
            benchmark: BenchmarkConfig::default(),
            sampler: SamplerConfig::default(),
            seeds: vec![0],
            dump_stride: 0,
            out: PathBuf::from("nfc-out"),
            verify: VerifyConfig::default(),
        }
    }
}

/// Parses `"0,3,5"`, `"0..10"` (exclusive) or a mix such as `"0..4,9"`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| CliError::config(format!("bad seed list entry `{part}` in `{s}`"));
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if b <= a {
                    return Err(bad(part));
                }
                seeds.extend(a..b);
            }
            None => seeds.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    Ok(seeds)
}

impl RunConfig {
    /// Reads a config file, or the `config` section of a manifest written by
    /// `degrade`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(CliError::json(path))?;
        if value.get("manifest_version").is_some() {
            value = value["config"].take();
        }
        serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::config(m));
        if self.seeds.is_empty() {
            return fail("seed list is empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return fail(format!("seed list has duplicates: {:?}", self.seeds));
        }
        if !(self.sigma_y >= 0.0 && self.sigma_y.is_finite()) {
            return fail(format!("sigma_y must be finite and >= 0, got {}", self.sigma_y));
        }
        let s = self.shape;
        if s.height % 2 != 0 || s.width % 2 != 0 || s.height == 0 || s.width == 0 {
            return fail(format!("image shape {s} must have nonzero even height and width"));
        }
        if self.task == Task::Sr4 && (s.height % 4 != 0 || s.width % 4 != 0) {
            return fail(format!("sr4 needs height and width divisible by 4, got {s}"));
        }
        if !matches!(s.channels, 1 | 3) {
            return fail(format!("images must have 1 or 3 channels, got {}", s.channels));
        }
        let uses_bench = matches!(self.scene, SceneSpec::Benchmark) || matches!(self.prior, PriorSpec::Benchmark);
        if uses_bench {
            let b = Shape::new(1, self.benchmark.side, self.benchmark.side);
            if b != self.shape {
                return fail(format!(
                    "benchmark side {} implies shape {b}, but shape is {}",
                    self.benchmark.side, self.shape
                ));
            }
        }
        if let SceneSpec::Image { path } = &self.scene {
            if !path.is_file() {
                return fail(format!("scene image {} does not exist", path.display()));
            }
        }
        match &self.prior {
            PriorSpec::Gaussian { std, .. } | PriorSpec::Gmm { std, .. } if !(*std > 0.0 && std.is_finite()) => {
                return fail(format!("prior std must be positive, got {std}"));
            }
            PriorSpec::Gmm { template_seeds, .. } if template_seeds.is_empty() => {
                return fail("gmm prior needs at least one template seed".into());
            }
            _ => {}
        }
        self.sampler.validate()?;
        if !(self.verify.grid >= 4 && self.verify.grid % 2 == 0) {
            return fail(format!("verify.grid must be even and >= 4, got {}", self.verify.grid));
        }
        Ok(())
    }

    pub fn benchmark(&self) -> Result<Benchmark> {
        Ok(Benchmark::new(self.benchmark.clone())?)
    }

    pub fn operator(&self) -> Result<LinearOperator> {
        let mut rng = SeededRng::new(self.operator_seed);
        Ok(LinearOperator::standard(
            self.task.operator_kind(),
            self.shape,
            &mut rng,
        )?)
    }

    pub fn ground_truth(&self, seed: u64) -> Result<ImageTensor> {
        match &self.scene {
            SceneSpec::Synthetic { id } => Ok(scene(*id, self.shape)),
            SceneSpec::Benchmark => Ok(self.benchmark()?.ground_truth(seed)?),
            SceneSpec::Image { path } => {
                let img = read_png(path)?;
                if img.shape() != self.shape {
                    return Err(CliError::config(format!(
                        "{} has shape {}, config expects {}",
                        path.display(),
                        img.shape(),
                        self.shape
                    )));
                }
                Ok(img)
            }
        }
    }

    pub fn prior_model(&self) -> Result<ScoreModel> {
        let s = self.shape;
        Ok(match &self.prior {
            PriorSpec::Gaussian { mean, std } => {
                let mean = match mean {
                    MeanSpec::Constant(v) => ImageTensor::filled(s, *v),
                    MeanSpec::Synthetic(id) => scene(*id, s),
                };
                ScoreModel::gaussian(mean, *std)?
            }
            PriorSpec::Gmm { template_seeds, std } => {
                let k = template_seeds.len();
                let means = template_seeds.iter().map(|&t| scene(t, s)).collect();
                ScoreModel::gmm(vec![1.0 / k as f64; k], means, vec![*std; k])?
            }
            PriorSpec::Benchmark => self.benchmark()?.prior,
        })
    }
}

/// Independent random stream per seed and purpose.
pub fn stream(seed: u64, purpose: u64) -> SeededRng {
    SeededRng::new(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose)
}

pub const DEGRADE_STREAM: u64 = 0xD3;
pub const SAMPLE_STREAM: u64 = 0x5A;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("0,3, 5").unwrap(), vec![0, 3, 5]);
        assert_eq!(parse_seed_list("2..5,9").unwrap(), vec![2, 3, 4, 9]);
        assert!(parse_seed_list("5..5").is_err());
        assert!(parse_seed_list("a").is_err());
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sigmay": 0.1}"#).is_err());
        let cfg = RunConfig {
            seeds: vec![1, 1],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            shape: Shape::new(1, 32, 32),
            ..Default::default()
        };
        assert!(cfg.validate().is_err(), "benchmark side mismatch must be reported");
        let cfg = RunConfig {
            task: Task::Sr4,
            scene: SceneSpec::Synthetic { id: 0 },
            prior: PriorSpec::Gaussian {
                mean: MeanSpec::Constant(0.5),
                std: 0.3,
            },
            shape: Shape::new(1, 18, 18),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"task": "sr4", "scene": {"kind": "synthetic", "id": 4},
                "prior": {"kind": "gaussian", "mean": {"constant": 0.5}, "std": 0.3},
                "sampler": {"schedule": {"n_outer": 20}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.sampler.schedule.n_outer, 20);
        assert_eq!(cfg.sampler.schedule.sigma_max, 100.0);
        cfg.validate().unwrap();
        assert_eq!(cfg.operator().unwrap().output_shape(), Shape::new(1, 16, 16));
    }
}

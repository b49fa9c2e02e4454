//! `degrade`, `restore` and `ablate`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nfc_core::analysis::metrics::{psnr, ssim};
use nfc_core::io::{read_raw, write_png, write_raw};
use nfc_core::schedules::ContinuationState;
use nfc_core::{AblationMode, ImageTensor, LinearOperator, OperatorKind, Sampler, ScoreModel, Shape};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{stream, RunConfig, Task, DEGRADE_STREAM, SAMPLE_STREAM};
use crate::error::{CliError, Result};
use crate::output::{create_dir, fmt_opt, mean, median, read_json, table, write_json, write_text};

pub const MANIFEST_VERSION: u32 = 1;

pub fn seed_dir(seed: u64) -> String {
    format!("seed_{seed:04}")
}

/// Everything needed to regenerate a degraded measurement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub seed: u64,
    pub sigma_y: f64,
    pub task: Task,
    pub operator_kind: OperatorKind,
    pub input_shape: Shape,
    pub measurement_shape: Shape,
    /// Role to file name, relative to the manifest.
    pub files: BTreeMap<String, String>,
    pub config: RunConfig,
}

fn with_seed<T>(seed: u64, r: nfc_core::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Seed { seed, source })
}

pub fn degrade(cfg: &RunConfig) -> Result<Vec<Manifest>> {
    let op = cfg.operator()?;
    let root = cfg.out.join("degrade");
    create_dir(&root)?;
    cfg.seeds
        .par_iter()
        .map(|&seed| degrade_one(cfg, &op, &root, seed))
        .collect()
}

fn degrade_one(cfg: &RunConfig, op: &LinearOperator, root: &Path, seed: u64) -> Result<Manifest> {
    let dir = root.join(seed_dir(seed));
    create_dir(&dir)?;
    let gt = cfg.ground_truth(seed)?;
    let m = with_seed(
        seed,
        nfc_core::degrade(&gt, op, cfg.sigma_y, &mut stream(seed, DEGRADE_STREAM)),
    )?;
    write_png(&dir.join("x.png"), &gt)?;
    write_raw(&dir.join("x.nfct"), &gt)?;
    write_png(&dir.join("y.png"), &m.y)?;
    write_raw(&dir.join("y.nfct"), &m.y)?;
    write_json(&dir.join("operator.json"), op)?;
    let files = [
        ("ground_truth_png", "x.png"),
        ("ground_truth", "x.nfct"),
        ("measurement_png", "y.png"),
        ("measurement", "y.nfct"),
        ("operator", "operator.json"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        seed,
        sigma_y: cfg.sigma_y,
        task: cfg.task,
        operator_kind: op.kind(),
        input_shape: op.input_shape(),
        measurement_shape: op.output_shape(),
        files,
        config: RunConfig {
            seeds: vec![seed],
            ..cfg.clone()
        },
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

struct Degraded {
    manifest: Manifest,
    y: ImageTensor,
    ground_truth: ImageTensor,
    op: LinearOperator,
}

fn load_degraded(cfg: &RunConfig, seed: u64) -> Result<Degraded> {
    let dir = cfg.out.join("degrade").join(seed_dir(seed));
    let path = dir.join("manifest.json");
    if !path.is_file() {
        return Err(CliError::config(format!(
            "no degraded measurement at {}; run `nfc degrade` with the same --out and seeds first",
            path.display()
        )));
    }
    let manifest: Manifest = read_json(&path)?;
    let file = |role: &str| -> Result<PathBuf> {
        manifest
            .files
            .get(role)
            .map(|f| dir.join(f))
            .ok_or_else(|| CliError::config(format!("{}: missing `{role}` entry", path.display())))
    };
    let op: LinearOperator = read_json(&file("operator")?)?;
    let y = read_raw(&file("measurement")?)?;
    let ground_truth = read_raw(&file("ground_truth")?)?;
    if op.input_shape() != cfg.shape {
        return Err(CliError::config(format!(
            "{}: operator expects {} but the config shape is {}",
            path.display(),
            op.input_shape(),
            cfg.shape
        )));
    }
    Ok(Degraded {
        manifest,
        y,
        ground_truth,
        op,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub psnr_first_step: Option<f64>,
    pub psnr_anchor_final: Option<f64>,
    pub psnr_refined_final: Option<f64>,
    pub loss_final: f64,
    pub dumped_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr_mean: Option<f64>,
    pub psnr_median: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_median: Option<f64>,
}

impl Aggregate {
    fn of(results: &[SeedResult]) -> Self {
        let p: Vec<f64> = results.iter().map(|r| r.psnr).collect();
        let s: Vec<f64> = results.iter().filter_map(|r| r.ssim).collect();
        Aggregate {
            psnr_mean: mean(&p),
            psnr_median: median(&p),
            ssim_mean: mean(&s),
            ssim_median: median(&s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: AblationMode,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Aggregate,
    /// Resolved per-step schedule, ordered from `sigma_max` down.
    pub schedule: Vec<ContinuationState>,
    pub config: RunConfig,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .seeds
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    format!("{:.3}", r.psnr),
                    fmt_opt(r.ssim, 4),
                    fmt_opt(r.psnr_first_step, 3),
                    fmt_opt(r.psnr_anchor_final, 3),
                    fmt_opt(r.psnr_refined_final, 3),
                ]
            })
            .collect();
        let a = &self.aggregate;
        format!(
            "mode {}\n{}\npsnr mean {}  median {}\nssim mean {}  median {}\n",
            self.mode.name(),
            table(
                &["seed", "psnr", "ssim", "psnr_first", "psnr_anchor", "psnr_refined"],
                &rows
            ),
            fmt_opt(a.psnr_mean, 3),
            fmt_opt(a.psnr_median, 3),
            fmt_opt(a.ssim_mean, 4),
            fmt_opt(a.ssim_median, 4),
        )
    }
}

pub fn resolved_schedule(cfg: &RunConfig, sigma_y: f64) -> Result<Vec<ContinuationState>> {
    let n = cfg.sampler.schedule.n_outer;
    Ok((0..n)
        .rev()
        .map(|i| cfg.sampler.state(i, sigma_y))
        .collect::<nfc_core::Result<_>>()?)
}

fn restore_one(cfg: &RunConfig, prior: &ScoreModel, root: &Path, seed: u64) -> Result<SeedResult> {
    let d = load_degraded(cfg, seed)?;
    let dir = root.join(seed_dir(seed));
    create_dir(&dir)?;
    let stride = cfg.dump_stride;
    if stride > 0 {
        create_dir(&dir.join("steps"))?;
    }
    let sampler =
        Sampler::new(cfg.sampler, prior, &d.op, &d.y, d.manifest.sigma_y)?.with_ground_truth(&d.ground_truth)?;
    let mut dumped = 0;
    let (x, record) = with_seed(
        seed,
        sampler.run_with(&mut stream(seed, SAMPLE_STREAM), |out| {
            if stride > 0 && out.record.k % stride == 0 {
                write_png(
                    &dir.join("steps").join(format!("step_{:04}.png", out.record.k)),
                    &out.fused,
                )?;
                dumped += 1;
            }
            Ok(())
        }),
    )?;
    write_png(&dir.join("x0.png"), &x)?;
    write_raw(&dir.join("x0.nfct"), &x)?;
    write_text(&dir.join("record.jsonl"), &record.to_json_lines())?;
    let gt = &d.ground_truth;
    let last = record.last().expect("at least one outer step");
    Ok(SeedResult {
        seed,
        psnr: psnr(&x, gt, 1.0)?,
        ssim: (gt.height() >= 11 && gt.width() >= 11)
            .then(|| ssim(&x, gt, 1.0))
            .transpose()?,
        psnr_first_step: record.first().and_then(|s| s.psnr_fused),
        psnr_anchor_final: last.psnr_anchor,
        psnr_refined_final: last.psnr_refined,
        loss_final: last.loss_after,
        dumped_steps: dumped,
    })
}

/// Runs the sampler on every seed's degraded measurement and writes the
/// estimates, per-step records and a summary under `root`.
pub fn run_mode(cfg: &RunConfig, root: &Path) -> Result<Summary> {
    create_dir(root)?;
    let prior = cfg.prior_model()?;
    let seeds: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| restore_one(cfg, &prior, root, seed))
        .collect::<Result<_>>()?;
    let summary = Summary {
        mode: cfg.sampler.mode,
        aggregate: Aggregate::of(&seeds),
        seeds,
        schedule: resolved_schedule(cfg, cfg.sigma_y)?,
        config: cfg.clone(),
    };
    write_json(&root.join("summary.json"), &summary)?;
    write_text(&root.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}

pub fn restore(cfg: &RunConfig) -> Result<Summary> {
    run_mode(cfg, &cfg.out.join("restore"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub mode: AblationMode,
    pub aggregate: Aggregate,
    /// `nfc − mode` for the medians; zero on the nfc row.
    pub psnr_median_gap: Option<f64>,
    pub ssim_median_gap: Option<f64>,
    /// Per-seed `nfc − mode` PSNR differences, in seed order.
    pub psnr_seed_gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub rows: Vec<ModeRow>,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.mode.name().to_string(),
                    fmt_opt(r.aggregate.psnr_median, 3),
                    fmt_opt(r.aggregate.ssim_median, 4),
                    fmt_opt(r.psnr_median_gap, 3),
                    fmt_opt(r.ssim_median_gap, 4),
                ]
            })
            .collect();
        format!(
            "seeds {:?}\n{}",
            self.seeds,
            table(
                &["mode", "psnr_median", "ssim_median", "nfc_minus_psnr", "nfc_minus_ssim"],
                &rows
            )
        )
    }

    pub fn row(&self, mode: AblationMode) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

/// Runs the three modes on identical measurements and sampler streams.
pub fn ablate(cfg: &RunConfig) -> Result<Comparison> {
    let root = cfg.out.join("ablate");
    let mut summaries = Vec::new();
    for mode in AblationMode::ALL {
        let mut c = cfg.clone();
        c.sampler.mode = mode;
        summaries.push(run_mode(&c, &root.join(mode.name()))?);
    }
    let nfc = &summaries[0];
    let gap = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| a - b);
    let rows = summaries
        .iter()
        .map(|s| ModeRow {
            mode: s.mode,
            aggregate: s.aggregate.clone(),
            psnr_median_gap: gap(nfc.aggregate.psnr_median, s.aggregate.psnr_median),
            ssim_median_gap: gap(nfc.aggregate.ssim_median, s.aggregate.ssim_median),
            psnr_seed_gaps: nfc.seeds.iter().zip(&s.seeds).map(|(a, b)| a.psnr - b.psnr).collect(),
        })
        .collect();
    let cmp = Comparison {
        seeds: cfg.seeds.clone(),
        rows,
    };
    write_json(&root.join("comparison.json"), &cmp)?;
    write_text(&root.join("comparison.txt"), &cmp.to_text())?;
    Ok(cmp)
}

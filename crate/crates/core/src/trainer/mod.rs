//! Three-step training: OOD convergence, mixed fine-tuning, ID fine-tuning.
//! Each step evaluates on a dev set at a fixed cadence, stops early on a
//! loss plateau and hands its best checkpoint to the next step.

mod checkpoint;
mod pipeline;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, QeSample};
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::modeling::{mse, render_input, AdamW, EncoderBackend, OptimizerConfig, QeModel, TagMode, DOMAIN_TAGS};
use crate::rng;
use crate::scalar::Real;

pub use checkpoint::{model_fingerprint, validate_lineage, Checkpoint, CheckpointManifest};
pub use pipeline::{
    run_pipeline, step2_dev_set, CacheMode, LangPairData, PipelineConfig, PipelineData, PipelineResult, StepExecutions,
    TimingReport, TimingRow,
};

/// Absolute tolerance below which a dev loss does not count as improved.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_PATIENCE: usize = 5;

/// True once `patience` evaluations have passed since the last strict
/// minimum of `eval_losses`.
pub fn should_stop(eval_losses: &[f64], patience: usize) -> bool {
    debug_assert!(patience >= 1);
    let mut best = f64::INFINITY;
    let mut since = 0;
    for &l in eval_losses {
        if l < best - IMPROVEMENT_TOLERANCE {
            best = l;
            since = 0;
        } else {
            since += 1;
        }
    }
    since >= patience.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StepId {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "baseline")]
    Baseline,
}

impl StepId {
    /// Step whose checkpoint must initialise this one.
    pub fn parent(self) -> Option<StepId> {
        match self {
            StepId::Two => Some(StepId::One),
            StepId::Three => Some(StepId::Two),
            StepId::One | StepId::Baseline => None,
        }
    }

    pub fn default_eval_interval(self) -> usize {
        match self {
            StepId::One => 1000,
            _ => 500,
        }
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepId::One => "1",
            StepId::Two => "2",
            StepId::Three => "3",
            StepId::Baseline => "baseline",
        })
    }
}

impl FromStr for StepId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(StepId::One),
            "2" => Ok(StepId::Two),
            "3" => Ok(StepId::Three),
            "baseline" => Ok(StepId::Baseline),
            _ => Err(Error::invalid(format!(
                "unknown step `{s}` (expected 1, 2, 3 or baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub step: StepId,
    /// Optimiser updates between dev evaluations.
    pub eval_interval: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub max_updates: usize,
    pub batch_size: usize,
    pub tag_mode: TagMode,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl StepConfig {
    pub fn for_step(step: StepId) -> Self {
        Self {
            step,
            eval_interval: step.default_eval_interval(),
            patience: DEFAULT_PATIENCE,
            max_updates: 50_000,
            batch_size: 8,
            tag_mode: TagMode::Notag,
            seed: 8,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval_interval == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "step {}: eval_interval, patience and batch_size must be >= 1",
                self.step
            )));
        }
        if self.max_updates < self.eval_interval {
            return Err(Error::Config(format!(
                "step {}: max_updates ({}) below eval_interval ({}) leaves no evaluation",
                self.step, self.max_updates, self.eval_interval
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub update_count: usize,
    pub dev_loss: f64,
    /// Rescaled; `None` when the correlation is undefined.
    pub dev_pearson: Option<f64>,
    /// Seconds since the step started.
    pub elapsed_seconds: f64,
}

/// Where a step's parameters come from.
pub enum Init<'a, F, B> {
    Fresh(QeModel<F, B>),
    From(&'a Checkpoint<F, B>),
}

/// Hash of everything that determines a step's outcome before it runs.
pub fn step_cache_key(origin: &str, cfg: &StepConfig, data_fingerprint: &str) -> String {
    let mut h = Sha256::new();
    h.update(origin.as_bytes());
    h.update(b"\0");
    h.update(serde_json::to_vec(cfg).expect("step config serialises"));
    h.update(b"\0");
    h.update(data_fingerprint.as_bytes());
    hex::encode(h.finalize())
}

pub fn data_fingerprint(train: &[QeSample], dev: &[QeSample]) -> String {
    let mut h = Sha256::new();
    h.update(corpus::fingerprint(train));
    h.update(b"/");
    h.update(corpus::fingerprint(dev));
    hex::encode(h.finalize())
}

/// The cache key `train_step` would give the resulting checkpoint.
pub fn expected_cache_key<F: Real, B: EncoderBackend<F>>(
    init: &Init<'_, F, B>,
    train: &[QeSample],
    dev: &[QeSample],
    cfg: &StepConfig,
) -> String {
    let origin = match init {
        Init::Fresh(m) => model_fingerprint(m),
        Init::From(c) => c.manifest.cache_key.clone(),
    };
    step_cache_key(&origin, cfg, &data_fingerprint(train, dev))
}

type Batch<F> = Vec<(Vec<u32>, F)>;

fn encode_set<F: Real, B: EncoderBackend<F>>(model: &QeModel<F, B>, set: &[QeSample], mode: TagMode) -> Batch<F> {
    set.par_iter()
        .map(|s| {
            let rendered = render_input(&s.src, &s.tgt, s.domain, mode);
            (model.backend.tokenize(&rendered), F::lit(s.label))
        })
        .collect()
}

fn dev_scores<F: Real, B: EncoderBackend<F>>(model: &QeModel<F, B>, dev: &Batch<F>) -> (f64, Option<f64>) {
    let preds: Vec<F> = dev.par_iter().map(|(ids, _)| model.predict_ids(ids)).collect();
    let labels: Vec<F> = dev.iter().map(|(_, l)| *l).collect();
    let loss = mse(&preds, &labels).expect("aligned").as_f64();
    let r = pearson(&preds, &labels).ok().map(|p| p.rescaled.as_f64());
    (loss, r)
}

/// Trains one step and returns its minimum-dev-loss checkpoint together
/// with the full evaluation history.
pub fn train_step<F: Real, B: EncoderBackend<F>>(
    init: Init<'_, F, B>,
    train: &[QeSample],
    dev: &[QeSample],
    cfg: &StepConfig,
) -> Result<(Checkpoint<F, B>, Vec<EvalRecord>)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid(format!("step {}: empty train or dev set", cfg.step)));
    }
    let cache_key = expected_cache_key(&init, train, dev, cfg);
    let (mut model, parent) = match (init, cfg.step.parent()) {
        (Init::Fresh(m), None) => (m, None),
        (Init::From(c), Some(want)) if c.manifest.step == want => {
            if c.manifest.tag_mode != cfg.tag_mode {
                return Err(Error::Config(format!(
                    "tag_mode must stay constant across steps ({} then {})",
                    c.manifest.tag_mode, cfg.tag_mode
                )));
            }
            (c.model.clone(), Some(&c.manifest))
        }
        (Init::From(c), _) => {
            return Err(Error::Lineage(format!(
                "step {} cannot start from a step-{} checkpoint",
                cfg.step, c.manifest.step
            )))
        }
        (Init::Fresh(_), Some(want)) => {
            return Err(Error::Lineage(format!(
                "step {} needs a step-{want} checkpoint, got a fresh model",
                cfg.step
            )))
        }
    };
    if cfg.tag_mode == TagMode::Tag && !DOMAIN_TAGS.iter().all(|t| model.backend.vocab().contains(t)) {
        model.backend.extend_vocabulary(&DOMAIN_TAGS, cfg.seed)?;
    }

    let started = Instant::now();
    let train_b = encode_set(&model, train, cfg.tag_mode);
    let dev_b = encode_set(&model, dev, cfg.tag_mode);
    let mut opt = AdamW::new(cfg.optimizer);
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..train_b.len()).collect();
    let mut cursor = order.len();
    let mut history: Vec<EvalRecord> = Vec::new();
    let mut losses = Vec::new();
    let mut best: Option<(f64, usize, QeModel<F, B>)> = None;
    let mut updates = 0;
    let mut stopped_early = false;
    let mut batch: Batch<F> = Vec::with_capacity(cfg.batch_size);
    while updates < cfg.max_updates {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                rng::shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            batch.push(train_b[order[cursor]].clone());
            cursor += 1;
        }
        let (_, grads) = model.loss_and_grads(&batch);
        opt.step(model.param_groups_mut(), &grads);
        updates += 1;
        if updates % cfg.eval_interval != 0 {
            continue;
        }
        let (loss, r) = dev_scores(&model, &dev_b);
        debug!("step {} update {updates}: dev loss {loss:.6}", cfg.step);
        if best.as_ref().is_none_or(|b| loss < b.0 - IMPROVEMENT_TOLERANCE) {
            best = Some((loss, updates, model.clone()));
        }
        history.push(EvalRecord {
            update_count: updates,
            dev_loss: loss,
            dev_pearson: r,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });
        losses.push(loss);
        if should_stop(&losses, cfg.patience) {
            stopped_early = true;
            break;
        }
    }
    let (best_loss, best_update, best_model) = best.expect("at least one evaluation");
    let wall = started.elapsed().as_secs_f64();
    info!(
        "step {} finished after {updates} updates ({:.1}s), best dev loss {best_loss:.6} at {best_update}",
        cfg.step, wall
    );
    let manifest = CheckpointManifest {
        id: checkpoint::checkpoint_id(&cache_key, &best_model),
        cache_key,
        step: cfg.step,
        parent: parent.map(|p| p.id.clone()),
        parent_step: parent.map(|p| p.step),
        seed: cfg.seed,
        data_fingerprint: data_fingerprint(train, dev),
        tag_mode: cfg.tag_mode,
        backend: best_model.backend.kind().to_owned(),
        hidden_width: best_model.backend.hidden_width(),
        config: cfg.clone(),
        eval_history: history.clone(),
        best_update,
        best_dev_loss: best_loss,
        updates,
        stopped_early,
        wall_clock_seconds: wall,
    };
    Ok((
        Checkpoint {
            model: best_model,
            manifest,
        },
        history,
    ))
}

/// Single-step training of a fresh model on in-domain data.
pub fn train_baseline<F: Real, B: EncoderBackend<F>>(
    fresh: QeModel<F, B>,
    id_train: &[QeSample],
    id_dev: &[QeSample],
    cfg: &StepConfig,
) -> Result<(Checkpoint<F, B>, Vec<EvalRecord>)> {
    let cfg = StepConfig {
        step: StepId::Baseline,
        ..cfg.clone()
    };
    train_step(Init::Fresh(fresh), id_train, id_dev, &cfg)
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::{expected_cache_key, train_step, validate_lineage, Checkpoint, Init, StepConfig, StepId};
use crate::augment::{compose_step2_corpus, MixOptions};
use crate::corpus::{concat, subsample, LangPair, QeSample};
use crate::error::{Error, Result};
use crate::modeling::{EncoderBackend, QeModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheMode {
    /// Train everything, write nothing.
    #[default]
    Off,
    /// Load Steps 1-2 from the cache when present, otherwise train and store.
    Reuse,
    /// Steps 1-2 must come from the cache.
    Require,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LangPairData {
    pub lang_pair: LangPair,
    pub train: Vec<QeSample>,
    pub dev: Vec<QeSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineData {
    pub ood_train: Vec<QeSample>,
    pub ood_dev: Vec<QeSample>,
    pub id: Vec<LangPairData>,
    /// Synthetic in-domain sets for approach 2.
    pub synthetic: Vec<Vec<QeSample>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub steps: [StepConfig; 3],
    pub mix: MixOptions,
    pub cache: CacheMode,
    pub cache_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (cfg, want) in self.steps.iter().zip([StepId::One, StepId::Two, StepId::Three]) {
            if cfg.step != want {
                return Err(Error::Config(format!(
                    "pipeline slot {want} holds a step-{} config",
                    cfg.step
                )));
            }
            cfg.validate()?;
        }
        if self.steps.iter().any(|c| c.tag_mode != self.steps[0].tag_mode) {
            return Err(Error::Config("tag_mode must stay constant across steps".into()));
        }
        if self.cache != CacheMode::Off && self.cache_dir.is_none() {
            return Err(Error::Config("checkpoint caching needs a cache directory".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepExecutions {
    pub step1: usize,
    pub step2: usize,
    pub step3: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub step: StepId,
    pub seconds: f64,
    /// Loaded from the cache rather than trained in this run.
    pub reused: bool,
}

impl TimingRow {
    pub fn hours(&self) -> f64 {
        self.seconds / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn push(&mut self, label: impl Into<String>, step: StepId, seconds: f64, reused: bool) {
        self.rows.push(TimingRow {
            label: label.into(),
            step,
            seconds,
            reused,
        });
    }

    /// Aligned per-step table in hours.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}  {:>8}  {:>10}  {}\n", "model", "step", "hours", "cached");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>10.4}  {}",
                r.label,
                r.step.to_string(),
                r.hours(),
                if r.reused { "yes" } else { "no" }
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult<F, B> {
    pub step1: Checkpoint<F, B>,
    pub step2: Checkpoint<F, B>,
    pub step3: Vec<(LangPair, Checkpoint<F, B>)>,
    pub timing: TimingReport,
    pub executions: StepExecutions,
}

/// The Step-2 dev set: every ID dev set plus an OOD dev subset sized by the
/// same ratio as the training mix.
pub fn step2_dev_set(ood_dev: &[QeSample], id_devs: &[Vec<QeSample>], mix: &MixOptions) -> Result<Vec<QeSample>> {
    let mut dev = concat(id_devs);
    let want = (mix.ood_ratio * dev.len() as f64).round() as usize;
    let take = want.min(ood_dev.len());
    if take < want {
        info!("OOD dev holds {} samples; using all instead of {want}", ood_dev.len());
    }
    dev.extend(subsample(ood_dev, take, mix.seed)?);
    Ok(dev)
}

fn cache_path(dir: &Path, step: StepId, key: &str) -> PathBuf {
    dir.join(format!("step{step}-{key}"))
}

/// Runs (or loads) one cacheable step.
fn cached_step<F: Real, B: EncoderBackend<F>>(
    cfg: &PipelineConfig,
    init: Init<'_, F, B>,
    train: &[QeSample],
    dev: &[QeSample],
    step: &StepConfig,
    timing: &mut TimingReport,
) -> Result<(Checkpoint<F, B>, bool)> {
    let key = expected_cache_key(&init, train, dev, step);
    let path = cfg.cache_dir.as_deref().map(|d| cache_path(d, step.step, &key));
    if cfg.cache != CacheMode::Off {
        let path = path.as_deref().expect("validated");
        if path.join(super::checkpoint::MANIFEST_FILE).exists() {
            let ckpt = Checkpoint::load(path)?;
            info!("step {} reused from {}", step.step, path.display());
            timing.push(
                format!("step{}", step.step),
                step.step,
                ckpt.manifest.wall_clock_seconds,
                true,
            );
            return Ok((ckpt, false));
        }
        if cfg.cache == CacheMode::Require {
            return Err(Error::MissingCheckpoint(key));
        }
    }
    let (ckpt, _) = train_step(init, train, dev, step)?;
    if let (CacheMode::Reuse, Some(path)) = (cfg.cache, path) {
        ckpt.save(&path)?;
    }
    timing.push(
        format!("step{}", step.step),
        step.step,
        ckpt.manifest.wall_clock_seconds,
        false,
    );
    Ok((ckpt, true))
}

/// Step 1 on OOD data, Step 2 on the OOD+ID mix, then Step 3 once per ID
/// language pair, each step starting from its predecessor's best checkpoint.
pub fn run_pipeline<F: Real, B: EncoderBackend<F>>(
    fresh: QeModel<F, B>,
    data: &PipelineData,
    cfg: &PipelineConfig,
) -> Result<PipelineResult<F, B>> {
    cfg.validate()?;
    if data.id.is_empty() {
        return Err(Error::invalid("pipeline needs at least one in-domain language pair"));
    }
    let mut timing = TimingReport::default();
    let mut executions = StepExecutions::default();

    let (step1, ran) = cached_step(
        cfg,
        Init::Fresh(fresh),
        &data.ood_train,
        &data.ood_dev,
        &cfg.steps[0],
        &mut timing,
    )?;
    executions.step1 += ran as usize;

    let id_train: Vec<Vec<QeSample>> = data.id.iter().map(|d| d.train.clone()).collect();
    let id_dev: Vec<Vec<QeSample>> = data.id.iter().map(|d| d.dev.clone()).collect();
    let mix = compose_step2_corpus(&data.ood_train, &id_train, &data.synthetic, cfg.mix)?;
    info!("step 2 mix: {} ID + {} OOD", mix.id_count, mix.ood_count);
    let dev2 = step2_dev_set(&data.ood_dev, &id_dev, &cfg.mix)?;
    let (step2, ran) = cached_step(cfg, Init::From(&step1), &mix.samples, &dev2, &cfg.steps[1], &mut timing)?;
    executions.step2 += ran as usize;

    let mut step3 = Vec::with_capacity(data.id.len());
    for d in &data.id {
        let (ckpt, _) = train_step(Init::From(&step2), &d.train, &d.dev, &cfg.steps[2])?;
        validate_lineage(&[&step1.manifest, &step2.manifest, &ckpt.manifest])?;
        executions.step3 += 1;
        timing.push(
            format!("step3 {}", d.lang_pair),
            StepId::Three,
            ckpt.manifest.wall_clock_seconds,
            false,
        );
        step3.push((d.lang_pair.clone(), ckpt));
    }
    Ok(PipelineResult {
        step1,
        step2,
        step3,
        timing,
        executions,
    })
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalRecord, StepConfig, StepId};
use crate::corpus::write_file;
use crate::error::{Error, Result};
use crate::modeling::params::{params_from_bytes, params_to_bytes};
use crate::modeling::{EncoderBackend, ParamTensor, QeModel, TagMode, Vocabulary};
use crate::scalar::Real;

pub const PARAMS_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    /// Hash of the cache key and the parameters.
    pub id: String,
    /// Hash of the step's inputs, known before training.
    pub cache_key: String,
    pub step: StepId,
    pub parent: Option<String>,
    pub parent_step: Option<StepId>,
    pub seed: u64,
    pub data_fingerprint: String,
    pub tag_mode: TagMode,
    pub backend: String,
    pub hidden_width: usize,
    pub config: StepConfig,
    pub eval_history: Vec<EvalRecord>,
    pub best_update: usize,
    pub best_dev_loss: f64,
    pub updates: usize,
    pub stopped_early: bool,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F, B> {
    pub model: QeModel<F, B>,
    pub manifest: CheckpointManifest,
}

fn hash_model<F: Real, B: EncoderBackend<F>>(h: &mut Sha256, model: &QeModel<F, B>) {
    h.update(model.backend.kind().as_bytes());
    h.update((model.backend.hidden_width() as u64).to_le_bytes());
    for i in 0..model.backend.vocab().len() as u32 {
        h.update(model.backend.vocab().token(i).unwrap_or_default().as_bytes());
        h.update(b"\n");
    }
    h.update(params_to_bytes(model.param_groups()));
}

/// Hash of a model's architecture, vocabulary and parameters.
pub fn model_fingerprint<F: Real, B: EncoderBackend<F>>(model: &QeModel<F, B>) -> String {
    let mut h = Sha256::new();
    hash_model(&mut h, model);
    hex::encode(h.finalize())
}

pub(crate) fn checkpoint_id<F: Real, B: EncoderBackend<F>>(cache_key: &str, model: &QeModel<F, B>) -> String {
    let mut h = Sha256::new();
    h.update(cache_key.as_bytes());
    hash_model(&mut h, model);
    hex::encode(h.finalize())
}

impl<F: Real, B: EncoderBackend<F>> Checkpoint<F, B> {
    /// Writes parameters, vocabulary and manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(PARAMS_FILE), &params_to_bytes(self.model.param_groups()))?;
        self.model.backend.vocab().save(&dir.join(VOCAB_FILE))?;
        let json = serde_json::to_string_pretty(&self.manifest)?;
        write_file(&dir.join(MANIFEST_FILE), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::load_manifest(dir)?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        let backend = B::rebuild(vocab, manifest.hidden_width);
        if backend.kind() != manifest.backend {
            return Err(Error::invalid(format!(
                "checkpoint {} was written by backend `{}`, not `{}`",
                dir.display(),
                manifest.backend,
                backend.kind()
            )));
        }
        let d = manifest.hidden_width;
        let mut model = QeModel {
            backend,
            head: [
                ParamTensor::zeros("head.weight", &[d]),
                ParamTensor::zeros("head.bias", &[1]),
            ],
        };
        let path = dir.join(PARAMS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        params_from_bytes(model.param_groups_mut(), &bytes)?;
        if checkpoint_id(&manifest.cache_key, &model) != manifest.id {
            return Err(Error::invalid(format!(
                "checkpoint {} does not match its manifest id",
                dir.display()
            )));
        }
        Ok(Self { model, manifest })
    }

    pub fn load_manifest(dir: &Path) -> Result<CheckpointManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Checks a Step 1 -> 2 -> 3 chain: ids link parent to child and step
/// numbers increase by one.
pub fn validate_lineage(chain: &[&CheckpointManifest]) -> Result<()> {
    let Some(first) = chain.first() else {
        return Err(Error::Lineage("empty chain".into()));
    };
    if first.parent.is_some() || first.step != StepId::One {
        return Err(Error::Lineage(
            "chain must start at a parentless step-1 checkpoint".into(),
        ));
    }
    for pair in chain.windows(2) {
        let (p, c) = (pair[0], pair[1]);
        if c.parent.as_deref() != Some(p.id.as_str()) {
            return Err(Error::Lineage(format!(
                "step {} does not descend from {}",
                c.step, p.id
            )));
        }
        if c.step.parent() != Some(p.step) || c.parent_step != Some(p.step) {
            return Err(Error::Lineage(format!("step {} cannot follow step {}", c.step, p.step)));
        }
    }
    Ok(())
}

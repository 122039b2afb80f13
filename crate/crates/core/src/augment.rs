//! Data augmentation: multilingual concatenation of authentic in-domain data
//! (approach 1) and synthetic in-domain triplets produced by a trained
//! translator and labelled with TER (approach 2), plus the Step-2 mix.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    self, subsample, write_qe_tsv, Domain, LangPair, Origin, ParallelSample, QeSample, RESERVED_LITERALS,
};
use crate::error::{Error, Result};
use crate::metrics::{bleu, ter_sentence, BleuScore};
use crate::modeling::{MtTrainConfig, MtTrainReport, Seq2SeqConfig, ToySeq2Seq};
use crate::rng;

/// Version tag recorded alongside synthetic labels.
pub const LABEL_METRIC_VERSION: &str = "ter/tok:tercom/case:lc/punct:yes/shift:exact<=8,greedy>8/v1";

/// Anything that turns a batch of source sentences into target sentences.
/// Output length must equal input length; inference is deterministic.
pub trait Translator: Send + Sync {
    fn translate(&self, sources: &[String]) -> Vec<String>;
    /// Stable identifier of the translator's parameters.
    fn fingerprint(&self) -> String;
}

/// Echoes its input.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoTranslator;

impl Translator for EchoTranslator {
    fn translate(&self, sources: &[String]) -> Vec<String> {
        sources.to_vec()
    }

    fn fingerprint(&self) -> String {
        "echo".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    #[default]
    Dag1,
    Dag2,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Dag1 => "dag1",
            Approach::Dag2 => "dag2",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dag1" => Ok(Approach::Dag1),
            "dag2" => Ok(Approach::Dag2),
            _ => Err(Error::invalid(format!("unknown approach `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMetric {
    #[default]
    Ter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisPlan {
    pub lang_pair: LangPair,
    /// Parallel samples drawn in total; split into two equal halves.
    pub n: usize,
    pub seed: u64,
    /// How many second-half sources get translated.
    pub portion: usize,
    #[serde(default)]
    pub metric: LabelMetric,
}

impl SynthesisPlan {
    pub fn validate(&self) -> Result<()> {
        if !self.n.is_multiple_of(2) {
            return Err(Error::invalid(format!("n must be even, got {}", self.n)));
        }
        if self.portion == 0 || self.portion > self.n / 2 {
            return Err(Error::invalid(format!(
                "portion must lie in 1..={}, got {}",
                self.n / 2,
                self.portion
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisHalves {
    pub s1: Vec<ParallelSample>,
    pub s2: Vec<ParallelSample>,
}

/// Concatenates in-domain training sets across language pairs.
pub fn dag1_concat(id_train_sets: &[Vec<QeSample>]) -> Result<Vec<QeSample>> {
    if id_train_sets.is_empty() {
        return Err(Error::invalid("approach 1 needs at least one in-domain dataset"));
    }
    if let Some(s) = id_train_sets.iter().flatten().find(|s| s.domain != Domain::Id) {
        return Err(Error::invalid(format!(
            "out-of-domain sample in in-domain concatenation ({} `{}`)",
            s.lang_pair, s.src
        )));
    }
    Ok(corpus::concat(id_train_sets))
}

/// Draws `plan.n` parallel samples and splits them into two equal halves.
pub fn make_halves(parallel: &[ParallelSample], plan: &SynthesisPlan) -> Result<SynthesisHalves> {
    if !plan.n.is_multiple_of(2) {
        return Err(Error::invalid(format!("n must be even, got {}", plan.n)));
    }
    if parallel.len() < plan.n {
        return Err(Error::invalid(format!(
            "insufficient parallel data: need {}, have {}",
            plan.n,
            parallel.len()
        )));
    }
    let mut chosen = subsample(parallel, plan.n, plan.seed)?;
    let s2 = chosen.split_off(plan.n / 2);
    Ok(SynthesisHalves { s1: chosen, s2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslatorConfig {
    pub seed: u64,
    pub model: Seq2SeqConfig,
    pub train: MtTrainConfig,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        Self {
            seed: 8,
            model: Seq2SeqConfig::default(),
            train: MtTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatorReport {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub training: MtTrainReport,
    pub dev_bleu: BleuScore,
    pub test_bleu: BleuScore,
}

/// Dev and test sizes for translator training: 7000 each from 70k samples
/// up, 1% each (at least 1) below that.
pub fn translator_holdout_size(n: usize) -> usize {
    if n >= 70_000 {
        7_000
    } else {
        (n / 100).max(1)
    }
}

/// Trains the desk-scale translator on the first half of a synthesis plan.
pub fn train_translator(s1: &[ParallelSample], cfg: &TranslatorConfig) -> Result<(ToySeq2Seq<f64>, TranslatorReport)> {
    if s1.is_empty() {
        return Err(Error::invalid("cannot train a translator on an empty corpus"));
    }
    let k = translator_holdout_size(s1.len());
    if s1.len() < 2 * k + 1 {
        return Err(Error::invalid(format!(
            "translator corpus of {} samples too small for dev/test holdouts",
            s1.len()
        )));
    }
    let order = rng::permutation(s1.len(), cfg.seed);
    let pairs = |ix: &[usize]| -> Vec<(String, String)> {
        ix.iter()
            .map(|&i| (s1[i].src.clone(), s1[i].reference.clone()))
            .collect()
    };
    let dev = pairs(&order[..k]);
    let test = pairs(&order[k..2 * k]);
    let train = pairs(&order[2 * k..]);

    let mut model_cfg = cfg.model.clone();
    let mut alphabet: Vec<char> = model_cfg.alphabet.chars().collect();
    alphabet.extend(s1.iter().flat_map(|p| p.src.chars().chain(p.reference.chars())));
    alphabet.sort_unstable();
    alphabet.dedup();
    model_cfg.alphabet = alphabet.into_iter().collect();

    let mut model = ToySeq2Seq::new(cfg.seed, &model_cfg);
    let training = model.fit(&train, &dev, &cfg.train)?;
    let score = |set: &[(String, String)]| -> Result<BleuScore> {
        let srcs: Vec<String> = set.iter().map(|p| p.0.clone()).collect();
        let refs: Vec<&str> = set.iter().map(|p| p.1.as_str()).collect();
        bleu(&model.translate(&srcs), &refs)
    };
    let report = TranslatorReport {
        train_size: train.len(),
        dev_size: dev.len(),
        test_size: test.len(),
        training,
        dev_bleu: score(&dev)?,
        test_bleu: score(&test)?,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub plan: SynthesisPlan,
    /// (source of S2, translation, TER against the S2 reference).
    pub samples: Vec<QeSample>,
    pub references: Vec<String>,
    pub translator_fingerprint: String,
}

impl SyntheticDataset {
    pub fn hypotheses(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.tgt.as_str())
    }

    /// Writes `<stem>.tsv` (triplets) and `<stem>.manifest.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let data = dir.join(format!("{stem}.tsv"));
        let manifest = dir.join(format!("{stem}.manifest.json"));
        write_qe_tsv(&data, &self.samples)?;
        let m = SyntheticManifest {
            plan: self.plan.clone(),
            count: self.samples.len(),
            translator_fingerprint: self.translator_fingerprint.clone(),
            metric_version: LABEL_METRIC_VERSION.into(),
            content_hash: corpus::fingerprint(&self.samples),
        };
        corpus::write_file(&manifest, serde_json::to_string_pretty(&m)?.as_bytes())?;
        Ok((data, manifest))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticManifest {
    pub plan: SynthesisPlan,
    pub count: usize,
    pub translator_fingerprint: String,
    pub metric_version: String,
    pub content_hash: String,
}

/// Translates `plan.portion` sources from `s2` and labels each translation
/// with TER against its reference.
pub fn generate_synthetic(
    translator: &dyn Translator,
    s2: &[ParallelSample],
    plan: &SynthesisPlan,
) -> Result<SyntheticDataset> {
    if plan.portion > s2.len() {
        return Err(Error::invalid(format!(
            "portion {} exceeds second half of {} samples",
            plan.portion,
            s2.len()
        )));
    }
    let picked = subsample(s2, plan.portion, plan.seed)?;
    let sources: Vec<String> = picked.iter().map(|p| p.src.clone()).collect();
    let hyps = translator.translate(&sources);
    if hyps.len() != sources.len() {
        return Err(Error::invalid(format!(
            "translator returned {} outputs for {} inputs",
            hyps.len(),
            sources.len()
        )));
    }
    use rayon::prelude::*;
    let samples = picked
        .par_iter()
        .zip(hyps.into_par_iter())
        .map(|(p, hyp)| {
            if let Some(lit) = RESERVED_LITERALS.iter().find(|l| hyp.contains(*l)) {
                return Err(Error::invalid(format!("translation contains reserved literal {lit}")));
            }
            let label = ter_sentence(&hyp, &p.reference)?.score_f64();
            QeSample::new(
                p.src.clone(),
                hyp,
                label,
                p.lang_pair.clone(),
                Domain::Id,
                Origin::Synthetic,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        plan: plan.clone(),
        samples,
        references: picked.into_iter().map(|p| p.reference).collect(),
        translator_fingerprint: translator.fingerprint(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step2Corpus {
    pub samples: Vec<QeSample>,
    pub id_count: usize,
    pub ood_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixOptions {
    pub approach: Approach,
    /// OOD samples per ID sample.
    pub ood_ratio: f64,
    pub seed: u64,
    /// Approach 2 ablation: drop the authentic ID sets.
    pub synthetic_only: bool,
}

impl Default for MixOptions {
    fn default() -> Self {
        Self {
            approach: Approach::Dag1,
            ood_ratio: 1.0,
            seed: 8,
            synthetic_only: false,
        }
    }
}

/// Builds the Step-2 training mix: the in-domain part for the chosen
/// approach plus `round(ood_ratio * |ID|)` OOD samples, shuffled together.
pub fn compose_step2_corpus(
    ood_train: &[QeSample],
    id_sets: &[Vec<QeSample>],
    synthetic_sets: &[Vec<QeSample>],
    opts: MixOptions,
) -> Result<Step2Corpus> {
    if ood_train.is_empty() {
        return Err(Error::invalid("Step 2 needs out-of-domain training data"));
    }
    if !(opts.ood_ratio > 0.0) {
        return Err(Error::invalid(format!("ood_ratio must be > 0, got {}", opts.ood_ratio)));
    }
    let mut id_part = match opts.approach {
        Approach::Dag1 => dag1_concat(id_sets)?,
        Approach::Dag2 => {
            for set in id_sets {
                for lp in set.iter().map(|s| &s.lang_pair) {
                    let covered = synthetic_sets.iter().any(|syn| syn.iter().any(|s| &s.lang_pair == lp));
                    if !covered {
                        return Err(Error::invalid(format!("missing synthetic set for {lp}")));
                    }
                }
            }
            let authentic = if opts.synthetic_only {
                Vec::new()
            } else {
                dag1_concat(id_sets)?
            };
            let synthetic = dag1_concat(synthetic_sets)?;
            [authentic, synthetic].concat()
        }
    };
    let ood_count = (opts.ood_ratio * id_part.len() as f64).round() as usize;
    let id_count = id_part.len();
    let mut ood_part = subsample(ood_train, ood_count, opts.seed)?;
    id_part.append(&mut ood_part);
    rng::shuffle(&mut id_part, &mut rng::seeded(opts.seed));
    Ok(Step2Corpus {
        samples: id_part,
        id_count,
        ood_count,
    })
}

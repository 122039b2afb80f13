//! Runs an experiment described by a [`NormalizedConfig`]: loads its data,
//! trains and caches checkpoints under the output directory, evaluates
//! them into prediction dumps and builds reports from those dumps.
//!
//! Output layout: `checkpoints/<step>-<key>/`, `synthetic/<pair>.tsv`,
//! `augment/`, `dumps/`, `reports/` and `timing.json`.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use crate::augment::{self, Approach, MixOptions};
use crate::config::{NormalizedConfig, Role};
use crate::corpus::{
    load_parallel, load_qe_tsv_with, write_file, write_qe_tsv, DatasetManifest, Domain, LangPair, Origin, QeSample,
};
use crate::error::{Error, Result};
use crate::eval_report::{self, model_id, DumpSet, EvalReport, Evaluation, OOD_TEST_SET};
use crate::modeling::{TagMode, ToyEncoder, VocabSpec};
use crate::trainer::{
    self, data_fingerprint, model_fingerprint, step2_dev_set, step_cache_key, Checkpoint, Init, StepId, TimingReport,
};
use crate::{ToyCheckpointF64, ToyQeModelF64};

pub const LOCK_FILE: &str = ".qeforge.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is in use by another run (delete {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// `NOTAG DAG1` style label.
pub fn variant_label(tag: TagMode, approach: Approach) -> String {
    format!(
        "{} {}",
        tag.to_string().to_uppercase(),
        approach.to_string().to_uppercase()
    )
}

/// Dump id of the models shared by every language pair.
pub fn shared_model_id(step: StepId, tag: TagMode, approach: Approach) -> String {
    let tag = if tag == TagMode::Tag { "-tag" } else { "" };
    match step {
        StepId::One => format!("step1{tag}"),
        _ => format!("step2{tag}-{approach}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdPairData {
    pub lang_pair: LangPair,
    pub train: Vec<QeSample>,
    pub dev: Vec<QeSample>,
    pub test: Vec<QeSample>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentData {
    pub ood_train: Vec<QeSample>,
    pub ood_dev: Vec<QeSample>,
    pub ood_test: Vec<QeSample>,
    pub id: Vec<IdPairData>,
    pub zero_shot: Vec<(LangPair, Vec<QeSample>)>,
    pub training_manifests: Vec<DatasetManifest>,
    pub zero_shot_manifests: Vec<DatasetManifest>,
}

pub struct Experiment {
    pub cfg: NormalizedConfig,
    pub data: ExperimentData,
}

impl Experiment {
    pub fn load(cfg: NormalizedConfig) -> Result<Self> {
        let c = &cfg.config;
        let mut data = ExperimentData::default();
        let load = |domain: Domain, role: Role, lp: Option<&LangPair>| -> Result<Vec<QeSample>> {
            let mut out = Vec::new();
            for d in cfg.datasets(domain, role) {
                if d.origin == Origin::Authentic && lp.is_none_or(|lp| &d.lang_pair == lp) {
                    out.extend(load_qe_tsv_with(
                        &d.path,
                        &d.lang_pair,
                        d.domain,
                        d.origin,
                        c.label_scale,
                    )?);
                }
            }
            Ok(out)
        };
        data.ood_train = load(Domain::Ood, Role::Train, None)?;
        data.ood_dev = load(Domain::Ood, Role::Dev, None)?;
        data.ood_test = load(Domain::Ood, Role::Test, None)?;
        for lp in cfg.id_pairs() {
            data.id.push(IdPairData {
                train: load(Domain::Id, Role::Train, Some(&lp))?,
                dev: load(Domain::Id, Role::Dev, Some(&lp))?,
                test: load(Domain::Id, Role::Test, Some(&lp))?,
                lang_pair: lp,
            });
        }
        let mut zs_pairs: Vec<LangPair> = Vec::new();
        for d in cfg.datasets(Domain::Id, Role::ZeroShot) {
            if !zs_pairs.contains(&d.lang_pair) {
                zs_pairs.push(d.lang_pair.clone());
            }
        }
        for lp in zs_pairs {
            let set = load(Domain::Id, Role::ZeroShot, Some(&lp))?;
            data.zero_shot_manifests
                .push(DatasetManifest::describe(&format!("zero-shot {lp}"), Vec::new(), &set));
            data.zero_shot.push((lp, set));
        }
        data.training_manifests
            .push(DatasetManifest::describe("ood train", Vec::new(), &data.ood_train));
        for d in &data.id {
            data.training_manifests.push(DatasetManifest::describe(
                &format!("id train {}", d.lang_pair),
                Vec::new(),
                &d.train,
            ));
        }
        Ok(Self { cfg, data })
    }

    pub fn out(&self) -> &Path {
        self.cfg.output_dir()
    }

    fn checkpoints_dir(&self) -> PathBuf {
        self.out().join("checkpoints")
    }

    pub fn dumps_dir(&self) -> PathBuf {
        self.out().join("dumps")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out().join("reports")
    }

    pub fn variant(&self) -> String {
        variant_label(self.cfg.config.tag_mode, self.cfg.config.augment.approach)
    }

    /// The untrained model every Step 1 and baseline starts from; its
    /// vocabulary covers the authentic training texts.
    pub fn fresh_model(&self) -> Result<ToyQeModelF64> {
        let texts = self
            .data
            .ood_train
            .iter()
            .chain(self.data.id.iter().flat_map(|d| d.train.iter()))
            .flat_map(|s| [s.src.as_str(), s.tgt.as_str()]);
        let enc = &self.cfg.config.encoder;
        let spec = VocabSpec::from_texts(texts, enc.max_vocab_words);
        let seed = self.cfg.config.seed;
        Ok(ToyQeModelF64::new(
            ToyEncoder::new(seed, enc.hidden_width, &spec)?,
            seed,
        ))
    }

    fn require_data(&self, what: &str, set: &[QeSample]) -> Result<()> {
        if set.is_empty() {
            return Err(Error::Config(format!("config declares no {what}")));
        }
        Ok(())
    }

    fn id_pair(&self, lp: &LangPair) -> Result<&IdPairData> {
        self.data
            .id
            .iter()
            .find(|d| &d.lang_pair == lp)
            .ok_or_else(|| Error::Config(format!("no in-domain training data declared for {lp}")))
    }

    fn pairs(&self, only: Option<&LangPair>) -> Result<Vec<LangPair>> {
        match only {
            Some(lp) => Ok(vec![self.id_pair(lp)?.lang_pair.clone()]),
            None => Ok(self.data.id.iter().map(|d| d.lang_pair.clone()).collect()),
        }
    }

    fn mix(&self) -> MixOptions {
        let a = &self.cfg.config.augment;
        MixOptions {
            approach: a.approach,
            ood_ratio: a.ood_ratio,
            seed: self.cfg.config.seed,
            synthetic_only: a.synthetic_only,
        }
    }

    fn synthetic_path(&self, lp: &LangPair) -> PathBuf {
        self.out().join("synthetic").join(format!("{lp}.tsv"))
    }

    /// Synthetic sets for approach 2: generated ones under the output
    /// directory plus any declared synthetic datasets.
    fn synthetic_sets(&self) -> Result<Vec<Vec<QeSample>>> {
        let c = &self.cfg.config;
        let mut sets = Vec::new();
        for d in &self.data.id {
            let mut set = Vec::new();
            let generated = self.synthetic_path(&d.lang_pair);
            if generated.exists() {
                set.extend(load_qe_tsv_with(
                    &generated,
                    &d.lang_pair,
                    Domain::Id,
                    Origin::Synthetic,
                    c.label_scale,
                )?);
            }
            for decl in c
                .datasets
                .iter()
                .filter(|x| x.origin == Origin::Synthetic && x.lang_pair == d.lang_pair && x.role == Role::Train)
            {
                set.extend(load_qe_tsv_with(
                    &decl.path,
                    &decl.lang_pair,
                    Domain::Id,
                    Origin::Synthetic,
                    c.label_scale,
                )?);
            }
            if set.is_empty() {
                return Err(Error::Config(format!(
                    "approach 2 needs synthetic data for {}; run augment-synth first",
                    d.lang_pair
                )));
            }
            sets.push(set);
        }
        Ok(sets)
    }

    fn step2_data(&self) -> Result<(Vec<QeSample>, Vec<QeSample>)> {
        let synthetic = match self.cfg.config.augment.approach {
            Approach::Dag1 => Vec::new(),
            Approach::Dag2 => self.synthetic_sets()?,
        };
        let id_train: Vec<Vec<QeSample>> = self.data.id.iter().map(|d| d.train.clone()).collect();
        let id_dev: Vec<Vec<QeSample>> = self.data.id.iter().map(|d| d.dev.clone()).collect();
        let mix = augment::compose_step2_corpus(&self.data.ood_train, &id_train, &synthetic, self.mix())?;
        let dev = step2_dev_set(&self.data.ood_dev, &id_dev, &self.mix())?;
        Ok((mix.samples, dev))
    }

    fn key(&self, origin: &str, step: StepId, train: &[QeSample], dev: &[QeSample]) -> String {
        step_cache_key(
            origin,
            &self.cfg.config.step_config(step),
            &data_fingerprint(train, dev),
        )
    }

    fn step1_key(&self, fresh: &ToyQeModelF64) -> String {
        self.key(
            &model_fingerprint(fresh),
            StepId::One,
            &self.data.ood_train,
            &self.data.ood_dev,
        )
    }

    fn ckpt_dir(&self, step: StepId, key: &str) -> PathBuf {
        self.checkpoints_dir().join(format!("{step}-{key}"))
    }

    fn cached(&self, step: StepId, key: &str) -> Result<Option<ToyCheckpointF64>> {
        let dir = self.ckpt_dir(step, key);
        if dir.join("manifest.json").exists() {
            Ok(Some(Checkpoint::load(&dir)?))
        } else {
            Ok(None)
        }
    }

    fn save(&self, ckpt: &ToyCheckpointF64, label: &str) -> Result<()> {
        let dir = self.ckpt_dir(ckpt.manifest.step, &ckpt.manifest.cache_key);
        ckpt.save(&dir)?;
        self.cfg.write_into(&dir)?;
        let mut timing = self.timing()?;
        timing.rows.retain(|r| r.label != label);
        timing.push(label, ckpt.manifest.step, ckpt.manifest.wall_clock_seconds, false);
        write_file(
            &self.out().join("timing.json"),
            (serde_json::to_string_pretty(&timing)? + "\n").as_bytes(),
        )
    }

    pub fn timing(&self) -> Result<TimingReport> {
        let path = self.out().join("timing.json");
        if !path.exists() {
            return Ok(TimingReport::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Step 1, trained or loaded from the cache. With `require`, a missing
    /// cache entry is an error.
    pub fn step1(&self, fresh: &ToyQeModelF64, require: bool) -> Result<ToyCheckpointF64> {
        let key = self.step1_key(fresh);
        if let Some(c) = self.cached(StepId::One, &key)? {
            return Ok(c);
        }
        if require {
            return Err(Error::MissingCheckpoint(key));
        }
        self.require_data("OOD train set", &self.data.ood_train)?;
        self.require_data("OOD dev set", &self.data.ood_dev)?;
        let cfg = self.cfg.config.step_config(StepId::One);
        let (ckpt, _) = trainer::train_step(
            Init::Fresh(fresh.clone()),
            &self.data.ood_train,
            &self.data.ood_dev,
            &cfg,
        )?;
        self.save(&ckpt, &shared_model_id(StepId::One, cfg.tag_mode, Approach::Dag1))?;
        Ok(ckpt)
    }

    pub fn step2(&self, step1: &ToyCheckpointF64, require: bool) -> Result<ToyCheckpointF64> {
        let (train, dev) = self.step2_data()?;
        let key = self.key(&step1.manifest.cache_key, StepId::Two, &train, &dev);
        if let Some(c) = self.cached(StepId::Two, &key)? {
            return Ok(c);
        }
        if require {
            return Err(Error::MissingCheckpoint(key));
        }
        let cfg = self.cfg.config.step_config(StepId::Two);
        let (ckpt, _) = trainer::train_step(Init::From(step1), &train, &dev, &cfg)?;
        self.save(
            &ckpt,
            &shared_model_id(StepId::Two, cfg.tag_mode, self.cfg.config.augment.approach),
        )?;
        Ok(ckpt)
    }

    pub fn step3(&self, step2: &ToyCheckpointF64, lp: &LangPair) -> Result<ToyCheckpointF64> {
        let d = self.id_pair(lp)?;
        let key = self.key(&step2.manifest.cache_key, StepId::Three, &d.train, &d.dev);
        if let Some(c) = self.cached(StepId::Three, &key)? {
            return Ok(c);
        }
        let cfg = self.cfg.config.step_config(StepId::Three);
        let (ckpt, _) = trainer::train_step(Init::From(step2), &d.train, &d.dev, &cfg)?;
        self.save(&ckpt, &model_id(&self.variant(), Some(lp)))?;
        Ok(ckpt)
    }

    pub fn baseline(&self, fresh: &ToyQeModelF64, lp: &LangPair) -> Result<ToyCheckpointF64> {
        let d = self.id_pair(lp)?;
        let key = self.key(&model_fingerprint(fresh), StepId::Baseline, &d.train, &d.dev);
        if let Some(c) = self.cached(StepId::Baseline, &key)? {
            return Ok(c);
        }
        let cfg = self.cfg.config.step_config(StepId::Baseline);
        let (ckpt, _) = trainer::train_baseline(fresh.clone(), &d.train, &d.dev, &cfg)?;
        self.save(&ckpt, &model_id("baseline", Some(lp)))?;
        Ok(ckpt)
    }

    /// Trains one step. Steps 2 and 3 need their predecessor in the cache;
    /// Step 3 and baselines run for `only` or every in-domain pair.
    pub fn train(&self, step: StepId, only: Option<&LangPair>) -> Result<Vec<ToyCheckpointF64>> {
        let fresh = self.fresh_model()?;
        let require = |s| self.cfg.config.cache == trainer::CacheMode::Require && s == step;
        match step {
            StepId::One => Ok(vec![self.step1(&fresh, require(StepId::One))?]),
            StepId::Two => {
                let s1 = self.step1(&fresh, true)?;
                Ok(vec![self.step2(&s1, require(StepId::Two))?])
            }
            StepId::Three => {
                let s1 = self.step1(&fresh, true)?;
                let s2 = self.step2(&s1, true)?;
                self.pairs(only)?.iter().map(|lp| self.step3(&s2, lp)).collect()
            }
            StepId::Baseline => self.pairs(only)?.iter().map(|lp| self.baseline(&fresh, lp)).collect(),
        }
    }

    /// Baselines, then Steps 1-3 for the configured variant.
    pub fn train_all(&self) -> Result<()> {
        let fresh = self.fresh_model()?;
        for lp in self.pairs(None)? {
            self.baseline(&fresh, &lp)?;
        }
        let s1 = self.step1(&fresh, false)?;
        let s2 = self.step2(&s1, false)?;
        for lp in self.pairs(None)? {
            let s3 = self.step3(&s2, &lp)?;
            trainer::validate_lineage(&[&s1.manifest, &s2.manifest, &s3.manifest])?;
        }
        Ok(())
    }

    fn test_sets(&self) -> Vec<(String, &[QeSample], Domain)> {
        let e = &self.cfg.config.evaluation;
        let mut out: Vec<(String, &[QeSample], Domain)> = Vec::new();
        for d in &self.data.id {
            if !d.test.is_empty() {
                out.push((d.lang_pair.to_string(), &d.test, e.id_render));
            }
        }
        for (lp, set) in &self.data.zero_shot {
            out.push((lp.to_string(), set, e.id_render));
        }
        if !self.data.ood_test.is_empty() {
            out.push((OOD_TEST_SET.to_string(), &self.data.ood_test, e.ood_render));
        }
        out
    }

    /// Evaluates every cached model of this config on every test set and
    /// writes the prediction dumps.
    pub fn evaluate(&self) -> Result<Vec<Evaluation>> {
        let fresh = self.fresh_model()?;
        let mut models: Vec<(String, ToyQeModelF64, TagMode)> =
            vec![("untrained".to_string(), fresh.clone(), TagMode::Notag)];
        let tag = self.cfg.config.tag_mode;
        let approach = self.cfg.config.augment.approach;
        let s1 = self.step1(&fresh, true).ok();
        let s2 = match &s1 {
            Some(s1) => self.step2(s1, true).ok(),
            None => None,
        };
        if let Some(s1) = &s1 {
            models.push((shared_model_id(StepId::One, tag, approach), s1.model.clone(), tag));
        }
        if let Some(s2) = &s2 {
            models.push((shared_model_id(StepId::Two, tag, approach), s2.model.clone(), tag));
        }
        for d in &self.data.id {
            let key = self.key(&model_fingerprint(&fresh), StepId::Baseline, &d.train, &d.dev);
            if let Some(b) = self.cached(StepId::Baseline, &key)? {
                models.push((model_id("baseline", Some(&d.lang_pair)), b.model, TagMode::Notag));
            }
            if let Some(s2) = &s2 {
                let key = self.key(&s2.manifest.cache_key, StepId::Three, &d.train, &d.dev);
                if let Some(c) = self.cached(StepId::Three, &key)? {
                    models.push((model_id(&self.variant(), Some(&d.lang_pair)), c.model, tag));
                }
            }
        }
        let mut evals = Vec::new();
        for (id, model, mode) in &models {
            for (name, set, render) in self.test_sets() {
                evals.push(eval_report::evaluate(model, id, &name, set, *mode, render)?);
            }
        }
        info!("{} evaluations over {} models", evals.len(), models.len());
        eval_report::write_dumps(&self.dumps_dir(), &evals)?;
        self.cfg.write_into(&self.dumps_dir())?;
        Ok(evals)
    }

    /// Approach-1 training set: all in-domain training sets concatenated.
    pub fn augment_concat(&self) -> Result<PathBuf> {
        let sets: Vec<Vec<QeSample>> = self.data.id.iter().map(|d| d.train.clone()).collect();
        let all = augment::dag1_concat(&sets)?;
        let dir = self.out().join("augment");
        let path = dir.join("dag1-train.tsv");
        write_qe_tsv(&path, &all)?;
        DatasetManifest::describe("dag1 train", vec![path.clone()], &all)
            .save(&dir.join("dag1-train.manifest.json"))?;
        self.cfg.write_into(&dir)?;
        Ok(path)
    }

    /// Approach-2 data for every configured synthesis plan (or only `only`).
    pub fn augment_synth(&self, only: Option<&LangPair>) -> Result<Vec<PathBuf>> {
        let c = &self.cfg.config;
        if c.augment.synthesis.is_empty() {
            return Err(Error::Config("no [[augment.synthesis]] plans configured".into()));
        }
        let mut written = Vec::new();
        for decl in &c.augment.synthesis {
            let plan = c.synthesis_plan(decl)?;
            if only.is_some_and(|lp| lp != &plan.lang_pair) {
                continue;
            }
            let par = c.parallel.iter().find(|p| p.name == decl.parallel).expect("validated");
            let parallel = load_parallel(&par.src, &par.reference, &par.lang_pair)?;
            let halves = augment::make_halves(&parallel, &plan)?;
            let (translator, report) = augment::train_translator(&halves.s1, &c.augment.translator)?;
            info!("translator {}: dev BLEU {:.2}", plan.lang_pair, report.dev_bleu.score);
            let syn = augment::generate_synthetic(&translator, &halves.s2, &plan)?;
            let dir = self.out().join("synthetic");
            let (data, _) = syn.save(&dir, &plan.lang_pair.to_string())?;
            write_file(
                &dir.join(format!("{}.translator.json", plan.lang_pair)),
                (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
            )?;
            self.cfg.write_into(&dir)?;
            written.push(data);
        }
        Ok(written)
    }

    /// Every trainable model plus dumps: baselines, Steps 1-3, evaluation.
    pub fn run(&self) -> Result<Vec<Evaluation>> {
        self.cfg.write_into(self.out())?;
        self.train_all()?;
        self.evaluate()
    }

    pub fn zero_shot_pairs(&self) -> Vec<LangPair> {
        self.data.zero_shot.iter().map(|(lp, _)| lp.clone()).collect()
    }
}

/// Report kinds understood by [`build_report`].
pub const REPORT_KINDS: [&str; 6] = ["main", "zeroshot", "crosslingual", "ood", "significance", "timing"];

/// In-domain pairs that have baseline dumps, in index order.
pub fn pairs_in_dumps(dumps: &DumpSet, index: &eval_report::DumpIndex) -> Vec<LangPair> {
    let mut out: Vec<LangPair> = Vec::new();
    for d in &index.dumps {
        if let Some(lp) = d.model.strip_prefix("baseline/") {
            if let Ok(lp) = lp.parse::<LangPair>() {
                if d.test_set == lp.to_string() && dumps.get(&d.model, &d.test_set).is_some() && !out.contains(&lp) {
                    out.push(lp);
                }
            }
        }
    }
    out
}

/// Builds one report from the dumps in `dumps_dir`. Zero-shot reports need
/// the experiment for manifest validation; timing reads `timing.json`.
pub fn build_report(
    kind: &str,
    dumps_dir: &Path,
    experiment: Option<&Experiment>,
    variant: &str,
    alpha: f64,
    test: crate::metrics::SignificanceTest,
) -> Result<EvalReport> {
    if kind == "timing" {
        let exp = experiment.ok_or_else(|| Error::Config("report timing needs --config".into()))?;
        return Ok(eval_report::timing_table(&exp.timing()?));
    }
    let dumps = DumpSet::load(dumps_dir)?;
    let index = eval_report::DumpIndex::load(dumps_dir)?;
    let pairs = pairs_in_dumps(&dumps, &index);
    match kind {
        "main" => eval_report::main_from_dumps(&dumps, &pairs),
        "crosslingual" => eval_report::crosslingual_from_dumps(&dumps, &pairs, variant),
        "ood" => eval_report::ood_from_dumps(&dumps, &pairs, variant),
        "significance" => eval_report::significance_from_dumps(&dumps, &pairs, alpha, test),
        "zeroshot" => {
            let exp = experiment.ok_or_else(|| Error::Config("report zeroshot needs --config".into()))?;
            eval_report::zeroshot_from_dumps(
                &dumps,
                &pairs,
                &exp.zero_shot_pairs(),
                &exp.data.training_manifests,
                &exp.data.zero_shot_manifests,
            )
        }
        other => Err(Error::Config(format!(
            "unknown report `{other}` (expected one of {})",
            REPORT_KINDS.join(", ")
        ))),
    }
}

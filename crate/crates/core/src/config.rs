//! Declarative experiment configuration (TOML), strict validation and
//! normalisation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{Approach, SynthesisPlan, TranslatorConfig};
use crate::corpus::{Domain, LabelScale, LangPair, Origin, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{SignificanceTest, DEFAULT_ALPHA};
use crate::modeling::{OptimizerConfig, TagMode, ToyEncoderConfig, BACKEND_TOY};
use crate::trainer::{CacheMode, StepConfig, StepId, DEFAULT_PATIENCE};

/// Overrides the configured output directory.
pub const OUTPUT_ENV: &str = "QEFORGE_OUT";
/// Name of the normalised config written next to artifacts.
pub const NORMALIZED_CONFIG_FILE: &str = "config.normalized.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Train,
    Dev,
    Test,
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDecl {
    pub name: String,
    pub path: PathBuf,
    pub lang_pair: LangPair,
    pub domain: Domain,
    pub role: Role,
    #[serde(default = "authentic")]
    pub origin: Origin,
}

fn authentic() -> Origin {
    Origin::Authentic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelDecl {
    pub name: String,
    pub lang_pair: LangPair,
    pub src: PathBuf,
    pub reference: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisDecl {
    /// Name of a `[[parallel]]` entry.
    pub parallel: String,
    pub n: usize,
    pub portion: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub approach: Approach,
    pub ood_ratio: f64,
    pub synthetic_only: bool,
    pub synthesis: Vec<SynthesisDecl>,
    pub translator: TranslatorConfig,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            approach: Approach::Dag1,
            ood_ratio: 1.0,
            synthetic_only: false,
            synthesis: Vec::new(),
            translator: TranslatorConfig::default(),
        }
    }
}

/// Per-step settings; anything left out is filled in on normalisation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepOverrides {
    pub eval_interval: Option<usize>,
    pub patience: Option<usize>,
    pub max_updates: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub optimizer: Option<OptimizerConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepsConfig {
    pub step1: StepOverrides,
    pub step2: StepOverrides,
    pub step3: StepOverrides,
    pub baseline: StepOverrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub alpha: f64,
    pub significance: SignificanceTest,
    /// Domain tag used to render the OOD test set in tag mode.
    pub ood_render: Domain,
    /// Domain tag used for in-domain and zero-shot test sets in tag mode.
    pub id_render: Domain,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            significance: SignificanceTest::Williams,
            ood_render: Domain::Ood,
            id_render: Domain::Id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default)]
    pub tag_mode: TagMode,
    #[serde(default)]
    pub label_scale: LabelScale,
    #[serde(default)]
    pub cache: CacheMode,
    #[serde(default)]
    pub encoder: ToyEncoderConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub steps: StepsConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub datasets: Vec<DatasetDecl>,
    #[serde(default)]
    pub parallel: Vec<ParallelDecl>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_backend() -> String {
    BACKEND_TOY.into()
}

/// A validated config with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedConfig {
    pub config: ExperimentConfig,
    pub source: PathBuf,
    /// Hash of the normalised config, output directory excluded.
    pub fingerprint: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    fn overrides(&self, step: StepId) -> &StepOverrides {
        match step {
            StepId::One => &self.steps.step1,
            StepId::Two => &self.steps.step2,
            StepId::Three => &self.steps.step3,
            StepId::Baseline => &self.steps.baseline,
        }
    }

    /// The effective settings of one step. Baselines are always trained
    /// without tags.
    pub fn step_config(&self, step: StepId) -> StepConfig {
        let o = self.overrides(step);
        let base = StepConfig::for_step(step);
        StepConfig {
            step,
            eval_interval: o.eval_interval.unwrap_or(base.eval_interval),
            patience: o.patience.unwrap_or(DEFAULT_PATIENCE),
            max_updates: o.max_updates.unwrap_or(base.max_updates),
            batch_size: o.batch_size.unwrap_or(base.batch_size),
            tag_mode: if step == StepId::Baseline {
                TagMode::Notag
            } else {
                self.tag_mode
            },
            seed: o.seed.unwrap_or(self.seed),
            optimizer: o.optimizer.unwrap_or_default(),
        }
    }

    pub fn synthesis_plan(&self, decl: &SynthesisDecl) -> Result<SynthesisPlan> {
        let par = self.parallel.iter().find(|p| p.name == decl.parallel).ok_or_else(|| {
            Error::Config(format!(
                "synthesis refers to unknown parallel corpus `{}`",
                decl.parallel
            ))
        })?;
        let plan = SynthesisPlan {
            lang_pair: par.lang_pair.clone(),
            n: decl.n,
            seed: decl.seed.unwrap_or(self.seed),
            portion: decl.portion,
            metric: Default::default(),
        };
        plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(plan)
    }

    fn fill_defaults(&mut self) {
        for step in [StepId::One, StepId::Two, StepId::Three, StepId::Baseline] {
            let c = self.step_config(step);
            let filled = StepOverrides {
                eval_interval: Some(c.eval_interval),
                patience: Some(c.patience),
                max_updates: Some(c.max_updates),
                batch_size: Some(c.batch_size),
                seed: Some(c.seed),
                optimizer: Some(c.optimizer),
            };
            match step {
                StepId::One => self.steps.step1 = filled,
                StepId::Two => self.steps.step2 = filled,
                StepId::Three => self.steps.step3 = filled,
                StepId::Baseline => self.steps.baseline = filled,
            }
        }
        for s in &mut self.augment.synthesis {
            s.seed.get_or_insert(self.seed);
        }
    }

    fn check(&self) -> Result<()> {
        if self.backend != BACKEND_TOY {
            return Err(Error::Config(format!(
                "unknown QE backend `{}` (available: {BACKEND_TOY})",
                self.backend
            )));
        }
        for step in [StepId::One, StepId::Two, StepId::Three, StepId::Baseline] {
            self.step_config(step).validate()?;
        }
        if !(self.augment.ood_ratio > 0.0) {
            return Err(Error::Config(format!(
                "ood_ratio must be > 0, got {}",
                self.augment.ood_ratio
            )));
        }
        self.split.validate().map_err(|e| Error::Config(e.to_string()))?;
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.extend(self.parallel.iter().map(|p| p.name.as_str()));
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate dataset name `{}`", w[0])));
        }
        for (domain, role) in [
            (Domain::Ood, Role::Train),
            (Domain::Ood, Role::Dev),
            (Domain::Ood, Role::Test),
        ] {
            if self
                .datasets
                .iter()
                .filter(|d| d.domain == domain && d.role == role)
                .count()
                > 1
            {
                return Err(Error::Config(format!("more than one {domain} {role:?} dataset")));
            }
        }
        for d in &self.datasets {
            if d.role == Role::ZeroShot && d.domain != Domain::Id {
                return Err(Error::Config(format!("zero-shot set `{}` must be in-domain", d.name)));
            }
        }
        for s in &self.augment.synthesis {
            self.synthesis_plan(s)?;
        }
        Ok(())
    }

    fn paths_mut(&mut self) -> impl Iterator<Item = &mut PathBuf> {
        self.datasets
            .iter_mut()
            .map(|d| &mut d.path)
            .chain(self.parallel.iter_mut().flat_map(|p| [&mut p.src, &mut p.reference]))
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads, validates and normalises a config file. Relative paths resolve
/// against the file's directory; [`OUTPUT_ENV`] overrides `output_dir`.
pub fn validate_config(path: &Path) -> Result<NormalizedConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let env_out = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
    normalize(&text, path, env_out)
}

/// [`validate_config`] on text already in memory.
pub fn normalize(text: &str, source: &Path, output_override: Option<PathBuf>) -> Result<NormalizedConfig> {
    let mut cfg = ExperimentConfig::parse(text, source)?;
    let base = source
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."))
        .to_path_buf();
    for p in cfg.paths_mut() {
        *p = absolute(&base, p);
    }
    let missing: Vec<String> = cfg
        .paths_mut()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing dataset files: {}", missing.join(", "))));
    }
    cfg.output_dir = match (output_override, cfg.output_dir.take()) {
        (Some(o), _) => Some(o),
        (None, Some(o)) => Some(absolute(&base, &o)),
        (None, None) => {
            return Err(Error::Config(format!(
                "no output_dir in config and {OUTPUT_ENV} is not set"
            )))
        }
    };
    cfg.check()?;
    cfg.fill_defaults();
    let fingerprint = fingerprint(&cfg);
    Ok(NormalizedConfig {
        config: cfg,
        source: source.to_path_buf(),
        fingerprint,
    })
}

fn fingerprint(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = None;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&c).expect("config serialises"));
    hex::encode(h.finalize())
}

impl NormalizedConfig {
    pub fn output_dir(&self) -> &Path {
        self.config.output_dir.as_deref().expect("set during normalisation")
    }

    /// Switches tag mode and/or approach, keeping the fingerprint current.
    pub fn set_variant(&mut self, tag_mode: Option<TagMode>, approach: Option<Approach>) {
        if let Some(t) = tag_mode {
            self.config.tag_mode = t;
        }
        if let Some(a) = approach {
            self.config.augment.approach = a;
        }
        self.fingerprint = fingerprint(&self.config);
    }

    pub fn to_toml(&self) -> String {
        let mut out = format!("# fingerprint {}\n", self.fingerprint);
        out.push_str(&toml::to_string(&self.config).expect("config serialises to TOML"));
        out
    }

    /// Writes the normalised config into `dir`. The output directory is
    /// left out so that artifacts do not depend on where a run was placed.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        let mut c = self.clone();
        c.config.output_dir = None;
        crate::corpus::write_file(&dir.join(NORMALIZED_CONFIG_FILE), c.to_toml().as_bytes())
    }

    pub fn datasets(&self, domain: Domain, role: Role) -> impl Iterator<Item = &DatasetDecl> {
        self.config
            .datasets
            .iter()
            .filter(move |d| d.domain == domain && d.role == role)
    }

    /// In-domain language pairs with a training set, in declaration order.
    pub fn id_pairs(&self) -> Vec<LangPair> {
        let mut out: Vec<LangPair> = Vec::new();
        for d in self.datasets(Domain::Id, Role::Train) {
            if d.origin == Origin::Authentic && !out.contains(&d.lang_pair) {
                out.push(d.lang_pair.clone());
            }
        }
        out
    }
}

//! Builds report tables purely from a directory of prediction dumps.
//!
//! Model ids follow `<variant>/<pair>` for per-pair models (`baseline`,
//! `notag-dag1`, `tag-dag2`, ...) and bare names for shared ones (`step1`,
//! `step1-tag`, `step2-dag1`, `step2-tag-dag2`, `untrained`). ID test sets are named by their pair, the
//! OOD test set `ood`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::tables::{
    crosslingual_matrix, main_results_table, ood_table, significance_report, zeroshot_table, CrossModel, MainRow,
    OodRow, SignificanceInput, ZeroShotRow, VARIANTS,
};
use super::{DumpIndex, EvalReport, Evaluation};
use crate::corpus::{DatasetManifest, LangPair};
use crate::error::{Error, Result};
use crate::metrics::SignificanceTest;

pub const OOD_TEST_SET: &str = "ood";

/// `notag-dag1/en-de` style id for a variant label and pair.
pub fn model_id(variant: &str, lang_pair: Option<&LangPair>) -> String {
    let slug = variant.to_ascii_lowercase().replace(' ', "-");
    match lang_pair {
        Some(lp) => format!("{slug}/{lp}"),
        None => slug,
    }
}

/// Ids of the Step-1 and Step-2 models matching a variant label.
fn shared_ids(variant: &str) -> (String, String) {
    let v = variant.to_ascii_lowercase();
    let tag = if v.starts_with("tag") { "-tag" } else { "" };
    let dag = v.rsplit(' ').next().unwrap_or("dag1");
    (format!("step1{tag}"), format!("step2{tag}-{dag}"))
}

/// All dumps of one directory, loaded once.
pub struct DumpSet {
    dir: PathBuf,
    evals: BTreeMap<(String, String), Evaluation>,
}

impl DumpSet {
    pub fn load(dir: &Path) -> Result<Self> {
        let index = DumpIndex::load(dir)?;
        if index.dumps.is_empty() {
            return Err(Error::invalid(format!(
                "no prediction dumps indexed in {}",
                dir.display()
            )));
        }
        let mut evals = BTreeMap::new();
        for d in &index.dumps {
            let e = Evaluation::from_dump(&d.model, &d.test_set, &dir.join(&d.file))?;
            evals.insert((d.model.clone(), d.test_set.clone()), e);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            evals,
        })
    }

    pub fn get(&self, model: &str, test_set: &str) -> Option<&Evaluation> {
        self.evals.get(&(model.to_owned(), test_set.to_owned()))
    }

    pub fn score(&self, model: &str, test_set: &str) -> Option<f64> {
        self.get(model, test_set).map(|e| e.pearson)
    }

    fn require(&self, model: &str, test_set: &str) -> Result<f64> {
        self.score(model, test_set).ok_or_else(|| {
            Error::invalid(format!(
                "no dump for model {model} on {test_set} in {}",
                self.dir.display()
            ))
        })
    }
}

fn variant_scores(dumps: &DumpSet, lp: &LangPair, test_set: &str) -> [Option<f64>; 4] {
    VARIANTS.map(|v| dumps.score(&model_id(v, Some(lp)), test_set))
}

pub fn main_from_dumps(dumps: &DumpSet, pairs: &[LangPair]) -> Result<EvalReport> {
    let rows: Vec<MainRow> = pairs
        .iter()
        .map(|lp| MainRow {
            lang_pair: lp.to_string().to_uppercase(),
            baseline: dumps.score(&model_id("baseline", Some(lp)), &lp.to_string()),
            variants: variant_scores(dumps, lp, &lp.to_string()),
        })
        .collect();
    main_results_table(&rows)
}

pub fn zeroshot_from_dumps(
    dumps: &DumpSet,
    trained_on: &[LangPair],
    zero_shot: &[LangPair],
    training_manifests: &[DatasetManifest],
    zero_shot_manifests: &[DatasetManifest],
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for lp in trained_on {
        for zs in zero_shot {
            rows.push(ZeroShotRow {
                trained_on: lp.clone(),
                test_set: zs.clone(),
                baseline: dumps.score(&model_id("baseline", Some(lp)), &zs.to_string()),
                variants: variant_scores(dumps, lp, &zs.to_string()),
            });
        }
    }
    zeroshot_table(&rows, training_manifests, zero_shot_manifests)
}

/// Models of one `variant`, their baselines, then the matching Step-2 and
/// Step-1 models and the untrained backend when dumped.
pub fn crosslingual_from_dumps(dumps: &DumpSet, pairs: &[LangPair], variant: &str) -> Result<EvalReport> {
    let tests: Vec<String> = pairs.iter().map(|p| p.to_string()).collect();
    let all = |model: &str| -> Result<Vec<f64>> { tests.iter().map(|t| dumps.require(model, t)).collect() };
    let mut models = Vec::new();
    for lp in pairs {
        models.push(CrossModel {
            name: lp.to_string().to_uppercase(),
            scores: all(&model_id(variant, Some(lp)))?,
            baseline: all(&model_id("baseline", Some(lp)))?,
        });
    }
    let (step1, step2) = shared_ids(variant);
    let mut extra = Vec::new();
    for (label, id) in [
        ("Step2", step2),
        ("Step1", step1),
        ("Untrained", "untrained".to_string()),
    ] {
        if tests.iter().all(|t| dumps.score(&id, t).is_some()) {
            extra.push((label.to_string(), all(&id)?));
        }
    }
    let upper: Vec<String> = tests.iter().map(|t| t.to_uppercase()).collect();
    crosslingual_matrix(&upper, &models, &extra)
}

/// Per-pair `variant` models and baselines on the OOD test set against the
/// OOD-only Step-1 model, with Step-2 models as extra columns.
pub fn ood_from_dumps(dumps: &DumpSet, pairs: &[LangPair], variant: &str) -> Result<EvalReport> {
    let rows = pairs
        .iter()
        .map(|lp| {
            Ok(OodRow {
                lang_pair: lp.to_string().to_uppercase(),
                baseline: dumps.require(&model_id("baseline", Some(lp)), OOD_TEST_SET)?,
                pipeline: dumps.require(&model_id(variant, Some(lp)), OOD_TEST_SET)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (step1, _) = shared_ids(variant);
    let mut ood_models = vec![("OOD".to_string(), dumps.require(&step1, OOD_TEST_SET)?)];
    let tag = if step1.ends_with("-tag") { "-tag" } else { "" };
    for (label, dag) in [("DAG 1", "dag1"), ("DAG 2", "dag2")] {
        if let Some(v) = dumps.score(&format!("step2{tag}-{dag}"), OOD_TEST_SET) {
            ood_models.push((label.to_string(), v));
        }
    }
    ood_table(&rows, &ood_models, 0)
}

/// Baseline plus every variant dumped for all pairs, compared pairwise on
/// each pair's own test set.
pub fn significance_from_dumps(
    dumps: &DumpSet,
    pairs: &[LangPair],
    alpha: f64,
    test: SignificanceTest,
) -> Result<EvalReport> {
    let present: Vec<&str> = VARIANTS
        .iter()
        .copied()
        .filter(|v| {
            pairs
                .iter()
                .all(|lp| dumps.get(&model_id(v, Some(lp)), &lp.to_string()).is_some())
        })
        .collect();
    let mut inputs = Vec::new();
    for lp in pairs {
        let t = lp.to_string();
        let base = dumps
            .get(&model_id("baseline", Some(lp)), &t)
            .ok_or_else(|| Error::invalid(format!("no baseline dump for {lp}")))?;
        let mut systems = vec![("Baseline".to_string(), base.predictions())];
        for v in &present {
            let e = dumps.get(&model_id(v, Some(lp)), &t).expect("filtered");
            if e.gold() != base.gold() {
                return Err(Error::invalid(format!(
                    "{v} and the baseline disagree on {lp} gold labels"
                )));
            }
            systems.push((v.to_string(), e.predictions()));
        }
        inputs.push(SignificanceInput {
            lang_pair: t.to_uppercase(),
            gold: base.gold(),
            systems,
        });
    }
    significance_report(&inputs, alpha, test)
}

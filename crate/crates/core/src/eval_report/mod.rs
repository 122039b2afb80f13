//! Scoring trained models on test sets, prediction dumps, and the report
//! tables built from them.

mod assemble;
mod table;
mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_file, Domain, QeSample};
use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::modeling::{render_input, EncoderBackend, QeModel, TagMode};
use crate::scalar::Real;

pub use assemble::{
    crosslingual_from_dumps, main_from_dumps, model_id, ood_from_dumps, significance_from_dumps, zeroshot_from_dumps,
    DumpSet, OOD_TEST_SET,
};
pub use table::{fmt2, Cell, EvalReport, ReportRow};
pub use tables::{
    crosslingual_matrix, main_results_table, ood_table, significance_report, timing_table, CrossModel, MainRow, OodRow,
    SignificanceInput, ZeroShotRow, VARIANTS,
};

pub const DUMP_INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRow {
    pub id: String,
    pub gold: f64,
    pub pred: f64,
}

/// Predictions of one model on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub model_id: String,
    pub test_set: String,
    pub rows: Vec<DumpRow>,
    /// Rescaled Pearson.
    pub pearson: f64,
}

/// Raw predictions for `test`, rendered with `render_as` as the domain tag.
pub fn predict<F: Real, B: EncoderBackend<F>>(
    model: &QeModel<F, B>,
    test: &[QeSample],
    mode: TagMode,
    render_as: Domain,
) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let rendered: Vec<String> = test
        .iter()
        .map(|s| render_input(&s.src, &s.tgt, render_as, mode))
        .collect();
    Ok(rendered
        .par_chunks(64)
        .map(|chunk| model.forward(chunk))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .map(|p| p.as_f64())
        .collect())
}

fn rescaled(model_id: &str, gold: &[f64], pred: &[f64]) -> Result<f64> {
    pearson(pred, gold)
        .map(|p| p.rescaled)
        .map_err(|e| Error::invalid(format!("model {model_id}: {e}")))
}

/// Rescaled Pearson of the model's predictions against the gold labels.
pub fn evaluate<F: Real, B: EncoderBackend<F>>(
    model: &QeModel<F, B>,
    model_id: &str,
    test_set: &str,
    test: &[QeSample],
    mode: TagMode,
    render_as: Domain,
) -> Result<Evaluation> {
    let preds = predict(model, test, mode, render_as)?;
    let gold: Vec<f64> = test.iter().map(|s| s.label).collect();
    let pearson = rescaled(model_id, &gold, &preds)?;
    Ok(Evaluation {
        model_id: model_id.into(),
        test_set: test_set.into(),
        rows: gold
            .iter()
            .zip(&preds)
            .enumerate()
            .map(|(i, (g, p))| DumpRow {
                id: (i + 1).to_string(),
                gold: *g,
                pred: *p,
            })
            .collect(),
        pearson,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub model: String,
    pub test_set: String,
    pub file: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DumpIndex {
    pub dumps: Vec<DumpEntry>,
}

fn dump_file_name(model: &str, test_set: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    };
    format!("{}__{}.tsv", clean(model), clean(test_set))
}

impl Evaluation {
    pub fn dump_string(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.id, r.gold, r.pred))
            .collect()
    }

    pub fn from_dump(model_id: &str, test_set: &str, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: msg.into(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad("expected id, gold and prediction"));
            }
            rows.push(DumpRow {
                id: f[0].into(),
                gold: f[1].parse().map_err(|_| bad("non-numeric gold"))?,
                pred: f[2].parse().map_err(|_| bad("non-numeric prediction"))?,
            });
        }
        let gold: Vec<f64> = rows.iter().map(|r| r.gold).collect();
        let pred: Vec<f64> = rows.iter().map(|r| r.pred).collect();
        Ok(Self {
            pearson: rescaled(model_id, &gold, &pred)?,
            model_id: model_id.into(),
            test_set: test_set.into(),
            rows,
        })
    }

    pub fn gold(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gold).collect()
    }

    pub fn predictions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.pred).collect()
    }
}

impl DumpIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DUMP_INDEX);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn find(&self, model: &str, test_set: &str) -> Option<&DumpEntry> {
        self.dumps.iter().find(|d| d.model == model && d.test_set == test_set)
    }
}

/// Writes one dump per evaluation into `dir` and merges them into the
/// directory's index (entries sorted by model, then test set).
pub fn write_dumps(dir: &Path, evals: &[Evaluation]) -> Result<Vec<PathBuf>> {
    let mut index = DumpIndex::load(dir)?;
    let mut written = Vec::new();
    for e in evals {
        let file = dump_file_name(&e.model_id, &e.test_set);
        let path = dir.join(&file);
        write_file(&path, e.dump_string().as_bytes())?;
        index
            .dumps
            .retain(|d| !(d.model == e.model_id && d.test_set == e.test_set));
        index.dumps.push(DumpEntry {
            model: e.model_id.clone(),
            test_set: e.test_set.clone(),
            file,
            count: e.rows.len(),
        });
        written.push(path);
    }
    index
        .dumps
        .sort_by(|a, b| (&a.model, &a.test_set).cmp(&(&b.model, &b.test_set)));
    write_file(
        &dir.join(DUMP_INDEX),
        (serde_json::to_string_pretty(&index)? + "\n").as_bytes(),
    )?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(preds: &[f64]) -> Evaluation {
        let gold = [0.1, 0.4, 0.2, 0.9];
        Evaluation {
            model_id: "m/en-de".into(),
            test_set: "en-de".into(),
            rows: gold
                .iter()
                .zip(preds)
                .enumerate()
                .map(|(i, (g, p))| DumpRow {
                    id: (i + 1).to_string(),
                    gold: *g,
                    pred: *p,
                })
                .collect(),
            pearson: rescaled("m", &gold, preds).unwrap(),
        }
    }

    #[test]
    fn dump_round_trip_recomputes_pearson() {
        let dir = tempfile::tempdir().unwrap();
        let e = eval(&[0.3, 0.1, 0.25, 0.7]);
        write_dumps(dir.path(), std::slice::from_ref(&e)).unwrap();
        let index = DumpIndex::load(dir.path()).unwrap();
        let entry = index.find("m/en-de", "en-de").unwrap();
        assert_eq!(entry.file, "m_en-de__en-de.tsv");
        let back = Evaluation::from_dump("m/en-de", "en-de", &dir.path().join(&entry.file)).unwrap();
        assert_eq!(back, e);
        write_dumps(dir.path(), &[e]).unwrap();
        assert_eq!(DumpIndex::load(dir.path()).unwrap().dumps.len(), 1);
    }

    #[test]
    fn exact_and_affine_predictions_score_100() {
        let gold = [0.1, 0.4, 0.2, 0.9];
        assert!((eval(&gold).pearson - 100.0).abs() < 1e-9);
        let affine: Vec<f64> = gold.iter().map(|g| 2.0 * g + 3.0).collect();
        assert!((eval(&affine).pearson - 100.0).abs() < 1e-9);
    }

    #[test]
    fn constant_predictions_name_the_model() {
        let err = rescaled("m1", &[0.1, 0.2], &[0.5, 0.5]).unwrap_err();
        assert!(err.to_string().contains("m1"));
        assert!(err.to_string().contains("undefined correlation"));
    }
}

use serde::{Deserialize, Serialize};

use super::table::{Cell, EvalReport, ReportRow};
use crate::corpus::{DatasetManifest, LangPair};
use crate::error::{Error, Result};
use crate::metrics::{increase_pct, significance_grid, SignificanceTest};
use crate::trainer::TimingReport;

/// Column order of the four pipeline variants.
pub const VARIANTS: [&str; 4] = ["NOTAG DAG1", "NOTAG DAG2", "TAG DAG1", "TAG DAG2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainRow {
    pub lang_pair: String,
    pub baseline: Option<f64>,
    /// In [`VARIANTS`] order.
    pub variants: [Option<f64>; 4],
}

/// Baseline and variant scores per language pair, the best cell in bold and
/// the best cell's gain over the baseline in percent.
pub fn main_results_table(rows: &[MainRow]) -> Result<EvalReport> {
    let mut columns = vec!["Baseline".to_string()];
    columns.extend(VARIANTS.iter().map(|v| v.to_string()));
    columns.push("Increase %".into());
    let mut report = EvalReport::new("main", "Pearson (x100) per language pair", "pair", columns);
    for r in rows {
        let values: Vec<Option<f64>> = std::iter::once(r.baseline).chain(r.variants).collect();
        let best = values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).fold(
            None,
            |acc: Option<(usize, f64)>, (i, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((i, v)),
            },
        );
        let mut cells: Vec<Cell> = values.iter().map(|v| Cell::maybe(*v)).collect();
        let increase = match (best, r.baseline) {
            (Some((i, v)), Some(base)) => {
                if let Cell::Score { bold, .. } = &mut cells[i] {
                    *bold = true;
                }
                Some(increase_pct(v, base)?)
            }
            (Some((i, _)), None) => {
                if let Cell::Score { bold, .. } = &mut cells[i] {
                    *bold = true;
                }
                None
            }
            _ => None,
        };
        cells.push(Cell::maybe(increase));
        report.rows.push(ReportRow::new(r.lang_pair.clone(), cells));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotRow {
    pub trained_on: LangPair,
    pub test_set: LangPair,
    pub baseline: Option<f64>,
    pub variants: [Option<f64>; 4],
}

/// Scores on language pairs absent from every training manifest.
pub fn zeroshot_table(
    rows: &[ZeroShotRow],
    training: &[DatasetManifest],
    zero_shot: &[DatasetManifest],
) -> Result<EvalReport> {
    let seen: Vec<&LangPair> = training.iter().flat_map(|m| &m.lang_pairs).collect();
    for m in zero_shot {
        if let Some(lp) = m.lang_pairs.iter().find(|lp| seen.contains(lp)) {
            return Err(Error::NotZeroShot(format!(
                "{} contains {lp}, which appears in training data",
                m.name
            )));
        }
    }
    let declared: Vec<&LangPair> = zero_shot.iter().flat_map(|m| &m.lang_pairs).collect();
    for r in rows {
        if seen.contains(&&r.test_set) || !declared.contains(&&r.test_set) {
            return Err(Error::NotZeroShot(format!(
                "{} is not a validated zero-shot test set",
                r.test_set
            )));
        }
    }
    let mut columns = vec!["Test set".to_string(), "Baseline".to_string()];
    columns.extend(VARIANTS.iter().map(|v| v.to_string()));
    let mut report = EvalReport::new("zeroshot", "Zero-shot Pearson (x100)", "trained on", columns);
    for r in rows {
        let mut cells = vec![
            Cell::text(r.test_set.to_string().to_uppercase()),
            Cell::maybe(r.baseline),
        ];
        cells.extend(r.variants.iter().map(|v| Cell::maybe(*v)));
        report
            .rows
            .push(ReportRow::new(r.trained_on.to_string().to_uppercase(), cells));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModel {
    pub name: String,
    /// Scores on every test set, in column order.
    pub scores: Vec<f64>,
    pub baseline: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per model: its baseline's row, its own row and the difference row, each
/// with an AVG column. Extra rows (earlier steps, the untrained backend)
/// follow with their own averages.
pub fn crosslingual_matrix(
    test_sets: &[String],
    models: &[CrossModel],
    extra: &[(String, Vec<f64>)],
) -> Result<EvalReport> {
    let n = test_sets.len();
    if n == 0 {
        return Err(Error::invalid("cross-lingual matrix needs at least one test set"));
    }
    let check = |name: &str, v: &[f64]| {
        if v.len() != n {
            Err(Error::invalid(format!("{name}: {} scores for {n} test sets", v.len())))
        } else {
            Ok(())
        }
    };
    let mut columns = test_sets.to_vec();
    columns.push("AVG".into());
    let mut report = EvalReport::new("crosslingual", "Cross-lingual Pearson (x100)", "model", columns);
    let row = |label: &str, values: &[f64], own: Option<usize>, bold_avg: bool| {
        let mut cells: Vec<Cell> = values
            .iter()
            .enumerate()
            .map(|(i, v)| Cell::Score {
                value: *v,
                bold: false,
                underline: Some(i) == own,
            })
            .collect();
        cells.push(Cell::Score {
            value: mean(values),
            bold: bold_avg,
            underline: false,
        });
        ReportRow::new(label, cells)
    };
    for m in models {
        check(&m.name, &m.scores)?;
        check(&format!("{} baseline", m.name), &m.baseline)?;
        let own = test_sets.iter().position(|t| t.eq_ignore_ascii_case(&m.name));
        let delta: Vec<f64> = m.scores.iter().zip(&m.baseline).map(|(a, b)| a - b).collect();
        report.rows.push(row("Baseline", &m.baseline, own, false));
        report.rows.push(row(&m.name, &m.scores, own, false));
        report.rows.push(row("Δ", &delta, own, true));
    }
    for (name, values) in extra {
        check(name, values)?;
        report.rows.push(row(name, values, None, false));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub lang_pair: String,
    pub baseline: f64,
    pub pipeline: f64,
}

/// In-domain models on the OOD test set, compared with their baselines and
/// with the model trained on OOD data only (`ood_models[reference]`).
pub fn ood_table(rows: &[OodRow], ood_models: &[(String, f64)], reference: usize) -> Result<EvalReport> {
    let Some((_, ood_score)) = ood_models.get(reference) else {
        return Err(Error::invalid("OOD reference model index out of range"));
    };
    let mut columns: Vec<String> = rows.iter().map(|r| r.lang_pair.clone()).collect();
    columns.extend(ood_models.iter().map(|(n, _)| n.clone()));
    let mut report = EvalReport::new("ood", "Pearson (x100) on the OOD test set", "trained with", columns);
    let blanks = || vec![Cell::Blank; ood_models.len()];
    let mut first: Vec<Cell> = rows.iter().map(|r| Cell::score(r.baseline)).collect();
    first.extend(ood_models.iter().map(|(_, v)| Cell::score(*v)));
    report.rows.push(ReportRow::new("Baseline", first));
    let mut add = |label: &str, f: &dyn Fn(&OodRow) -> f64, bold: bool| {
        let mut cells: Vec<Cell> = rows
            .iter()
            .map(|r| Cell::Score {
                value: f(r),
                bold,
                underline: false,
            })
            .collect();
        cells.extend(blanks());
        report.rows.push(ReportRow::new(label, cells));
    };
    add("Our pipeline", &|r| r.pipeline, false);
    add("Δ_Baseline", &|r| r.pipeline - r.baseline, false);
    add("Δ_OOD", &|r| r.pipeline - ood_score, true);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceInput {
    pub lang_pair: String,
    pub gold: Vec<f64>,
    /// Baseline first, then the variants.
    pub systems: Vec<(String, Vec<f64>)>,
}

/// Pairwise Y/N significance per language pair; row i holds system i
/// against every later system.
pub fn significance_report(inputs: &[SignificanceInput], alpha: f64, test: SignificanceTest) -> Result<EvalReport> {
    let labels: Vec<String> = inputs
        .first()
        .map(|i| i.systems.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    if inputs
        .iter()
        .any(|i| i.systems.iter().map(|(n, _)| n).ne(labels.iter()))
    {
        return Err(Error::invalid("every language pair must list the same systems"));
    }
    let mut columns = vec!["Models".to_string()];
    columns.extend(labels.iter().skip(1).cloned());
    let mut report = EvalReport::new(
        "significance",
        &format!("Significance (p < {alpha}, {test:?})"),
        "pair",
        columns,
    );
    for input in inputs {
        let grid = significance_grid(&input.gold, &input.systems, alpha, test)?;
        for row in 0..labels.len().saturating_sub(1) {
            let mut cells = vec![Cell::text(labels[row].clone())];
            for col in 1..labels.len() {
                cells.push(match grid.cell(row, col) {
                    Some(c) => Cell::text(c.mark().to_string()),
                    None => Cell::text("-"),
                });
            }
            let label = if row == 0 {
                input.lang_pair.clone()
            } else {
                String::new()
            };
            report.rows.push(ReportRow::new(label, cells));
        }
    }
    Ok(report)
}

/// Per-step training time in hours.
pub fn timing_table(timing: &TimingReport) -> EvalReport {
    let mut report = EvalReport::new(
        "timing",
        "Training time (hours)",
        "model",
        vec!["step".into(), "hours".into(), "cached".into()],
    );
    for r in &timing.rows {
        report.rows.push(ReportRow::new(
            r.label.clone(),
            vec![
                Cell::text(r.step.to_string()),
                Cell::text(format!("{:.4}", r.hours())),
                Cell::text(if r.reused { "yes" } else { "no" }),
            ],
        ));
    }
    report
}

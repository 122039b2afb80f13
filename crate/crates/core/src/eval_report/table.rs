use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::write_file;
use crate::error::Result;

/// Rounds half to even at two decimals and prints with two digits.
pub fn fmt2(x: f64) -> String {
    let r = (x * 100.0).round_ties_even() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Cell {
    Blank,
    Score {
        value: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        bold: bool,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        underline: bool,
    },
    Text {
        text: String,
    },
}

impl Cell {
    pub fn score(value: f64) -> Self {
        Cell::Score {
            value,
            bold: false,
            underline: false,
        }
    }

    pub fn maybe(value: Option<f64>) -> Self {
        value.map_or(Cell::Blank, Cell::score)
    }

    pub fn text(t: impl Into<String>) -> Self {
        Cell::Text { text: t.into() }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Score { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn display(&self) -> String {
        match self {
            Cell::Blank => String::new(),
            Cell::Text { text } => text.clone(),
            Cell::Score { value, bold, underline } => {
                let v = fmt2(*value);
                match (bold, underline) {
                    (true, _) => format!("*{v}*"),
                    (false, true) => format!("_{v}_"),
                    _ => v,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Cell>,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, cells: Vec<Cell>) -> Self {
        Self {
            label: label.into(),
            cells,
        }
    }

    pub fn value(&self, col: usize) -> Option<f64> {
        self.cells.get(col).and_then(Cell::value)
    }
}

/// A rendered table: row labels, column headers and cells. Scores are kept
/// unrounded; rounding happens only on display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(name: &str, title: &str, corner: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            corner: corner.into(),
            columns,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// First row with this label.
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn rows_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Aligned plain text; `*x*` marks bold cells and `_x_` underlined ones.
    pub fn render_text(&self) -> String {
        let ncols = self.columns.len();
        let mut widths = vec![0; ncols + 1];
        widths[0] = self.corner.len();
        for (i, c) in self.columns.iter().enumerate() {
            widths[i + 1] = c.chars().count();
        }
        let shown: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                (0..ncols)
                    .map(|i| r.cells.get(i).map(Cell::display).unwrap_or_default())
                    .collect()
            })
            .collect();
        for (r, cells) in self.rows.iter().zip(&shown) {
            widths[0] = widths[0].max(r.label.chars().count());
            for (i, c) in cells.iter().enumerate() {
                widths[i + 1] = widths[i + 1].max(c.chars().count());
            }
        }
        let line = |label: &str, cells: &[String]| {
            let mut s = format!("{:<w$}", label, w = widths[0]);
            for (i, c) in cells.iter().enumerate() {
                let _ = write!(s, "  {:>w$}", c, w = widths[i + 1]);
            }
            s.trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        let header = line(&self.corner, &self.columns);
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{}", "-".repeat(header.chars().count()));
        for (r, cells) in self.rows.iter().zip(&shown) {
            let _ = writeln!(out, "{}", line(&r.label, cells));
        }
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Writes `<name>.txt` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let txt = dir.join(format!("{}.txt", self.name));
        let json = dir.join(format!("{}.json", self.name));
        write_file(&txt, self.render_text().as_bytes())?;
        write_file(&json, self.to_json().as_bytes())?;
        Ok((txt, json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_decimals() {
        assert_eq!(fmt2(10.0275), "10.03");
        assert_eq!(fmt2(0.125), "0.12");
        assert_eq!(fmt2(0.375), "0.38");
        assert_eq!(fmt2(-0.001), "0.00");
        assert_eq!(fmt2(-9.71), "-9.71");
    }

    #[test]
    fn renders_aligned() {
        let mut r = EvalReport::new("t", "Title", "pair", vec!["a".into(), "longer".into()]);
        r.rows.push(ReportRow::new("x", vec![Cell::score(1.0), Cell::Blank]));
        r.rows.push(ReportRow::new(
            "yy",
            vec![
                Cell::Score {
                    value: 12.345,
                    bold: true,
                    underline: false,
                },
                Cell::text("Y"),
            ],
        ));
        let text = r.render_text();
        assert_eq!(
            text,
            "Title\npair        a  longer\n---------------------\nx        1.00\nyy    *12.34*       Y\n"
        );
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}

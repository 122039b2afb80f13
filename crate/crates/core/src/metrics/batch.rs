//! Line-oriented batch TER scoring.
//!
//! Input: one `hyp<TAB>ref` pair per line. Output: one line per input,
//! `ins<TAB>del<TAB>sub<TAB>shft<TAB>ref_len<TAB>score` with the score printed
//! to 6 fractional digits. Equivalence between scorers is judged on the five
//! integer columns only.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ter::{ter, TerScore};
use super::tokenize::{tokenize_tercom, TokenizeOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub pairs: usize,
    pub total_edits: usize,
    pub total_ref_len: usize,
    /// Corpus TER: total edits over total reference length (0 when empty).
    pub corpus_ter: f64,
    pub wall_clock_seconds: f64,
}

pub fn format_score_line(s: &TerScore) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{:.6}",
        s.insertions,
        s.deletions,
        s.substitutions,
        s.shifts,
        s.ref_len,
        s.score_f64()
    )
}

/// Parses the integer columns of an output line.
pub fn parse_score_line(line: &str) -> Option<TerScore> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 6 {
        return None;
    }
    let n = |i: usize| f[i].parse::<usize>().ok();
    Some(TerScore {
        insertions: n(0)?,
        deletions: n(1)?,
        substitutions: n(2)?,
        shifts: n(3)?,
        ref_len: n(4)?,
    })
}

/// Scores pre-split lines, in parallel, preserving order. `origin` names the
/// source in error messages.
pub fn score_lines(lines: &[String], opts: TokenizeOptions, origin: &Path) -> Result<Vec<TerScore>> {
    lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let parse_err = |msg: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: msg.to_owned(),
            };
            let mut fields = line.split('\t');
            let (Some(hyp), Some(reference), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err("expected exactly 2 tab-separated fields: hyp, ref"));
            };
            let h = tokenize_tercom(hyp, opts);
            let r = tokenize_tercom(reference, opts);
            ter(&h, &r).map_err(|e| parse_err(&e.to_string()))
        })
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| {
            l.map(|l| l.strip_suffix('\r').map(str::to_owned).unwrap_or(l))
                .map_err(|e| Error::io(path, e))
        })
        .collect()
}

fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Scores `input` into `output`. Nothing is left at `output` on error.
pub fn score_file(input: &Path, output: &Path, opts: TokenizeOptions) -> Result<BatchSummary> {
    let started = Instant::now();
    let lines = read_lines(input)?;
    let scores = score_lines(&lines, opts, input)?;
    let tmp = temp_sibling(output);
    let write = || -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for s in &scores {
            writeln!(w, "{}", format_score_line(s))?;
        }
        w.flush()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(output, e));
    }
    fs::rename(&tmp, output).map_err(|e| Error::io(output, e))?;

    Ok(summarize(&scores, started.elapsed().as_secs_f64()))
}

/// Totals over scored pairs.
pub fn summarize(scores: &[TerScore], wall_clock_seconds: f64) -> BatchSummary {
    let total_edits = scores.iter().map(TerScore::edits).sum();
    let total_ref_len = scores.iter().map(|s| s.ref_len).sum();
    BatchSummary {
        pairs: scores.len(),
        total_edits,
        total_ref_len,
        corpus_ter: if total_ref_len == 0 {
            0.0
        } else {
            total_edits as f64 / total_ref_len as f64
        },
        wall_clock_seconds,
    }
}

/// Reads an output file of the batch contract back into tuples.
pub fn read_score_file(path: &Path) -> Result<Vec<TerScore>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            parse_score_line(l).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "malformed score line".into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_identity_line() {
        let dir = tempfile::tempdir().unwrap();
        let (inp, out) = (dir.path().join("in.tsv"), dir.path().join("out.tsv"));
        fs::write(&inp, "a b\ta b\n").unwrap();
        let summary = score_file(&inp, &out, TokenizeOptions::default()).unwrap();
        assert_eq!(summary.pairs, 1);
        assert_eq!(fs::read_to_string(&out).unwrap(), "0\t0\t0\t0\t2\t0.000000\n");
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        let (inp, out) = (dir.path().join("in.tsv"), dir.path().join("out.tsv"));
        fs::write(&inp, "").unwrap();
        let summary = score_file(&inp, &out, TokenizeOptions::default()).unwrap();
        assert_eq!(summary.pairs, 0);
        assert_eq!(fs::read_to_string(&out).unwrap(), "");
    }

    #[test]
    fn malformed_line_reports_number_and_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let (inp, out) = (dir.path().join("in.tsv"), dir.path().join("out.tsv"));
        fs::write(&inp, "a\ta\nno tab here\n").unwrap();
        let err = score_file(&inp, &out, TokenizeOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(!out.exists());
        assert!(!temp_sibling(&out).exists());
    }

    #[test]
    fn output_line_round_trips_integers() {
        let s = TerScore {
            insertions: 1,
            deletions: 2,
            substitutions: 3,
            shifts: 1,
            ref_len: 9,
        };
        let line = format_score_line(&s);
        assert_eq!(line, "1\t2\t3\t1\t9\t0.777778");
        assert_eq!(parse_score_line(&line), Some(s));
    }
}

//! QE and parallel datasets: loading, validation, seeded splitting,
//! subsampling, concatenation and manifests.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Literals reserved by the input template; samples containing them are
/// rejected so rendering stays injective.
pub const RESERVED_LITERALS: [&str; 4] = ["<s>", "</s>", "<ID>", "<OOD>"];

/// Any label above this marks a file as percentage-scaled.
pub const PERCENT_DETECTION_THRESHOLD: f64 = 5.0;

/// Ordered language pair, written `src-tgt` (e.g. `en-de`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LangPair {
    pub src: String,
    pub tgt: String,
}

impl LangPair {
    pub fn new(src: &str, tgt: &str) -> Result<Self> {
        if src.trim().is_empty() || tgt.trim().is_empty() {
            return Err(Error::invalid("language codes must be non-empty"));
        }
        Ok(Self {
            src: src.trim().to_lowercase(),
            tgt: tgt.trim().to_lowercase(),
        })
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.src, self.tgt)
    }
}

impl FromStr for LangPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((a, b)) if !b.contains('-') => LangPair::new(a, b),
            _ => Err(Error::invalid(format!(
                "language pair must look like `en-de`, got `{s}`"
            ))),
        }
    }
}

impl Serialize for LangPair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LangPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "ID", alias = "id")]
    Id,
    #[serde(rename = "OOD", alias = "ood")]
    Ood,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Id => "ID",
            Domain::Ood => "OOD",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id" => Ok(Domain::Id),
            "ood" => Ok(Domain::Ood),
            _ => Err(Error::invalid(format!("domain must be `id` or `ood`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Authentic,
    Synthetic,
}

/// One (source, target, quality label) triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeSample {
    pub src: String,
    pub tgt: String,
    /// TER/HTER as a fraction (not a percentage).
    pub label: f64,
    pub lang_pair: LangPair,
    pub domain: Domain,
    pub origin: Origin,
}

fn check_text(what: &str, text: &str) -> std::result::Result<(), String> {
    if text.trim().is_empty() {
        return Err(format!("empty {what}"));
    }
    if let Some(lit) = RESERVED_LITERALS.iter().find(|l| text.contains(*l)) {
        return Err(format!("{what} contains reserved literal {lit}"));
    }
    Ok(())
}

impl QeSample {
    pub fn new(
        src: impl Into<String>,
        tgt: impl Into<String>,
        label: f64,
        lang_pair: LangPair,
        domain: Domain,
        origin: Origin,
    ) -> Result<Self> {
        let s = Self {
            src: src.into(),
            tgt: tgt.into(),
            label,
            lang_pair,
            domain,
            origin,
        };
        s.validate().map_err(Error::Invalid)?;
        Ok(s)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.label >= 0.0) || !self.label.is_finite() {
            return Err(format!("negative or non-finite label {}", self.label));
        }
        check_text("source", &self.src)?;
        // translations produced for synthetic data may legitimately be empty
        if self.origin == Origin::Synthetic && self.tgt.trim().is_empty() {
            return Ok(());
        }
        check_text("target", &self.tgt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSample {
    pub src: String,
    pub reference: String,
    pub lang_pair: LangPair,
}

/// How to interpret label magnitudes on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScale {
    /// Divide by 100 when any label exceeds [`PERCENT_DETECTION_THRESHOLD`].
    #[default]
    Auto,
    Fraction,
    Percent,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn text_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l))
}

/// Loads a `src<TAB>tgt<TAB>label` file. Extra fields are ignored.
pub fn load_qe_tsv(path: &Path, lang_pair: &LangPair, domain: Domain, origin: Origin) -> Result<Vec<QeSample>> {
    load_qe_tsv_with(path, lang_pair, domain, origin, LabelScale::Auto)
}

pub fn load_qe_tsv_with(
    path: &Path,
    lang_pair: &LangPair,
    domain: Domain,
    origin: Origin,
    scale: LabelScale,
) -> Result<Vec<QeSample>> {
    let text = read_text(path)?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut samples = Vec::new();
    for (i, row) in text_lines(&text).enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() < 3 {
            return Err(err(
                line,
                format!(
                    "malformed row: expected >= 3 tab-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let label: f64 = fields[2]
            .trim()
            .parse()
            .ok()
            .filter(|l: &f64| l.is_finite())
            .ok_or_else(|| err(line, format!("non-numeric label `{}`", fields[2])))?;
        if label < 0.0 {
            return Err(err(line, format!("negative label at line {line}")));
        }
        let sample = QeSample {
            src: fields[0].to_owned(),
            tgt: fields[1].to_owned(),
            label,
            lang_pair: lang_pair.clone(),
            domain,
            origin,
        };
        sample.validate().map_err(|m| err(line, m))?;
        samples.push(sample);
    }

    let percent = match scale {
        LabelScale::Fraction => false,
        LabelScale::Percent => true,
        LabelScale::Auto => {
            let detected = samples.iter().any(|s| s.label > PERCENT_DETECTION_THRESHOLD);
            if detected {
                info!(
                    "{}: labels above {PERCENT_DETECTION_THRESHOLD} found, treating file as percentage-scaled",
                    path.display()
                );
            }
            detected
        }
    };
    if percent {
        for s in &mut samples {
            s.label /= 100.0;
        }
    }
    Ok(samples)
}

/// Canonical triplet serialization, one sample per line.
pub fn qe_tsv_string(samples: &[QeSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&s.src);
        out.push('\t');
        out.push_str(&s.tgt);
        out.push('\t');
        out.push_str(&s.label.to_string());
        out.push('\n');
    }
    out
}

pub fn write_qe_tsv(path: &Path, samples: &[QeSample]) -> Result<()> {
    write_file(path, qe_tsv_string(samples).as_bytes())
}

/// Creates parent directories as needed.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Loads two line-aligned plain-text files.
pub fn load_parallel(src_path: &Path, ref_path: &Path, lang_pair: &LangPair) -> Result<Vec<ParallelSample>> {
    let src_text = read_text(src_path)?;
    let ref_text = read_text(ref_path)?;
    let src: Vec<&str> = text_lines(&src_text).collect();
    let refs: Vec<&str> = text_lines(&ref_text).collect();
    if src.len() != refs.len() {
        return Err(Error::LineCountMismatch {
            src: src.len(),
            reference: refs.len(),
        });
    }
    src.into_iter()
        .zip(refs)
        .enumerate()
        .map(|(i, (s, r))| {
            for (path, text) in [(src_path, s), (ref_path, r)] {
                if text.trim().is_empty() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        msg: "empty line".into(),
                    });
                }
            }
            Ok(ParallelSample {
                src: s.to_owned(),
                reference: r.to_owned(),
                lang_pair: lang_pair.clone(),
            })
        })
        .collect()
}

/// Train/dev/test ratios plus shuffling seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.98, 0.01, 0.01],
            seed: 8,
            shuffle: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid(format!(
                "split ratios must lie in [0, 1]: {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    /// Floor allocation: dev and test get `floor(n * r)`, train keeps the
    /// remainder. A 1e-9 slack absorbs products such as `0.07 * 100`.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let part = |r: f64| (n as f64 * r + 1e-9).floor() as usize;
        let (dev, test) = (part(self.ratios[1]), part(self.ratios[2]));
        let train = n
            .checked_sub(dev + test)
            .ok_or_else(|| Error::invalid("split ratios over-allocate"))?;
        let sizes = [train, dev, test];
        for (size, ratio) in sizes.iter().zip(self.ratios) {
            if *size == 0 && ratio > 0.0 {
                return Err(Error::invalid(format!(
                    "dataset of {n} samples too small: ratio {ratio} yields an empty part"
                )));
            }
        }
        Ok(sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Source indices of each part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    let [train, dev, _] = spec.sizes(n)?;
    let order = if spec.shuffle {
        rng::permutation(n, spec.seed)
    } else {
        (0..n).collect()
    };
    Ok(SplitIndices {
        train: order[..train].to_vec(),
        dev: order[train..train + dev].to_vec(),
        test: order[train + dev..].to_vec(),
    })
}

pub fn split<T: Clone>(dataset: &[T], spec: &SplitSpec) -> Result<DataSplit<T>> {
    let idx = split_indices(dataset.len(), spec)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| dataset[i].clone()).collect();
    Ok(DataSplit {
        train: pick(&idx.train),
        dev: pick(&idx.dev),
        test: pick(&idx.test),
    })
}

/// `n` distinct samples chosen under `seed`, in their original order.
pub fn subsample<T: Clone>(dataset: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > dataset.len() {
        return Err(Error::invalid(format!(
            "cannot subsample {n} from {} samples",
            dataset.len()
        )));
    }
    Ok(rng::choose_sorted(dataset.len(), n, seed)
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}

pub fn concat<T: Clone>(datasets: &[Vec<T>]) -> Vec<T> {
    datasets.iter().flatten().cloned().collect()
}

/// SHA-256 over the canonical serialization of every sample, metadata
/// included.
pub fn fingerprint(samples: &[QeSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(format!(
            "{}\t{}\t{:?}\t{}\t{}\t{:?}\n",
            s.src, s.tgt, s.label, s.lang_pair, s.domain, s.origin
        ));
    }
    hex::encode(h.finalize())
}

/// Persisted description of a dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub paths: Vec<PathBuf>,
    pub lang_pairs: Vec<LangPair>,
    pub domain: Option<Domain>,
    pub origin: Option<Origin>,
    pub count: usize,
    pub content_hash: String,
}

impl DatasetManifest {
    pub fn describe(name: &str, paths: Vec<PathBuf>, samples: &[QeSample]) -> Self {
        let mut lang_pairs: Vec<LangPair> = samples.iter().map(|s| s.lang_pair.clone()).collect();
        lang_pairs.sort();
        lang_pairs.dedup();
        let uniform = |f: &dyn Fn(&QeSample) -> String| {
            samples
                .first()
                .map(f)
                .filter(|first| samples.iter().all(|s| &f(s) == first))
        };
        let domain = uniform(&|s| s.domain.to_string()).map(|_| samples[0].domain);
        let origin = uniform(&|s| format!("{:?}", s.origin)).map(|_| samples[0].origin);
        Self {
            name: name.to_owned(),
            paths,
            lang_pairs,
            domain,
            origin,
            count: samples.len(),
            content_hash: fingerprint(samples),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&read_text(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp() -> LangPair {
        "en-de".parse().unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "guten Tag\tgood day\t0.0\n");
        let d = load_qe_tsv(&p, &lp(), Domain::Id, Origin::Authentic).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].label, 0.0);
        assert_eq!(d[0].tgt, "good day");
    }

    #[test]
    fn negative_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "a\tb\t0.1\nc\td\t-0.2\n");
        let err = load_qe_tsv(&p, &lp(), Domain::Id, Origin::Authentic).unwrap_err();
        assert!(err.to_string().contains("negative label at line 2"), "{err}");
    }

    #[test]
    fn malformed_and_non_numeric_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "a\tb\n");
        let err = load_qe_tsv(&p, &lp(), Domain::Id, Origin::Authentic).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let p = write(dir.path(), "b.tsv", "a\tb\t0.1\nx\ty\tabc\n");
        let err = load_qe_tsv(&p, &lp(), Domain::Id, Origin::Authentic).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn reserved_literal_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "a </s> b\tc\t0.1\n");
        assert!(load_qe_tsv(&p, &lp(), Domain::Id, Origin::Authentic).is_err());
        assert!(QeSample::new("x", "y <ID>", 0.0, lp(), Domain::Id, Origin::Authentic).is_err());
    }

    #[test]
    fn extra_fields_ignored_and_percent_detected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "a\tb\t25\textra\nc\td\t50\n");
        let d = load_qe_tsv(&p, &lp(), Domain::Ood, Origin::Authentic).unwrap();
        assert_eq!(d[0].label, 0.25);
        assert_eq!(d[1].label, 0.5);
        let d = load_qe_tsv_with(&p, &lp(), Domain::Ood, Origin::Authentic, LabelScale::Fraction).unwrap();
        assert_eq!(d[0].label, 25.0);
    }

    #[test]
    fn parallel_loading() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.txt", "a\nb\n");
        let r = write(dir.path(), "r.txt", "x\ny\n");
        let d = load_parallel(&s, &r, &lp()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[1].reference, "y");

        let s3 = write(dir.path(), "s3.txt", "a\nb\nc\n");
        let err = load_parallel(&s3, &r, &lp()).unwrap_err();
        assert_eq!(err.to_string(), "line count mismatch 3 vs 2");

        let e1 = write(dir.path(), "e1.txt", "");
        let e2 = write(dir.path(), "e2.txt", "");
        assert!(load_parallel(&e1, &e2, &lp()).unwrap().is_empty());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(1000).unwrap(), [980, 10, 10]);
        assert_eq!(spec.sizes(9000).unwrap(), [8820, 90, 90]);
        assert!(spec.sizes(50).is_err());
        let d: Vec<u32> = (0..1000).collect();
        let s = split(&d, &spec).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (980, 10, 10));
        assert_eq!(s, split(&d, &spec).unwrap());
    }

    #[test]
    fn unshuffled_split_is_contiguous() {
        let spec = SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
            shuffle: false,
        };
        let d: Vec<u32> = (0..10).collect();
        let s = split(&d, &spec).unwrap();
        assert_eq!(s.train, (0..8).collect::<Vec<_>>());
        assert_eq!((s.dev, s.test), (vec![8], vec![9]));
    }

    #[test]
    fn invalid_split_specs() {
        let bad = SplitSpec {
            ratios: [0.5, 0.3, 0.3],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(split::<u8>(&[], &SplitSpec::default()).is_err());
    }

    #[test]
    fn subsample_edges() {
        let d: Vec<u32> = (0..10).collect();
        assert_eq!(subsample(&d, 10, 3).unwrap(), d);
        assert!(subsample(&d, 0, 3).unwrap().is_empty());
        assert_eq!(subsample(&d, 4, 3).unwrap(), subsample(&d, 4, 3).unwrap());
        assert!(subsample(&d, 11, 3).is_err());
    }

    #[test]
    fn concat_edges() {
        let a = vec![1, 2];
        assert!(concat::<u8>(&[]).is_empty());
        assert_eq!(concat(std::slice::from_ref(&a)), a);
        assert_eq!(concat(&[a.clone(), vec![3]]), vec![1, 2, 3]);
    }

    #[test]
    fn lang_pair_parsing() {
        let p: LangPair = "EN-DE".parse().unwrap();
        assert_eq!(p.to_string(), "en-de");
        assert!("ende".parse::<LangPair>().is_err());
        assert!("-de".parse::<LangPair>().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = vec![QeSample::new("a", "b", 0.5, lp(), Domain::Id, Origin::Authentic).unwrap()];
        let m = DatasetManifest::describe("x", vec![], &s);
        assert_eq!(m.domain, Some(Domain::Id));
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        assert_eq!(DatasetManifest::load(&p).unwrap(), m);
    }
}

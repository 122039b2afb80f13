//! A small synthetic QE task for exercising the pipeline end to end.
//!
//! Every language is a letter cipher of one base lexicon, so reference
//! translations are word-for-word. Machine output is a corrupted reference
//! (substituted noise words, deletions, insertions, swaps) and the label is
//! its exact TER. In-domain and out-of-domain data draw substitutes from
//! partially different noise vocabularies.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_file, write_qe_tsv, DataSplit, DatasetManifest, Domain, LangPair, Origin, ParallelSample, QeSample,
};
use crate::error::{Error, Result};
use crate::metrics::ter_sentence;
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskConfig {
    pub seed: u64,
    /// Size of the shared lexicon.
    pub concepts: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Upper bound of the per-sentence corruption rate.
    pub max_corruption: f64,
    pub ood_pair: LangPair,
    pub id_pairs: Vec<LangPair>,
    pub zero_shot_pairs: Vec<LangPair>,
    /// Train, dev and test sizes.
    pub ood_sizes: [usize; 3],
    pub id_sizes: [usize; 3],
    pub zero_shot_size: usize,
    /// Parallel sentences per ID pair, for synthetic data.
    pub parallel_size: usize,
    /// Noise words used by both domains, and by each domain alone.
    pub shared_noise: usize,
    pub domain_noise: usize,
}

impl Default for DeskConfig {
    fn default() -> Self {
        let lp = |s: &str| s.parse().expect("valid pair");
        Self {
            seed: 8,
            concepts: 400,
            min_len: 5,
            max_len: 14,
            max_corruption: 0.6,
            ood_pair: lp("en-it"),
            id_pairs: vec![lp("en-de"), lp("en-zh"), lp("ro-en"), lp("ru-en")],
            zero_shot_pairs: vec![lp("en-cs"), lp("en-ja")],
            ood_sizes: [4000, 400, 400],
            id_sizes: [700, 150, 200],
            zero_shot_size: 200,
            parallel_size: 1000,
            shared_noise: 8,
            domain_noise: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeskCorpus {
    pub ood: DataSplit<QeSample>,
    pub id: Vec<(LangPair, DataSplit<QeSample>)>,
    pub zero_shot: Vec<(LangPair, Vec<QeSample>)>,
    pub parallel: Vec<(LangPair, Vec<ParallelSample>)>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables(rng: &mut SeededRng, n: usize) -> String {
    let mut w = String::new();
    for _ in 0..n {
        w.push(CONSONANTS[rng::bounded(rng, CONSONANTS.len())] as char);
        w.push(VOWELS[rng::bounded(rng, VOWELS.len())] as char);
    }
    w
}

fn name_seed(seed: u64, name: &str) -> u64 {
    name.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

struct Lexicon {
    base: Vec<String>,
    noise_shared: Vec<String>,
    noise_id: Vec<String>,
    noise_ood: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &DeskConfig) -> Self {
        let mut r = rng::seeded(name_seed(cfg.seed, "lexicon"));
        let mut base: Vec<String> = Vec::with_capacity(cfg.concepts);
        while base.len() < cfg.concepts {
            let n = 1 + rng::bounded(&mut r, 3);
            let w = syllables(&mut r, n);
            if !base.contains(&w) {
                base.push(w);
            }
        }
        // a trailing digit keeps noise words out of every cipher's image
        let mut noise = |k: usize, tag: u32| -> Vec<String> {
            (0..k)
                .map(|i| format!("{}{}{}", syllables(&mut r, 2), tag, i))
                .collect()
        };
        Self {
            noise_shared: noise(cfg.shared_noise, 0),
            noise_id: noise(cfg.domain_noise, 1),
            noise_ood: noise(cfg.domain_noise, 2),
            base,
        }
    }

    fn noise_for(&self, domain: Domain) -> Vec<&str> {
        let own = match domain {
            Domain::Id => &self.noise_id,
            Domain::Ood => &self.noise_ood,
        };
        self.noise_shared.iter().chain(own).map(String::as_str).collect()
    }
}

/// Letter substitution for one language; English is the identity.
fn cipher(seed: u64, lang: &str) -> [u8; 26] {
    let mut table: [u8; 26] = std::array::from_fn(|i| b'a' + i as u8);
    if lang != "en" {
        rng::shuffle(&mut table, &mut rng::seeded(name_seed(seed, lang)));
    }
    table
}

fn encipher(word: &str, table: &[u8; 26]) -> String {
    word.bytes().map(|b| table[(b - b'a') as usize] as char).collect()
}

struct PairGen<'a> {
    lex: &'a Lexicon,
    src: [u8; 26],
    tgt: [u8; 26],
    cfg: &'a DeskConfig,
}

impl<'a> PairGen<'a> {
    fn new(lex: &'a Lexicon, cfg: &'a DeskConfig, lp: &LangPair) -> Self {
        Self {
            lex,
            src: cipher(cfg.seed, &lp.src),
            tgt: cipher(cfg.seed, &lp.tgt),
            cfg,
        }
    }

    fn sentence(&self, r: &mut SeededRng) -> (Vec<String>, Vec<String>) {
        let span = self.cfg.max_len - self.cfg.min_len + 1;
        let len = self.cfg.min_len + rng::bounded(r, span);
        (0..len)
            .map(|_| {
                let w = &self.lex.base[rng::bounded(r, self.lex.base.len())];
                (encipher(w, &self.src), encipher(w, &self.tgt))
            })
            .unzip()
    }

    fn corrupt(&self, reference: &[String], noise: &[&str], r: &mut SeededRng) -> Vec<String> {
        let rate: f64 = r.random::<f64>() * self.cfg.max_corruption;
        let pick = |r: &mut SeededRng| noise[rng::bounded(r, noise.len())].to_string();
        let mut out: Vec<String> = Vec::with_capacity(reference.len() + 4);
        for w in reference {
            if r.random::<f64>() >= rate {
                out.push(w.clone());
                continue;
            }
            match rng::bounded(r, 20) {
                0..=10 => out.push(pick(r)),
                11..=14 => {}
                15..=17 => {
                    out.push(w.clone());
                    out.push(pick(r));
                }
                _ => {
                    out.push(w.clone());
                    let n = out.len();
                    if n >= 2 {
                        out.swap(n - 1, n - 2);
                    }
                }
            }
        }
        if out.is_empty() {
            out.push(pick(r));
        }
        out
    }

    fn qe_samples(&self, lp: &LangPair, domain: Domain, n: usize, r: &mut SeededRng) -> Result<Vec<QeSample>> {
        let noise = self.lex.noise_for(domain);
        let drafts: Vec<(String, String, String)> = (0..n)
            .map(|_| {
                let (src, reference) = self.sentence(r);
                let hyp = self.corrupt(&reference, &noise, r).join(" ");
                (src.join(" "), hyp, reference.join(" "))
            })
            .collect();
        drafts
            .into_par_iter()
            .map(|(src, hyp, reference)| {
                let label = ter_sentence(&hyp, &reference)?.score_f64();
                QeSample::new(src, hyp, label, lp.clone(), domain, Origin::Authentic)
            })
            .collect()
    }

    fn split(
        &self,
        lp: &LangPair,
        domain: Domain,
        sizes: [usize; 3],
        r: &mut SeededRng,
    ) -> Result<DataSplit<QeSample>> {
        Ok(DataSplit {
            train: self.qe_samples(lp, domain, sizes[0], r)?,
            dev: self.qe_samples(lp, domain, sizes[1], r)?,
            test: self.qe_samples(lp, domain, sizes[2], r)?,
        })
    }
}

/// Builds the whole desk corpus from `cfg`.
pub fn generate(cfg: &DeskConfig) -> Result<DeskCorpus> {
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "bad sentence length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    if cfg.concepts == 0 || cfg.shared_noise + cfg.domain_noise == 0 {
        return Err(Error::Config(
            "desk lexicon and noise vocabularies must be non-empty".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.max_corruption) {
        return Err(Error::Config("max_corruption must lie in [0, 1]".into()));
    }
    let lex = Lexicon::new(cfg);
    let stream = |lp: &LangPair, what: &str| rng::seeded(name_seed(cfg.seed, &format!("{lp}/{what}")));

    let g = PairGen::new(&lex, cfg, &cfg.ood_pair);
    let ood = g.split(
        &cfg.ood_pair,
        Domain::Ood,
        cfg.ood_sizes,
        &mut stream(&cfg.ood_pair, "ood"),
    )?;

    let mut id = Vec::new();
    let mut parallel = Vec::new();
    for lp in &cfg.id_pairs {
        let g = PairGen::new(&lex, cfg, lp);
        id.push((
            lp.clone(),
            g.split(lp, Domain::Id, cfg.id_sizes, &mut stream(lp, "id"))?,
        ));
        let mut r = stream(lp, "parallel");
        let pairs = (0..cfg.parallel_size)
            .map(|_| {
                let (s, t) = g.sentence(&mut r);
                ParallelSample {
                    src: s.join(" "),
                    reference: t.join(" "),
                    lang_pair: lp.clone(),
                }
            })
            .collect();
        parallel.push((lp.clone(), pairs));
    }
    let mut zero_shot = Vec::new();
    for lp in &cfg.zero_shot_pairs {
        let g = PairGen::new(&lex, cfg, lp);
        zero_shot.push((
            lp.clone(),
            g.qe_samples(lp, Domain::Id, cfg.zero_shot_size, &mut stream(lp, "zero-shot"))?,
        ));
    }
    Ok(DeskCorpus {
        ood,
        id,
        zero_shot,
        parallel,
    })
}

fn save_set(dir: &Path, name: &str, samples: &[QeSample], written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(format!("{name}.tsv"));
    write_qe_tsv(&path, samples)?;
    let label = dir
        .file_name()
        .map(|d| d.to_string_lossy().into_owned())
        .unwrap_or_default();
    DatasetManifest::describe(&format!("{label}/{name}"), vec![path.clone()], samples)
        .save(&dir.join(format!("{name}.manifest.json")))?;
    written.push(path);
    Ok(())
}

impl DeskCorpus {
    /// Writes the corpus as QE triplet files with manifests:
    /// `ood/`, `id/<pair>/`, `zeroshot/<pair>/` and `parallel/<pair>.{src,ref}`.
    pub fn save(&self, root: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let ood = root.join("ood");
        save_set(&ood, "train", &self.ood.train, &mut written)?;
        save_set(&ood, "dev", &self.ood.dev, &mut written)?;
        save_set(&ood, "test", &self.ood.test, &mut written)?;
        for (lp, split) in &self.id {
            let dir = root.join("id").join(lp.to_string());
            save_set(&dir, "train", &split.train, &mut written)?;
            save_set(&dir, "dev", &split.dev, &mut written)?;
            save_set(&dir, "test", &split.test, &mut written)?;
        }
        for (lp, set) in &self.zero_shot {
            save_set(&root.join("zeroshot").join(lp.to_string()), "test", set, &mut written)?;
        }
        for (lp, pairs) in &self.parallel {
            let base = root.join("parallel");
            let src: String = pairs.iter().map(|p| format!("{}\n", p.src)).collect();
            let reference: String = pairs.iter().map(|p| format!("{}\n", p.reference)).collect();
            let (sp, rp) = (base.join(format!("{lp}.src")), base.join(format!("{lp}.ref")));
            write_file(&sp, src.as_bytes())?;
            write_file(&rp, reference.as_bytes())?;
            written.push(sp);
            written.push(rp);
        }
        Ok(written)
    }
}

/// Experiment settings sized for the desk corpus.
pub const DESK_STEPS: &str = r#"[steps.step1]
eval_interval = 100
max_updates = 4000
batch_size = 16
optimizer = { lr = 0.003 }

[steps.step2]
eval_interval = 50
max_updates = 2000
batch_size = 16
optimizer = { lr = 0.003 }

[steps.step3]
eval_interval = 50
max_updates = 1000
batch_size = 16
optimizer = { lr = 0.003 }

[steps.baseline]
eval_interval = 50
max_updates = 2000
batch_size = 16
optimizer = { lr = 0.003 }
"#;

fn dataset_entry(name: &str, path: &str, lp: &LangPair, domain: Domain, role: &str) -> String {
    format!("[[datasets]]\nname = \"{name}\"\npath = \"{path}\"\nlang_pair = \"{lp}\"\ndomain = \"{domain}\"\nrole = \"{role}\"\n\n")
}

impl DeskCorpus {
    /// An experiment config over the files written by [`DeskCorpus::save`],
    /// with paths relative to `root`.
    pub fn config_toml(&self, seed: u64, output_dir: &str) -> String {
        let mut out =
            format!("name = \"desk\"\nseed = {seed}\noutput_dir = \"{output_dir}\"\ntag_mode = \"notag\"\n\n");
        out.push_str("[augment]\napproach = \"dag1\"\nood_ratio = 1.0\n\n");
        // the synthetic portion is capped so that the Step-2 mix still finds
        // one OOD sample per in-domain sample
        let id_total: usize = self.id.iter().map(|(_, s)| s.train.len()).sum();
        let spare = self.ood.train.len().saturating_sub(id_total) / self.parallel.len().max(1);
        for (lp, pairs) in &self.parallel {
            let n = pairs.len() / 2 * 2;
            let id_len = self
                .id
                .iter()
                .find(|(p, _)| p == lp)
                .map_or(n / 2, |(_, s)| s.train.len());
            out.push_str(&format!(
                "[[augment.synthesis]]\nparallel = \"parallel-{lp}\"\nn = {n}\nportion = {}\n\n",
                (n / 2).min(id_len).min(spare).max(1)
            ));
        }
        out.push_str("[augment.translator.train]\neval_interval = 50\nmax_updates = 600\nbatch_size = 16\n\n");
        out.push_str(DESK_STEPS);
        out.push('\n');
        let ood_lp = self.ood.train.first().map(|s| s.lang_pair.clone());
        if let Some(lp) = &ood_lp {
            for role in ["train", "dev", "test"] {
                out.push_str(&dataset_entry(
                    &format!("ood-{role}"),
                    &format!("ood/{role}.tsv"),
                    lp,
                    Domain::Ood,
                    role,
                ));
            }
        }
        for (lp, _) in &self.id {
            for role in ["train", "dev", "test"] {
                out.push_str(&dataset_entry(
                    &format!("{lp}-{role}"),
                    &format!("id/{lp}/{role}.tsv"),
                    lp,
                    Domain::Id,
                    role,
                ));
            }
        }
        for (lp, _) in &self.zero_shot {
            out.push_str(&dataset_entry(
                &format!("{lp}-zero-shot"),
                &format!("zeroshot/{lp}/test.tsv"),
                lp,
                Domain::Id,
                "zero-shot",
            ));
        }
        for (lp, _) in &self.parallel {
            out.push_str(&format!(
                "[[parallel]]\nname = \"parallel-{lp}\"\nlang_pair = \"{lp}\"\nsrc = \"parallel/{lp}.src\"\nreference = \"parallel/{lp}.ref\"\n\n"
            ));
        }
        out
    }
}

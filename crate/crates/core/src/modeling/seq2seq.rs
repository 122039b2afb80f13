//! Character-level encoder-decoder used as the desk-scale translator.
//!
//! Each output step sees a window of source characters around the aligned
//! position (monotone alignment, position `t` for output step `t`) and the
//! previously emitted character, passes them through one tanh layer, and
//! scores the next character with a softmax. Enough for copy and
//! character-substitution tasks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{params_to_bytes, AdamW, OptimizerConfig, ParamTensor};
use crate::augment::Translator;
use crate::error::{Error, Result};
use crate::rng::{self, seeded};
use crate::scalar::Real;
use crate::trainer::should_stop;

const PAD: u32 = 0;
const BOS: u32 = 1;
const EOS: u32 = 2;
const UNK: u32 = 3;
const SPECIALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqConfig {
    /// Characters known to the model besides the specials.
    pub alphabet: String,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Source characters visible on each side of the aligned position.
    pub window: usize,
    /// Decoding stops at end-of-sequence or `source length + max_extra_len`.
    pub max_extra_len: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self {
            alphabet: (' '..='~').collect(),
            embed_dim: 12,
            hidden: 48,
            window: 1,
            max_extra_len: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySeq2Seq<F> {
    cfg: Seq2SeqConfig,
    chars: Vec<char>,
    params: Vec<ParamTensor<F>>,
}

const SRC_EMBED: usize = 0;
const TGT_EMBED: usize = 1;
const W1: usize = 2;
const B1: usize = 3;
const W2: usize = 4;
const B2: usize = 5;

struct StepCache<F> {
    x: Vec<F>,
    feats: Vec<u32>,
    h: Vec<F>,
    probs: Vec<F>,
}

/// Builds an untrained translator.
pub fn toy_seq2seq<F: Real>(seed: u64, config: &Seq2SeqConfig) -> ToySeq2Seq<F> {
    ToySeq2Seq::new(seed, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MtTrainConfig {
    pub eval_interval: usize,
    pub patience: usize,
    pub max_updates: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for MtTrainConfig {
    fn default() -> Self {
        Self {
            eval_interval: 100,
            patience: 5,
            max_updates: 3000,
            batch_size: 16,
            seed: 8,
            optimizer: OptimizerConfig {
                lr: 1e-2,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtTrainReport {
    pub updates: usize,
    pub eval_losses: Vec<f64>,
    pub best_eval_loss: f64,
    pub stopped_early: bool,
}

impl<F: Real> ToySeq2Seq<F> {
    pub fn new(seed: u64, config: &Seq2SeqConfig) -> Self {
        let mut chars: Vec<char> = config.alphabet.chars().collect();
        chars.sort_unstable();
        chars.dedup();
        let v = SPECIALS + chars.len();
        let (e, h) = (config.embed_dim, config.hidden);
        let x_dim = (2 * config.window + 2) * e;
        let mut rng = seeded(seed);
        let params = vec![
            ParamTensor::normal("src_embed", &[v, e], 0.3, &mut rng),
            ParamTensor::normal("tgt_embed", &[v, e], 0.3, &mut rng),
            ParamTensor::normal("w1", &[h, x_dim], 1.0 / (x_dim as f64).sqrt(), &mut rng),
            ParamTensor::zeros("b1", &[h]),
            ParamTensor::normal("w2", &[v, h], 1.0 / (h as f64).sqrt(), &mut rng),
            ParamTensor::zeros("b2", &[v]),
        ];
        Self {
            cfg: config.clone(),
            chars,
            params,
        }
    }

    pub fn config(&self) -> &Seq2SeqConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[ParamTensor<F>] {
        &self.params
    }

    fn vocab_size(&self) -> usize {
        SPECIALS + self.chars.len()
    }

    fn char_id(&self, c: char) -> u32 {
        match self.chars.binary_search(&c) {
            Ok(i) => (SPECIALS + i) as u32,
            Err(_) => UNK,
        }
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        text.chars().map(|c| self.char_id(c)).collect()
    }

    fn features(&self, src: &[u32], t: usize, prev: u32) -> Vec<u32> {
        let r = self.cfg.window as isize;
        let mut f = Vec::with_capacity(2 * self.cfg.window + 2);
        for k in -r..=r {
            let pos = t as isize + k;
            f.push(if pos < 0 || pos as usize > src.len() {
                PAD
            } else if pos as usize == src.len() {
                EOS
            } else {
                src[pos as usize]
            });
        }
        f.push(prev);
        f
    }

    fn step(&self, feats: Vec<u32>) -> StepCache<F> {
        let e = self.cfg.embed_dim;
        let n_src = feats.len() - 1;
        let mut x = Vec::with_capacity(feats.len() * e);
        for (k, &id) in feats.iter().enumerate() {
            let table = if k < n_src { SRC_EMBED } else { TGT_EMBED };
            x.extend_from_slice(&self.params[table].data[id as usize * e..(id as usize + 1) * e]);
        }
        let (w1, b1) = (&self.params[W1].data, &self.params[B1].data);
        let xd = x.len();
        let h: Vec<F> = (0..self.cfg.hidden)
            .map(|o| (w1[o * xd..(o + 1) * xd].iter().zip(&x).map(|(a, b)| *a * *b).sum::<F>() + b1[o]).tanh())
            .collect();
        let (w2, b2) = (&self.params[W2].data, &self.params[B2].data);
        let hd = h.len();
        let logits: Vec<F> = (0..self.vocab_size())
            .map(|o| w2[o * hd..(o + 1) * hd].iter().zip(&h).map(|(a, b)| *a * *b).sum::<F>() + b2[o])
            .collect();
        let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = logits.iter().map(|l| (*l - max).exp()).collect();
        let z: F = exps.iter().copied().sum();
        StepCache {
            x,
            feats,
            h,
            probs: exps.into_iter().map(|p| p / z).collect(),
        }
    }

    fn backward_step(&self, c: &StepCache<F>, target: u32, scale: F, grads: &mut [Vec<F>]) {
        let e = self.cfg.embed_dim;
        let hd = c.h.len();
        let xd = c.x.len();
        let mut dh = vec![F::zero(); hd];
        for (o, p) in c.probs.iter().enumerate() {
            let dl = (*p - if o as u32 == target { F::one() } else { F::zero() }) * scale;
            grads[B2][o] = grads[B2][o] + dl;
            let row = &self.params[W2].data[o * hd..(o + 1) * hd];
            for j in 0..hd {
                grads[W2][o * hd + j] = grads[W2][o * hd + j] + dl * c.h[j];
                dh[j] = dh[j] + dl * row[j];
            }
        }
        let mut dx = vec![F::zero(); xd];
        for j in 0..hd {
            let dz = dh[j] * (F::one() - c.h[j] * c.h[j]);
            grads[B1][j] = grads[B1][j] + dz;
            let row = &self.params[W1].data[j * xd..(j + 1) * xd];
            for i in 0..xd {
                grads[W1][j * xd + i] = grads[W1][j * xd + i] + dz * c.x[i];
                dx[i] = dx[i] + dz * row[i];
            }
        }
        let n_src = c.feats.len() - 1;
        for (k, &id) in c.feats.iter().enumerate() {
            let table = if k < n_src { SRC_EMBED } else { TGT_EMBED };
            for i in 0..e {
                let at = id as usize * e + i;
                grads[table][at] = grads[table][at] + dx[k * e + i];
            }
        }
    }

    /// Token-averaged cross-entropy of `pairs` under teacher forcing, with
    /// gradients when requested.
    fn cross_entropy(&self, pairs: &[(String, String)], want_grads: bool) -> (F, Option<Vec<Vec<F>>>) {
        let encoded: Vec<(Vec<u32>, Vec<u32>)> = pairs.iter().map(|(s, t)| (self.encode(s), self.encode(t))).collect();
        let tokens: usize = encoded.iter().map(|(_, t)| t.len() + 1).sum();
        let scale = F::one() / F::from_usize_lossy(tokens.max(1));
        let mut grads: Option<Vec<Vec<F>>> =
            want_grads.then(|| self.params.iter().map(|p| vec![F::zero(); p.len()]).collect());
        let mut loss = F::zero();
        let tiny = F::lit(1e-30);
        for (src, tgt) in &encoded {
            let mut prev = BOS;
            for t in 0..=tgt.len() {
                let target = tgt.get(t).copied().unwrap_or(EOS);
                let c = self.step(self.features(src, t, prev));
                loss = loss - (c.probs[target as usize] + tiny).ln();
                if let Some(g) = grads.as_mut() {
                    self.backward_step(&c, target, scale, g);
                }
                prev = target;
            }
        }
        (loss * scale, grads)
    }

    pub fn eval_loss(&self, pairs: &[(String, String)]) -> F {
        self.cross_entropy(pairs, false).0
    }

    pub fn translate_one(&self, source: &str) -> String {
        let src = self.encode(source);
        let mut out = String::new();
        let mut prev = BOS;
        for t in 0..src.len() + self.cfg.max_extra_len {
            let c = self.step(self.features(&src, t, prev));
            let mut best = 0usize;
            for (i, p) in c.probs.iter().enumerate() {
                if *p > c.probs[best] {
                    best = i;
                }
            }
            let id = best as u32;
            if id == EOS {
                break;
            }
            if id as usize >= SPECIALS {
                out.push(self.chars[id as usize - SPECIALS]);
            }
            prev = id;
        }
        out
    }

    /// Trains on `train` with seeded minibatches, evaluating dev loss every
    /// `eval_interval` updates and stopping after `patience` evaluations
    /// without strict improvement. The best-scoring parameters are kept.
    pub fn fit(
        &mut self,
        train: &[(String, String)],
        dev: &[(String, String)],
        cfg: &MtTrainConfig,
    ) -> Result<MtTrainReport> {
        if train.is_empty() || dev.is_empty() {
            return Err(Error::invalid("translator training needs non-empty train and dev sets"));
        }
        if cfg.eval_interval == 0 || cfg.patience == 0 || cfg.batch_size == 0 {
            return Err(Error::invalid("eval_interval, patience and batch_size must be >= 1"));
        }
        let mut opt = AdamW::new(cfg.optimizer);
        let mut rng = seeded(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut cursor = order.len();
        let mut losses = Vec::new();
        let mut best = (f64::INFINITY, self.params.clone());
        let mut updates = 0;
        let mut stopped_early = false;
        while updates < cfg.max_updates {
            let mut batch = Vec::with_capacity(cfg.batch_size);
            while batch.len() < cfg.batch_size {
                if cursor == order.len() {
                    rng::shuffle(&mut order, &mut rng);
                    cursor = 0;
                }
                batch.push(train[order[cursor]].clone());
                cursor += 1;
            }
            let (_, grads) = self.cross_entropy(&batch, true);
            opt.step(self.params.iter_mut(), &grads.expect("gradients requested"));
            updates += 1;
            if updates % cfg.eval_interval == 0 {
                let l = self.eval_loss(dev).as_f64();
                if l < best.0 - 1e-9 {
                    best = (l, self.params.clone());
                }
                losses.push(l);
                if should_stop(&losses, cfg.patience) {
                    stopped_early = true;
                    break;
                }
            }
        }
        if best.0.is_finite() {
            self.params = best.1;
        }
        Ok(MtTrainReport {
            updates,
            eval_losses: losses,
            best_eval_loss: best.0,
            stopped_early,
        })
    }
}

impl<F: Real> Translator for ToySeq2Seq<F> {
    fn translate(&self, sources: &[String]) -> Vec<String> {
        sources.par_iter().map(|s| self.translate_one(s)).collect()
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"toy-seq2seq\0");
        h.update(self.chars.iter().collect::<String>().as_bytes());
        h.update(params_to_bytes(&self.params));
        hex::encode(h.finalize())
    }
}

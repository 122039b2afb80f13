//! Encoder backends producing pooled fixed-width representations.

use serde::{Deserialize, Serialize};

use super::params::ParamTensor;
use super::vocab::{VocabSpec, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};
use crate::scalar::Real;

/// Longest rendered input fed to a backend.
pub const MAX_RENDERED_TOKENS: usize = 200;
/// Noise scale for freshly added tag embeddings.
pub const NEW_TOKEN_NOISE_STD: f64 = 0.02;

/// A trainable text encoder. Implementations expose their parameters as
/// flat groups so the optimiser and checkpointing stay backend-agnostic.
pub trait EncoderBackend<F: Real>: Clone + Send + Sync {
    /// Per-input activations retained for the backward pass.
    type Cache;

    fn kind(&self) -> &'static str;
    fn vocab(&self) -> &Vocabulary;
    fn hidden_width(&self) -> usize;
    fn max_len(&self) -> usize {
        MAX_RENDERED_TOKENS
    }

    fn params(&self) -> &[ParamTensor<F>];
    fn params_mut(&mut self) -> &mut [ParamTensor<F>];
    /// Same architecture around `vocab`, parameters zeroed (checkpoint loading).
    fn rebuild(vocab: Vocabulary, hidden_width: usize) -> Self;

    /// Adds tags as single vocabulary items, leaving existing rows intact.
    fn extend_vocabulary(&mut self, tags: &[&str], seed: u64) -> Result<()>;

    fn forward_ids(&self, ids: &[u32]) -> (Vec<F>, Self::Cache);

    /// Accumulates parameter gradients given the gradient w.r.t. the pooled
    /// output. `grads` is aligned with [`EncoderBackend::params`].
    fn backward_ids(&self, ids: &[u32], cache: &Self::Cache, d_pooled: &[F], grads: &mut [Vec<F>]);

    fn tokenize(&self, rendered: &str) -> Vec<u32> {
        self.vocab().encode_rendered(rendered, self.max_len()).0
    }

    /// Pooled representation of each rendered input.
    fn encode(&self, rendered: &[String]) -> Vec<Vec<F>> {
        rendered.iter().map(|r| self.forward_ids(&self.tokenize(r)).0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyEncoderConfig {
    pub hidden_width: usize,
    pub max_vocab_words: usize,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            max_vocab_words: 4000,
        }
    }
}

/// Token embeddings plus learned positions, one tanh mixing layer, and mean
/// pooling over positions.
///
/// Parameter groups: `embed` (vocab x d), `position` (max_len x d),
/// `mix.weight` (d x d, row-major out x in), `mix.bias` (d).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder<F> {
    vocab: Vocabulary,
    width: usize,
    params: Vec<ParamTensor<F>>,
}

const EMBED: usize = 0;
const POSITION: usize = 1;
const MIX_W: usize = 2;
const MIX_B: usize = 3;

pub struct ToyCache<F> {
    inputs: Vec<Vec<F>>,
    hidden: Vec<Vec<F>>,
}

/// Builds a toy encoder; `hidden_width` must be at least 8.
pub fn toy_encoder<F: Real>(seed: u64, hidden_width: usize, vocab_spec: &VocabSpec) -> Result<ToyEncoder<F>> {
    ToyEncoder::new(seed, hidden_width, vocab_spec)
}

impl<F: Real> ToyEncoder<F> {
    pub fn new(seed: u64, hidden_width: usize, vocab_spec: &VocabSpec) -> Result<Self> {
        if hidden_width < 8 {
            return Err(Error::invalid(format!("hidden width must be >= 8, got {hidden_width}")));
        }
        let vocab = Vocabulary::new(vocab_spec);
        let d = hidden_width;
        let mut rng = seeded(seed);
        let params = vec![
            ParamTensor::normal("embed", &[vocab.len(), d], 0.5, &mut rng),
            ParamTensor::normal("position", &[MAX_RENDERED_TOKENS, d], 0.05, &mut rng),
            ParamTensor::normal("mix.weight", &[d, d], 1.0 / (d as f64).sqrt(), &mut rng),
            ParamTensor::zeros("mix.bias", &[d]),
        ];
        Ok(Self {
            vocab,
            width: d,
            params,
        })
    }

    /// Rebuilds an encoder around an existing vocabulary with zeroed
    /// parameters of the right shapes, to be filled from a checkpoint.
    pub fn with_vocabulary(vocab: Vocabulary, hidden_width: usize) -> Self {
        let d = hidden_width;
        let params = vec![
            ParamTensor::zeros("embed", &[vocab.len(), d]),
            ParamTensor::zeros("position", &[MAX_RENDERED_TOKENS, d]),
            ParamTensor::zeros("mix.weight", &[d, d]),
            ParamTensor::zeros("mix.bias", &[d]),
        ];
        Self {
            vocab,
            width: d,
            params,
        }
    }

    pub fn embedding_row(&self, id: u32) -> &[F] {
        let d = self.width;
        &self.params[EMBED].data[id as usize * d..(id as usize + 1) * d]
    }
}

fn append_mean_rows<F: Real>(embed: &mut ParamTensor<F>, width: usize, count: usize, rng: &mut SeededRng) {
    let rows = embed.shape[0];
    let mut mean = vec![F::zero(); width];
    for r in 0..rows {
        for (m, x) in mean.iter_mut().zip(&embed.data[r * width..(r + 1) * width]) {
            *m = *m + *x;
        }
    }
    let n = F::from_usize_lossy(rows.max(1));
    for m in &mut mean {
        *m = *m / n;
    }
    let noise: ParamTensor<F> = ParamTensor::normal("noise", &[count, width], NEW_TOKEN_NOISE_STD, rng);
    for k in 0..count {
        for j in 0..width {
            embed.data.push(mean[j] + noise.data[k * width + j]);
        }
    }
    embed.shape[0] = rows + count;
}

impl<F: Real> EncoderBackend<F> for ToyEncoder<F> {
    type Cache = ToyCache<F>;

    fn kind(&self) -> &'static str {
        "toy"
    }

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn hidden_width(&self) -> usize {
        self.width
    }

    fn params(&self) -> &[ParamTensor<F>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [ParamTensor<F>] {
        &mut self.params
    }

    fn rebuild(vocab: Vocabulary, hidden_width: usize) -> Self {
        ToyEncoder::with_vocabulary(vocab, hidden_width)
    }

    fn extend_vocabulary(&mut self, tags: &[&str], seed: u64) -> Result<()> {
        self.vocab.add_tokens(tags)?;
        append_mean_rows(&mut self.params[EMBED], self.width, tags.len(), &mut seeded(seed));
        Ok(())
    }

    fn forward_ids(&self, ids: &[u32]) -> (Vec<F>, ToyCache<F>) {
        let d = self.width;
        let (embed, pos) = (&self.params[EMBED].data, &self.params[POSITION].data);
        let (w, b) = (&self.params[MIX_W].data, &self.params[MIX_B].data);
        let mut pooled = vec![F::zero(); d];
        let mut cache = ToyCache {
            inputs: Vec::with_capacity(ids.len()),
            hidden: Vec::with_capacity(ids.len()),
        };
        for (t, &id) in ids.iter().enumerate() {
            let e = &embed[id as usize * d..(id as usize + 1) * d];
            let p = &pos[t * d..(t + 1) * d];
            let x: Vec<F> = e.iter().zip(p).map(|(a, b)| *a + *b).collect();
            let h: Vec<F> = (0..d)
                .map(|o| {
                    let row = &w[o * d..(o + 1) * d];
                    (row.iter().zip(&x).map(|(wi, xi)| *wi * *xi).sum::<F>() + b[o]).tanh()
                })
                .collect();
            for (acc, hv) in pooled.iter_mut().zip(&h) {
                *acc = *acc + *hv;
            }
            cache.inputs.push(x);
            cache.hidden.push(h);
        }
        if !ids.is_empty() {
            let n = F::from_usize_lossy(ids.len());
            for v in &mut pooled {
                *v = *v / n;
            }
        }
        (pooled, cache)
    }

    fn backward_ids(&self, ids: &[u32], cache: &ToyCache<F>, d_pooled: &[F], grads: &mut [Vec<F>]) {
        if ids.is_empty() {
            return;
        }
        let d = self.width;
        let w = &self.params[MIX_W].data;
        let inv_n = F::one() / F::from_usize_lossy(ids.len());
        let mut dz = vec![F::zero(); d];
        for (t, &id) in ids.iter().enumerate() {
            let (x, h) = (&cache.inputs[t], &cache.hidden[t]);
            for o in 0..d {
                dz[o] = d_pooled[o] * inv_n * (F::one() - h[o] * h[o]);
            }
            for o in 0..d {
                grads[MIX_B][o] = grads[MIX_B][o] + dz[o];
                let row = &mut grads[MIX_W][o * d..(o + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g = *g + dz[o] * *xi;
                }
            }
            for i in 0..d {
                let mut dx = F::zero();
                for o in 0..d {
                    dx = dx + w[o * d + i] * dz[o];
                }
                let e = id as usize * d + i;
                grads[EMBED][e] = grads[EMBED][e] + dx;
                grads[POSITION][t * d + i] = grads[POSITION][t * d + i] + dx;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> VocabSpec {
        VocabSpec {
            words: (0..n).map(|i| format!("w{i}")).collect(),
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = ToyEncoder::<f64>::new(7, 16, &spec(10)).unwrap();
        let b = ToyEncoder::<f64>::new(7, 16, &spec(10)).unwrap();
        assert_eq!(a, b);
        let c = ToyEncoder::<f64>::new(8, 16, &spec(10)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn narrow_width_rejected() {
        assert!(ToyEncoder::<f64>::new(1, 7, &spec(1)).is_err());
    }

    #[test]
    fn encode_shape() {
        let enc = ToyEncoder::<f32>::new(1, 8, &spec(5)).unwrap();
        let out = enc.encode(&["w1 w2".into(), "w3".into(), "zzz unknown".into()]);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|v| v.len() == 8));
    }

    #[test]
    fn extension_keeps_existing_rows() {
        // 4 specials + 256 bytes + 740 words = 1000
        let mut enc = ToyEncoder::<f64>::new(3, 8, &spec(740)).unwrap();
        assert_eq!(enc.vocab().len(), 1000);
        let before = enc.params()[EMBED].data.clone();
        enc.extend_vocabulary(&["<OOD>", "<ID>"], 9).unwrap();
        assert_eq!(enc.vocab().len(), 1002);
        let after = &enc.params()[EMBED].data;
        assert_eq!(after.len(), 1002 * 8);
        assert!(before.iter().zip(after).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(enc.extend_vocabulary(&["<ID>"], 9).is_err());
        assert_eq!(enc.params()[EMBED].shape, vec![1002, 8]);
    }
}

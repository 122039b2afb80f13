//! Parameter tensors, seeded initialisation and the AdamW optimiser.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> ParamTensor<F> {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_owned(),
            shape: shape.to_vec(),
            data: vec![F::zero(); shape.iter().product()],
        }
    }

    pub fn normal(name: &str, shape: &[usize], std: f64, rng: &mut SeededRng) -> Self {
        let dist = Normal::new(0.0, std).expect("valid standard deviation");
        Self {
            name: name.to_owned(),
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| F::lit(dist.sample(rng)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Flattens groups to little-endian `f64` bytes (lossless for f32 and f64).
pub fn params_to_bytes<'a, F: Real>(groups: impl IntoIterator<Item = &'a ParamTensor<F>>) -> Vec<u8> {
    let mut out = Vec::new();
    for g in groups {
        for x in &g.data {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    out
}

/// Inverse of [`params_to_bytes`] into groups whose shapes are already set.
pub fn params_from_bytes<'a, F: Real>(
    groups: impl IntoIterator<Item = &'a mut ParamTensor<F>>,
    bytes: &[u8],
) -> Result<()> {
    let mut chunks = bytes.chunks_exact(8);
    for g in groups {
        for x in g.data.iter_mut() {
            let c = chunks
                .next()
                .ok_or_else(|| Error::invalid("parameter file shorter than model"))?;
            *x = F::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        }
    }
    if chunks.next().is_some() || !chunks.remainder().is_empty() {
        return Err(Error::invalid("parameter file longer than model"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    cfg: OptimizerConfig,
    step: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> AdamW<F> {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update. `grads[i]` matches the i-th group.
    pub fn step<'a>(&mut self, groups: impl IntoIterator<Item = &'a mut ParamTensor<F>>, grads: &[Vec<F>]) {
        self.step += 1;
        let c = &self.cfg;
        let (b1, b2) = (F::lit(c.beta1), F::lit(c.beta2));
        let bc1 = F::one() - b1.powi(self.step);
        let bc2 = F::one() - b2.powi(self.step);
        let lr = F::lit(c.lr);
        let decay = F::one() - lr * F::lit(c.weight_decay);
        let eps = F::lit(c.eps);
        for (k, g) in groups.into_iter().enumerate() {
            if self.m.len() <= k {
                self.m.push(vec![F::zero(); g.len()]);
                self.v.push(vec![F::zero(); g.len()]);
            }
            // groups can grow (vocabulary extension) between steps
            self.m[k].resize(g.len(), F::zero());
            self.v[k].resize(g.len(), F::zero());
            let (m, v, grad) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..g.data.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * grad[i];
                v[i] = b2 * v[i] + (F::one() - b2) * grad[i] * grad[i];
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                g.data[i] = g.data[i] * decay - lr * update;
            }
        }
    }
}

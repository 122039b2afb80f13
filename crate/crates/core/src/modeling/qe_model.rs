use log::debug;

use super::encoder::EncoderBackend;
use super::params::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

/// Encoder plus an affine head producing one raw scalar per input.
#[derive(Debug, Clone, PartialEq)]
pub struct QeModel<F, B> {
    pub backend: B,
    /// `head.weight` (d) and `head.bias` (1).
    pub head: [ParamTensor<F>; 2],
}

impl<F: Real, B: EncoderBackend<F>> QeModel<F, B> {
    pub fn new(backend: B, seed: u64) -> Self {
        let d = backend.hidden_width();
        let mut rng = seeded(seed ^ 0x4845_4144);
        let head = [
            ParamTensor::normal("head.weight", &[d], 0.1 / (d as f64).sqrt(), &mut rng),
            ParamTensor::zeros("head.bias", &[1]),
        ];
        Self { backend, head }
    }

    pub fn param_groups(&self) -> impl Iterator<Item = &ParamTensor<F>> {
        self.backend.params().iter().chain(self.head.iter())
    }

    pub fn param_groups_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor<F>> {
        self.backend.params_mut().iter_mut().chain(self.head.iter_mut())
    }

    pub fn zero_grads(&self) -> Vec<Vec<F>> {
        self.param_groups().map(|g| vec![F::zero(); g.len()]).collect()
    }

    fn head_apply(&self, pooled: &[F]) -> F {
        pooled.iter().zip(&self.head[0].data).map(|(a, b)| *a * *b).sum::<F>() + self.head[1].data[0]
    }

    pub fn predict_ids(&self, ids: &[u32]) -> F {
        self.head_apply(&self.backend.forward_ids(ids).0)
    }

    /// Raw scalar predictions, one per rendered input, in input order.
    /// Over-length inputs are truncated (target side first) and logged.
    pub fn forward(&self, rendered: &[String]) -> Result<Vec<F>> {
        if rendered.is_empty() {
            return Err(Error::invalid("forward needs a non-empty batch"));
        }
        Ok(rendered
            .iter()
            .map(|r| {
                let (ids, cut) = self.backend.vocab().encode_rendered(r, self.backend.max_len());
                if cut {
                    debug!("input truncated to {} tokens", ids.len());
                }
                self.predict_ids(&ids)
            })
            .collect())
    }

    /// Mean squared error over a tokenized batch and its gradient w.r.t.
    /// every parameter group.
    pub fn loss_and_grads(&self, batch: &[(Vec<u32>, F)]) -> (F, Vec<Vec<F>>) {
        let mut grads = self.zero_grads();
        let n_backend = self.backend.params().len();
        let n = F::from_usize_lossy(batch.len().max(1));
        let two = F::lit(2.0);
        let mut loss = F::zero();
        for (ids, label) in batch {
            let (pooled, cache) = self.backend.forward_ids(ids);
            let pred = self.head_apply(&pooled);
            let err = pred - *label;
            loss = loss + err * err;
            let dpred = two * err / n;
            for (g, p) in grads[n_backend].iter_mut().zip(&pooled) {
                *g = *g + dpred * *p;
            }
            grads[n_backend + 1][0] = grads[n_backend + 1][0] + dpred;
            let d_pooled: Vec<F> = self.head[0].data.iter().map(|w| *w * dpred).collect();
            self.backend
                .backward_ids(ids, &cache, &d_pooled, &mut grads[..n_backend]);
        }
        (loss / n, grads)
    }

    pub fn batch_loss(&self, batch: &[(Vec<u32>, F)]) -> F {
        let preds: Vec<F> = batch.iter().map(|(ids, _)| self.predict_ids(ids)).collect();
        let labels: Vec<F> = batch.iter().map(|(_, l)| *l).collect();
        mse(&preds, &labels).unwrap_or_else(|_| F::zero())
    }
}

/// Mean squared error.
pub fn mse<F: Real>(preds: &[F], labels: &[F]) -> Result<F> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Ok(F::zero());
    }
    let sum: F = preds.iter().zip(labels).map(|(p, l)| (*p - *l) * (*p - *l)).sum();
    Ok(sum / F::from_usize_lossy(preds.len()))
}

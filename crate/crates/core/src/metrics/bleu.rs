use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0..=100
    pub score: f64,
    /// Clipped n-gram precisions after smoothing, orders 1..=4.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level 4-gram BLEU over tercom-tokenized, lowercased text.
///
/// Precisions are clipped against the single reference. A zero precision of
/// order >= 2 is replaced by `1 / (2 * hyp_ngram_count)`; a zero unigram
/// precision, an order with no hypothesis n-grams at all, or an empty
/// hypothesis side gives a score of 0.
pub fn bleu(hyps: &[impl AsRef<str>], refs: &[impl AsRef<str>]) -> Result<BleuScore> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch(hyps.len(), refs.len()));
    }
    if hyps.is_empty() {
        return Err(Error::invalid("BLEU needs at least one sentence pair"));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let h = tokenize(h.as_ref());
        let r = tokenize(r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            for (gram, &c) in &hc {
                matches[n - 1] += c.min(rc.get(gram).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }

    let mut precisions = [0.0; MAX_ORDER];
    let mut degenerate = hyp_len == 0;
    for n in 0..MAX_ORDER {
        precisions[n] = if totals[n] == 0 {
            degenerate = true;
            0.0
        } else if matches[n] == 0 {
            if n == 0 {
                degenerate = true;
                0.0
            } else {
                1.0 / (2.0 * totals[n] as f64)
            }
        } else {
            matches[n] as f64 / totals[n] as f64
        };
    }

    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let score = if degenerate {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

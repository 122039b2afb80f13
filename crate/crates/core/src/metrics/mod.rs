//! Text and correlation metrics: tercom tokenization, TER/HTER, BLEU,
//! Pearson, Increase %, and significance tests.

pub mod batch;
pub mod bleu;
pub mod pearson;
pub mod significance;
pub mod ter;
pub mod tokenize;

pub use bleu::{bleu, BleuScore};
pub use pearson::{pearson, PearsonResult};
pub use significance::{
    paired_bootstrap, significance_grid, williams_test, SignificanceCell, SignificanceGrid, SignificanceTest,
    DEFAULT_ALPHA,
};
pub use ter::{edit_distance, ter, ter_sentence, ter_sentence_with, ter_with_trace, Shift, TerScore};
pub use tokenize::{tokenize, tokenize_tercom, TokenizeOptions};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Percentage improvement of `best` over `baseline`.
pub fn increase_pct<F: Real>(best: F, baseline: F) -> Result<F> {
    if baseline == F::zero() {
        return Err(Error::invalid("Increase % undefined for a zero baseline"));
    }
    Ok(F::lit(100.0) * (best - baseline) / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increase_matches_reported_rows() {
        assert!((increase_pct(51.90, 47.17).unwrap() - 10.03f64).abs() <= 0.01);
        assert!((increase_pct(36.60, 29.16).unwrap() - 25.51f64).abs() <= 0.01);
        assert_eq!(increase_pct(42.0, 42.0).unwrap(), 0.0);
        assert!(increase_pct(1.0, 0.0).is_err());
    }
}

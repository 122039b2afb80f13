//! Tests for the difference between two dependent correlations that share
//! the gold-label variable.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::pearson::pearson;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const BOOTSTRAP_SEED: u64 = 12345;

/// Williams' t-test for `r12` vs `r13`, both correlations with variable 1,
/// given `r23` between the other two variables. Returns the two-tailed
/// p-value with `n - 3` degrees of freedom.
pub fn williams_test(r12: f64, r13: f64, r23: f64, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::invalid(format!("Williams test needs n >= 4, got {n}")));
    }
    for r in [r12, r13, r23] {
        if !(-1.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("correlation {r} outside [-1, 1]")));
        }
    }
    if r12 == r13 {
        return Ok(1.0);
    }
    let det = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
    if det <= 0.0 {
        return Err(Error::DegenerateDeterminant(det));
    }
    let n = n as f64;
    let rbar = (r12 + r13) / 2.0;
    let t = (r12 - r13) * ((n - 1.0) * (1.0 + r23)).sqrt()
        / (2.0 * (n - 1.0) / (n - 3.0) * det + rbar * rbar * (1.0 - r23).powi(3)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 3.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Paired bootstrap over samples: the two-sided p-value is twice the
/// smaller tail mass of the resampled correlation difference around 0.
/// Resamples with an undefined correlation count as a zero difference.
pub fn paired_bootstrap<F: Real>(gold: &[F], a: &[F], b: &[F], resamples: usize, seed: u64) -> Result<f64> {
    let n = gold.len();
    if a.len() != n || b.len() != n {
        return Err(Error::LengthMismatch(n, if a.len() != n { a.len() } else { b.len() }));
    }
    let mut rng = rng::seeded(seed);
    let (mut le, mut ge) = (0usize, 0usize);
    let (mut g, mut pa, mut pb) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..resamples {
        g.clear();
        pa.clear();
        pb.clear();
        for _ in 0..n {
            let k = rng::bounded(&mut rng, n);
            g.push(gold[k]);
            pa.push(a[k]);
            pb.push(b[k]);
        }
        let diff = match (pearson(&g, &pa), pearson(&g, &pb)) {
            (Ok(x), Ok(y)) => (x.r - y.r).as_f64(),
            _ => 0.0,
        };
        if diff <= 0.0 {
            le += 1;
        }
        if diff >= 0.0 {
            ge += 1;
        }
    }
    let tail = le.min(ge) as f64 / resamples as f64;
    Ok((2.0 * tail).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignificanceTest {
    #[default]
    Williams,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCell {
    pub row: usize,
    pub col: usize,
    pub p_value: f64,
    pub significant: bool,
}

impl SignificanceCell {
    pub fn mark(&self) -> char {
        if self.significant {
            'Y'
        } else {
            'N'
        }
    }
}

/// Upper-triangular grid of pairwise significance decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceGrid {
    pub labels: Vec<String>,
    pub alpha: f64,
    /// Cells with `row < col`, ordered by row then column.
    pub cells: Vec<SignificanceCell>,
}

impl SignificanceGrid {
    pub fn cell(&self, row: usize, col: usize) -> Option<&SignificanceCell> {
        self.cells.iter().find(|c| c.row == row && c.col == col)
    }
}

/// Compares every pair of systems by how well each correlates with `gold`.
pub fn significance_grid<F: Real>(
    gold: &[F],
    systems: &[(String, Vec<F>)],
    alpha: f64,
    test: SignificanceTest,
) -> Result<SignificanceGrid> {
    for (_, preds) in systems {
        if preds.len() != gold.len() {
            return Err(Error::LengthMismatch(gold.len(), preds.len()));
        }
    }
    let gold_corr = systems
        .iter()
        .map(|(_, p)| pearson(gold, p).map(|r| r.r.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            let p_value = match test {
                SignificanceTest::Williams => {
                    let (r12, r13) = (gold_corr[i], gold_corr[j]);
                    let r23 = if r12 == r13 {
                        1.0
                    } else {
                        pearson(&systems[i].1, &systems[j].1)?.r.as_f64()
                    };
                    williams_test(r12, r13, r23, gold.len())?
                }
                SignificanceTest::Bootstrap => {
                    paired_bootstrap(gold, &systems[i].1, &systems[j].1, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)?
                }
            };
            cells.push(SignificanceCell {
                row: i,
                col: j,
                p_value,
                significant: p_value < alpha,
            });
        }
    }
    Ok(SignificanceGrid {
        labels: systems.iter().map(|(l, _)| l.clone()).collect(),
        alpha,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_correlations_give_p_one() {
        assert_eq!(williams_test(0.4, 0.4, 0.2, 30).unwrap(), 1.0);
        assert_eq!(williams_test(0.4, 0.4, 1.0, 30).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_in_the_compared_pair() {
        let a = williams_test(0.6, 0.3, 0.5, 50).unwrap();
        let b = williams_test(0.3, 0.6, 0.5, 50).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn small_n_rejected() {
        assert!(williams_test(0.5, 0.4, 0.3, 3).is_err());
    }

    #[test]
    fn degenerate_determinant() {
        assert!(matches!(
            williams_test(1.0, 0.5, 0.5, 10),
            Err(Error::DegenerateDeterminant(_))
        ));
    }

    #[test]
    fn grid_has_triangular_shape() {
        let gold: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let systems: Vec<(String, Vec<f64>)> = (0..5)
            .map(|s| {
                let preds = gold
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g + 0.3 * ((i * (s + 2)) as f64).cos())
                    .collect();
                (format!("sys{s}"), preds)
            })
            .collect();
        let grid = significance_grid(&gold, &systems, DEFAULT_ALPHA, SignificanceTest::Williams).unwrap();
        assert_eq!(grid.cells.len(), 10);
        assert!(grid.cell(0, 4).is_some());
        assert!(grid.cell(4, 0).is_none());
    }

    #[test]
    fn identical_systems_not_significant_under_bootstrap() {
        let gold: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let p: Vec<f64> = gold.iter().map(|g| g + (g * 7.0).sin()).collect();
        let pv = paired_bootstrap(&gold, &p, &p, 200, 1).unwrap();
        assert_eq!(pv, 1.0);
    }
}

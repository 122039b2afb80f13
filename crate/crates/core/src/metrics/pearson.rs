use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult<F> {
    /// Sample correlation in [-1, 1].
    pub r: F,
    /// `100 * r`, the reporting scale.
    pub rescaled: F,
    pub n: usize,
}

/// Sample Pearson correlation, computed from mean-centred sums.
pub fn pearson<F: Real>(xs: &[F], ys: &[F]) -> Result<PearsonResult<F>> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid(format!("correlation needs at least 2 points, got {n}")));
    }
    if xs.iter().all(|&x| x == xs[0]) || ys.iter().all(|&y| y == ys[0]) {
        return Err(Error::ConstantInput);
    }
    let nf = F::from_usize_lossy(n);
    let mx = xs.iter().copied().sum::<F>() / nf;
    let my = ys.iter().copied().sum::<F>() / nf;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::ConstantInput);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).max(-F::one()).min(F::one());
    Ok(PearsonResult {
        r,
        rescaled: F::lit(100.0) * r,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_linear() {
        let p = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_abs_diff_eq!(p.rescaled, 100.0, epsilon = 1e-9);
        let p = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(p.rescaled, -100.0, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_point_eight() {
        // cov = 4, var_x = var_y = 5 (unnormalised sums) -> r = 0.8
        let p = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(p.r, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.rescaled, 80.0, epsilon = 1e-9);
        assert_eq!(p.n, 4);
    }

    #[test]
    fn works_in_f32() {
        let p = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((p.rescaled - 80.0).abs() < 1e-4);
    }

    #[test]
    fn constant_input_is_undefined() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.to_string(), "undefined correlation: constant input");
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }
}

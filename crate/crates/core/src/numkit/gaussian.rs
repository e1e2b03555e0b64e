use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::NumError;

/// Lower bound applied to every fitted per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, NumError> {
        if mean.len() != var.len() {
            return Err(NumError::Shape(format!(
                "mean has {} entries, variance {}",
                mean.len(),
                var.len()
            )));
        }
        if var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(NumError::InvalidInput(
                "variances must be positive and finite".into(),
            ));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * (ln_2pi + v.ln() + (xi - m) * (xi - m) / v))
            .sum()
    }
}

/// Per-dimension sample mean and unbiased (n − 1) variance, floored at
/// [`VARIANCE_FLOOR`].
pub fn fit_diag_gaussian(points: &Matrix) -> Result<DiagGaussian, NumError> {
    let n = points.rows();
    if n < 2 {
        return Err(NumError::InsufficientData {
            needed: 2,
            got: n,
            what: "points for a Gaussian fit".into(),
        });
    }
    let mean = points.column_means();
    let mut var = vec![0.0; points.cols()];
    for r in points.row_iter() {
        for ((acc, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *acc += (x - m) * (x - m);
        }
    }
    let denom = (n - 1) as f64;
    for v in &mut var {
        *v = (*v / denom).max(VARIANCE_FLOOR);
    }
    Ok(DiagGaussian { mean, var })
}

/// Closed-form `KL(p ‖ q)` between diagonal Gaussians.
pub fn kl_gaussian_diag(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, NumError> {
    if p.dim() != q.dim() {
        return Err(NumError::Shape(format!(
            "KL between {}-d and {}-d Gaussians",
            p.dim(),
            q.dim()
        )));
    }
    Ok((0..p.dim())
        .map(|d| kl_term(p.mean[d], p.var[d], q.mean[d], q.var[d]))
        .sum())
}

/// One-dimensional `KL(N(mp, vp) ‖ N(mq, vq))`.
pub fn kl_term(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    let dm = mp - mq;
    0.5 * (vq / vp).ln() + (vp + dm * dm) / (2.0 * vq) - 0.5
}

/// Partial derivatives of [`kl_term`] with respect to `(mp, vp, mq, vq)`.
pub fn kl_term_grad(mp: f64, vp: f64, mq: f64, vq: f64) -> [f64; 4] {
    let dm = mp - mq;
    [
        dm / vq,
        -0.5 / vp + 0.5 / vq,
        -dm / vq,
        0.5 / vq - (vp + dm * dm) / (2.0 * vq * vq),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::rng::RngStream;

    fn g(mean: &[f64], var: &[f64]) -> DiagGaussian {
        DiagGaussian::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    #[test]
    fn constant_data_hits_variance_floor() {
        let pts = Matrix::from_rows(&[[3.0], [3.0], [3.0]]).unwrap();
        let fit = fit_diag_gaussian(&pts).unwrap();
        assert_eq!(fit.mean, vec![3.0]);
        assert_eq!(fit.var, vec![VARIANCE_FLOOR]);
    }

    #[test]
    fn two_point_sample_variance() {
        let pts = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let fit = fit_diag_gaussian(&pts).unwrap();
        assert_eq!(fit.mean, vec![1.0]);
        assert_eq!(fit.var, vec![2.0]);
    }

    #[test]
    fn single_point_is_insufficient() {
        let pts = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            fit_diag_gaussian(&pts),
            Err(NumError::InsufficientData { .. })
        ));
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let pts = Matrix::from_vec(n, 1, (0..n).map(|_| rng.normal()).collect()).unwrap();
        let fit = fit_diag_gaussian(&pts).unwrap();
        assert!(fit.mean[0].abs() < 0.02);
        assert!((fit.var[0] - 1.0).abs() < 0.02);
    }

    #[test]
    fn kl_identity_and_unit_shift() {
        let p = g(&[0.3, -1.0], &[2.0, 0.5]);
        assert_eq!(kl_gaussian_diag(&p, &p).unwrap(), 0.0);
        let a = g(&[0.0], &[1.0]);
        let b = g(&[1.0], &[1.0]);
        assert!((kl_gaussian_diag(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_is_additive_over_dimensions() {
        let p = g(&[0.0, 1.0], &[1.0, 2.0]);
        let q = g(&[0.5, -1.0], &[3.0, 0.5]);
        let sum = kl_gaussian_diag(&g(&[0.0], &[1.0]), &g(&[0.5], &[3.0])).unwrap()
            + kl_gaussian_diag(&g(&[1.0], &[2.0]), &g(&[-1.0], &[0.5])).unwrap();
        assert!((kl_gaussian_diag(&p, &q).unwrap() - sum).abs() < 1e-14);
    }

    #[test]
    fn kl_dimension_mismatch() {
        assert!(kl_gaussian_diag(&g(&[0.0], &[1.0]), &g(&[0.0, 0.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn kl_term_gradient_matches_differences() {
        let x = [0.4, 1.7, -0.3, 0.8];
        let grad = kl_term_grad(x[0], x[1], x[2], x[3]);
        let h = 1e-6;
        for i in 0..4 {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let num = (kl_term(a[0], a[1], a[2], a[3]) - kl_term(b[0], b[1], b[2], b[3])) / (2.0 * h);
            assert!((num - grad[i]).abs() < 1e-8, "i={i}");
        }
    }
}

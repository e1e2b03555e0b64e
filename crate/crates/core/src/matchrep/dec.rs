//! Student-t soft assignments, the sharpened self-training target and the
//! KL clustering objective.

use crate::numkit::matrix::squared_distance;
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Lower clamp for `t_ij` inside logarithms.
pub const T_CLAMP: f64 = 1e-12;

/// `t_ij ∝ (1 + ‖d_i − μ_j‖²)^exponent`, normalised over `j`.
pub fn soft_assign(embedded: &Matrix, centers: &Matrix, exponent: f64) -> Result<Matrix> {
    if embedded.cols() != centers.cols() {
        return Err(Error::Data(format!(
            "embeddings have {} dimensions, centers {}",
            embedded.cols(),
            centers.cols()
        )));
    }
    let k = centers.rows();
    let mut t = Matrix::zeros(embedded.rows(), k);
    for (i, d) in embedded.row_iter().enumerate() {
        let row = t.row_mut(i);
        for (j, c) in centers.row_iter().enumerate() {
            row[j] = (1.0 + squared_distance(d, c)).powf(exponent);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(t)
}

/// `p_ij = (t_ij² / f_j) / Σ_j' (t_ij'² / f_j')` with cluster frequencies `f_j = Σ_i t_ij`.
pub fn target_distribution(t: &Matrix) -> Result<Matrix> {
    let k = t.cols();
    let mut freq = vec![0.0; k];
    for r in t.row_iter() {
        for (f, v) in freq.iter_mut().zip(r) {
            *f += v;
        }
    }
    if let Some(j) = freq.iter().position(|&f| f <= 0.0) {
        return Err(Error::DeadCluster { cluster: j });
    }
    let mut p = Matrix::zeros(t.rows(), k);
    for (i, r) in t.row_iter().enumerate() {
        let row = p.row_mut(i);
        for j in 0..k {
            row[j] = r[j] * r[j] / freq[j];
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(p)
}

fn clamp(v: f64, clamped: &mut usize) -> f64 {
    if v < T_CLAMP {
        *clamped += 1;
        T_CLAMP
    } else {
        v
    }
}

fn warn_clamped(clamped: usize) {
    if clamped > 0 {
        log::warn!("{clamped} soft-assignment entries clamped at {T_CLAMP}");
    }
}

/// `Σ_i Σ_j p_ij log(p_ij / t_ij)`; terms with `p_ij = 0` contribute zero.
pub fn dec_loss(t: &Matrix, p: &Matrix) -> Result<f64> {
    if t.shape() != p.shape() {
        return Err(Error::Data(format!(
            "T is {:?} but P is {:?}",
            t.shape(),
            p.shape()
        )));
    }
    let mut clamped = 0;
    let mut loss = 0.0;
    for (&tv, &pv) in t.as_slice().iter().zip(p.as_slice()) {
        if pv > 0.0 {
            loss += pv * (pv / clamp(tv, &mut clamped)).ln();
        }
    }
    warn_clamped(clamped);
    Ok(loss)
}

/// Per-donor mean of the clustering loss with gradients.
#[derive(Clone, Debug)]
pub struct DecTerm {
    pub value: f64,
    pub soft: Matrix,
    pub grad_embedded: Matrix,
    pub grad_centers: Matrix,
}

/// Evaluates `dec_loss / n` for the given embeddings and centers with the
/// target `p` held fixed, plus its gradients. With `q_ij` the unnormalised
/// kernel, `∂L/∂log q_ij = (t_ij − p_ij) / n`.
pub fn dec_objective(
    embedded: &Matrix,
    centers: &Matrix,
    p: &Matrix,
    exponent: f64,
) -> Result<DecTerm> {
    let t = soft_assign(embedded, centers, exponent)?;
    let n = embedded.rows().max(1) as f64;
    let value = dec_loss(&t, p)? / n;
    let mut grad_embedded = Matrix::zeros(embedded.rows(), embedded.cols());
    let mut grad_centers = Matrix::zeros(centers.rows(), centers.cols());
    for (i, d) in embedded.row_iter().enumerate() {
        for (j, c) in centers.row_iter().enumerate() {
            let s = squared_distance(d, c);
            let w = (t[(i, j)] - p[(i, j)]) / n * exponent / (1.0 + s) * 2.0;
            for (dim, (dv, cv)) in d.iter().zip(c).enumerate() {
                let g = w * (dv - cv);
                grad_embedded[(i, dim)] += g;
                grad_centers[(j, dim)] -= g;
            }
        }
    }
    Ok(DecTerm {
        value,
        soft: t,
        grad_embedded,
        grad_centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_center_takes_everything() {
        let d = Matrix::from_rows(&[[0.3, 1.0], [-4.0, 2.0]]).unwrap();
        let c = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let t = soft_assign(&d, &c, -0.5).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let d = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let c = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let t = soft_assign(&d, &c, -0.5).unwrap();
        assert_eq!(t.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn printed_kernel_hand_value() {
        let d = Matrix::from_rows(&[[0.0, 0.0]]).unwrap();
        let c = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let t = soft_assign(&d, &c, -0.5).unwrap();
        let expected = 1.0 / (1.0 + 5f64.powf(-0.5));
        assert!((t[(0, 0)] - expected).abs() < 1e-12);
        assert!((t[(0, 0)] - 0.6910).abs() < 1e-4);
    }

    #[test]
    fn target_of_uniform_is_uniform() {
        let t = Matrix::from_vec(4, 3, vec![1.0 / 3.0; 12]).unwrap();
        let p = target_distribution(&t).unwrap();
        for v in p.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_row_target_is_unsharpened() {
        let t = Matrix::from_rows(&[[0.8, 0.2]]).unwrap();
        let p = target_distribution(&t).unwrap();
        assert!((p[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((p[(0, 1)] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn dead_cluster_is_reported() {
        let t = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(
            target_distribution(&t),
            Err(Error::DeadCluster { cluster: 1 })
        ));
    }

    #[test]
    fn loss_vanishes_at_target() {
        let t = Matrix::from_rows(&[[0.7, 0.3], [0.1, 0.9]]).unwrap();
        assert!(dec_loss(&t, &t).unwrap().abs() < 1e-15);
    }
}

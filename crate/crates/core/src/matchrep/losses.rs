//! Representation-balancing and factual regression losses.

use serde::{Deserialize, Serialize};

use crate::numkit::gaussian::{kl_term, kl_term_grad, VARIANCE_FLOOR};
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Argument order of the per-cluster divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(cluster ‖ whole batch)`.
    #[default]
    ConditionalToMarginal,
    /// `KL(whole batch ‖ cluster)`.
    MarginalToConditional,
}

/// Column means and floored sample variances of `rows` of `z`, plus a mask
/// of which variances were floored.
fn moments(z: &Matrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let d = z.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in rows {
        for ((s, v), m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut floored = vec![false; d];
    for (s, f) in var.iter_mut().zip(floored.iter_mut()) {
        *s /= n - 1.0;
        if *s < VARIANCE_FLOOR {
            *s = VARIANCE_FLOOR;
            *f = true;
        }
    }
    (mean, var, floored)
}

/// Accumulates into `grad` the effect of `(g_mean, g_var)` on the moments of `rows`.
fn push_moment_grad(
    z: &Matrix,
    rows: &[usize],
    mean: &[f64],
    floored: &[bool],
    g_mean: &[f64],
    g_var: &[f64],
    grad: &mut Matrix,
) {
    let n = rows.len() as f64;
    for &i in rows {
        for d in 0..z.cols() {
            let mut g = g_mean[d] / n;
            if !floored[d] {
                g += g_var[d] * 2.0 * (z[(i, d)] - mean[d]) / (n - 1.0);
            }
            grad[(i, d)] += g;
        }
    }
}

#[derive(Clone, Debug)]
pub struct RepTerm {
    pub value: f64,
    pub grad: Matrix,
    /// Clusters that met the size threshold.
    pub clusters_used: usize,
    /// True when no cluster met the threshold and the term was dropped.
    pub skipped: bool,
}

/// `Σ_k KL(N_k ‖ N)` between diagonal Gaussians fitted to the rows labelled
/// `k` and to the whole batch. Clusters with fewer than `min_count` rows
/// (or fewer than two) are left out.
pub fn rep_loss(
    z: &Matrix,
    labels: &[usize],
    k: usize,
    min_count: usize,
    direction: KlDirection,
) -> Result<RepTerm> {
    if labels.len() != z.rows() {
        return Err(Error::Data(format!(
            "{} labels for {} representations",
            labels.len(),
            z.rows()
        )));
    }
    let mut grad = Matrix::zeros(z.rows(), z.cols());
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        groups
            .get_mut(l)
            .ok_or_else(|| Error::Data(format!("label {l} outside 0..{k}")))?
            .push(i);
    }
    let threshold = min_count.max(2);
    let used: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() >= threshold).collect();
    if used.is_empty() {
        return Ok(RepTerm {
            value: 0.0,
            grad,
            clusters_used: 0,
            skipped: true,
        });
    }
    let all: Vec<usize> = (0..z.rows()).collect();
    let (mm, vm, fm) = moments(z, &all);
    let d = z.cols();
    let mut value = 0.0;
    let mut gm_marg = vec![0.0; d];
    let mut gv_marg = vec![0.0; d];
    for rows in &used {
        let (mc, vc, fc) = moments(z, rows);
        let mut gm_c = vec![0.0; d];
        let mut gv_c = vec![0.0; d];
        for j in 0..d {
            let (p, q) = match direction {
                KlDirection::ConditionalToMarginal => ((mc[j], vc[j]), (mm[j], vm[j])),
                KlDirection::MarginalToConditional => ((mm[j], vm[j]), (mc[j], vc[j])),
            };
            value += kl_term(p.0, p.1, q.0, q.1);
            let g = kl_term_grad(p.0, p.1, q.0, q.1);
            let (cond, marg) = match direction {
                KlDirection::ConditionalToMarginal => ((g[0], g[1]), (g[2], g[3])),
                KlDirection::MarginalToConditional => ((g[2], g[3]), (g[0], g[1])),
            };
            gm_c[j] = cond.0;
            gv_c[j] = cond.1;
            gm_marg[j] += marg.0;
            gv_marg[j] += marg.1;
        }
        push_moment_grad(z, rows, &mc, &fc, &gm_c, &gv_c, &mut grad);
    }
    push_moment_grad(z, &all, &mm, &fm, &gm_marg, &gv_marg, &mut grad);
    Ok(RepTerm {
        value,
        grad,
        clusters_used: used.len(),
        skipped: false,
    })
}

#[derive(Clone, Debug)]
pub struct FactualTerm {
    pub value: f64,
    /// Gradient with respect to every head output; nonzero only at each row's label.
    pub grad: Matrix,
}

/// Mean squared error of the head selected by each row's label.
pub fn factual_loss(heads: &Matrix, outcomes: &[f64], labels: &[usize]) -> Result<FactualTerm> {
    if outcomes.len() != heads.rows() || labels.len() != heads.rows() {
        return Err(Error::Data(format!(
            "{} head rows, {} outcomes, {} labels",
            heads.rows(),
            outcomes.len(),
            labels.len()
        )));
    }
    let n = heads.rows().max(1) as f64;
    let mut grad = Matrix::zeros(heads.rows(), heads.cols());
    let mut value = 0.0;
    for (i, (&y, &l)) in outcomes.iter().zip(labels).enumerate() {
        if l >= heads.cols() {
            return Err(Error::Data(format!("label {l} outside 0..{}", heads.cols())));
        }
        let r = heads[(i, l)] - y;
        value += r * r / n;
        grad[(i, l)] = 2.0 * r / n;
    }
    Ok(FactualTerm { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    #[test]
    fn identical_rows_give_zero() {
        let z = Matrix::from_vec(20, 2, [1.5, -0.5].repeat(20)).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let r = rep_loss(&z, &labels, 2, 8, KlDirection::default()).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn shifted_halves_match_closed_form() {
        let mut rng = RngStream::new(17);
        let n = 200_000;
        let mut data = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let l = i % 2;
            data.push(rng.normal() + if l == 0 { 1.0 } else { -1.0 });
            labels.push(l);
        }
        let z = Matrix::from_vec(n, 1, data).unwrap();
        let r = rep_loss(&z, &labels, 2, 8, KlDirection::ConditionalToMarginal).unwrap();
        // marginal: mean 0, variance 2; KL(N(±1, 1) ‖ N(0, 2)) = ½ln2 + 2/4 − ½
        let per = 0.5 * 2f64.ln();
        assert!((r.value - 2.0 * per).abs() < 0.01, "{}", r.value);
    }

    #[test]
    fn small_clusters_are_skipped() {
        let z = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let r = rep_loss(&z, &labels, 2, 8, KlDirection::default()).unwrap();
        assert!(r.skipped);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn constant_predictor_least_squares() {
        for c in [0.0, 0.5, 1.0, 2.0] {
            let heads = Matrix::from_rows(&[[c], [c]]).unwrap();
            let f = factual_loss(&heads, &[0.0, 2.0], &[0, 0]).unwrap();
            assert!((f.value - (c * c + (c - 2.0) * (c - 2.0)) / 2.0).abs() < 1e-12);
        }
        let heads = Matrix::from_rows(&[[1.0, 9.0], [1.0, -3.0]]).unwrap();
        let f = factual_loss(&heads, &[0.0, 2.0], &[0, 0]).unwrap();
        assert_eq!(f.value, 1.0);
        assert_eq!(f.grad[(0, 1)], 0.0);
    }
}

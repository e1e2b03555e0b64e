use serde::{Deserialize, Serialize};

use super::gaussian::{DiagGaussian, VARIANCE_FLOOR};
use super::kmeans::kmeans_fit;
use super::matrix::{argmax, Matrix};
use super::rng::RngStream;
use super::NumError;

pub const EM_MAX_ITER: usize = 100;
/// EM stops once the log-likelihood gain per point falls below this.
pub const EM_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub components: Vec<DiagGaussian>,
    pub responsibilities: Matrix,
    /// Total log-likelihood of the data before every M-step.
    pub log_likelihood_trace: Vec<f64>,
    /// How many variance entries hit the floor during fitting.
    pub floored_variances: usize,
}

impl GmmFit {
    /// Posterior component probabilities for new points.
    pub fn posterior(&self, points: &Matrix) -> Matrix {
        e_step(points, &self.weights, &self.components).0
    }

    /// Hard labels by maximum responsibility.
    pub fn predict(&self, points: &Matrix) -> Vec<usize> {
        self.posterior(points).row_iter().map(argmax).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.responsibilities.row_iter().map(argmax).collect()
    }
}

pub fn gmm_em_fit(points: &Matrix, k: usize, rng: &mut RngStream) -> Result<GmmFit, NumError> {
    gmm_em_fit_with(points, k, rng, EM_MAX_ITER)
}

/// Expectation-maximisation for a diagonal-covariance Gaussian mixture,
/// initialised from a k-means partition. Variances use the maximum-likelihood
/// (divide by total responsibility) estimate, floored at [`VARIANCE_FLOOR`].
pub fn gmm_em_fit_with(
    points: &Matrix,
    k: usize,
    rng: &mut RngStream,
    max_iter: usize,
) -> Result<GmmFit, NumError> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(NumError::InvalidInput(format!(
            "cannot fit {k} mixture components to {n} points"
        )));
    }
    let init = kmeans_fit(points, k, rng)?;
    let mut resp = Matrix::zeros(n, k);
    for (i, &l) in init.labels.iter().enumerate() {
        resp[(i, l)] = 1.0;
    }
    let mut floored = 0;
    let (mut weights, mut components) = m_step(points, &resp, &mut floored);
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (r, ll) = e_step(points, &weights, &components);
        resp = r;
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev) <= EM_TOLERANCE * n as f64);
        trace.push(ll);
        if done {
            break;
        }
        (weights, components) = m_step(points, &resp, &mut floored);
    }
    if floored > 0 {
        log::warn!("EM: {floored} component variances were floored at {VARIANCE_FLOOR}");
    }
    Ok(GmmFit {
        weights,
        components,
        responsibilities: resp,
        log_likelihood_trace: trace,
        floored_variances: floored,
    })
}

fn e_step(points: &Matrix, weights: &[f64], comps: &[DiagGaussian]) -> (Matrix, f64) {
    let k = comps.len();
    let mut resp = Matrix::zeros(points.rows(), k);
    let mut ll = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let row = resp.row_mut(i);
        for j in 0..k {
            row[j] = if weights[j] > 0.0 {
                weights[j].ln() + comps[j].log_density(p)
            } else {
                f64::NEG_INFINITY
            };
        }
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        let lse = mx + s.ln();
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        ll += lse;
    }
    (resp, ll)
}

fn m_step(points: &Matrix, resp: &Matrix, floored: &mut usize) -> (Vec<f64>, Vec<DiagGaussian>) {
    let (n, d, k) = (points.rows(), points.cols(), resp.cols());
    let mut weights = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[(i, j)]).sum();
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        if nk > 0.0 {
            for (i, p) in points.row_iter().enumerate() {
                let r = resp[(i, j)];
                for (m, x) in mean.iter_mut().zip(p) {
                    *m += r * x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            for (i, p) in points.row_iter().enumerate() {
                let r = resp[(i, j)];
                for ((v, x), m) in var.iter_mut().zip(p).zip(&mean) {
                    *v += r * (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= nk);
        }
        for v in var.iter_mut() {
            if *v < VARIANCE_FLOOR {
                *v = VARIANCE_FLOOR;
                *floored += 1;
            }
        }
        weights.push(nk / n as f64);
        comps.push(DiagGaussian { mean, var });
    }
    (weights, comps)
}

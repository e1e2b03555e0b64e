//! Penalised linear regression: ridge in closed form, lasso and elastic net
//! by cyclic coordinate descent.

use serde::{Deserialize, Serialize};

use crate::numkit::linalg::solve_spd;
use crate::numkit::{Matrix, NumError};
use crate::{Error, Result};

/// Coordinate descent stops once the duality gap falls below this fraction
/// of the centred outcome's squared norm.
pub const DUALITY_GAP_TOL: f64 = 1e-6;
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn constant(d: usize, value: f64) -> Self {
        LinearModel {
            coef: vec![0.0; d],
            intercept: value,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Column means of `x`, mean of `y`, and the centred copies.
fn centre(x: &Matrix, y: &[f64]) -> (Vec<f64>, f64, Matrix, Vec<f64>) {
    let xm = x.column_means();
    let ym = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let mut xc = x.clone();
    for i in 0..x.rows() {
        for (v, m) in xc.row_mut(i).iter_mut().zip(&xm) {
            *v -= m;
        }
    }
    let yc = y.iter().map(|v| v - ym).collect();
    (xm, ym, xc, yc)
}

fn check(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() || y.is_empty() {
        return Err(Error::Data(format!(
            "{} feature rows for {} outcomes",
            x.rows(),
            y.len()
        )));
    }
    Ok(())
}

/// Minimises `‖y − b − Xw‖² + penalty·‖w‖²` with an unpenalised intercept.
/// A singular system is retried with the penalty raised tenfold (starting
/// from a small multiple of the Gram diagonal when it is zero).
pub fn ridge_fit(x: &Matrix, y: &[f64], penalty: f64) -> Result<LinearModel> {
    check(x, y)?;
    let (xm, ym, xc, yc) = centre(x, y);
    let d = x.cols();
    let gram = xc.t_matmul(&xc)?;
    let rhs: Vec<f64> = (0..d)
        .map(|j| xc.row_iter().zip(&yc).map(|(r, v)| r[j] * v).sum())
        .collect();
    let diag_scale = (0..d).map(|j| gram[(j, j)]).fold(0.0, f64::max).max(1.0);
    let mut lambda = penalty;
    for _ in 0..30 {
        let mut a = gram.clone();
        for j in 0..d {
            a[(j, j)] += lambda;
        }
        match solve_spd(&a, &rhs) {
            Ok(coef) => {
                if lambda != penalty {
                    log::warn!("ridge system singular at penalty {penalty}; solved with {lambda:e}");
                }
                let intercept = ym - coef.iter().zip(&xm).map(|(w, m)| w * m).sum::<f64>();
                return Ok(LinearModel { coef, intercept });
            }
            Err(NumError::Singular(_)) => {
                lambda = if lambda > 0.0 { lambda * 10.0 } else { 1e-10 * diag_scale };
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(NumError::Singular("ridge system stayed singular after raising the penalty".into()).into())
}

/// Result of a coordinate-descent fit.
#[derive(Clone, Debug, PartialEq)]
pub struct CdFit {
    pub model: LinearModel,
    /// Objective after each full sweep.
    pub objective_trace: Vec<f64>,
    pub duality_gap: f64,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimises `(1/2n)‖y − b − Xw‖² + l1·‖w‖₁ + (l2/2)·‖w‖²`.
pub fn elastic_net_fit(x: &Matrix, y: &[f64], l1: f64, l2: f64) -> Result<CdFit> {
    check(x, y)?;
    if !(l1 >= 0.0 && l2 >= 0.0) {
        return Err(Error::Config("penalties must be nonnegative".into()));
    }
    let (xm, ym, xc, yc) = centre(x, y);
    let n = x.rows() as f64;
    let d = x.cols();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| xc.column(j)).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut w = vec![0.0; d];
    let mut r = yc.clone();
    let y_norm2: f64 = yc.iter().map(|v| v * v).sum();
    // sum-scaled penalties: (1/2)‖r‖² + alpha‖w‖₁ + (beta/2)‖w‖²
    let (alpha, beta) = (l1 * n, l2 * n);
    let objective = |w: &[f64], r: &[f64]| {
        (0.5 * r.iter().map(|v| v * v).sum::<f64>()
            + alpha * w.iter().map(|v| v.abs()).sum::<f64>()
            + 0.5 * beta * w.iter().map(|v| v * v).sum::<f64>())
            / n
    };
    let gap = |w: &[f64], r: &[f64]| {
        let xta: Vec<f64> = (0..d)
            .map(|j| cols[j].iter().zip(r).map(|(a, b)| a * b).sum::<f64>() - beta * w[j])
            .collect();
        let dual_norm = xta.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let r_norm2: f64 = r.iter().map(|v| v * v).sum();
        let w_norm2: f64 = w.iter().map(|v| v * v).sum();
        let (c, mut g) = if dual_norm > alpha {
            let c = alpha / dual_norm;
            (c, 0.5 * (r_norm2 + r_norm2 * c * c))
        } else {
            (1.0, r_norm2)
        };
        let ry: f64 = r.iter().zip(&yc).map(|(a, b)| a * b).sum();
        g += alpha * w.iter().map(|v| v.abs()).sum::<f64>() - c * ry + 0.5 * beta * (1.0 + c * c) * w_norm2;
        g
    };
    let mut trace = Vec::new();
    let mut g = gap(&w, &r);
    for _ in 0..MAX_SWEEPS {
        if g <= DUALITY_GAP_TOL * y_norm2.max(f64::MIN_POSITIVE) {
            break;
        }
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let rho: f64 = cols[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + norms[j] * old;
            let new = soft_threshold(rho, alpha) / (norms[j] + beta);
            if new != old {
                let delta = new - old;
                for (ri, xi) in r.iter_mut().zip(&cols[j]) {
                    *ri -= delta * xi;
                }
                w[j] = new;
            }
        }
        trace.push(objective(&w, &r));
        g = gap(&w, &r);
    }
    if g > DUALITY_GAP_TOL * y_norm2.max(f64::MIN_POSITIVE) {
        log::warn!("coordinate descent stopped after {MAX_SWEEPS} sweeps with gap {g:e}");
    }
    let intercept = ym - w.iter().zip(&xm).map(|(a, m)| a * m).sum::<f64>();
    Ok(CdFit {
        model: LinearModel { coef: w, intercept },
        objective_trace: trace,
        duality_gap: g,
    })
}

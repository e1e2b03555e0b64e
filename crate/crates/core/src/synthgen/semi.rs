//! Surrogate outcome model for real-feature tables: donors are grouped into
//! pseudo-types by k-means and each pseudo-type gets a frozen random
//! softplus-linear response to the recipient features.

use serde::{Deserialize, Serialize};

use super::MIN_UNTREATED_DAYS;
use crate::datamodel::Dataset;
use crate::numkit::{kmeans_fit, Matrix, RngStream};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiSyntheticConfig {
    /// Number of donor pseudo-types.
    pub k: usize,
    /// Days per unit of softplus output.
    pub scale: f64,
    pub noise_sd: f64,
    pub untreated_scale: f64,
    pub seed: u64,
}

impl Default for SemiSyntheticConfig {
    fn default() -> Self {
        SemiSyntheticConfig {
            k: 3,
            scale: 500.0,
            noise_sd: 20.0,
            untreated_scale: 200.0,
            seed: 0,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Column-standardised copy; constant columns are only centred.
fn standardize(m: &Matrix) -> Matrix {
    let n = m.rows().max(1) as f64;
    let mean = m.column_means();
    let mut out = m.clone();
    for j in 0..m.cols() {
        let var = m.row_iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
        let sd = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        for i in 0..m.rows() {
            out[(i, j)] = (m[(i, j)] - mean[j]) / sd;
        }
    }
    out
}

/// Replaces outcomes with draws from the surrogate model and attaches the
/// full potential-outcome vectors. Outcomes are clamped to at least one day.
pub fn semi_synthetic_outcomes(dataset: &Dataset, config: &SemiSyntheticConfig) -> Result<Dataset> {
    let root = RngStream::new(config.seed);
    let donors = standardize(&dataset.donors());
    let recipients = standardize(&dataset.recipients());
    let fit = kmeans_fit(&donors, config.k, &mut root.derive("pseudo-types"))?;

    let mut rng = root.derive("response");
    let d = recipients.cols();
    let sd_w = 1.0 / (d.max(1) as f64).sqrt();
    let mut draw_response = || -> (Vec<f64>, f64) {
        let w = (0..d).map(|_| rng.gaussian(0.0, sd_w)).collect();
        (w, rng.normal())
    };
    let responses: Vec<(Vec<f64>, f64)> = (0..config.k).map(|_| draw_response()).collect();
    let untreated = draw_response();

    let linear = |(w, b): &(Vec<f64>, f64), x: &[f64]| -> f64 {
        w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b
    };
    let mut noise = root.derive("noise");
    let mut out = dataset.clone();
    for (i, r) in out.records.iter_mut().enumerate() {
        let x = recipients.row(i);
        let ys: Vec<f64> = responses
            .iter()
            .map(|resp| {
                let mean = softplus(linear(resp, x)) * config.scale;
                (mean + config.noise_sd * noise.normal()).max(MIN_UNTREATED_DAYS)
            })
            .collect();
        let k = fit.labels[i];
        r.outcome = ys[k];
        r.true_potentials = Some(ys);
        r.true_donor_type = Some(k);
        r.true_recipient_type = None;
        r.untreated_survival =
            Some((softplus(linear(&untreated, x)) * config.untreated_scale).max(MIN_UNTREATED_DAYS));
    }
    Ok(out)
}

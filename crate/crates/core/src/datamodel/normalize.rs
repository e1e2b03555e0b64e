use serde::{Deserialize, Serialize};

use super::{Dataset, SplitIndices};
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Scales whose standard deviation is below this are treated as constant.
const CONSTANT_COLUMN_STD: f64 = 1e-12;

/// Per-feature affine maps `x -> (x - mean) / scale`. Outcomes are left in days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub recipient_mean: Vec<f64>,
    pub recipient_scale: Vec<f64>,
    pub donor_mean: Vec<f64>,
    pub donor_scale: Vec<f64>,
}

impl Normalization {
    pub fn recipient(&self, x: &[f64]) -> Vec<f64> {
        forward(x, &self.recipient_mean, &self.recipient_scale)
    }

    pub fn donor(&self, x: &[f64]) -> Vec<f64> {
        forward(x, &self.donor_mean, &self.donor_scale)
    }

    pub fn recipient_inverse(&self, z: &[f64]) -> Vec<f64> {
        inverse(z, &self.recipient_mean, &self.recipient_scale)
    }

    pub fn donor_inverse(&self, z: &[f64]) -> Vec<f64> {
        inverse(z, &self.donor_mean, &self.donor_scale)
    }

    /// Applies the maps to every record of `dataset`.
    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        if self.recipient_mean.len() != dataset.schema.d_r()
            || self.donor_mean.len() != dataset.schema.d_o()
        {
            return Err(Error::Data(
                "normalization statistics do not match the dataset schema".into(),
            ));
        }
        let mut out = dataset.clone();
        for r in &mut out.records {
            r.recipient = self.recipient(&r.recipient);
            r.donor = self.donor(&r.donor);
        }
        out.normalization = Some(self.clone());
        Ok(out)
    }

    /// Undoes [`Normalization::transform`].
    pub fn denormalize(&self, dataset: &Dataset) -> Dataset {
        let mut out = dataset.clone();
        for r in &mut out.records {
            r.recipient = self.recipient_inverse(&r.recipient);
            r.donor = self.donor_inverse(&r.donor);
        }
        out.normalization = None;
        out
    }
}

fn forward(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(mean)
        .zip(scale)
        .map(|((v, m), s)| (v - m) / s)
        .collect()
}

fn inverse(z: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(mean)
        .zip(scale)
        .map(|((v, m), s)| v * s + m)
        .collect()
}

/// Recipient and donor matrices of `dataset` under `norm`. A dataset that is
/// already normalised must carry exactly these statistics.
pub fn features_under(dataset: &Dataset, norm: Option<&Normalization>) -> Result<(Matrix, Matrix)> {
    match (&dataset.normalization, norm) {
        (Some(a), Some(b)) if a == b => Ok((dataset.recipients(), dataset.donors())),
        (Some(_), _) => Err(Error::Data(
            "dataset is normalised with different statistics than the model".into(),
        )),
        (None, None) => Ok((dataset.recipients(), dataset.donors())),
        (None, Some(n)) => {
            let t = n.transform(dataset)?;
            Ok((t.recipients(), t.donors()))
        }
    }
}

/// Population mean and standard deviation of each column over `rows`.
fn column_stats<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, d: usize, side: &str) -> (Vec<f64>, Vec<f64>) {
    let n = rows.clone().count().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let sd = (s / n).sqrt();
            if sd < CONSTANT_COLUMN_STD {
                log::warn!("{side} feature {j} is constant on the training split; scale set to 1");
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, scale)
}

/// Fits feature statistics on the training rows only and applies them to all rows.
pub fn normalize_fit_transform(dataset: &Dataset, split: &SplitIndices) -> Result<Dataset> {
    if split.train.iter().any(|&i| i >= dataset.len()) {
        return Err(Error::Data("split refers to records outside the dataset".into()));
    }
    let train = || split.train.iter().map(|&i| &dataset.records[i]);
    let (recipient_mean, recipient_scale) = column_stats(
        train().map(|r| r.recipient.as_slice()),
        dataset.schema.d_r(),
        "recipient",
    );
    let (donor_mean, donor_scale) =
        column_stats(train().map(|r| r.donor.as_slice()), dataset.schema.d_o(), "donor");
    Normalization {
        recipient_mean,
        recipient_scale,
        donor_mean,
        donor_scale,
    }
    .transform(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{MatchRecord, Schema};

    fn fixture() -> Dataset {
        let rows = [[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [10.0, 7.0], [-4.0, 1.0]];
        let records = rows
            .iter()
            .map(|r| MatchRecord::new(vec![r[0]], vec![r[1]], 100.0))
            .collect();
        let schema = Schema {
            recipient_features: vec!["a".into()],
            donor_features: vec!["b".into()],
            outcome: "y".into(),
        };
        Dataset::new(records, schema).unwrap()
    }

    #[test]
    fn validation_rows_use_training_statistics() {
        let ds = fixture();
        let split = SplitIndices {
            train: vec![0, 1, 2],
            validation: vec![3, 4],
        };
        let out = normalize_fit_transform(&ds, &split).unwrap();
        // train recipient column {1, 2, 3}: mean 2, population sd sqrt(2/3)
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((out.records[3].recipient[0] - 8.0 / sd).abs() < 1e-12);
        assert!((out.records[4].recipient[0] + 6.0 / sd).abs() < 1e-12);
        // donor column is constant on train: centered, scale 1
        assert_eq!(out.records[0].donor[0], 0.0);
        assert_eq!(out.records[3].donor[0], 2.0);
        assert_eq!(out.records[4].outcome, 100.0);
    }

    #[test]
    fn denormalize_inverts() {
        let ds = fixture();
        let split = SplitIndices {
            train: vec![0, 3, 4],
            validation: vec![1, 2],
        };
        let norm = normalize_fit_transform(&ds, &split).unwrap();
        let back = norm.normalization.clone().unwrap().denormalize(&norm);
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert!((a.recipient[0] - b.recipient[0]).abs() < 1e-9);
            assert!((a.donor[0] - b.donor[0]).abs() < 1e-9);
        }
    }
}

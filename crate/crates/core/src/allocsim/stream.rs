use serde::{Deserialize, Serialize};

use crate::datamodel::Dataset;
use crate::numkit::RngStream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipientArrival {
    /// Record index in the source dataset.
    pub id: usize,
    pub step: usize,
    pub features: Vec<f64>,
    /// Days the recipient survives without a transplant, counted from arrival.
    pub untreated_survival: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorArrival {
    pub id: usize,
    pub step: usize,
    pub features: Vec<f64>,
}

/// Arrivals in nondecreasing step order; ties keep record order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub recipients: Vec<RecipientArrival>,
    pub donors: Vec<DonorArrival>,
    /// `factual[d]` is the recipient the donor was paired with in the data.
    pub factual: Option<Vec<usize>>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.recipients.len() + self.donors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_step(&self) -> Option<usize> {
        let r = self.recipients.last().map(|r| r.step);
        let d = self.donors.last().map(|d| d.step);
        r.max(d)
    }
}

/// Recipient `i` arrives at step `i`; its factual donor arrives at `i + lag`
/// with `lag` uniform on `0..=window`.
pub fn build_stream(dataset: &Dataset, window: usize, seed: u64) -> Result<EventStream> {
    let mut lags = RngStream::new(seed).derive("stream-lags");
    let mut recipients = Vec::with_capacity(dataset.len());
    let mut donors = Vec::with_capacity(dataset.len());
    for (i, rec) in dataset.records.iter().enumerate() {
        let untreated = rec.untreated_survival.ok_or_else(|| {
            Error::Unsupported(format!(
                "record {i} has no untreated survival; simulation needs ground truth"
            ))
        })?;
        recipients.push(RecipientArrival {
            id: i,
            step: i,
            features: rec.recipient.clone(),
            untreated_survival: untreated,
        });
        donors.push(DonorArrival {
            id: i,
            step: i + lags.int_inclusive(0, window as u64) as usize,
            features: rec.donor.clone(),
        });
    }
    donors.sort_by_key(|d| (d.step, d.id));
    Ok(EventStream {
        recipients,
        donors,
        factual: Some((0..dataset.len()).collect()),
    })
}

//! Dataset representation, CSV ingestion, splitting and feature scaling.

mod csvio;
mod normalize;
mod split;

pub use csvio::{load_csv, read_ground_truth_csv, write_csv, write_ground_truth_csv};
pub use normalize::{features_under, normalize_fit_transform, Normalization};
pub use split::{split, SplitIndices, DEFAULT_TRAIN_FRACTION};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;
use crate::{Error, Result};

/// One observed donor-recipient pair. Type labels are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub recipient: Vec<f64>,
    pub donor: Vec<f64>,
    /// Observed survival in days.
    pub outcome: f64,
    pub true_potentials: Option<Vec<f64>>,
    pub untreated_survival: Option<f64>,
    pub true_recipient_type: Option<usize>,
    pub true_donor_type: Option<usize>,
}

impl MatchRecord {
    pub fn new(recipient: Vec<f64>, donor: Vec<f64>, outcome: f64) -> Self {
        MatchRecord {
            recipient,
            donor,
            outcome,
            true_potentials: None,
            untreated_survival: None,
            true_recipient_type: None,
            true_donor_type: None,
        }
    }
}

/// Flat (post-encoding) feature names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub recipient_features: Vec<String>,
    pub donor_features: Vec<String>,
    pub outcome: String,
}

impl Schema {
    pub fn d_r(&self) -> usize {
        self.recipient_features.len()
    }

    pub fn d_o(&self) -> usize {
        self.donor_features.len()
    }

    /// A config that reads back exactly what [`write_csv`] emits.
    pub fn to_config(&self) -> SchemaConfig {
        SchemaConfig {
            recipient_columns: self.recipient_features.clone(),
            donor_columns: self.donor_features.clone(),
            outcome_column: self.outcome.clone(),
            categorical: BTreeMap::new(),
        }
    }
}

/// Column layout of an external CSV file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub recipient_columns: Vec<String>,
    pub donor_columns: Vec<String>,
    pub outcome_column: String,
    /// Declared category lists; a column listed here is one-hot encoded.
    #[serde(default)]
    pub categorical: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<MatchRecord>,
    pub schema: Schema,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(records: Vec<MatchRecord>, schema: Schema) -> Result<Self> {
        let ds = Dataset {
            records,
            schema,
            normalization: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self
            .records
            .first()
            .and_then(|r| r.true_potentials.as_ref())
            .map(Vec::len);
        for (i, r) in self.records.iter().enumerate() {
            if r.recipient.len() != self.schema.d_r() || r.donor.len() != self.schema.d_o() {
                return Err(Error::Data(format!(
                    "record {i} has {}+{} features, schema declares {}+{}",
                    r.recipient.len(),
                    r.donor.len(),
                    self.schema.d_r(),
                    self.schema.d_o()
                )));
            }
            if !r.outcome.is_finite() {
                return Err(Error::Data(format!("record {i} has a non-finite outcome")));
            }
            if r.true_potentials.as_ref().map(Vec::len) != k {
                return Err(Error::Data(format!(
                    "record {i} disagrees with record 0 on ground-truth availability"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.records
            .first()
            .is_some_and(|r| r.true_potentials.is_some())
    }

    /// Number of donor types in the attached ground truth.
    pub fn true_k(&self) -> Option<usize> {
        self.records
            .first()
            .and_then(|r| r.true_potentials.as_ref())
            .map(Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            schema: self.schema.clone(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn recipients(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.records.iter().map(|r| r.recipient.as_slice()).collect();
        matrix_from(&rows, self.schema.d_r())
    }

    pub fn donors(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.records.iter().map(|r| r.donor.as_slice()).collect();
        matrix_from(&rows, self.schema.d_o())
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.outcome).collect()
    }

    /// Recipient features with donor features appended, one row per record.
    pub fn pair_features(&self) -> Matrix {
        let d = self.schema.d_r() + self.schema.d_o();
        let rows: Vec<Vec<f64>> = self
            .records
            .iter()
            .map(|r| r.recipient.iter().chain(&r.donor).copied().collect())
            .collect();
        matrix_from(&rows, d)
    }

    pub fn true_potentials(&self) -> Result<Vec<Vec<f64>>> {
        self.records
            .iter()
            .map(|r| {
                r.true_potentials.clone().ok_or_else(|| {
                    Error::Unsupported("ground-truth potential outcomes are not available".into())
                })
            })
            .collect()
    }

    pub fn true_donor_types(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| {
                r.true_donor_type.ok_or_else(|| {
                    Error::Unsupported("ground-truth donor types are not available".into())
                })
            })
            .collect()
    }

    pub fn true_recipient_types(&self) -> Result<Vec<usize>> {
        self.records
            .iter()
            .map(|r| {
                r.true_recipient_type.ok_or_else(|| {
                    Error::Unsupported("ground-truth recipient types are not available".into())
                })
            })
            .collect()
    }
}

fn matrix_from<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Matrix {
    if rows.is_empty() {
        return Matrix::zeros(0, cols);
    }
    Matrix::from_rows(rows).expect("records were validated against the schema")
}

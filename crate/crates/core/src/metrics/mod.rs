//! Prediction-quality metrics, clustering agreement and report containers.

mod eval;

pub use eval::{evaluate, OutcomeModel, TypedModel, REFERENCE_DONORS_PER_TYPE};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkit::argmax;
use crate::{Error, Result};

fn check_rows(a: &[Vec<f64>], b_len: usize, what: &str) -> Result<usize> {
    if a.len() != b_len {
        return Err(Error::Data(format!("{} predictions vs {b_len} {what}", a.len())));
    }
    Ok(a.first().map_or(0, Vec::len))
}

/// `(1/n) Σ (ŷ_i[k_i] − y_i)²`.
pub fn eps_factual(predictions: &[Vec<f64>], factual: &[usize], outcomes: &[f64]) -> Result<f64> {
    let k = check_rows(predictions, outcomes.len(), "outcomes")?;
    if factual.len() != outcomes.len() {
        return Err(Error::Data("one factual label per outcome required".into()));
    }
    let mut sum = 0.0;
    for ((p, &l), &y) in predictions.iter().zip(factual).zip(outcomes) {
        if p.len() != k || l >= k {
            return Err(Error::Data(format!("label {l} or row length {} outside K = {k}", p.len())));
        }
        sum += (p[l] - y) * (p[l] - y);
    }
    Ok(sum / outcomes.len().max(1) as f64)
}

/// `(1/n) Σ_i Σ_k (ŷ_i[k] − y_i[k])²`.
pub fn eps_wmse(predictions: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    let k = check_rows(predictions, truths.len(), "ground-truth vectors")?;
    let mut sum = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        if p.len() != k || t.len() != k {
            return Err(Error::Data("potential-outcome vectors differ in length".into()));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / truths.len().max(1) as f64)
}

/// Fraction of records whose predicted and true best donor types agree
/// (lowest index wins ties on both sides).
pub fn aodt(predictions: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    let k = check_rows(predictions, truths.len(), "ground-truth vectors")?;
    if predictions.iter().chain(truths).any(|v| v.len() != k) {
        return Err(Error::Data("potential-outcome vectors differ in length".into()));
    }
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| argmax(p) == argmax(t))
        .count();
    Ok(hits as f64 / truths.len().max(1) as f64)
}

/// `(1/n) Σ_i max_k ŷ_i[k]`.
pub fn mean_best_prediction(predictions: &[Vec<f64>]) -> f64 {
    let sum: f64 = predictions
        .iter()
        .map(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    sum / predictions.len().max(1) as f64
}

/// Among recipients of type `recipient_filter` that were originally given a
/// donor of type `donor_filter` and are transplanted under the new policy,
/// the fraction whose new donor type differs. `None` when that set is empty.
pub fn flipped_ratio(
    original: &[Option<usize>],
    new: &[Option<usize>],
    recipient_types: &[usize],
    recipient_filter: usize,
    donor_filter: usize,
) -> Result<Option<f64>> {
    if original.len() != new.len() || original.len() != recipient_types.len() {
        return Err(Error::Data("assignment logs cover different recipients".into()));
    }
    let mut total = 0;
    let mut flipped = 0;
    for ((o, n), &m) in original.iter().zip(new).zip(recipient_types) {
        if m == recipient_filter && *o == Some(donor_filter) {
            if let Some(nk) = n {
                total += 1;
                flipped += usize::from(*nk != donor_filter);
            }
        }
    }
    Ok((total > 0).then(|| flipped as f64 / total as f64))
}

fn contingency(a: &[usize], b: &[usize]) -> Vec<Vec<u64>> {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    table
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data("labelings differ in length".into()));
    }
    let table = contingency(a, b);
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..table.first().map_or(0, Vec::len))
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = pairs(a.len() as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < f64::EPSILON {
        // both labelings are trivial; they agree exactly
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Largest share of the items with true label `component` that fall into a
/// single predicted cluster.
pub fn component_purity(truth: &[usize], predicted: &[usize], component: usize) -> Option<f64> {
    let mut counts = std::collections::BTreeMap::new();
    let mut total = 0usize;
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == component {
            *counts.entry(p).or_insert(0usize) += 1;
            total += 1;
        }
    }
    counts
        .values()
        .max()
        .map(|&m| m as f64 / total as f64)
}

/// Maps predictions indexed by learned cluster onto ground-truth donor types:
/// `ŷ_true[j] = Σ_c P(cluster c | true type j) · ŷ[c]`, the expected prediction
/// for a donor of true type `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeAlignment {
    /// `mixing[j][c] = P(learned c | true j)`.
    pub mixing: Vec<Vec<f64>>,
}

impl TypeAlignment {
    /// Estimated from paired true and learned labels (normally training donors).
    pub fn fit(true_types: &[usize], learned: &[usize], k_true: usize, k_learned: usize) -> Result<Self> {
        if true_types.len() != learned.len() {
            return Err(Error::Data("label lists differ in length".into()));
        }
        let mut mixing = vec![vec![0.0; k_learned]; k_true];
        for (&t, &c) in true_types.iter().zip(learned) {
            if t >= k_true || c >= k_learned {
                return Err(Error::Data(format!("label pair ({t}, {c}) out of range")));
            }
            mixing[t][c] += 1.0;
        }
        for (j, row) in mixing.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                log::warn!("true donor type {j} has no donors; aligned as a uniform mixture");
                row.iter_mut().for_each(|v| *v = 1.0 / k_learned as f64);
            } else {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        Ok(TypeAlignment { mixing })
    }

    pub fn identity(k: usize) -> Self {
        TypeAlignment {
            mixing: (0..k)
                .map(|j| (0..k).map(|c| if c == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn apply(&self, prediction: &[f64]) -> Vec<f64> {
        self.mixing
            .iter()
            .map(|row| row.iter().zip(prediction).map(|(w, y)| w * y).sum())
            .collect()
    }

    pub fn apply_all(&self, predictions: &[Vec<f64>]) -> Vec<Vec<f64>> {
        predictions.iter().map(|p| self.apply(p)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// Day².
    pub eps_f: f64,
    /// Day²; absent without ground truth.
    pub eps_wmse: Option<f64>,
    pub aodt: Option<f64>,
    pub n: usize,
}

pub const EVAL_CSV_HEADER: [&str; 5] = ["model", "eps_f", "eps_wmse", "aodt", "n"];

impl EvalReport {
    pub fn csv_row(&self) -> [String; 5] {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        [
            self.model.clone(),
            self.eps_f.to_string(),
            opt(self.eps_wmse),
            opt(self.aodt),
            self.n.to_string(),
        ]
    }

    /// Writes one or more reports as a table with a header row.
    pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(EVAL_CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

//! Sequential allocation of arriving donors to a waitlist of recipients
//! under first-come, utility-first, benefit-first, factual and model-guided
//! policies.

mod policy;
mod scorer;
mod stream;

pub use policy::{policy_select, run_policy, Policy, Rule, WaitlistEntry};
pub use scorer::{Oracle, Scorer};
pub use stream::{build_stream, DonorArrival, EventStream, RecipientArrival};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 50;
/// Days of untreated survival consumed per simulation step.
pub const DEFAULT_DAYS_PER_STEP: f64 = 11.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Largest lag, in steps, between a recipient and its factual donor.
    pub window: usize,
    pub days_per_step: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            window: DEFAULT_WINDOW,
            days_per_step: DEFAULT_DAYS_PER_STEP,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.days_per_step >= 0.0 && self.days_per_step.is_finite()) {
            return Err(Error::Config("days_per_step must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fate {
    Transplanted,
    Dead,
    Waiting,
}

impl Fate {
    fn as_str(self) -> &'static str {
        match self {
            Fate::Transplanted => "transplanted",
            Fate::Dead => "dead",
            Fate::Waiting => "waiting",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub recipient_id: usize,
    pub arrival: usize,
    pub fate: Fate,
    pub step_of_fate: Option<usize>,
    pub donor_id: Option<usize>,
    pub realized_survival: Option<f64>,
    /// Realised survival minus untreated survival remaining at transplant.
    pub benefit: Option<f64>,
}

pub const LEDGER_CSV_HEADER: [&str; 7] = [
    "recipient_id",
    "arrival",
    "fate",
    "step_of_fate",
    "donor_id",
    "realized_survival",
    "benefit",
];

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "policy",
    "scorer",
    "death_rate",
    "avg_survival",
    "avg_benefit",
    "flipped_ratio",
    "transplanted",
    "dead",
    "waiting",
    "n",
];

/// Aggregates of one simulation run. Averages are over transplanted
/// recipients and absent when nobody was transplanted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    pub scorer: Option<String>,
    pub n: usize,
    pub transplanted: usize,
    pub dead: usize,
    pub waiting: usize,
    pub death_rate: f64,
    pub avg_survival: Option<f64>,
    pub avg_benefit: Option<f64>,
    /// Share of type-1 recipients factually given a type-1 donor who now
    /// receive a donor of another type, among those transplanted.
    pub flipped_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ledger: Vec<LedgerRow>,
}

fn opt(v: Option<impl ToString>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl SimReport {
    pub fn from_ledger(policy: &str, scorer: Option<String>, ledger: Vec<LedgerRow>, flipped_ratio: Option<f64>) -> Self {
        let count = |f: Fate| ledger.iter().filter(|r| r.fate == f).count();
        let n = ledger.len();
        let dead = count(Fate::Dead);
        SimReport {
            policy: policy.to_string(),
            scorer,
            n,
            transplanted: count(Fate::Transplanted),
            dead,
            waiting: count(Fate::Waiting),
            death_rate: if n == 0 { 0.0 } else { dead as f64 / n as f64 },
            avg_survival: mean(ledger.iter().filter_map(|r| r.realized_survival)),
            avg_benefit: mean(ledger.iter().filter_map(|r| r.benefit)),
            flipped_ratio,
            ledger,
        }
    }

    pub fn csv_row(&self) -> [String; 10] {
        [
            self.policy.clone(),
            self.scorer.clone().unwrap_or_else(|| "NA".into()),
            self.death_rate.to_string(),
            opt(self.avg_survival),
            opt(self.avg_benefit),
            opt(self.flipped_ratio),
            self.transplanted.to_string(),
            self.dead.to_string(),
            self.waiting.to_string(),
            self.n.to_string(),
        ]
    }

    /// One row per report, in the given order.
    pub fn write_csv(reports: &[SimReport], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(REPORT_CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_ledger_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(LEDGER_CSV_HEADER)?;
        for r in &self.ledger {
            w.write_record([
                r.recipient_id.to_string(),
                r.arrival.to_string(),
                r.fate.as_str().to_string(),
                opt(r.step_of_fate),
                opt(r.donor_id),
                opt(r.realized_survival),
                opt(r.benefit),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

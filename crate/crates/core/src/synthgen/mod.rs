//! Synthetic recipient/donor populations with known counterfactual outcomes.

mod semi;

pub use semi::{semi_synthetic_outcomes, SemiSyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, MatchRecord, Schema};
use crate::numkit::RngStream;
use crate::{Error, Result};

pub const BIASED_PRESET: &str = "biased-2x3";
/// Untreated survival draws are clamped to at least this many days.
pub const MIN_UNTREATED_DAYS: f64 = 1.0;

/// Axis-aligned Gaussian in feature space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianComponent {
    fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| rng.gaussian(*m, v.sqrt()))
            .collect()
    }
}

/// Generative model with `M` recipient types and `K` donor types.
/// Matrices are indexed `[m][k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub recipient_type_weights: Vec<f64>,
    /// `P(k | m)`, one row per recipient type.
    pub match_table: Vec<Vec<f64>>,
    pub recipient_components: Vec<GaussianComponent>,
    pub donor_components: Vec<GaussianComponent>,
    pub outcome_means: Vec<Vec<f64>>,
    pub outcome_vars: Vec<Vec<f64>>,
    pub untreated_mean: Vec<f64>,
    pub untreated_var: Vec<f64>,
    pub seed: u64,
}

fn unit(mean: [f64; 2]) -> GaussianComponent {
    GaussianComponent {
        mean: mean.to_vec(),
        var: vec![1.0, 1.0],
    }
}

impl SyntheticConfig {
    /// Two recipient types, three donor types, 5000 pairs in 2-D features.
    pub fn biased_preset() -> Self {
        SyntheticConfig {
            n: 5000,
            recipient_type_weights: vec![0.5, 0.5],
            match_table: vec![vec![0.6, 0.2, 0.2], vec![0.1, 0.7, 0.2]],
            recipient_components: vec![unit([-2.0, 0.0]), unit([2.0, 0.0])],
            donor_components: vec![unit([-2.0, -2.0]), unit([2.0, 2.0]), unit([3.0, 1.0])],
            outcome_means: vec![vec![500.0, 1000.0, 1100.0], vec![100.0, 800.0, 900.0]],
            outcome_vars: vec![vec![50.0, 100.0, 100.0], vec![10.0, 100.0, 100.0]],
            untreated_mean: vec![400.0, 350.0],
            untreated_var: vec![2500.0, 2500.0],
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            BIASED_PRESET => Ok(Self::biased_preset()),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// Reads a JSON object. An optional `preset` key supplies defaults that
    /// the remaining keys override.
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(mut obj) = value else {
            return Err(Error::Config("synthetic config must be a JSON object".into()));
        };
        let base = match obj.remove("preset") {
            Some(serde_json::Value::String(p)) => serde_json::to_value(Self::preset(&p)?)?,
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => serde_json::Value::Object(Default::default()),
        };
        let serde_json::Value::Object(mut merged) = base else {
            unreachable!("configs serialize to objects")
        };
        merged.extend(obj);
        let cfg: Self = serde_json::from_value(serde_json::Value::Object(merged))
            .map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_recipient_types(&self) -> usize {
        self.recipient_type_weights.len()
    }

    pub fn num_donor_types(&self) -> usize {
        self.donor_components.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_recipient_types();
        let k = self.num_donor_types();
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if m == 0 || k == 0 {
            return bad("need at least one recipient type and one donor type".into());
        }
        check_probabilities("recipient_type_weights", &self.recipient_type_weights)?;
        if self.match_table.len() != m {
            return bad(format!("match_table has {} rows, expected {m}", self.match_table.len()));
        }
        for (i, row) in self.match_table.iter().enumerate() {
            if row.len() != k {
                return bad(format!("match_table row {} has {} entries, expected {k}", i + 1, row.len()));
            }
            check_probabilities(&format!("match_table row {}", i + 1), row)?;
        }
        for (name, table) in [("outcome_means", &self.outcome_means), ("outcome_vars", &self.outcome_vars)] {
            if table.len() != m || table.iter().any(|r| r.len() != k) {
                return bad(format!("{name} must be {m} x {k}"));
            }
        }
        if self.outcome_vars.iter().flatten().any(|&v| v.is_nan() || v <= 0.0) {
            return bad("outcome variances must be positive".into());
        }
        if self.untreated_mean.len() != m || self.untreated_var.len() != m {
            return bad(format!("untreated survival parameters must have {m} entries"));
        }
        if self.untreated_var.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return bad("untreated survival variances must be positive".into());
        }
        if self.recipient_components.len() != m {
            return bad(format!("expected {m} recipient components"));
        }
        for (side, comps) in [("recipient", &self.recipient_components), ("donor", &self.donor_components)] {
            let d = comps[0].mean.len();
            for c in comps.iter() {
                if c.mean.len() != d || c.var.len() != d || d == 0 {
                    return bad(format!("{side} components must share one positive dimension"));
                }
                if c.var.iter().any(|&v| v.is_nan() || v <= 0.0) {
                    return bad(format!("{side} component variances must be positive"));
                }
            }
        }
        Ok(())
    }

    fn schema(&self) -> Schema {
        let names = |prefix: &str, d: usize| (1..=d).map(|i| format!("{prefix}_{i}")).collect();
        Schema {
            recipient_features: names("xr", self.recipient_components[0].mean.len()),
            donor_features: names("xo", self.donor_components[0].mean.len()),
            outcome: "survival_days".into(),
        }
    }
}

fn check_probabilities(name: &str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "{name} must be nonnegative and sum to 1 (sums to {sum})"
        )));
    }
    Ok(())
}

/// Row `m` of the outcome table; `m` is one-based as in the model description.
pub fn true_potential_means(config: &SyntheticConfig, m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > config.outcome_means.len() {
        return Err(Error::Usage(format!(
            "recipient type {m} outside 1..={}",
            config.outcome_means.len()
        )));
    }
    Ok(config.outcome_means[m - 1].clone())
}

/// Draws `config.n` records. Every record carries its full potential-outcome
/// vector and the factual outcome is the entry at the factual donor type.
pub fn sample_dataset(config: &SyntheticConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = RngStream::new(config.seed).derive("synthgen");
    let k = config.num_donor_types();
    let records = (0..config.n)
        .map(|_| {
            let m = rng.categorical(&config.recipient_type_weights);
            let recipient = config.recipient_components[m].sample(&mut rng);
            let kk = rng.categorical(&config.match_table[m]);
            let donor = config.donor_components[kk].sample(&mut rng);
            let potentials: Vec<f64> = (0..k)
                .map(|j| rng.gaussian(config.outcome_means[m][j], config.outcome_vars[m][j].sqrt()))
                .collect();
            let untreated = rng
                .gaussian(config.untreated_mean[m], config.untreated_var[m].sqrt())
                .max(MIN_UNTREATED_DAYS);
            MatchRecord {
                recipient,
                donor,
                outcome: potentials[kk],
                true_potentials: Some(potentials),
                untreated_survival: Some(untreated),
                true_recipient_type: Some(m),
                true_donor_type: Some(kk),
            }
        })
        .collect();
    Dataset::new(records, config.schema())
}

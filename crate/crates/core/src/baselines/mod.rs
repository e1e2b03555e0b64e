//! Comparison models: decoupled clusterer × predictor baselines and direct
//! pair regressors, plus the tagged envelope every saved model uses.

pub mod cluster;
pub mod linear;
pub mod pair;
pub mod tree;

pub use cluster::{
    fit_cluster_predictor, fit_clusterer, fit_predictor, ClusterPredictorModel, ClusterPredictorSpec,
    ClustererKind, FittedClusterer, FittedPredictor, PredictorKind,
};
pub use linear::{elastic_net_fit, ridge_fit, CdFit, LinearModel};
pub use pair::{fit_pair_regressor, PairFit, PairKind, PairOptions, PairRegressorModel};
pub use tree::{Node, RegressionTree};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::matchrep::{MatchRepModel, MODEL_FORMAT};
use crate::metrics::OutcomeModel;
use crate::{Error, Result};

/// Any saved model, discriminated by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedModel {
    Matchrep(MatchRepModel),
    ClusterPredictor(ClusterPredictorModel),
    PairRegressor(PairRegressorModel),
}

impl SavedModel {
    pub fn as_outcome_model(&self) -> &dyn OutcomeModel {
        match self {
            SavedModel::Matchrep(m) => m,
            SavedModel::ClusterPredictor(m) => m,
            SavedModel::PairRegressor(m) => m,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SavedModel = serde_json::from_str(text)?;
        let (found, expected) = match &model {
            SavedModel::Matchrep(m) => (&m.format, MODEL_FORMAT),
            SavedModel::ClusterPredictor(m) => (&m.format, cluster::CLUSTER_FORMAT),
            SavedModel::PairRegressor(m) => (&m.format, pair::PAIR_FORMAT),
        };
        if found != expected {
            return Err(Error::Data(format!(
                "unsupported model format `{found}`, expected `{expected}`"
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

//! Regressors on the concatenated recipient-donor feature pair.

use serde::{Deserialize, Serialize};

use super::linear::{elastic_net_fit, ridge_fit, LinearModel};
use super::tree::{RegressionTree, DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF};
use crate::datamodel::{Dataset, Normalization};
use crate::matchrep::train::{outcome_standardisation, require_normalised};
use crate::metrics::OutcomeModel;
use crate::numkit::{adam_step, Activation, AdamState, DenseNet, Matrix, Parameterized, RngStream};
use crate::{Error, Result};

pub const PAIR_FORMAT: &str = "pair-regressor-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    RegNn,
    RegTree,
    Lasso,
    Ridge,
    Elasticnet,
}

impl PairKind {
    pub const ALL: [PairKind; 5] = [
        PairKind::RegNn,
        PairKind::RegTree,
        PairKind::Lasso,
        PairKind::Ridge,
        PairKind::Elasticnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PairKind::RegNn => "reg-nn",
            PairKind::RegTree => "reg-tree",
            PairKind::Lasso => "lasso",
            PairKind::Ridge => "ridge",
            PairKind::Elasticnet => "elasticnet",
        }
    }
}

impl std::str::FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pair regressor `{s}`")))
    }
}

/// Fixed hyperparameters of the pair regressors. Penalties follow the
/// `(1/2n)‖r‖² + l1‖w‖₁ + (l2/2)‖w‖²` convention except ridge, which
/// penalises the plain residual sum of squares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairOptions {
    pub ridge_penalty: f64,
    pub lasso_penalty: f64,
    pub elasticnet_penalty: f64,
    pub elasticnet_l1_ratio: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            ridge_penalty: 1.0,
            lasso_penalty: 1.0,
            elasticnet_penalty: 1.0,
            elasticnet_l1_ratio: 0.5,
            max_depth: DEFAULT_MAX_DEPTH,
            min_leaf: DEFAULT_MIN_LEAF,
            hidden: vec![32, 32],
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum PairFit {
    Linear(LinearModel),
    Tree(RegressionTree),
    /// Output is the standardised outcome; days are `offset + scale * net`.
    Net { net: DenseNet, offset: f64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRegressorModel {
    pub format: String,
    pub method: PairKind,
    pub normalization: Option<Normalization>,
    pub fit: PairFit,
}

impl PairRegressorModel {
    /// Predictions in days for rows of concatenated features in model space.
    pub fn predict_features(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(match &self.fit {
            PairFit::Linear(m) => m.predict(x),
            PairFit::Tree(t) => t.predict(x),
            PairFit::Net { net, offset, scale } => {
                net.predict(x)?.as_slice().iter().map(|v| offset + scale * v).collect()
            }
        })
    }

    /// Prediction in days for one pair in original units.
    pub fn predict_pair(&self, x_r: &[f64], x_o: &[f64]) -> Result<f64> {
        let (r, o) = match &self.normalization {
            Some(n) => (n.recipient(x_r), n.donor(x_o)),
            None => (x_r.to_vec(), x_o.to_vec()),
        };
        let row: Vec<f64> = r.into_iter().chain(o).collect();
        Ok(self.predict_features(&Matrix::from_vec(1, row.len(), row)?)?[0])
    }
}

impl OutcomeModel for PairRegressorModel {
    fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    fn predict_pairs(&self, recipients: &Matrix, donors: &Matrix) -> Result<Vec<f64>> {
        self.predict_features(&recipients.hconcat(donors)?)
    }
}

/// Fits `kind` on every record of a normalised dataset.
pub fn fit_pair_regressor(
    dataset: &Dataset,
    kind: PairKind,
    options: &PairOptions,
) -> Result<PairRegressorModel> {
    require_normalised(dataset)?;
    let x = dataset.pair_features();
    let y = dataset.outcomes();
    let fit = match kind {
        PairKind::Ridge => PairFit::Linear(ridge_fit(&x, &y, options.ridge_penalty)?),
        PairKind::Lasso => PairFit::Linear(elastic_net_fit(&x, &y, options.lasso_penalty, 0.0)?.model),
        PairKind::Elasticnet => {
            let (a, r) = (options.elasticnet_penalty, options.elasticnet_l1_ratio);
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config("elasticnet_l1_ratio must lie in [0, 1]".into()));
            }
            PairFit::Linear(elastic_net_fit(&x, &y, a * r, a * (1.0 - r))?.model)
        }
        PairKind::RegTree => PairFit::Tree(RegressionTree::fit(&x, &y, options.max_depth, options.min_leaf)?),
        PairKind::RegNn => fit_net(&x, &y, options)?,
    };
    Ok(PairRegressorModel {
        format: PAIR_FORMAT.into(),
        method: kind,
        normalization: dataset.normalization.clone(),
        fit,
    })
}

fn fit_net(x: &Matrix, y: &[f64], options: &PairOptions) -> Result<PairFit> {
    if options.batch_size == 0 || options.learning_rate.is_nan() || options.learning_rate <= 0.0 {
        return Err(Error::Config("batch_size and learning_rate must be positive".into()));
    }
    let root = RngStream::new(options.seed);
    let (offset, scale) = outcome_standardisation(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - offset) / scale).collect();
    let sizes: Vec<usize> = std::iter::once(x.cols())
        .chain(options.hidden.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    let mut net = DenseNet::glorot(&sizes, Activation::Relu, Activation::Identity, &mut root.derive("reg-nn"));
    let mut params = net.params();
    let mut adam = AdamState::new(params.len());
    let mut batches = root.derive("reg-nn-batches");
    for _ in 0..options.epochs {
        for chunk in batches.permutation(x.rows()).chunks(options.batch_size) {
            let xb = x.select_rows(chunk);
            let (out, cache) = net.forward(&xb)?;
            let n = chunk.len() as f64;
            let upstream: Vec<f64> = chunk
                .iter()
                .zip(out.as_slice())
                .map(|(&i, p)| 2.0 * (p - ys[i]) / n)
                .collect();
            let (g, _) = net.backward(&cache, &Matrix::from_vec(chunk.len(), 1, upstream)?)?;
            adam_step(&mut params, &g.to_flat(), &mut adam, options.learning_rate)?;
            net.read_params(&params);
        }
    }
    Ok(PairFit::Net { net, offset, scale })
}

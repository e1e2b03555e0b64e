//! Decoupled baselines: a donor clusterer fitted and frozen first, then a
//! per-cluster outcome predictor trained against its labels.

use serde::{Deserialize, Serialize};

use super::linear::{ridge_fit, LinearModel};
use crate::datamodel::{Dataset, Normalization};
use crate::matchrep::train::require_normalised;
use crate::matchrep::{train_dec, train_with_labels, DonorTypeMap, MatchEncoder, MultiHeadPredictor, TrainConfig, TrainingLog};
use crate::metrics::{OutcomeModel, TypedModel};
use crate::numkit::kmeans::kmeans_fit_best_of;
use crate::numkit::{gmm_em_fit, GmmFit, KMeansFit, Matrix, RngStream};
use crate::{Error, Result};

pub const CLUSTER_FORMAT: &str = "cluster-predictor-v1";
/// Ridge penalty of the per-cluster linear heads.
pub const LINEAR_HEAD_PENALTY: f64 = 1e-3;
pub const BASELINE_KMEANS_RESTARTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClustererKind {
    Kmeans,
    Em,
    DecStandalone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    LinearPerHead,
    MultiheadNn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPredictorSpec {
    pub clusterer: ClustererKind,
    pub predictor: PredictorKind,
    /// Adds `β·L_Φ` to NN training; ignored by linear heads.
    pub with_rep: bool,
    /// Shared network, clustering and optimiser settings.
    pub train: TrainConfig,
}

impl ClusterPredictorSpec {
    pub fn new(clusterer: ClustererKind, predictor: PredictorKind, with_rep: bool, train: TrainConfig) -> Self {
        ClusterPredictorSpec {
            clusterer,
            predictor,
            with_rep,
            train,
        }
    }

    /// Table-style name such as `kmeans/nn+rep`.
    pub fn name(&self) -> String {
        let c = match self.clusterer {
            ClustererKind::Kmeans => "kmeans",
            ClustererKind::Em => "em",
            ClustererKind::DecStandalone => "dec",
        };
        match self.predictor {
            PredictorKind::LinearPerHead => format!("{c}/linear"),
            PredictorKind::MultiheadNn if self.with_rep => format!("{c}/nn+rep"),
            PredictorKind::MultiheadNn => format!("{c}/nn"),
        }
    }

    /// Every clusterer × predictor combination; NN rows with and without the
    /// balancing term.
    pub fn all(train: &TrainConfig) -> Vec<ClusterPredictorSpec> {
        let mut out = Vec::new();
        for c in [ClustererKind::Kmeans, ClustererKind::Em, ClustererKind::DecStandalone] {
            out.push(Self::new(c, PredictorKind::LinearPerHead, false, train.clone()));
            out.push(Self::new(c, PredictorKind::MultiheadNn, false, train.clone()));
            out.push(Self::new(c, PredictorKind::MultiheadNn, true, train.clone()));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum FittedClusterer {
    Kmeans { centers: Matrix },
    /// Hard labels by maximum posterior responsibility.
    Em { weights: Vec<f64>, components: Vec<crate::numkit::DiagGaussian> },
    Dec(DonorTypeMap),
}

impl FittedClusterer {
    pub fn assign(&self, donors: &Matrix) -> Result<Vec<usize>> {
        Ok(match self {
            FittedClusterer::Kmeans { centers } => KMeansFit {
                centers: centers.clone(),
                labels: Vec::new(),
                objective_trace: Vec::new(),
            }
            .predict(donors),
            FittedClusterer::Em {
                weights,
                components,
            } => GmmFit {
                weights: weights.clone(),
                components: components.clone(),
                responsibilities: Matrix::zeros(0, weights.len()),
                log_likelihood_trace: Vec::new(),
                floored_variances: 0,
            }
            .predict(donors),
            FittedClusterer::Dec(map) => map.assign(donors)?.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum FittedPredictor {
    /// One ridge model of the outcome on recipient features per cluster.
    Linear { heads: Vec<LinearModel> },
    Nn {
        encoder: MatchEncoder,
        predictor: MultiHeadPredictor,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPredictorModel {
    pub format: String,
    pub spec: ClusterPredictorSpec,
    pub normalization: Option<Normalization>,
    pub clusterer: FittedClusterer,
    pub predictor: FittedPredictor,
}

impl ClusterPredictorModel {
    pub fn k(&self) -> usize {
        self.spec.train.k
    }

    /// Outcome in days under every cluster, recipients in model space.
    pub fn predict_scaled(&self, recipients: &Matrix) -> Result<Matrix> {
        match &self.predictor {
            FittedPredictor::Linear { heads } => {
                let mut out = Matrix::zeros(recipients.rows(), heads.len());
                for (i, r) in recipients.row_iter().enumerate() {
                    for (j, h) in heads.iter().enumerate() {
                        out[(i, j)] = h.predict_row(r);
                    }
                }
                Ok(out)
            }
            FittedPredictor::Nn { encoder, predictor } => predictor.predict(&encoder.net.predict(recipients)?),
        }
    }
}

impl TypedModel for ClusterPredictorModel {
    fn k(&self) -> usize {
        ClusterPredictorModel::k(self)
    }

    fn potentials(&self, recipients: &Matrix) -> Result<Matrix> {
        self.predict_scaled(recipients)
    }

    fn donor_types(&self, donors: &Matrix) -> Result<Vec<usize>> {
        self.clusterer.assign(donors)
    }
}

impl OutcomeModel for ClusterPredictorModel {
    fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    fn predict_pairs(&self, recipients: &Matrix, donors: &Matrix) -> Result<Vec<f64>> {
        let p = self.predict_scaled(recipients)?;
        let labels = self.clusterer.assign(donors)?;
        Ok(labels.iter().enumerate().map(|(i, &k)| p[(i, k)]).collect())
    }

    fn as_typed(&self) -> Option<&dyn TypedModel> {
        Some(self)
    }
}

/// Fits the clusterer on the donors of a normalised dataset.
pub fn fit_clusterer(dataset: &Dataset, spec: &ClusterPredictorSpec) -> Result<FittedClusterer> {
    let donors = dataset.donors();
    let cfg = &spec.train;
    let root = RngStream::new(cfg.seed);
    Ok(match spec.clusterer {
        ClustererKind::Kmeans => {
            let fit = kmeans_fit_best_of(&donors, cfg.k, &mut root.derive("baseline-kmeans"), BASELINE_KMEANS_RESTARTS)?;
            FittedClusterer::Kmeans { centers: fit.centers }
        }
        ClustererKind::Em => {
            let fit = gmm_em_fit(&donors, cfg.k, &mut root.derive("baseline-em"))?;
            FittedClusterer::Em {
                weights: fit.weights,
                components: fit.components,
            }
        }
        ClustererKind::DecStandalone => FittedClusterer::Dec(train_dec(&donors, cfg)?.0),
    })
}

/// Fits the clusterer, freezes its labels, then fits the predictor.
/// The returned log is empty for linear heads.
pub fn fit_cluster_predictor(
    dataset: &Dataset,
    spec: &ClusterPredictorSpec,
) -> Result<(ClusterPredictorModel, TrainingLog)> {
    spec.train.validate()?;
    require_normalised(dataset)?;
    let clusterer = fit_clusterer(dataset, spec)?;
    let labels = clusterer.assign(&dataset.donors())?;
    let (predictor, log) = fit_predictor(dataset, &labels, spec)?;
    Ok((
        ClusterPredictorModel {
            format: CLUSTER_FORMAT.into(),
            spec: spec.clone(),
            normalization: dataset.normalization.clone(),
            clusterer,
            predictor,
        },
        log,
    ))
}

/// Predictor training against frozen labels.
pub fn fit_predictor(
    dataset: &Dataset,
    labels: &[usize],
    spec: &ClusterPredictorSpec,
) -> Result<(FittedPredictor, TrainingLog)> {
    let k = spec.train.k;
    if labels.len() != dataset.len() || labels.iter().any(|&l| l >= k) {
        return Err(Error::Data(format!("need one label in 0..{k} per record")));
    }
    match spec.predictor {
        PredictorKind::LinearPerHead => {
            let x = dataset.recipients();
            let y = dataset.outcomes();
            let global_mean = y.iter().sum::<f64>() / y.len() as f64;
            let mut heads = Vec::with_capacity(k);
            for j in 0..k {
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == j).collect();
                if idx.is_empty() {
                    log::warn!("cluster {j} is empty; its head predicts the global mean");
                    heads.push(LinearModel::constant(x.cols(), global_mean));
                    continue;
                }
                let yj: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                heads.push(ridge_fit(&x.select_rows(&idx), &yj, LINEAR_HEAD_PENALTY)?);
            }
            Ok((FittedPredictor::Linear { heads }, TrainingLog::default()))
        }
        PredictorKind::MultiheadNn => {
            let mut cfg = spec.train.clone();
            if !spec.with_rep {
                cfg.beta = 0.0;
            }
            for j in 0..k {
                if !labels.contains(&j) {
                    log::warn!("cluster {j} is empty; its head receives no training signal");
                }
            }
            let (encoder, predictor, log) = train_with_labels(dataset, labels, &cfg)?;
            Ok((FittedPredictor::Nn { encoder, predictor }, log))
        }
    }
}

//! The jointly trained matching-representation model: a DEC donor-type map,
//! a recipient encoder and one outcome head per donor type.

mod dec;
pub mod gradcheck;
mod losses;
pub(crate) mod train;

pub use dec::{dec_loss, dec_objective, soft_assign, target_distribution, DecTerm, T_CLAMP};
pub use losses::{factual_loss, rep_loss, FactualTerm, KlDirection, RepTerm};
pub use train::{
    batch_objective, init_centers, pretrain_autoencoder, reconstruction_objective, train_dec, train_joint, train_with_labels,
    BatchData, EpochLog, LabelSource, LossBreakdown, TrainState, TrainingLog,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{features_under, Dataset, Normalization};
use crate::numkit::{argmax, Activation, DenseNet, Matrix, RngStream};
use crate::metrics::{OutcomeModel, TypedModel};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "matchrep-v1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterInit {
    /// k-means on the pretrained donor embeddings.
    #[default]
    Kmeans,
    /// Distinct embedded donors drawn at random.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub embed_dim: usize,
    /// Width of the recipient representation.
    pub rep_dim: usize,
    /// Hidden widths of every encoder, decoder and head.
    pub hidden: Vec<usize>,
    /// Hidden widths of the shared trunk; empty means no trunk.
    pub trunk_hidden: Vec<usize>,
    pub activation: Activation,
    pub dec_exponent: f64,
    /// Epochs between recomputations of the self-training target.
    pub update_interval: usize,
    pub min_cluster_count: usize,
    pub kl_direction: KlDirection,
    pub center_init: CenterInit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 3,
            alpha: 0.1,
            beta: 1.0,
            learning_rate: 1e-3,
            batch_size: 128,
            pretrain_epochs: 50,
            joint_epochs: 200,
            embed_dim: 8,
            rep_dim: 8,
            hidden: vec![32, 32],
            trunk_hidden: Vec::new(),
            activation: Activation::Relu,
            dec_exponent: -0.5,
            update_interval: 1,
            min_cluster_count: 8,
            kl_direction: KlDirection::ConditionalToMarginal,
            center_init: CenterInit::Kmeans,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite() && self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("alpha and beta must be finite and nonnegative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.embed_dim == 0 || self.rep_dim == 0 {
            return bad("batch_size, embed_dim and rep_dim must be positive");
        }
        if self.hidden.contains(&0) || self.trunk_hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.dec_exponent < 0.0 && self.dec_exponent.is_finite()) {
            return bad("dec_exponent must be negative");
        }
        if self.update_interval == 0 {
            return bad("update_interval must be at least 1");
        }
        Ok(())
    }

    fn sizes(&self, input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect()
    }

    fn net(&self, input: usize, hidden: &[usize], output: usize, rng: &mut RngStream) -> DenseNet {
        DenseNet::glorot(
            &self.sizes(input, hidden, output),
            self.activation,
            Activation::Identity,
            rng,
        )
    }
}

/// Donor encoder/decoder pair plus the `K` cluster centers in embedding space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorTypeMap {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub centers: Matrix,
    pub exponent: f64,
}

impl DonorTypeMap {
    pub fn new(d_o: usize, config: &TrainConfig, rng: &RngStream) -> Self {
        DonorTypeMap {
            encoder: config.net(d_o, &config.hidden, config.embed_dim, &mut rng.derive("donor-encoder")),
            decoder: config.net(config.embed_dim, &config.hidden, d_o, &mut rng.derive("donor-decoder")),
            centers: Matrix::zeros(config.k, config.embed_dim),
            exponent: config.dec_exponent,
        }
    }

    pub fn embed(&self, donors: &Matrix) -> Result<Matrix> {
        Ok(self.encoder.predict(donors)?)
    }

    pub fn soft_assign(&self, donors: &Matrix) -> Result<Matrix> {
        soft_assign(&self.embed(donors)?, &self.centers, self.exponent)
    }

    /// Hard labels (lowest index on ties) with the soft-assignment matrix.
    pub fn assign(&self, donors: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        let t = self.soft_assign(donors)?;
        Ok((t.row_iter().map(argmax).collect(), t))
    }
}

/// The recipient map Φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchEncoder {
    pub net: DenseNet,
}

impl MatchEncoder {
    pub fn new(d_r: usize, config: &TrainConfig, rng: &RngStream) -> Self {
        MatchEncoder {
            net: config.net(d_r, &config.hidden, config.rep_dim, &mut rng.derive("recipient-encoder")),
        }
    }
}

/// `K` heads on an optional shared trunk. Heads emit standardised outcomes;
/// predictions in days are `offset + scale * head`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadPredictor {
    pub trunk: Option<DenseNet>,
    pub heads: Vec<DenseNet>,
    pub offset: f64,
    pub scale: f64,
}

impl MultiHeadPredictor {
    pub fn new(config: &TrainConfig, rng: &RngStream) -> Self {
        let trunk = (!config.trunk_hidden.is_empty()).then(|| {
            let last = *config.trunk_hidden.last().unwrap();
            let inner = &config.trunk_hidden[..config.trunk_hidden.len() - 1];
            DenseNet::glorot(
                &config.sizes(config.rep_dim, inner, last),
                config.activation,
                config.activation,
                &mut rng.derive("trunk"),
            )
        });
        let width = config.trunk_hidden.last().copied().unwrap_or(config.rep_dim);
        let heads = (0..config.k)
            .map(|j| config.net(width, &config.hidden, 1, &mut rng.derive(&format!("head-{j}"))))
            .collect();
        MultiHeadPredictor {
            trunk,
            heads,
            offset: 0.0,
            scale: 1.0,
        }
    }

    /// Standardised head outputs, one column per head.
    pub fn heads_output(&self, z: &Matrix) -> Result<Matrix> {
        let h = match &self.trunk {
            Some(t) => t.predict(z)?,
            None => z.clone(),
        };
        let mut out = Matrix::zeros(z.rows(), self.heads.len());
        for (j, head) in self.heads.iter().enumerate() {
            let o = head.predict(&h)?;
            for i in 0..z.rows() {
                out[(i, j)] = o[(i, 0)];
            }
        }
        Ok(out)
    }

    /// Predicted outcomes in days.
    pub fn predict(&self, z: &Matrix) -> Result<Matrix> {
        Ok(self.heads_output(z)?.map(|v| self.offset + self.scale * v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRepModel {
    pub format: String,
    pub config: TrainConfig,
    pub trained: bool,
    pub donor_map: DonorTypeMap,
    pub encoder: MatchEncoder,
    pub predictor: MultiHeadPredictor,
    /// Feature statistics the model was trained under; inputs in original
    /// units are mapped through them.
    pub normalization: Option<Normalization>,
}

impl MatchRepModel {
    pub fn k(&self) -> usize {
        self.predictor.heads.len()
    }

    fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Usage("the model has not been trained".into()))
        }
    }

    fn scaled(&self, x: &Matrix, recipient: bool) -> Matrix {
        let Some(norm) = &self.normalization else {
            return x.clone();
        };
        let mut out = x.clone();
        for i in 0..x.rows() {
            let z = if recipient {
                norm.recipient(x.row(i))
            } else {
                norm.donor(x.row(i))
            };
            out.row_mut(i).copy_from_slice(&z);
        }
        out
    }

    /// Recipient and donor matrices of `dataset` in the model's feature space.
    /// A normalised dataset must carry the model's own statistics.
    pub fn model_features(&self, dataset: &Dataset) -> Result<(Matrix, Matrix)> {
        features_under(dataset, self.normalization.as_ref())
    }

    /// Φ applied to recipients already in model feature space.
    pub fn represent(&self, recipients: &Matrix) -> Result<Matrix> {
        Ok(self.encoder.net.predict(recipients)?)
    }

    /// Potential-outcome matrix (days) for recipients in model feature space.
    pub fn predict_scaled(&self, recipients: &Matrix) -> Result<Matrix> {
        self.require_trained()?;
        self.predictor.predict(&self.represent(recipients)?)
    }

    /// Donor types and soft assignments for donors in model feature space.
    pub fn assign_scaled(&self, donors: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        self.require_trained()?;
        self.donor_map.assign(donors)
    }

    /// One predicted outcome per donor type for a recipient in original units.
    pub fn predict_potential(&self, x_r: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x_r.len(), x_r.to_vec())?;
        Ok(self.predict_scaled(&self.scaled(&m, true))?.row(0).to_vec())
    }

    /// Learned type of a donor in original units, with its soft-assignment row.
    pub fn donor_type(&self, x_o: &[f64]) -> Result<(usize, Vec<f64>)> {
        let m = Matrix::from_vec(1, x_o.len(), x_o.to_vec())?;
        let (labels, t) = self.assign_scaled(&self.scaled(&m, false))?;
        Ok((labels[0], t.row(0).to_vec()))
    }

    pub fn compatibility(&self, x_r: &[f64], x_o: &[f64]) -> Result<f64> {
        let (k, _) = self.donor_type(x_o)?;
        Ok(self.predict_potential(x_r)?[k])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MatchRepModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Data(format!(
                "unsupported model format `{}`, expected `{MODEL_FORMAT}`",
                model.format
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

impl TypedModel for MatchRepModel {
    fn k(&self) -> usize {
        MatchRepModel::k(self)
    }

    fn potentials(&self, recipients: &Matrix) -> Result<Matrix> {
        self.predict_scaled(recipients)
    }

    fn donor_types(&self, donors: &Matrix) -> Result<Vec<usize>> {
        Ok(self.assign_scaled(donors)?.0)
    }
}

impl OutcomeModel for MatchRepModel {
    fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    fn predict_pairs(&self, recipients: &Matrix, donors: &Matrix) -> Result<Vec<f64>> {
        let p = self.predict_scaled(recipients)?;
        let (types, _) = self.assign_scaled(donors)?;
        Ok(types.iter().enumerate().map(|(i, &k)| p[(i, k)]).collect())
    }

    fn as_typed(&self) -> Option<&dyn TypedModel> {
        Some(self)
    }
}

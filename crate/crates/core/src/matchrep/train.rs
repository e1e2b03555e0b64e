//! Autoencoder pretraining, center initialisation and the joint optimiser.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dec::{dec_objective, target_distribution};
use super::losses::{factual_loss, rep_loss};
use super::{
    CenterInit, DonorTypeMap, MatchEncoder, MatchRepModel, MultiHeadPredictor, TrainConfig,
    MODEL_FORMAT,
};
use crate::datamodel::Dataset;
use crate::numkit::matrix::squared_distance;
use crate::numkit::kmeans::kmeans_fit_best_of;
use crate::numkit::{adam_step, argmax, AdamState, Matrix, NetGrads, NumError, Parameterized, RngStream};
use crate::{Error, Result};

/// Loss components of one batch or epoch. `l_f` is in standardised outcome units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_f: f64,
    pub l_dec: f64,
    pub l_phi: f64,
    pub total: f64,
    pub rep_skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_f: f64,
    pub l_dec: f64,
    pub l_phi: f64,
    pub total: f64,
    /// Batches in which no cluster was large enough for the balancing term.
    pub rep_skipped_batches: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Full-data reconstruction error before pretraining and after each epoch.
    pub pretrain_loss: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "L_f", "L_DEC", "L_Phi", "total"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.l_f.to_string(),
                e.l_dec.to_string(),
                e.l_phi.to_string(),
                e.total.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Everything the joint optimiser updates. Without a donor map the labels
/// must be supplied from outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub donor_map: Option<DonorTypeMap>,
    pub encoder: MatchEncoder,
    pub predictor: MultiHeadPredictor,
}

impl TrainState {
    /// Flat parameters: donor encoder, centers, recipient encoder, trunk, heads.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(map) = &self.donor_map {
            map.encoder.write_params(&mut v);
            map.centers.write_params(&mut v);
        }
        self.encoder.net.write_params(&mut v);
        if let Some(t) = &self.predictor.trunk {
            t.write_params(&mut v);
        }
        for h in &self.predictor.heads {
            h.write_params(&mut v);
        }
        v
    }

    pub fn set_params(&mut self, src: &[f64]) {
        let mut off = 0;
        if let Some(map) = &mut self.donor_map {
            off += map.encoder.read_params(&src[off..]);
            off += map.centers.read_params(&src[off..]);
        }
        off += self.encoder.net.read_params(&src[off..]);
        if let Some(t) = &mut self.predictor.trunk {
            off += t.read_params(&src[off..]);
        }
        for h in &mut self.predictor.heads {
            off += h.read_params(&src[off..]);
        }
        debug_assert_eq!(off, src.len());
    }

    /// Named contiguous ranges of [`TrainState::params`].
    pub fn param_blocks(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut blocks = Vec::new();
        let mut off = 0;
        let mut push = |name: String, len: usize| {
            blocks.push((name, off..off + len));
            off += len;
        };
        if let Some(map) = &self.donor_map {
            push("donor-encoder".into(), map.encoder.num_params());
            push("centers".into(), map.centers.num_params());
        }
        push("recipient-encoder".into(), self.encoder.net.num_params());
        if let Some(t) = &self.predictor.trunk {
            push("trunk".into(), t.num_params());
        }
        for (j, h) in self.predictor.heads.iter().enumerate() {
            push(format!("head-{j}"), h.num_params());
        }
        blocks
    }

    fn into_model(self, config: &TrainConfig, dataset: &Dataset) -> MatchRepModel {
        MatchRepModel {
            format: MODEL_FORMAT.into(),
            config: config.clone(),
            trained: true,
            donor_map: self.donor_map.expect("joint training keeps the donor map"),
            encoder: self.encoder,
            predictor: self.predictor,
            normalization: dataset.normalization.clone(),
        }
    }
}

/// Where the head-selecting labels of a batch come from.
pub enum LabelSource<'a> {
    /// Argmax of the current soft assignment of these donor rows, with the
    /// matching rows of the self-training target held fixed.
    Joint { donors: &'a Matrix, target: &'a Matrix },
    Frozen(&'a [usize]),
}

pub struct BatchData<'a> {
    pub recipients: &'a Matrix,
    /// Outcomes in standardised units.
    pub outcomes: &'a [f64],
    pub labels: LabelSource<'a>,
}

/// `L_f + α·L_DEC + β·L_Φ` on one batch with its gradient in the order of
/// [`TrainState::params`]. Labels are hard assignments, so neither `L_f` nor
/// `L_Φ` reaches the donor map.
pub fn batch_objective(
    state: &TrainState,
    batch: &BatchData,
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let n = batch.recipients.rows();
    let (labels, donor_part) = match &batch.labels {
        LabelSource::Joint { donors, target } => {
            let map = state
                .donor_map
                .as_ref()
                .ok_or_else(|| Error::Usage("joint labels need a donor map".into()))?;
            let (emb, cache) = map.encoder.forward(donors)?;
            let term = dec_objective(&emb, &map.centers, target, map.exponent)?;
            let labels: Vec<usize> = term.soft.row_iter().map(argmax).collect();
            (labels, Some((map, term, cache)))
        }
        LabelSource::Frozen(l) => (l.to_vec(), None),
    };

    let (z, phi_cache) = state.encoder.net.forward(batch.recipients)?;
    let (h, trunk_cache) = match &state.predictor.trunk {
        Some(t) => {
            let (h, c) = t.forward(&z)?;
            (h, Some(c))
        }
        None => (z.clone(), None),
    };
    let k = state.predictor.heads.len();
    let mut outs = Matrix::zeros(n, k);
    let mut head_caches = Vec::with_capacity(k);
    for (j, head) in state.predictor.heads.iter().enumerate() {
        let (o, c) = head.forward(&h)?;
        for i in 0..n {
            outs[(i, j)] = o[(i, 0)];
        }
        head_caches.push(c);
    }
    let fact = factual_loss(&outs, batch.outcomes, &labels)?;
    let rep = rep_loss(&z, &labels, k, config.min_cluster_count, config.kl_direction)?;

    let mut head_grads = Vec::with_capacity(k);
    let mut gh = Matrix::zeros(n, h.cols());
    for (j, head) in state.predictor.heads.iter().enumerate() {
        let up = Matrix::from_vec(n, 1, fact.grad.column(j))?;
        let (g, gin) = head.backward(&head_caches[j], &up)?;
        gh.add_scaled(&gin, 1.0)?;
        head_grads.push(g);
    }
    let (trunk_grads, mut gz) = match (&state.predictor.trunk, &trunk_cache) {
        (Some(t), Some(c)) => {
            let (g, gz) = t.backward(c, &gh)?;
            (Some(g), gz)
        }
        _ => (None, gh),
    };
    gz.add_scaled(&rep.grad, config.beta)?;
    let (phi_grads, _) = state.encoder.net.backward(&phi_cache, &gz)?;

    let mut flat = Vec::new();
    let mut l_dec = 0.0;
    if let Some((map, mut term, cache)) = donor_part {
        l_dec = term.value;
        term.grad_embedded.scale_in_place(config.alpha);
        let (enc_grads, _) = map.encoder.backward(&cache, &term.grad_embedded)?;
        enc_grads.write_flat(&mut flat);
        flat.extend(term.grad_centers.as_slice().iter().map(|g| g * config.alpha));
    } else if let Some(map) = &state.donor_map {
        // a donor map under frozen labels receives no gradient
        NetGrads::zeros_like(&map.encoder).write_flat(&mut flat);
        flat.extend(std::iter::repeat_n(0.0, map.centers.num_params()));
    }
    phi_grads.write_flat(&mut flat);
    if let Some(g) = trunk_grads {
        g.write_flat(&mut flat);
    }
    for g in head_grads {
        g.write_flat(&mut flat);
    }
    let parts = LossBreakdown {
        l_f: fact.value,
        l_dec,
        l_phi: rep.value,
        total: fact.value + config.alpha * l_dec + config.beta * rep.value,
        rep_skipped: rep.skipped,
    };
    Ok((parts, flat))
}

fn distinct_rows(m: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

fn reconstruction(map: &DonorTypeMap, donors: &Matrix) -> Result<f64> {
    let out = map.decoder.predict(&map.encoder.predict(donors)?)?;
    let n = donors.as_slice().len().max(1) as f64;
    Ok(out
        .as_slice()
        .iter()
        .zip(donors.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

fn diverged(epoch: usize, message: impl Into<String>) -> Error {
    Error::Diverged {
        epoch,
        message: message.into(),
        checkpoint: None,
    }
}

/// Mean squared reconstruction error of `x` and its gradient, encoder
/// parameters first.
pub fn reconstruction_objective(map: &DonorTypeMap, x: &Matrix) -> Result<(f64, Vec<f64>)> {
    let (emb, enc_cache) = map.encoder.forward(x)?;
    let (out, dec_cache) = map.decoder.forward(&emb)?;
    let count = x.as_slice().len().max(1) as f64;
    let mut value = 0.0;
    let mut up = out;
    for (u, v) in up.as_mut_slice().iter_mut().zip(x.as_slice()) {
        value += (*u - v) * (*u - v);
        *u = 2.0 * (*u - v) / count;
    }
    let (dec_grads, g_emb) = map.decoder.backward(&dec_cache, &up)?;
    let (enc_grads, _) = map.encoder.backward(&enc_cache, &g_emb)?;
    let mut grads = enc_grads.to_flat();
    dec_grads.write_flat(&mut grads);
    Ok((value / count, grads))
}

/// Trains the donor autoencoder on mean squared reconstruction error.
/// Returns the map (centers still zero) and the full-data loss curve.
pub fn pretrain_autoencoder(
    donors: &Matrix,
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<(DonorTypeMap, Vec<f64>)> {
    let distinct = distinct_rows(donors);
    if distinct < config.k {
        return Err(NumError::InsufficientData {
            needed: config.k,
            got: distinct,
            what: "distinct donors for clustering".into(),
        }
        .into());
    }
    let mut map = DonorTypeMap::new(donors.cols(), config, rng);
    let mut params = map.encoder.params();
    let n_enc = params.len();
    map.decoder.write_params(&mut params);
    let mut adam = AdamState::new(params.len());
    let mut batches = rng.derive("pretrain-batches");
    let mut curve = vec![reconstruction(&map, donors)?];
    for epoch in 1..=config.pretrain_epochs {
        let perm = batches.permutation(donors.rows());
        for chunk in perm.chunks(config.batch_size) {
            let (_, grads) = reconstruction_objective(&map, &donors.select_rows(chunk))?;
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)
                .map_err(|e| diverged(epoch, format!("autoencoder pretraining: {e}")))?;
            map.encoder.read_params(&params[..n_enc]);
            map.decoder.read_params(&params[n_enc..]);
        }
        let loss = reconstruction(&map, donors)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, "autoencoder reconstruction loss is not finite"));
        }
        curve.push(loss);
    }
    Ok((map, curve))
}

/// Initial cluster centers in the embedding space of `map`.
pub fn init_centers(
    map: &DonorTypeMap,
    donors: &Matrix,
    mode: CenterInit,
    k: usize,
    rng: &mut RngStream,
) -> Result<Matrix> {
    let emb = map.embed(donors)?;
    let centers = match mode {
        CenterInit::Kmeans => kmeans_fit_best_of(&emb, k, rng, KMEANS_RESTARTS)?.centers,
        CenterInit::Random => {
            if k > emb.rows() {
                return Err(NumError::InvalidInput(format!(
                    "cannot pick {k} centers from {} donors",
                    emb.rows()
                ))
                .into());
            }
            let perm = rng.permutation(emb.rows());
            emb.select_rows(&perm[..k])
        }
    };
    for a in 0..k {
        for b in a + 1..k {
            if squared_distance(centers.row(a), centers.row(b)) == 0.0 {
                return Err(Error::Data(format!(
                    "initial centers {a} and {b} coincide; donors embed to too few points"
                )));
            }
        }
    }
    Ok(centers)
}

/// Independent k-means runs used for center initialisation.
pub const KMEANS_RESTARTS: usize = 10;

pub(crate) fn outcome_standardisation(y: &[f64]) -> (f64, f64) {
    let n = y.len().max(1) as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

/// Minibatch Adam over the combined loss. Returns per-epoch means of the
/// loss components; on divergence the state is rolled back to the last
/// completed epoch before the error is returned.
fn optimise(
    state: &mut TrainState,
    donors: Option<&Matrix>,
    frozen: Option<&[usize]>,
    recipients: &Matrix,
    y_std: &[f64],
    config: &TrainConfig,
    rng: &RngStream,
) -> Result<Vec<EpochLog>> {
    let n = recipients.rows();
    let mut params = state.params();
    let mut adam = AdamState::new(params.len());
    let mut batches = rng.derive("joint-batches");
    let mut checkpoint = state.clone();
    let mut target = Matrix::zeros(0, 0);
    let mut log = Vec::with_capacity(config.joint_epochs);
    for epoch in 1..=config.joint_epochs {
        if let (Some(d), Some(map)) = (donors, &state.donor_map) {
            if (epoch - 1) % config.update_interval == 0 {
                target = target_distribution(&map.soft_assign(d)?)?;
            }
        }
        let perm = batches.permutation(n);
        let mut sums = [0.0; 3];
        let mut skipped = 0;
        for chunk in perm.chunks(config.batch_size) {
            let xr = recipients.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| y_std[i]).collect();
            let frozen_rows: Vec<usize>;
            let (xo, p);
            let labels = match (donors, frozen) {
                (Some(d), _) => {
                    xo = d.select_rows(chunk);
                    p = target.select_rows(chunk);
                    LabelSource::Joint {
                        donors: &xo,
                        target: &p,
                    }
                }
                (None, Some(l)) => {
                    frozen_rows = chunk.iter().map(|&i| l[i]).collect();
                    LabelSource::Frozen(&frozen_rows)
                }
                (None, None) => return Err(Error::Usage("no label source".into())),
            };
            let batch = BatchData {
                recipients: &xr,
                outcomes: &y,
                labels,
            };
            let step = batch_objective(state, &batch, config).and_then(|(parts, grads)| {
                if !parts.total.is_finite() {
                    return Err(NumError::Divergence("non-finite loss".into()).into());
                }
                adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
                Ok(parts)
            });
            let parts = match step {
                Ok(p) => p,
                Err(Error::Num(NumError::Divergence(msg))) => {
                    *state = checkpoint;
                    return Err(diverged(epoch, msg));
                }
                Err(e) => return Err(e),
            };
            state.set_params(&params);
            let w = chunk.len() as f64 / n as f64;
            sums[0] += w * parts.l_f;
            sums[1] += w * parts.l_dec;
            sums[2] += w * parts.l_phi;
            skipped += usize::from(parts.rep_skipped);
        }
        log.push(EpochLog {
            epoch,
            l_f: sums[0],
            l_dec: sums[1],
            l_phi: sums[2],
            total: sums[0] + config.alpha * sums[1] + config.beta * sums[2],
            rep_skipped_batches: skipped,
        });
        checkpoint = state.clone();
    }
    Ok(log)
}

pub(crate) fn require_normalised(dataset: &Dataset) -> Result<()> {
    if dataset.normalization.is_none() {
        return Err(Error::Usage(
            "training expects a dataset normalised with training-split statistics".into(),
        ));
    }
    if dataset.len() < 2 {
        return Err(NumError::InsufficientData {
            needed: 2,
            got: dataset.len(),
            what: "training records".into(),
        }
        .into());
    }
    Ok(())
}

/// Pretrains the donor autoencoder, initialises centers, then jointly
/// minimises `L_f + α·L_DEC + β·L_Φ` over every record of `dataset`.
pub fn train_joint(dataset: &Dataset, config: &TrainConfig) -> Result<(MatchRepModel, TrainingLog)> {
    config.validate()?;
    require_normalised(dataset)?;
    let root = RngStream::new(config.seed);
    let donors = dataset.donors();
    let recipients = dataset.recipients();
    let y = dataset.outcomes();
    let (offset, scale) = outcome_standardisation(&y);
    let y_std: Vec<f64> = y.iter().map(|v| (v - offset) / scale).collect();

    let (mut map, pretrain_loss) = pretrain_autoencoder(&donors, config, &root)?;
    map.centers = init_centers(&map, &donors, config.center_init, config.k, &mut root.derive("centers"))?;
    let mut predictor = MultiHeadPredictor::new(config, &root);
    predictor.offset = offset;
    predictor.scale = scale;
    let mut state = TrainState {
        donor_map: Some(map),
        encoder: MatchEncoder::new(dataset.schema.d_r(), config, &root),
        predictor,
    };
    let epochs = optimise(&mut state, Some(&donors), None, &recipients, &y_std, config, &root)
        .map_err(|e| match e {
            Error::Diverged { epoch, message, .. } => Error::Diverged {
                epoch,
                message,
                checkpoint: Some(Box::new(state.clone().into_model(config, dataset))),
            },
            other => other,
        })?;
    let model = state.into_model(config, dataset);
    Ok((
        model,
        TrainingLog {
            pretrain_loss,
            epochs,
        },
    ))
}

/// Trains only the recipient encoder and heads against fixed donor labels
/// (the decoupled baselines). `α` plays no role here.
pub fn train_with_labels(
    dataset: &Dataset,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(MatchEncoder, MultiHeadPredictor, TrainingLog)> {
    config.validate()?;
    require_normalised(dataset)?;
    if labels.len() != dataset.len() || labels.iter().any(|&l| l >= config.k) {
        return Err(Error::Data(format!(
            "need one label in 0..{} per record",
            config.k
        )));
    }
    let root = RngStream::new(config.seed);
    let y = dataset.outcomes();
    let (offset, scale) = outcome_standardisation(&y);
    let y_std: Vec<f64> = y.iter().map(|v| (v - offset) / scale).collect();
    let mut predictor = MultiHeadPredictor::new(config, &root);
    predictor.offset = offset;
    predictor.scale = scale;
    let mut state = TrainState {
        donor_map: None,
        encoder: MatchEncoder::new(dataset.schema.d_r(), config, &root),
        predictor,
    };
    let epochs = optimise(
        &mut state,
        None,
        Some(labels),
        &dataset.recipients(),
        &y_std,
        config,
        &root,
    )?;
    Ok((
        state.encoder,
        state.predictor,
        TrainingLog {
            pretrain_loss: Vec::new(),
            epochs,
        },
    ))
}

/// Standalone DEC: autoencoder pretraining and center initialisation as in
/// [`train_joint`], then self-training on the clustering loss alone.
pub fn train_dec(donors: &Matrix, config: &TrainConfig) -> Result<(DonorTypeMap, TrainingLog)> {
    config.validate()?;
    let root = RngStream::new(config.seed);
    let (mut map, pretrain_loss) = pretrain_autoencoder(donors, config, &root)?;
    map.centers = init_centers(&map, donors, config.center_init, config.k, &mut root.derive("centers"))?;
    let mut params = map.encoder.params();
    let n_enc = params.len();
    map.centers.write_params(&mut params);
    let mut adam = AdamState::new(params.len());
    let mut batches = root.derive("dec-batches");
    let mut target = Matrix::zeros(0, 0);
    let mut epochs = Vec::with_capacity(config.joint_epochs);
    for epoch in 1..=config.joint_epochs {
        if (epoch - 1) % config.update_interval == 0 {
            target = target_distribution(&map.soft_assign(donors)?)?;
        }
        let mut mean = 0.0;
        for chunk in batches.permutation(donors.rows()).chunks(config.batch_size) {
            let x = donors.select_rows(chunk);
            let (emb, cache) = map.encoder.forward(&x)?;
            let term = dec_objective(&emb, &map.centers, &target.select_rows(chunk), map.exponent)?;
            let (g, _) = map.encoder.backward(&cache, &term.grad_embedded)?;
            let mut grads = g.to_flat();
            grads.extend_from_slice(term.grad_centers.as_slice());
            if !term.value.is_finite() {
                return Err(diverged(epoch, "clustering loss is not finite"));
            }
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)
                .map_err(|e| diverged(epoch, e.to_string()))?;
            map.encoder.read_params(&params[..n_enc]);
            map.centers.read_params(&params[n_enc..]);
            mean += term.value * chunk.len() as f64 / donors.rows() as f64;
        }
        epochs.push(EpochLog {
            epoch,
            l_f: 0.0,
            l_dec: mean,
            l_phi: 0.0,
            total: mean,
            rep_skipped_batches: 0,
        });
    }
    Ok((
        map,
        TrainingLog {
            pretrain_loss,
            epochs,
        },
    ))
}

//! Central-difference checks of every hand-derived gradient in the model.

use super::dec::dec_objective;
use super::losses::{factual_loss, rep_loss, KlDirection};
use super::train::{batch_objective, reconstruction_objective, BatchData, TrainState};
use super::{DonorTypeMap, TrainConfig};
use crate::numkit::{finite_diff_check, GradCheckReport, Matrix, Parameterized};
use crate::Result;

/// Finite-difference step used by every check.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

fn reshape(m: &Matrix, flat: &[f64]) -> Matrix {
    Matrix::from_vec(m.rows(), m.cols(), flat.to_vec()).expect("same shape")
}

/// Autoencoder reconstruction error with respect to encoder and decoder.
pub fn check_autoencoder(map: &DonorTypeMap, x: &Matrix, tol: f64) -> Result<GradCheckReport> {
    let (_, analytic) = reconstruction_objective(map, x)?;
    let mut params = map.encoder.params();
    let n_enc = params.len();
    map.decoder.write_params(&mut params);
    let mut probe = map.clone();
    let blocks = [
        ("encoder".to_string(), 0..n_enc),
        ("decoder".to_string(), n_enc..params.len()),
    ];
    Ok(finite_diff_check(
        |p| {
            probe.encoder.read_params(&p[..n_enc]);
            probe.decoder.read_params(&p[n_enc..]);
            reconstruction_objective(&probe, x).map_or(f64::NAN, |(v, _)| v)
        },
        &params,
        &analytic,
        &blocks,
        GRAD_CHECK_STEP,
        tol,
    ))
}

/// Per-donor mean clustering loss with respect to embeddings and centers,
/// the target held fixed.
pub fn check_dec(embedded: &Matrix, centers: &Matrix, target: &Matrix, exponent: f64, tol: f64) -> Result<GradCheckReport> {
    let term = dec_objective(embedded, centers, target, exponent)?;
    let mut params = embedded.as_slice().to_vec();
    params.extend_from_slice(centers.as_slice());
    let mut analytic = term.grad_embedded.as_slice().to_vec();
    analytic.extend_from_slice(term.grad_centers.as_slice());
    let n_e = embedded.as_slice().len();
    let blocks = [
        ("embedded".to_string(), 0..n_e),
        ("centers".to_string(), n_e..params.len()),
    ];
    Ok(finite_diff_check(
        |p| {
            dec_objective(&reshape(embedded, &p[..n_e]), &reshape(centers, &p[n_e..]), target, exponent)
                .map_or(f64::NAN, |t| t.value)
        },
        &params,
        &analytic,
        &blocks,
        GRAD_CHECK_STEP,
        tol,
    ))
}

/// Balancing term with respect to the representations.
pub fn check_rep(
    z: &Matrix,
    labels: &[usize],
    k: usize,
    min_count: usize,
    direction: KlDirection,
    tol: f64,
) -> Result<GradCheckReport> {
    let term = rep_loss(z, labels, k, min_count, direction)?;
    Ok(finite_diff_check(
        |p| rep_loss(&reshape(z, p), labels, k, min_count, direction).map_or(f64::NAN, |t| t.value),
        z.as_slice(),
        term.grad.as_slice(),
        &[("representation".to_string(), 0..z.as_slice().len())],
        GRAD_CHECK_STEP,
        tol,
    ))
}

/// Factual loss with respect to the head outputs.
pub fn check_factual(heads: &Matrix, outcomes: &[f64], labels: &[usize], tol: f64) -> Result<GradCheckReport> {
    let term = factual_loss(heads, outcomes, labels)?;
    Ok(finite_diff_check(
        |p| factual_loss(&reshape(heads, p), outcomes, labels).map_or(f64::NAN, |t| t.value),
        heads.as_slice(),
        term.grad.as_slice(),
        &[("heads".to_string(), 0..heads.as_slice().len())],
        GRAD_CHECK_STEP,
        tol,
    ))
}

/// The combined objective with respect to every trainable parameter.
pub fn check_batch_objective(
    state: &TrainState,
    batch: &BatchData,
    config: &TrainConfig,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = batch_objective(state, batch, config)?;
    let params = state.params();
    let mut probe = state.clone();
    Ok(finite_diff_check(
        |p| {
            probe.set_params(p);
            batch_objective(&probe, batch, config).map_or(f64::NAN, |(l, _)| l.total)
        },
        &params,
        &analytic,
        &state.param_blocks(),
        GRAD_CHECK_STEP,
        tol,
    ))
}

//! Held-out evaluation of any compatibility model against synthetic truth.

use super::{aodt, eps_factual, eps_wmse, EvalReport, TypeAlignment};
use crate::datamodel::{features_under, Dataset, Normalization};
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Reference donors per true type used to average pair predictions.
pub const REFERENCE_DONORS_PER_TYPE: usize = 200;

/// A model with a learned discrete donor type and one prediction per type.
pub trait TypedModel {
    fn k(&self) -> usize;
    /// Days, one column per learned type; recipients in model feature space.
    fn potentials(&self, recipients: &Matrix) -> Result<Matrix>;
    fn donor_types(&self, donors: &Matrix) -> Result<Vec<usize>>;
}

/// Anything that scores a recipient-donor pair in days.
pub trait OutcomeModel {
    fn normalization(&self) -> Option<&Normalization>;
    /// One prediction per row pair; both matrices in model feature space.
    fn predict_pairs(&self, recipients: &Matrix, donors: &Matrix) -> Result<Vec<f64>>;
    fn as_typed(&self) -> Option<&dyn TypedModel> {
        None
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

/// Scores `model` on `validation`. Predictions indexed by learned type are
/// mapped onto true donor types with the type mixing of `train`'s donors;
/// pair regressors are averaged over up to [`REFERENCE_DONORS_PER_TYPE`]
/// training donors of each true type.
pub fn evaluate(
    model: &dyn OutcomeModel,
    name: &str,
    train: &Dataset,
    validation: &Dataset,
) -> Result<EvalReport> {
    let norm = model.normalization();
    let (vr, vo) = features_under(validation, norm)?;
    let y = validation.outcomes();
    let truth = validation.true_potentials().ok();
    let (eps_f, aligned) = match model.as_typed() {
        Some(typed) => {
            let preds = rows(&typed.potentials(&vr)?);
            let eps_f = eps_factual(&preds, &typed.donor_types(&vo)?, &y)?;
            let aligned = match (&truth, train.true_donor_types()) {
                (Some(t), Ok(train_types)) => {
                    let (_, to) = features_under(train, norm)?;
                    let k_true = t.first().map_or(0, Vec::len);
                    let al = TypeAlignment::fit(&train_types, &typed.donor_types(&to)?, k_true, typed.k())?;
                    Some(al.apply_all(&preds))
                }
                _ => None,
            };
            (eps_f, aligned)
        }
        None => {
            let p = model.predict_pairs(&vr, &vo)?;
            let eps_f = p.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                / y.len().max(1) as f64;
            let aligned = match (&truth, train.true_donor_types()) {
                (Some(t), Ok(train_types)) => {
                    let k_true = t.first().map_or(0, Vec::len);
                    Some(reference_potentials(model, &vr, train, &train_types, k_true)?)
                }
                _ => None,
            };
            (eps_f, aligned)
        }
    };
    let (eps_wmse, aodt) = match (&aligned, &truth) {
        (Some(a), Some(t)) => (Some(eps_wmse(a, t)?), Some(aodt(a, t)?)),
        _ => (None, None),
    };
    Ok(EvalReport {
        model: name.to_string(),
        eps_f,
        eps_wmse,
        aodt,
        n: validation.len(),
    })
}

fn reference_potentials(
    model: &dyn OutcomeModel,
    recipients: &Matrix,
    train: &Dataset,
    train_types: &[usize],
    k_true: usize,
) -> Result<Vec<Vec<f64>>> {
    let (_, donors) = features_under(train, model.normalization())?;
    let mut out = vec![vec![0.0; k_true]; recipients.rows()];
    for j in 0..k_true {
        let refs: Vec<usize> = train_types
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == j)
            .map(|(i, _)| i)
            .take(REFERENCE_DONORS_PER_TYPE)
            .collect();
        if refs.is_empty() {
            return Err(Error::Data(format!("no training donors of true type {j}")));
        }
        let ref_donors = donors.select_rows(&refs);
        for (i, row) in out.iter_mut().enumerate() {
            let rep = recipients.select_rows(&vec![i; refs.len()]);
            let p = model.predict_pairs(&rep, &ref_donors)?;
            row[j] = p.iter().sum::<f64>() / p.len() as f64;
        }
    }
    Ok(out)
}

use crate::datamodel::{features_under, Dataset};
use crate::metrics::OutcomeModel;
use crate::numkit::{argmax, Matrix};
use crate::{Error, Result};

/// Realised outcomes: a recipient's potential outcome under the true type
/// of the donor it receives.
#[derive(Clone, Debug, PartialEq)]
pub struct Oracle {
    pub potentials: Vec<Vec<f64>>,
    pub donor_types: Vec<usize>,
    pub recipient_types: Option<Vec<usize>>,
}

impl Oracle {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        Ok(Oracle {
            potentials: dataset.true_potentials()?,
            donor_types: dataset.true_donor_types()?,
            recipient_types: dataset.true_recipient_types().ok(),
        })
    }

    pub fn realised(&self, recipient: usize, donor: usize) -> f64 {
        self.potentials[recipient][self.donor_types[donor]]
    }
}

/// Predicted outcome of a (recipient, donor) pair, indexed by record ids.
pub enum Scorer<'a> {
    /// One prediction per recipient and type, plus each donor's type.
    Typed {
        name: String,
        potentials: Vec<Vec<f64>>,
        donor_types: Vec<usize>,
    },
    /// A pair regressor evaluated on demand; features in model space.
    Pair {
        name: String,
        model: &'a dyn OutcomeModel,
        recipients: Matrix,
        donors: Matrix,
    },
}

impl<'a> Scorer<'a> {
    /// Expected outcome given the true recipient and donor types: the mean
    /// true potential vector over recipients of the same true type.
    pub fn oracle(dataset: &Dataset) -> Result<Self> {
        let potentials = dataset.true_potentials()?;
        let types = dataset.true_recipient_types()?;
        let k = potentials.first().map_or(0, Vec::len);
        let m = types.iter().max().map_or(0, |v| v + 1);
        let mut means = vec![vec![0.0; k]; m];
        let mut counts = vec![0usize; m];
        for (p, &t) in potentials.iter().zip(&types) {
            counts[t] += 1;
            for (a, v) in means[t].iter_mut().zip(p) {
                *a += v;
            }
        }
        for (row, &c) in means.iter_mut().zip(&counts) {
            row.iter_mut().for_each(|v| *v /= c.max(1) as f64);
        }
        Ok(Scorer::Typed {
            name: "oracle".into(),
            potentials: types.iter().map(|&t| means[t].clone()).collect(),
            donor_types: dataset.true_donor_types()?,
        })
    }

    /// Scores every record of `dataset` with `model`. Typed models are
    /// evaluated once up front.
    pub fn from_model(name: &str, model: &'a dyn OutcomeModel, dataset: &Dataset) -> Result<Self> {
        let (recipients, donors) = features_under(dataset, model.normalization())?;
        Ok(match model.as_typed() {
            Some(typed) => Scorer::Typed {
                name: name.to_string(),
                potentials: typed
                    .potentials(&recipients)?
                    .row_iter()
                    .map(<[f64]>::to_vec)
                    .collect(),
                donor_types: typed.donor_types(&donors)?,
            },
            None => Scorer::Pair {
                name: name.to_string(),
                model,
                recipients,
                donors,
            },
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Scorer::Typed { name, .. } | Scorer::Pair { name, .. } => name,
        }
    }

    /// Scores of `candidates` (recipient ids) for one donor.
    pub fn scores(&self, candidates: &[usize], donor: usize) -> Result<Vec<f64>> {
        match self {
            Scorer::Typed {
                potentials,
                donor_types,
                ..
            } => Ok(candidates
                .iter()
                .map(|&r| potentials[r][donor_types[donor]])
                .collect()),
            Scorer::Pair {
                model,
                recipients,
                donors,
                ..
            } => {
                if candidates.is_empty() {
                    return Ok(Vec::new());
                }
                let r = recipients.select_rows(candidates);
                let d = donors.select_rows(&vec![donor; candidates.len()]);
                model.predict_pairs(&r, &d)
            }
        }
    }

    /// Learned type of a donor and predicted best type of a recipient.
    pub fn types(&self) -> Result<(&[Vec<f64>], &[usize])> {
        match self {
            Scorer::Typed {
                potentials,
                donor_types,
                ..
            } => Ok((potentials, donor_types)),
            Scorer::Pair { name, .. } => Err(Error::Config(format!(
                "model-guided policies need a typed model; `{name}` scores pairs only"
            ))),
        }
    }

    pub fn best_type(potentials: &[Vec<f64>], recipient: usize) -> usize {
        argmax(&potentials[recipient])
    }
}

//! Numerical kernels shared by every model in the crate.

pub mod adam;
pub mod gaussian;
pub mod gmm;
pub mod gradcheck;
pub mod kmeans;
pub mod linalg;
pub mod matrix;
pub mod net;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use gaussian::{fit_diag_gaussian, kl_gaussian_diag, DiagGaussian, VARIANCE_FLOOR};
pub use gmm::{gmm_em_fit, GmmFit};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use kmeans::{kmeans_fit, KMeansFit};
pub use matrix::{argmax, Matrix};
pub use net::{Activation, DenseNet, Layer, NetGrads, Parameterized};
pub use rng::RngStream;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        needed: usize,
        got: usize,
        what: String,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular system: {0}")]
    Singular(String),
}

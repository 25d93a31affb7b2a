//! Paired autoencoders for inference and regularization of linear inverse
//! problems.
//!
//! Modules, bottom up:
//!
//! * [`numerics`]: SVD, truncation, pseudo-inverse, minimal-norm solves.
//! * [`linear_pair`]: optimal linear autoencoders, latent maps, surrogates.
//! * [`operators`]: Gaussian blur and parallel-beam Radon forward models.
//! * [`datasets`]: phantoms, CT bundles, IDX loading, OOD glyphs.
//! * [`neural`]: the small convolutional autoencoder and its trainer.
//! * [`metrics`]: relative errors, PAIR metrics, baselines, AUROC.
//! * [`experiments`]: configuration-driven experiment runners.

pub mod datasets;
pub mod error;
pub mod experiments;
pub mod linear_pair;
pub mod metrics;
pub mod neural;
pub mod numerics;
pub mod operators;
pub mod pmat;
pub mod seeding;

pub use error::{Error, Result};

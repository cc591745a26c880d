//! Uncertainty-autoencoder core: learn a noisy measurement process jointly
//! with an amortized decoder by variational information maximization, plus
//! the PCA / random-projection / LASSO baselines, a Gibbs-chain sampler, and
//! the file formats tying them together.
//!
//! Everything is f64 and deterministic from explicit seeds. Batched inner
//! loops (gradient accumulation, per-point recovery, metrics) run on rayon
//! when the default `parallel` feature is enabled and fall back to sequential
//! execution otherwise; both paths reduce through the same fixed chunk tree,
//! so results are bit-identical either way.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod nets;
pub mod optim;
pub mod par;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;

//! Desk-scale masked generative motion modeling.
//!
//! The pipeline has four stages:
//!
//! * [`motion`] holds motion clips, their file formats, augmentation, and the
//!   invertible temporal patcher that maps frames to latent vectors.
//! * [`rvq`] tokenizes latents with a stack of residual codebooks.
//! * [`masked_gen`] and [`residual_gen`] generate base-layer tokens by
//!   confidence-ranked iterative unmasking and then fill in residual layers
//!   one layer at a time, driven by any [`predictor::TokenPredictor`].
//! * [`metrics`] scores generated motion (MPJPE, jerk, sJPE, FID, retrieval
//!   precision, multimodality).

pub mod linalg;
pub mod masked_gen;
pub mod metrics;
pub mod motion;
pub mod predictor;
pub mod residual_gen;
pub mod rvq;
mod util;

pub use masked_gen::{DecodeConfig, DecodeOutcome, MaskSchedule, Sampling};
pub use motion::{JointLayout, LatentSequence, MotionSequence};
pub use predictor::{Condition, CountModel, LogitMatrix, MaskedSequence, OraclePredictor, TokenPredictor};
pub use rvq::{Codebook, CodebookStack, RvqConfig, TokenGrid};

/// Deterministic RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeds the crate RNG.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

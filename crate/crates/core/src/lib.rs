//! Rank detection and CP decomposition of degree-3 tensors by rank-one
//! seeking alternating projections and clustering, with a PARAFAC-ALS
//! baseline and a synthetic benchmark harness.

pub mod clustering;
pub mod eem;
pub mod error;
pub mod findrankone;
pub mod parafac;
pub mod pipeline;
pub mod spanrep;
pub mod synthgen;
pub mod t3;
pub mod tensor3;

pub use error::{Error, Result, Stage};
pub use parafac::{parafac_als, AlsConfig};
pub use pipeline::{arofac2, arofac2_detailed, Arofac2Config, Arofac2Output};
pub use synthgen::{gen_synthetic, match_components, noise_sweep, GroundTruth, NoiseScale, SynthSpec};
pub use tensor3::{outer3, reconstruct, rel_error, Decomposition, Factor, Matrix, Tensor3};

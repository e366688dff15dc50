//! Asymmetric deep supervised hashing.
//!
//! Database points get binary codes that are optimized directly, one bit
//! column at a time, while a feed-forward encoder is trained as the hash
//! function for queries. The crate also carries the retrieval metrics,
//! brute-force verifiers, data formats and the command-line driver used to
//! run and check experiments.
//!
//! The numeric core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`). The aliases below pin the double-precision types the
//! command-line tool and the file formats use.

pub mod cli;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hashcore;
pub mod oracle;
pub mod scalar;
pub mod simgraph;
pub mod solver;

pub use error::{Error, FormatError, Result};
pub use hashcore::{CodeMatrix, CodeRow};
pub use scalar::Scalar;
pub use simgraph::{LabelMatrix, SimilarityBlock};

/// Encoder in double precision.
pub type EncoderModel = encoder::Encoder<f64>;
/// Encoder in single precision.
pub type EncoderModelF32 = encoder::Encoder<f32>;
/// Feature rows in double precision.
pub type FeatureMatrix = dataio::Features<f64>;
/// Training state in double precision.
pub type TrainState = solver::TrainState<f64>;
/// Optimizer state in double precision.
pub type OptimizerState = encoder::Optimizer<f64>;

//! Class-incremental learning with fixed regular-polytope classifiers.
//!
//! The crate trains a small neural net on a sequence of tasks whose class
//! sets never overlap, replays a bounded episodic memory to fight
//! forgetting, and — in its signature configuration — never trains the
//! classifier at all: the output weights are pinned to the vertices of a
//! regular simplex so that every class direction is maximally separated
//! from every other one before the first gradient step.
//!
//! Everything numeric is generic over the scalar type (`f32` for training
//! speed, `f64` for finite-difference oracles); the [`f32` aliases](crate#types)
//! at the crate root are the types most callers want.
//!
//! Module map:
//! - [`tensor`]: dense row-major tensors and the three matmul flavours
//! - [`nn`]: layers, the feature extractors, loss, Adam, gradient checking
//! - [`head`]: simplex / polygon / trainable classifier heads
//! - [`stream`]: task-stream construction (class splits, permutations,
//!   synthetic blobs) and IDX image parsing
//! - [`memory`]: class-balanced reservoir memory and batch composition
//! - [`engine`]: the sequential training loop
//! - [`metrics`]: accuracy matrices and feature-geometry snapshots

pub mod engine;
pub mod error;
pub mod head;
pub mod memory;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod stream;
pub mod tensor;

pub use engine::{run_stream, run_task_sequence, Method, Model, RunConfig, RunOutput};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f32` aliases — the training precision.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Model32 = engine::Model<f32>;
pub type Extractor32 = nn::FeatureExtractor<f32>;
pub type Head32 = head::ClassifierHead<f32>;
pub type Memory32 = memory::EpisodicMemory<f32>;
pub type Stream32 = stream::TaskStream<f32>;

/// Concrete `f64` aliases — the oracle precision.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Model64 = engine::Model<f64>;
pub type Extractor64 = nn::FeatureExtractor<f64>;

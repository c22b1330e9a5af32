//! Stochastic-bridge generative modelling for mask-conditioned object removal.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: the linear-β variance clock and the bridge coefficients `(a, b, c, ρ)`.
//! - [`bridge`]: closed-form marginals, velocity targets, scores, target recovery and an
//!   Euler–Maruyama simulation oracle.
//! - [`sampler`]: reverse-time generation from the source with the bridge posterior step.
//! - [`model`]: a small convolutional velocity network with adaptive mask modulation,
//!   hand-written reverse-mode gradients and a finite-difference checker.
//! - [`training`]: velocity matching with AdamW.
//! - [`baseline`]: the noise-to-data diffusion baseline (ε-prediction, DDIM sampling).
//! - [`data`]: synthetic removal triplets, tensor files and evaluation metrics.
//! - [`verify`]: the self-contained invariant battery behind `vpbridge verify`.

pub mod baseline;
pub mod bridge;
pub mod data;
mod error;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod schedule;
mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};

pub use baseline::DiffusionSchedule;
pub use bridge::BridgeState;
pub use data::{EvalReport, GenSpec, RemovalTriplet, Variant};
pub use model::{Gradients, ModelParams};
pub use sampler::{Network, SamplerConfig, SolverWeights};
pub use schedule::{BridgeCoefficients, NoiseSchedule, TimeGrid};
pub use training::{LossKind, OptimState, TrainConfig};

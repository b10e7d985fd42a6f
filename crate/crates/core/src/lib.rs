//! Topic models with additive regularization (ARTM) and iterative topic
//! accumulation.
//!
//! The numeric core ([`model`], [`regularizers`], [`metrics`]) is generic over
//! the [`Scalar`] element type of Φ and Θ; the aliases below fix it to `f64`
//! or `f32`.

pub mod corpus;
pub mod harness;
pub mod itar;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod regularizers;
mod scalar;

pub use scalar::Scalar;

pub type TopicModelF64 = model::TopicModel<f64>;
pub type TopicModelF32 = model::TopicModel<f32>;
pub type ItarOutcomeF64 = itar::ItarOutcome<f64>;
pub type ItarOutcomeF32 = itar::ItarOutcome<f32>;
pub type RegularizerAdditiveF64 = regularizers::RegularizerAdditive<f64>;

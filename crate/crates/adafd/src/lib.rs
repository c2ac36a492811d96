//! Adaptive federated distillation at desk scale: clients train locally,
//! exchange only logits on a shared public set, and a central model is
//! distilled from adaptively weighted ensemble logits. Includes a non-IID
//! text benchmark builder and the standard federated-distillation baselines.

pub mod config;
pub mod corpus;
pub mod error;
pub mod fed;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod runner;
pub mod strategy;

pub use error::{Error, Result};

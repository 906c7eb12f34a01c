//! Unsupervised meta-RL pre-training with an adversarial curriculum of
//! self-generated goals, plus the evaluation protocols around it.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`env`]: procedurally generated rule/goal grid worlds
//! - [`goals`]: goal mappings, success predicate, intrinsic rewards
//! - [`nn`]: from-scratch differentiable layers (f64, explicit backward)
//! - [`seqpolicy`]: the in-context sequence policy (actor-critic)
//! - [`rl`]: PPO with GAE and Adam
//! - [`curriculum`]: goal search, difficulty prediction, bounded sampling
//! - [`orchestrator`]: the pre-training outer loop and its ablations
//! - [`evalharness`]: exploration/adaptation/fine-tuning protocols

pub mod curriculum;
pub mod env;
pub mod error;
pub mod evalharness;
pub mod goals;
pub mod nn;
pub mod orchestrator;
pub mod rl;
pub mod rng;
pub mod seqpolicy;

pub use error::{Result, UleeError};

//! Cooperative multi-agent Q-learning with emergent stochastic roles.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`] — reverse-mode tape over dense fp64 arrays;
//! * [`nn`] — MLP and GRU building blocks with named parameters;
//! * [`roles`] — stochastic role embeddings: encoder, reparameterized
//!   sampling, Gaussian utilities, trajectory posterior, dissimilarity model
//!   and the hypernetwork decoder that emits per-agent utility heads;
//! * [`mixing`] — state-conditioned monotonic mixing of local utilities;
//! * [`objectives`] — TD loss plus the two variational role regularizers;
//! * [`envs`] — three toy Dec-POMDP tasks with brute-force return oracles;
//! * [`replay`], [`optim`], [`policy`], [`trainer`] — episodic training loop
//!   with parallel rollout and epsilon-greedy control;
//! * [`config`] — run configuration and ablation switches.

pub mod autodiff;
pub mod config;
pub mod envs;
pub mod error;
pub mod mixing;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod parallel;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod roles;
pub mod tensor;
pub mod trainer;

pub use error::{CoreError, Result};
pub use tensor::{ParamSet, Shape, Tensor};

//! Gridlab: a self-contained reinforcement-learning exploration laboratory.
//!
//! The crate bundles everything needed to study sparse-reward exploration on
//! seeded, procedurally generated gridworlds:
//!
//! - [`gridworld`]: MultiRoom / KeyCorridor / ObstructedMaze / Empty level
//!   generators with MiniGrid-compatible step dynamics and egocentric 7x7x3
//!   observations.
//! - [`agent`]: a small actor-critic MLP with exact analytic gradients and a
//!   hand-rolled Adam optimizer (no ML framework, 64-bit floats throughout).
//! - [`intrinsic`]: tabular visitation counts and the BeBold / counts /
//!   counts1st intrinsic-reward strategies.
//! - [`ppo`]: rollout collection, GAE, and the clipped-surrogate update.
//! - [`rapid`]: episode scoring, the ranked replay buffer, and behavioral
//!   cloning of highly ranked experiences.
//! - [`sil`]: the self-imitation baseline with prioritized experience replay.
//! - [`schedule`]: on-policy/off-policy update interleaving policies and the
//!   expected-ratio arithmetic.
//! - [`harness`]: config-driven training runs, metrics CSVs, evaluation, and
//!   SVG plots.

pub mod agent;
pub mod gridworld;
pub mod harness;
pub mod hashing;
pub mod intrinsic;
pub mod ppo;
pub mod rapid;
pub mod rng;
pub mod schedule;
pub mod sil;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad env spec, unsupported parameters, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// API misuse, e.g. stepping a finished episode.
    #[error("usage error: {0}")]
    Usage(String),
    /// A numeric invariant broke at runtime (non-finite loss, count underflow).
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Joint path planning and user scheduling for a mobile data collector.
//!
//! A single mobile entity moves on an integer lattice and polls a set of
//! fixed sensor nodes, one per slot (TDMA). Each node observes a stationary
//! Gauss-Markov source; the usefulness of what the entity holds about node
//! `i` is measured by the value of information (VoI), the mutual information
//! between the source's current sample and the latest noisy observation.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: world descriptions, learner configuration, JSON I/O and
//!   seeded random instance generation.
//! - [`channel`]: closed-form link and freshness math (distance, SNR,
//!   success test, AoI / effective-distance recursion, VoI).
//! - [`env`]: the deterministic MDP (feasible actions, transition, reward)
//!   and episode rollouts.
//! - [`learner`]: tabular Q-learning with ε-greedy exploration.
//! - [`baselines`]: AoI-driven reward, shortest-tour policy and an exhaustive
//!   oracle for tiny instances.
//! - [`experiments`] and [`plot`]: case study, parameter sweeps, CSV and SVG
//!   output.

pub mod baselines;
pub mod channel;
pub mod env;
pub mod error;
pub mod experiments;
pub mod learner;
pub mod plot;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::{LearnerConfig, NodeSpec, Point, RadioParams, Scenario};

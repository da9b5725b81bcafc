//! Ensemble simulator for hybrid quantum-classical reinforcement-learning
//! agents on deterministic strictly epochal environments.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: epochal environments and the binary-tree benchmark.
//! - [`policy`]: per-epoch sequence policies, winning probability, updates.
//! - [`amplify`]: amplitude amplification (analytic law and statevector),
//!   exponential search with unknown success probability, thresholds.
//! - [`agents`]: classical and hybrid agent loops.
//! - [`stats`]: exact oracles, estimators and bound checks.
//! - [`config`], [`runner`], [`verify`]: reproducible experiment driver.

pub mod agents;
pub mod amplify;
pub mod config;
pub mod env;
pub mod numeric;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod verify;

//! Influence maximization with reverse-reachable set sampling.
//!
//! The crate implements the two-phase TIM and TIM+ algorithms: estimate a
//! lower bound on the optimal spread, size a collection of random RR sets
//! from it, then pick seeds by greedy maximum coverage. A Monte-Carlo greedy
//! baseline and exact oracles for tiny graphs are included for comparison
//! and verification.

pub mod cli;
pub mod coverage;
pub mod error;
pub mod evaluator;
pub mod graph;
pub mod greedy;
pub mod models;
pub mod rng;
pub mod sampler;
pub mod tim;

pub use error::{Error, Result};
pub use graph::{load_edge_list, Directedness, Graph, IdPolicy};
pub use models::{DiffusionModel, ModelKind};

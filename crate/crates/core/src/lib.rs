//! Learned graph node embeddings as linear basis functions for approximate
//! policy iteration on tabular gridworld MDPs.
//!
//! The pipeline has three phases:
//!
//! 1. collect trajectories from an MDP ([`sampling`]) and estimate a state
//!    graph from temporal adjacency;
//! 2. embed the graph nodes with one of several models: proto-value
//!    functions or GraphWave ([`spectral`]), node2vec or struc2vec
//!    ([`walk`]), or a variational graph auto-encoder ([`vgae`]);
//! 3. fit a linear Q-function on those features with LSPI ([`lspi`]).
//!
//! [`harness`] wires the phases together into reproducible experiments.

pub mod basis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod lspi;
pub mod mdp;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod vgae;
pub mod walk;

pub use basis::BasisMatrix;
pub use error::{Error, Result};
pub use graph::StateGraph;
pub use mdp::{Action, CellKind, GridSpec, PolicyTable, TabularMdp, ValueVector};
pub use sampling::{EpisodeSet, SamplingStrategy, Transition};

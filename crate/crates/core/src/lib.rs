//! Partition spiking-neural-network models into balanced logical cores, map
//! them onto a 2D-mesh many-core grid with baseline heuristics or a
//! PPO-trained placement policy, and evaluate every mapping with a
//! deterministic NoC simulator.

pub mod batch;
pub mod error;
pub mod mesh;
pub mod placement;
pub mod rl;
pub mod sim;
pub mod taskgraph;

pub use error::{Error, Result};

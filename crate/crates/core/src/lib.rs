//! Clique-gossip averaging over undirected graphs.
//!
//! At every step one clique of a clique coverage averages (or, more
//! generally, linearly mixes) its members' states. The crate validates
//! coverages, builds per-clique transitions, analyses the spectrum of one
//! schedule period, synthesizes finite-time schedules and simulates runs in
//! floating point or exact rational arithmetic.

pub mod cli;
pub mod graph;
pub mod protocol;
pub mod random;
pub mod scalar;
pub mod scheduler;
pub mod sim;
pub mod spectrum;

pub use graph::{line_graph, validate_coverage, Clique, CliqueCoverage, Graph, LineGraph};
pub use protocol::{averaging_transition, TransitionMatrix};
pub use scalar::{Mode, Scalar};
pub use scheduler::Schedule;

//! Energy-aware distributed optimal formation control for double-integrator
//! agents on undirected communication graphs.
//!
//! The closed-form Riccati solution gives a local feedback law, a
//! termination-time bound and a per-agent energy bound. [`simulator`]
//! integrates the closed loop together with each agent's energy ledger.

pub mod cli;
pub mod controller;
pub mod feasibility;
pub mod formation;
pub mod graph;
pub mod integrator;
pub mod linalg;
pub mod output;
pub mod riccati;
pub mod scenario_file;
pub mod scenarios;
pub mod simulator;
pub mod sweep;

pub use formation::Scenario;
pub use graph::GraphModel;
pub use riccati::{solve_pare, ControlParams, PareSolution};

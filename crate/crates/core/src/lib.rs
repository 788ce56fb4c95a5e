//! Outline-graph / knowledge-graph co-evolution for iterative deep research.

pub mod config;
pub mod evidence;
pub mod gap;
pub mod kg;
pub mod orchestrator;
pub mod outline;
pub mod providers;
pub mod sim;
pub mod text;

//! Discrete-event mine haulage simulation with an MCTS dispatch planner.
//!
//! The crate models a simplified open-pit mine (trucks, a weighted road
//! network, continuous haulage tasks) and plans dispatch decisions with a
//! flow-achieving Monte Carlo tree search. Operational constraints
//! (battery, tyre temperature, crusher capacity and material ratios) are
//! folded into planning as opportunity costs: constraint violations and
//! constraint-satisfying actions stretch activity durations inside the
//! generator model instead of requiring hand-tuned penalty terms. Heuristic
//! baseline controllers and an experiment harness round out the artifact.

pub mod baselines;
pub mod constraints;
pub mod experiment;
pub mod model;
pub mod objective;
pub mod planner;
pub mod scenario;
pub mod sim;

pub use model::{MineConfig, Scenario, ValidationReport};
pub use scenario::{load_scenario, reference_scenario};
pub use sim::{Action, SimState};

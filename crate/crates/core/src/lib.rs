//! Resilient finite-time formation control on layered directed acyclic
//! graphs.
//!
//! A simulation library for multi-agent systems in which normal agents reach
//! a formation relative to a set of leaders despite an F-local set of
//! adversaries. Agents filter out the F in-neighbors with the largest
//! relative formation-coordinate distance and apply a saturated control law;
//! in continuous time the law converges in finite time with bounded inputs,
//! in discrete time it contracts exponentially.
//!
//! The crate is organized around the run pipeline:
//! [`graph`] holds topologies and their resilience audits, [`dynamics`] the
//! agent states and the (possibly Byzantine) measurement layer,
//! [`resilience`] the filtering and weight rules, [`control`] the control
//! laws, [`engine`] the steppers plus trace/bound analysis, and [`scenario`]
//! the JSON run configuration.
//!
//! ```
//! use rdag_sim::{run_scenario, Scenario};
//!
//! let scenario = Scenario::from_json(r#"{
//!     "name": "rendezvous",
//!     "mode": "discrete",
//!     "seed": 1,
//!     "graph": { "layered": { "level_sizes": [1, 1], "rule": "full_previous_level" } },
//!     "adversaries": { "mode": "communication", "strategies": [] },
//!     "agents": { "generate": {
//!         "formation": "none",
//!         "leader_tau": [0.0, 0.0],
//!         "follower_tau": { "kind": "fixed", "tau": [3.0, 4.0] }
//!     } },
//!     "params": { "alpha": 0.8, "u_m": 1.0, "f": 0 },
//!     "stop": { "max_steps": 100 }
//! }"#).unwrap();
//!
//! let outcome = run_scenario(&scenario, false).unwrap();
//! assert!(outcome.all_converged);
//! assert!(outcome.report.max_input_norm <= 1.0 + 1e-12);
//! ```

// Negated comparisons such as `!(x > 0.0)` are deliberate: they treat NaN
// parameters as invalid instead of silently accepting them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod graph;
pub mod resilience;
pub mod scenario;

pub use control::{continuous_control, discrete_control, ControlOutput};
pub use dynamics::{
    formation_offsets_circle, leader_reference, AdversaryMode, AdversaryStrategy, AgentState,
    Measurement, Role, SinusoidSignal, World,
};
pub use engine::bounds::{
    continuous_t1_bound, convergence_time, discrete_contraction_factor,
    geometric_series_envelope, BoundReport,
};
pub use engine::{run, AssertionKind, AssertionResult, Mode, RunConfig, RunOutcome};
pub use error::{Result, SimError};
pub use graph::{
    build_k_circulant, build_layered_rdag, min_in_degree, validate_f_local, validate_in_degree,
    validate_rdag, AdversaryPlacement, Digraph, GraphFile, InDegreeRule, RdagPartition,
    ValidationReport, Violation,
};
pub use resilience::{
    control_weights_continuous, control_weights_discrete, dwell_gate, filter_neighbors,
    omega_set, ControlParams, FilterState,
};
pub use scenario::{run_scenario, AuditOutcome, BuiltScenario, Scenario};

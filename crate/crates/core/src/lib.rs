//! Caching policy design for clustered device-to-device (D2D) networks in
//! which every user has its own request distribution.
//!
//! The crate evaluates a closed-form expected network utility under
//! random-push scheduling, maximizes it with a per-user best-response
//! iteration, wraps that iteration in a Dinkelbach loop for energy
//! efficiency, and checks the analysis against a Monte Carlo cluster
//! simulator.

// `!(x > 0.0)` style checks are there to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod io;
pub mod objectives;
pub mod optimizer;
pub mod preference;
pub mod quadrature;
pub mod simulator;
pub(crate) mod stats;

pub use error::{Error, Result};

pub use baselines::{global_popularity_policy, homogeneous_model, selfish_policy, Design};
pub use channel::{LinkProbabilityMatrix, RadioParams, UserLayout};
pub use objectives::{MetricConstants, Objective, UtilityTriple};
pub use optimizer::{
    AccessProbabilities, CachingPolicy, ClusterInstance, EeOutcome, InitPolicy, NetworkMetrics,
    OptimizeOptions, OptimizerReport,
};
pub use preference::{GeneratorParams, GlobalPopularity, PreferenceMatrix};
pub use simulator::{
    GeometryMode, RealizedCluster, ScenarioParams, Scheduler, SimulationEstimate, SimulationRun,
};

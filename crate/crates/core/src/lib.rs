//! Trace-driven simulator and policy library for user-defined multi-carrier
//! cellular access selection.
//!
//! The crate models the device side of multi-carrier access: a deterministic
//! discrete-event environment ([`sim`]), the legacy network-controlled PLMN
//! selection baseline and the direct inter-carrier switch ([`switch`]),
//! adaptive monitoring scheduled into DRX sleep windows ([`monitor`]),
//! heterogeneity profiling with an online regression-tree predictor
//! ([`profile`], [`tree`], [`predictor`]), decision-fault prevention
//! ([`guard`]), pluggable selection strategies ([`strategy`]), and the
//! experiment harness that runs scenarios and reports hit ratios and gap
//! ratios ([`run`], [`metrics`], [`report`]).

pub mod event;
pub mod guard;
pub mod metrics;
pub mod model;
pub mod monitor;
pub mod predictor;
pub mod profile;
pub mod report;
pub mod run;
pub mod scan;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod switch;
pub mod tree;

#[cfg(test)]
pub(crate) mod testutil;

pub use model::{Metric, NetworkId, Scenario};
pub use run::{run_scenario, RunConfig};
pub use scenario::{load_scenario, parse_scenario, validate_scenario};

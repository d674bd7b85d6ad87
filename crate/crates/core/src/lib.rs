//! Collaborative mean estimation over self-pruning communication graphs.
//!
//! Agents draw samples from unknown distributions and try to estimate
//! their own mean faster by pooling with peers that share it. Peers are
//! discovered online: an agent drops a link as soon as the confidence
//! intervals around the two empirical means stop overlapping.
//!
//! - [`confidence`]: confidence widths, sample-count thresholds, and the
//!   optimistic-distance tests.
//! - [`topology`]: random regular graphs, class assignment, same-class
//!   components, and the graph sizing calculators.
//! - [`engine`]: synchronous-round simulation of the all-pairs baseline,
//!   the message-passing and consensus estimators, and local/oracle
//!   baselines.
//! - [`theory`]: characteristic-time calculators.
//! - [`harness`]: configuration, seeded replications, metrics, and CSV.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod engine;
mod error;
pub mod harness;
pub mod rng;
pub mod theory;
pub mod topology;

pub use confidence::{ConfidenceParams, Decision, DistClass, MeanRecord};
pub use error::{Error, Result};
pub use topology::Topology;

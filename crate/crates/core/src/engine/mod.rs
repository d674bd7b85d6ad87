//! Synchronous-round simulation.
//!
//! Every round each agent draws one sample, tests its current peers
//! against its fresh local mean, and then runs its estimator. Peer state
//! is always read from the previous round, so agent order never matters.
//!
//! Two world types cover all algorithms:
//! - [`GraphWorld`] runs on a fixed communication graph: message passing
//!   (B-ColME), consensus (C-ColME), the local baseline and the oracle
//!   variants.
//! - [`ColmeWorld`] is the all-pairs baseline with round-robin queries,
//!   in its full (`colme`) and reduced-evaluation (`s_colme`) modes.

mod colme;
mod graph;
mod sampling;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use colme::{colme_estimate, ColmeMode, ColmeWorld};
pub use graph::{
    bcolme_estimate, ccolme_update, consensus_weights, GraphEstimator, GraphWorld, MessageTable,
    WeightRow,
};
pub use sampling::{ConstantSource, DistKind, FnSource, RandomSource, SampleSource};

/// Algorithms known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Colme,
    SColme,
    BColme,
    CColme,
    Local,
    OracleB,
    OracleC,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Colme,
        Algorithm::SColme,
        Algorithm::BColme,
        Algorithm::CColme,
        Algorithm::Local,
        Algorithm::OracleB,
        Algorithm::OracleC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Colme => "colme",
            Algorithm::SColme => "s_colme",
            Algorithm::BColme => "b_colme",
            Algorithm::CColme => "c_colme",
            Algorithm::Local => "local",
            Algorithm::OracleB => "oracle_b",
            Algorithm::OracleC => "oracle_c",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Runs on the communication graph rather than all pairs.
    pub fn uses_graph(self) -> bool {
        !matches!(self, Algorithm::Colme | Algorithm::SColme)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Memory parameter schedule for the consensus update.
///
/// Parsed from `time_varying`, `reset_on_prune` or `constant:<alpha>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(try_from = "String")]
pub enum AlphaSchedule {
    /// `α = (t−1)/t` at round `t`, global clock.
    #[default]
    TimeVarying,
    /// Same, with the agent's clock restarted whenever it loses a link.
    ResetOnPrune,
    /// Fixed `α ∈ [0, 1)`.
    Constant { alpha: f64 },
}

impl AlphaSchedule {
    /// `α` used at a round whose (possibly restarted) clock reads `clock ≥ 1`.
    /// The first round always uses 0: there is no previous estimate to mix.
    pub fn alpha(&self, clock: u64) -> f64 {
        if clock <= 1 {
            return 0.0;
        }
        match *self {
            AlphaSchedule::TimeVarying | AlphaSchedule::ResetOnPrune => {
                (clock - 1) as f64 / clock as f64
            }
            AlphaSchedule::Constant { alpha } => alpha,
        }
    }
}

impl FromStr for AlphaSchedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "time_varying" => Ok(AlphaSchedule::TimeVarying),
            "reset_on_prune" => Ok(AlphaSchedule::ResetOnPrune),
            _ => {
                let value = s
                    .strip_prefix("constant:")
                    .ok_or_else(|| format!("unknown alpha mode `{s}`"))?;
                let alpha: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad constant alpha `{value}`"))?;
                if !(0.0..1.0).contains(&alpha) {
                    return Err(format!("constant alpha must lie in [0, 1), got {alpha}"));
                }
                Ok(AlphaSchedule::Constant { alpha })
            }
        }
    }
}

impl TryFrom<String> for AlphaSchedule {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl std::fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlphaSchedule::TimeVarying => f.write_str("time_varying"),
            AlphaSchedule::ResetOnPrune => f.write_str("reset_on_prune"),
            AlphaSchedule::Constant { alpha } => write!(f, "constant:{alpha}"),
        }
    }
}

/// Per-round work counters, summed over agents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    /// Optimistic-distance evaluations.
    pub distance_evals: u64,
    /// Peer records read by the estimator (table rows, consensus values,
    /// refreshed stale means).
    pub estimator_reads: u64,
}

impl Counters {
    pub fn touches(&self) -> u64 {
        self.distance_evals + self.estimator_reads
    }
}

/// Snapshot of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: usize,
    pub t: u64,
    pub local_mean: Vec<f64>,
    /// Peers the agent still believes share its class, ascending.
    pub est_class: Vec<usize>,
    pub estimate: Vec<f64>,
}

/// Common surface of the two world types.
pub trait Simulation: Send {
    /// Runs one synchronous round.
    fn step(&mut self, source: &mut dyn SampleSource);

    /// Rounds completed so far.
    fn round(&self) -> u64;

    fn n_agents(&self) -> usize;

    fn dim(&self) -> usize;

    /// Current estimate of agent `a`.
    fn estimate(&self, a: usize) -> &[f64];

    /// Inter-class links still in use over the initial inter-class links;
    /// 0 when there were none.
    fn wrong_link_fraction(&self) -> f64;

    /// Same-class links removed so far.
    fn same_class_pruned(&self) -> usize;

    /// Round at which a same-class link was last removed, if ever.
    fn last_same_class_prune(&self) -> Option<u64>;

    /// Work done during the last round.
    fn last_counters(&self) -> &Counters;

    fn agent_state(&self, a: usize) -> AgentState;
}

pub(crate) fn div_into(num: &[f64], den: f64, out: &mut [f64]) {
    for (o, x) in out.iter_mut().zip(num) {
        *o = x / den;
    }
}

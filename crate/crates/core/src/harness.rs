//! Experiment campaigns: configuration, seeded replications, metrics and CSV.
//!
//! Replication `i` of a campaign uses seed `hash64(master_seed, i)`. The
//! graph, the class labels and every agent's sample stream are derived
//! from that seed, and all algorithms of one replication see the same
//! graph and the same samples.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer};

use crate::confidence::{ConfidenceParams, DistClass};
use crate::engine::{
    AlphaSchedule, Algorithm, ColmeMode, ColmeWorld, DistKind, GraphEstimator, GraphWorld,
    RandomSource, Simulation,
};
use crate::error::{Error, Result};
use crate::rng::{hash64, CLASS_STREAM, GRAPH_STREAM};
use crate::topology::{
    assign_classes, recommend_d, same_class_components, sample_regular_graph, validate_probs,
    Topology,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "COLME_THREADS";

pub const CSV_HEADER: &str =
    "round,algorithm,err_frac_mean,err_frac_ci95,wrong_link_mean,wrong_link_ci95,replications";

/// How the tail mass `γ` of the confidence widths is chosen.
///
/// Parsed from `conservative`, `theorem_exact` or `fixed:<gamma>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(try_from = "String")]
pub enum GammaMode {
    /// `δ / (4 r N)` on graphs, `δ / (4 N)` for all-pairs ColME.
    #[default]
    Conservative,
    /// `δ / (4 r |CC_a|)` per agent, using the true same-class components.
    TheoremExact,
    Fixed(f64),
}

impl FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "conservative" => Ok(GammaMode::Conservative),
            "theorem_exact" => Ok(GammaMode::TheoremExact),
            _ => {
                let value = s
                    .strip_prefix("fixed:")
                    .ok_or_else(|| format!("unknown gamma mode `{s}`"))?;
                let gamma: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad fixed gamma `{value}`"))?;
                Ok(GammaMode::Fixed(gamma))
            }
        }
    }
}

impl TryFrom<String> for GammaMode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

/// One similarity class.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    /// True mean; a scalar is repeated on every axis.
    #[serde(deserialize_with = "scalar_or_vec")]
    pub mean: Vec<f64>,
    pub sigma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub probability: f64,
    #[serde(default)]
    pub dist_kind: DistKind,
}

fn default_kappa() -> f64 {
    3.0
}

fn scalar_or_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Mean {
        Scalar(f64),
        Vector(Vec<f64>),
    }
    Ok(match Mean::deserialize(d)? {
        Mean::Scalar(x) => vec![x],
        Mean::Vector(v) => v,
    })
}

fn one() -> usize {
    1
}

fn sub_gaussian() -> DistClass {
    DistClass::SubGaussian
}

/// A full campaign description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub degree_r: usize,
    /// Message-passing depth; the graph-size recommendation when absent.
    #[serde(default)]
    pub depth_d: Option<usize>,
    #[serde(default = "one")]
    pub dimension_k: usize,
    pub classes: Vec<ClassSpec>,
    #[serde(default = "sub_gaussian")]
    pub beta_kind: DistClass,
    #[serde(default)]
    pub gamma_mode: GammaMode,
    pub epsilon: f64,
    pub delta: f64,
    pub horizon: u64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub alpha_mode: AlphaSchedule,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Peers queried per round by all-pairs ColME; `degree_r` when absent.
    #[serde(default)]
    pub colme_queries: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks every field; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::config("n_agents", "need at least 2 agents"));
        }
        if self.dimension_k == 0 {
            return Err(Error::config("dimension_k", "must be >= 1"));
        }
        if self.classes.is_empty() {
            return Err(Error::config("classes", "need at least one class"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.mean.len() != 1 && c.mean.len() != self.dimension_k {
                return Err(Error::config(
                    format!("classes[{i}].mean"),
                    format!("has {} entries, dimension_k is {}", c.mean.len(), self.dimension_k),
                ));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::config(format!("classes[{i}].mean"), "must be finite"));
            }
            if !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                return Err(Error::config(format!("classes[{i}].sigma"), "must be finite and >= 0"));
            }
            if !(c.kappa >= 1.0 && c.kappa.is_finite()) {
                return Err(Error::config(format!("classes[{i}].kappa"), "must be finite and >= 1"));
            }
        }
        let probs: Vec<f64> = self.classes.iter().map(|c| c.probability).collect();
        validate_probs(&probs).map_err(|e| Error::config("classes.probability", e.to_string()))?;
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "list at least one algorithm"));
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > 0.0 && g < 0.5) {
                return Err(Error::config("gamma_mode", format!("fixed gamma must lie in (0, 1/2), got {g}")));
            }
        }
        if self.colme_queries == Some(0) {
            return Err(Error::config("colme_queries", "must be >= 1"));
        }
        if self.algorithms.iter().any(|a| a.uses_graph()) {
            if self.degree_r == 0 || self.degree_r >= self.n_agents {
                return Err(Error::config(
                    "degree_r",
                    format!("must lie in [1, n_agents), got {}", self.degree_r),
                ));
            }
            if self.n_agents * self.degree_r % 2 == 1 {
                return Err(Error::config(
                    "degree_r",
                    format!(
                        "n_agents * degree_r must be even (stub count), got {} * {}",
                        self.n_agents, self.degree_r
                    ),
                ));
            }
            if self.depth_d == Some(0) {
                return Err(Error::config("depth_d", "must be >= 1"));
            }
            self.depth()?;
        }
        // a probe parameter set catches anything left
        self.base_params(1e-3)
            .map_err(|e| Error::config("classes", e.to_string()))?;
        Ok(())
    }

    /// Message-passing depth in use.
    pub fn depth(&self) -> Result<usize> {
        match self.depth_d {
            Some(d) => Ok(d),
            None => recommend_d(self.n_agents, self.degree_r)
                .map(|d| d.max(1))
                .map_err(|e| Error::config("depth_d", format!("no default available: {e}"))),
        }
    }

    pub fn colme_query_count(&self) -> usize {
        self.colme_queries.unwrap_or(self.degree_r).max(1)
    }

    /// True mean of each class, expanded to `dimension_k` axes.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        self.classes
            .iter()
            .map(|c| {
                if c.mean.len() == 1 {
                    vec![c.mean[0]; self.dimension_k]
                } else {
                    c.mean.clone()
                }
            })
            .collect()
    }

    /// Widths are calibrated for the widest class (largest `σ` and `κ`).
    fn base_params(&self, gamma: f64) -> Result<ConfidenceParams> {
        let sigma = self.classes.iter().map(|c| c.sigma).fold(0.0, f64::max);
        let kappa = self.classes.iter().map(|c| c.kappa).fold(1.0, f64::max);
        match self.beta_kind {
            DistClass::SubGaussian => ConfidenceParams::sub_gaussian(sigma, gamma),
            DistClass::BoundedFourthMoment => ConfidenceParams::bounded_fourth_moment(sigma, kappa, gamma),
        }
    }

    pub fn replication_seed(&self, index: usize) -> u64 {
        hash64(self.master_seed, index as u64)
    }
}

/// Graph and labels of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub topology: Topology,
}

impl Replication {
    pub fn new(config: &ExperimentConfig, index: usize) -> Result<Self> {
        let seed = config.replication_seed(index);
        let n = config.n_agents;
        let probs: Vec<f64> = config.classes.iter().map(|c| c.probability).collect();
        let labels = assign_classes(n, &probs, hash64(seed, CLASS_STREAM))?;
        let graph = if config.algorithms.iter().any(|a| a.uses_graph()) {
            sample_regular_graph(n, config.degree_r, hash64(seed, GRAPH_STREAM))?
        } else {
            Topology::from_edges(n, &[])?
        };
        let topology = graph.with_classes(labels, config.class_means())?;
        Ok(Self { index, seed, topology })
    }

    /// Fresh sample stream; identical for every algorithm of this replication.
    pub fn source(&self, config: &ExperimentConfig) -> RandomSource {
        let sigma: Vec<f64> = config.classes.iter().map(|c| c.sigma).collect();
        let kind: Vec<DistKind> = config.classes.iter().map(|c| c.dist_kind).collect();
        RandomSource::new(&self.topology, &sigma, &kind, self.seed)
    }

    pub fn simulation(&self, config: &ExperimentConfig, algorithm: Algorithm) -> Result<Box<dyn Simulation>> {
        let n = config.n_agents as f64;
        let r = config.degree_r as f64;
        let topo = self.topology.clone();
        if !algorithm.uses_graph() {
            let gamma = match config.gamma_mode {
                GammaMode::Fixed(g) => g,
                _ => config.delta / (4.0 * n),
            };
            let mode = match algorithm {
                Algorithm::Colme => ColmeMode::Colme,
                _ => ColmeMode::SColme,
            };
            let world = ColmeWorld::new(topo, config.base_params(gamma)?, mode, config.colme_query_count())?;
            return Ok(Box::new(world));
        }

        let estimator = match algorithm {
            Algorithm::Local => GraphEstimator::Local,
            Algorithm::BColme | Algorithm::OracleB => GraphEstimator::MessagePassing { depth: config.depth()? },
            _ => GraphEstimator::Consensus { alpha: config.alpha_mode },
        };
        let gammas: Option<Vec<f64>> = match config.gamma_mode {
            GammaMode::Fixed(g) => Some(vec![g; config.n_agents]),
            GammaMode::Conservative => None,
            GammaMode::TheoremExact => {
                let report = same_class_components(&topo);
                Some(
                    (0..config.n_agents)
                        .map(|a| config.delta / (4.0 * r * report.size_of(a) as f64))
                        .collect(),
                )
            }
        };
        let mut world = GraphWorld::new(topo, config.base_params(config.delta / (4.0 * r * n))?, estimator)?;
        if let Some(g) = gammas {
            world = world.with_gammas(&g)?;
        }
        if matches!(algorithm, Algorithm::OracleB | Algorithm::OracleC) {
            world = world.oracle();
        }
        Ok(Box::new(world))
    }

    /// Runs one algorithm over the configured horizon.
    pub fn run(&self, config: &ExperimentConfig, algorithm: Algorithm) -> Result<ReplicationOutcome> {
        let mut sim = self.simulation(config, algorithm)?;
        let mut source = self.source(config);
        let horizon = config.horizon as usize;
        let mut outcome = ReplicationOutcome {
            replication: self.index,
            seed: self.seed,
            algorithm,
            error_fraction: Vec::with_capacity(horizon),
            wrong_link_fraction: Vec::with_capacity(horizon),
            touches_per_agent: Vec::with_capacity(horizon),
            same_class_pruned: 0,
            last_same_class_prune: None,
        };
        for _ in 0..horizon {
            sim.step(&mut source);
            outcome
                .error_fraction
                .push(error_fraction(sim.as_ref(), &self.topology, config.epsilon));
            outcome.wrong_link_fraction.push(sim.wrong_link_fraction());
            outcome
                .touches_per_agent
                .push(sim.last_counters().touches() as f64 / config.n_agents as f64);
        }
        outcome.same_class_pruned = sim.same_class_pruned();
        outcome.last_same_class_prune = sim.last_same_class_prune();
        Ok(outcome)
    }
}

/// Per-round trace of one algorithm in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub error_fraction: Vec<f64>,
    pub wrong_link_fraction: Vec<f64>,
    /// Distance evaluations plus estimator reads, averaged over agents.
    pub touches_per_agent: Vec<f64>,
    /// Same-class links removed by the end of the run.
    pub same_class_pruned: usize,
    pub last_same_class_prune: Option<u64>,
}

/// Fraction of agents whose estimate is more than `ε` away from their
/// true mean (Euclidean norm for vectors).
pub fn error_fraction(sim: &dyn Simulation, topo: &Topology, epsilon: f64) -> f64 {
    let n = sim.n_agents();
    let bad = (0..n)
        .filter(|&a| {
            let sq: f64 = sim
                .estimate(a)
                .iter()
                .zip(topo.true_mean(a))
                .map(|(e, m)| (e - m) * (e - m))
                .sum();
            sq.sqrt() > epsilon
        })
        .count();
    bad as f64 / n as f64
}

/// Active inter-class edges over the initial inter-class edges of `topo`;
/// 0 when there were none.
pub fn wrong_link_fraction(active_edges: &[(usize, usize)], topo: &Topology) -> f64 {
    let initial = topo.inter_class_edges();
    if initial == 0 {
        return 0.0;
    }
    let active = active_edges
        .iter()
        .filter(|&&(u, v)| topo.class_of(u) != topo.class_of(v))
        .count();
    active as f64 / initial as f64
}

/// Aggregated metrics for one `(round, algorithm)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub round: u64,
    pub algorithm: Algorithm,
    pub err_frac_mean: f64,
    pub err_frac_ci95: f64,
    pub wrong_link_mean: f64,
    pub wrong_link_ci95: f64,
    pub replications: usize,
}

/// Rows ordered by round, then by the configured algorithm order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSeries {
    pub rows: Vec<MetricRow>,
}

impl MetricSeries {
    /// Aggregates outcomes; the result does not depend on their order.
    pub fn aggregate(outcomes: &[ReplicationOutcome], algorithms: &[Algorithm], horizon: u64) -> Self {
        let mut rows = Vec::with_capacity(horizon as usize * algorithms.len());
        let per_alg: Vec<Vec<&ReplicationOutcome>> = algorithms
            .iter()
            .map(|&alg| {
                let mut v: Vec<_> = outcomes.iter().filter(|o| o.algorithm == alg).collect();
                v.sort_by_key(|o| o.replication);
                v
            })
            .collect();
        for t in 0..horizon as usize {
            for (&alg, runs) in algorithms.iter().zip(&per_alg) {
                let err: Vec<f64> = runs.iter().map(|o| o.error_fraction[t]).collect();
                let wrong: Vec<f64> = runs.iter().map(|o| o.wrong_link_fraction[t]).collect();
                let (err_frac_mean, err_frac_ci95) = mean_ci95(&err);
                let (wrong_link_mean, wrong_link_ci95) = mean_ci95(&wrong);
                rows.push(MetricRow {
                    round: t as u64 + 1,
                    algorithm: alg,
                    err_frac_mean,
                    err_frac_ci95,
                    wrong_link_mean,
                    wrong_link_ci95,
                    replications: runs.len(),
                });
            }
        }
        Self { rows }
    }

    pub fn get(&self, round: u64, algorithm: Algorithm) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.round == round && r.algorithm == algorithm)
    }

    pub fn last(&self, algorithm: Algorithm) -> Option<&MetricRow> {
        self.rows.iter().rev().find(|r| r.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.round,
                r.algorithm,
                sig9(r.err_frac_mean),
                sig9(r.err_frac_ci95),
                sig9(r.wrong_link_mean),
                sig9(r.wrong_link_ci95),
                r.replications
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Sample mean and normal-approximation 95% half-width `1.96 s / √n`.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Fixed-point notation with 9 significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new digit (9.9999999995 -> 10.00000000)
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 9 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

/// Outcomes of every replication plus their aggregate.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub series: MetricSeries,
    /// Sorted by replication, then by configured algorithm order.
    pub outcomes: Vec<ReplicationOutcome>,
}

/// Worker pool honouring `COLME_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker threads: {e}")))
}

/// Validates `config` and runs every replication of every algorithm.
pub fn run_campaign(config: &ExperimentConfig) -> Result<Campaign> {
    config.validate()?;
    let pool = thread_pool()?;
    let replications: Vec<Replication> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|i| Replication::new(config, i))
            .collect::<Result<_>>()
    })?;
    let jobs: Vec<(usize, Algorithm)> = (0..config.replications)
        .flat_map(|i| config.algorithms.iter().map(move |&a| (i, a)))
        .collect();
    let outcomes: Vec<ReplicationOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, alg)| replications[i].run(config, alg))
            .collect::<Result<_>>()
    })?;
    let series = MetricSeries::aggregate(&outcomes, &config.algorithms, config.horizon);
    Ok(Campaign { series, outcomes })
}

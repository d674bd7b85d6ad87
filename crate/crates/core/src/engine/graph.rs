use crate::confidence::{separated, ConfidenceParams, Geometry};
use crate::error::{Error, Result};
use crate::topology::Topology;

use super::{div_into, AgentState, AlphaSchedule, Counters, SampleSource, Simulation};

/// Estimator run on top of the pruned graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphEstimator {
    /// Each agent keeps its own empirical mean.
    Local,
    /// B-ColME: `depth × 2` tables of delayed sample sums and counts.
    MessagePassing { depth: usize },
    /// C-ColME: consensus mixing of neighbours' previous estimates.
    Consensus { alpha: AlphaSchedule },
}

/// One `depth × 2` message: per row, a sum of samples (a `K`-vector)
/// and the number of samples behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTable {
    depth: usize,
    dim: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl MessageTable {
    pub fn zeros(depth: usize, dim: usize) -> Self {
        Self {
            depth,
            dim,
            sums: vec![0.0; depth * dim],
            counts: vec![0; depth],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Row `h` (0-based; row 0 carries the sender's own samples).
    pub fn row(&self, h: usize) -> (&[f64], u64) {
        (&self.sums[h * self.dim..(h + 1) * self.dim], self.counts[h])
    }

    pub fn set_row(&mut self, h: usize, sum: &[f64], count: u64) {
        self.sums[h * self.dim..(h + 1) * self.dim].copy_from_slice(sum);
        self.counts[h] = count;
    }
}

/// Pooled estimate from the agent's own sample sum over `t` samples and
/// the tables received from its active neighbours.
pub fn bcolme_estimate<'a>(
    local_sum: &[f64],
    t: u64,
    tables: impl IntoIterator<Item = &'a MessageTable>,
) -> Vec<f64> {
    let mut num = local_sum.to_vec();
    let mut count = t;
    for table in tables {
        accumulate(&mut num, &mut count, &table.sums, &table.counts);
    }
    let mut out = vec![0.0; num.len()];
    div_into(&num, count as f64, &mut out);
    out
}

#[inline]
fn accumulate(num: &mut [f64], count: &mut u64, sums: &[f64], counts: &[u64]) {
    let k = num.len();
    for (row, &c) in sums.chunks_exact(k).zip(counts) {
        for (n, s) in num.iter_mut().zip(row) {
            *n += s;
        }
        *count += c;
    }
}

/// Consensus weights of one agent: `1/(max(|C_a|, |C_b|) + 1)` toward each
/// active neighbour `b`, remainder on itself.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub self_weight: f64,
    pub neighbor: Vec<f64>,
}

pub fn consensus_weights(own_degree: usize, neighbor_degrees: &[usize]) -> WeightRow {
    let neighbor: Vec<f64> = neighbor_degrees
        .iter()
        .map(|&db| pair_weight(own_degree, db))
        .collect();
    WeightRow {
        self_weight: 1.0 - neighbor.iter().sum::<f64>(),
        neighbor,
    }
}

#[inline]
fn pair_weight(da: usize, db: usize) -> f64 {
    1.0 / (da.max(db) + 1) as f64
}

/// `(1 − α) x̄ + α (w_aa ŷ_a + Σ_b w_ab ŷ_b)`, written into `out`.
pub fn ccolme_update(
    local_mean: &[f64],
    alpha: f64,
    weights: &WeightRow,
    own_prev: &[f64],
    neighbor_prev: &[&[f64]],
    out: &mut [f64],
) {
    // written as offsets from the agent's own values, so that equal
    // inputs come back bit-for-bit unchanged
    for (i, o) in out.iter_mut().enumerate() {
        let mut mix = own_prev[i];
        for (w, y) in weights.neighbor.iter().zip(neighbor_prev) {
            mix += w * (y[i] - own_prev[i]);
        }
        *o = local_mean[i] + alpha * (mix - local_mean[i]);
    }
}

/// Agents on a fixed graph whose links are pruned over time.
///
/// Adjacency is stored in slots: slot `s` of agent `a` points at
/// `peer[s]`, and `rev[s]` is the slot of `a` in that peer's list.
pub struct GraphWorld {
    topo: Topology,
    dim: usize,
    t: u64,
    params: Vec<ConfidenceParams>,
    uniform_params: bool,
    geometry: Geometry,
    pruning: bool,
    estimator: GraphEstimator,

    offsets: Vec<usize>,
    peer: Vec<usize>,
    rev: Vec<usize>,
    active: Vec<bool>,
    active_deg: Vec<usize>,

    sums: Vec<f64>,
    means: Vec<f64>,
    prev_means: Vec<f64>,
    estimates: Vec<f64>,

    tables: Option<Tables>,
    consensus: Option<Consensus>,

    initial_wrong: usize,
    active_wrong: usize,
    same_pruned: usize,
    last_same_prune: Option<u64>,
    counters: Counters,
    log: Option<Vec<String>>,

    sample: Vec<f64>,
    flags: Vec<bool>,
    lost: Vec<bool>,
}

struct Tables {
    depth: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
    next_sums: Vec<f64>,
    next_counts: Vec<u64>,
    totals: Vec<f64>,
    total_counts: Vec<u64>,
}

struct Consensus {
    alpha: AlphaSchedule,
    prev: Vec<f64>,
    clock: Vec<u64>,
}

impl GraphWorld {
    /// Every agent uses the same confidence parameters.
    pub fn new(topo: Topology, params: ConfidenceParams, estimator: GraphEstimator) -> Result<Self> {
        let n = topo.n_agents();
        let dim = topo.dim();
        if let GraphEstimator::MessagePassing { depth: 0 } = estimator {
            return Err(Error::param("message passing needs depth >= 1"));
        }
        if let GraphEstimator::Consensus {
            alpha: AlphaSchedule::Constant { alpha },
        } = estimator
        {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::param(format!("constant alpha must lie in [0, 1), got {alpha}")));
            }
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut peer = Vec::new();
        offsets.push(0);
        for a in 0..n {
            peer.extend_from_slice(topo.neighbors(a));
            offsets.push(peer.len());
        }
        let rev: Vec<usize> = (0..n)
            .flat_map(|a| (offsets[a]..offsets[a + 1]).map(move |s| (a, s)))
            .map(|(a, s)| {
                let b = peer[s];
                let j = topo.neighbors(b).binary_search(&a).expect("symmetric adjacency");
                offsets[b] + j
            })
            .collect();
        let slots = peer.len();
        let initial_wrong = topo.inter_class_edges();

        let tables = match estimator {
            GraphEstimator::MessagePassing { depth } => Some(Tables {
                depth,
                sums: vec![0.0; slots * depth * dim],
                counts: vec![0; slots * depth],
                next_sums: vec![0.0; slots * depth * dim],
                next_counts: vec![0; slots * depth],
                totals: vec![0.0; depth * dim],
                total_counts: vec![0; depth],
            }),
            _ => None,
        };
        let consensus = match estimator {
            GraphEstimator::Consensus { alpha } => Some(Consensus {
                alpha,
                prev: vec![0.0; n * dim],
                clock: vec![0; n],
            }),
            _ => None,
        };

        Ok(Self {
            active_deg: (0..n).map(|a| topo.neighbors(a).len()).collect(),
            topo,
            dim,
            t: 0,
            params: vec![params; n],
            uniform_params: true,
            geometry: params.geometry(),
            pruning: true,
            estimator,
            offsets,
            peer,
            rev,
            active: vec![true; slots],
            sums: vec![0.0; n * dim],
            means: vec![0.0; n * dim],
            prev_means: vec![0.0; n * dim],
            estimates: vec![0.0; n * dim],
            tables,
            consensus,
            initial_wrong,
            active_wrong: initial_wrong,
            same_pruned: 0,
            last_same_prune: None,
            counters: Counters::default(),
            log: None,
            sample: vec![0.0; dim],
            flags: vec![false; slots],
            lost: vec![false; n],
        })
    }

    /// Per-agent tail masses, e.g. `δ / (4 r |CC_a|)`.
    pub fn with_gammas(mut self, gammas: &[f64]) -> Result<Self> {
        if gammas.len() != self.topo.n_agents() {
            return Err(Error::DimensionMismatch {
                expected: self.topo.n_agents(),
                got: gammas.len(),
            });
        }
        let base = self.params[0];
        self.params = gammas
            .iter()
            .map(|&g| base.with_gamma(g))
            .collect::<Result<_>>()?;
        self.uniform_params = gammas.windows(2).all(|w| w[0] == w[1]);
        Ok(self)
    }

    /// Freezes every agent's peer set to its true same-class neighbours
    /// and disables pruning.
    pub fn oracle(mut self) -> Self {
        for a in 0..self.topo.n_agents() {
            for s in self.slots(a) {
                if self.topo.class_of(a) != self.topo.class_of(self.peer[s]) && self.active[s] {
                    self.active[s] = false;
                    self.active_deg[a] -= 1;
                }
            }
        }
        self.active_wrong = 0;
        self.pruning = false;
        self
    }

    pub fn without_pruning(mut self) -> Self {
        self.pruning = false;
        self
    }

    /// Records one line per round in which links were removed.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn event_log(&self) -> Option<&[String]> {
        self.log.as_deref()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn estimator(&self) -> GraphEstimator {
        self.estimator
    }

    fn slots(&self, a: usize) -> std::ops::Range<usize> {
        self.offsets[a]..self.offsets[a + 1]
    }

    fn slot_of(&self, a: usize, b: usize) -> Option<usize> {
        let j = self.topo.neighbors(a).binary_search(&b).ok()?;
        Some(self.offsets[a] + j)
    }

    pub fn is_active(&self, a: usize, b: usize) -> bool {
        self.slot_of(a, b).is_some_and(|s| self.active[s])
    }

    pub fn active_neighbors(&self, a: usize) -> Vec<usize> {
        self.slots(a)
            .filter(|&s| self.active[s])
            .map(|s| self.peer[s])
            .collect()
    }

    pub fn active_degree(&self, a: usize) -> usize {
        self.active_deg[a]
    }

    /// Active undirected links.
    pub fn active_edges(&self) -> Vec<(usize, usize)> {
        (0..self.topo.n_agents())
            .flat_map(|a| self.slots(a).map(move |s| (a, s)))
            .filter(|&(a, s)| self.active[s] && a < self.peer[s])
            .map(|(a, s)| (a, self.peer[s]))
            .collect()
    }

    pub fn local_mean(&self, a: usize) -> &[f64] {
        &self.means[a * self.dim..(a + 1) * self.dim]
    }

    pub fn local_sum(&self, a: usize) -> &[f64] {
        &self.sums[a * self.dim..(a + 1) * self.dim]
    }

    /// Latest message `from → a`, i.e. the table `a` will read next round.
    pub fn inbound_table(&self, a: usize, from: usize) -> Option<MessageTable> {
        let tables = self.tables.as_ref()?;
        let s = self.slot_of(a, from)?;
        let (d, k) = (tables.depth, self.dim);
        Some(MessageTable {
            depth: d,
            dim: k,
            sums: tables.sums[s * d * k..(s + 1) * d * k].to_vec(),
            counts: tables.counts[s * d..(s + 1) * d].to_vec(),
        })
    }

    /// Consensus weights of agent `a` under the current active links.
    pub fn weight_row(&self, a: usize) -> WeightRow {
        let degs: Vec<usize> = self
            .active_neighbors(a)
            .iter()
            .map(|&b| self.active_deg[b])
            .collect();
        consensus_weights(self.active_deg[a], &degs)
    }

    /// Dense consensus matrix `W_t` under the current active links.
    pub fn weight_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.topo.n_agents();
        let mut w = vec![vec![0.0; n]; n];
        for (a, row) in w.iter_mut().enumerate() {
            let weights = self.weight_row(a);
            row[a] = weights.self_weight;
            for (b, x) in self.active_neighbors(a).into_iter().zip(weights.neighbor) {
                row[b] = x;
            }
        }
        w
    }

    fn prune(&mut self) {
        self.lost.fill(false);
        if !self.pruning || self.t < 2 {
            return;
        }
        let (k, t) = (self.dim, self.t);
        let uniform_width = self.uniform_params.then(|| {
            self.params[0].multidim_width(t, k) + self.params[0].multidim_width(t - 1, k)
        });
        let mut evals = 0u64;
        for a in 0..self.topo.n_agents() {
            let width = uniform_width.unwrap_or_else(|| {
                self.params[a].multidim_width(t, k) + self.params[a].multidim_width(t - 1, k)
            });
            let own = &self.means[a * k..(a + 1) * k];
            for s in self.offsets[a]..self.offsets[a + 1] {
                self.flags[s] = self.active[s] && {
                    evals += 1;
                    let b = self.peer[s];
                    separated(own, &self.prev_means[b * k..(b + 1) * k], width, self.geometry)
                };
            }
        }
        self.counters.distance_evals += evals;

        let mut removed = Vec::new();
        for a in 0..self.topo.n_agents() {
            for s in self.offsets[a]..self.offsets[a + 1] {
                let b = self.peer[s];
                if a < b && self.active[s] && (self.flags[s] || self.flags[self.rev[s]]) {
                    self.active[s] = false;
                    self.active[self.rev[s]] = false;
                    self.active_deg[a] -= 1;
                    self.active_deg[b] -= 1;
                    self.lost[a] = true;
                    self.lost[b] = true;
                    if self.topo.class_of(a) == self.topo.class_of(b) {
                        self.same_pruned += 1;
                        self.last_same_prune = Some(t);
                    } else {
                        self.active_wrong -= 1;
                    }
                    removed.push((a, b));
                }
            }
        }
        if let Some(log) = self.log.as_mut() {
            if !removed.is_empty() {
                let pairs: Vec<String> = removed.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                log.push(format!("{}, {}, {}", t, removed.len(), pairs.join(" ")));
            }
        }
    }

    fn message_round(&mut self) {
        let Some(tab) = self.tables.as_mut() else { return };
        let (n, k, d, t) = (self.topo.n_agents(), self.dim, tab.depth, self.t);
        let stride = d * k;
        let mut reads = 0u64;

        // estimate from the tables that arrived this round (built last round)
        let mut num = vec![0.0; k];
        for a in 0..n {
            num.copy_from_slice(&self.sums[a * k..(a + 1) * k]);
            let mut count = t;
            for s in self.offsets[a]..self.offsets[a + 1] {
                if self.active[s] {
                    accumulate(
                        &mut num,
                        &mut count,
                        &tab.sums[s * stride..(s + 1) * stride],
                        &tab.counts[s * d..(s + 1) * d],
                    );
                    reads += d as u64;
                }
            }
            div_into(&num, count as f64, &mut self.estimates[a * k..(a + 1) * k]);
        }

        // outgoing tables: row 0 = own sums, row h = sum over the sender's
        // other active peers of their row h-1 from last round
        tab.next_sums.fill(0.0);
        tab.next_counts.fill(0);
        for b in 0..n {
            tab.totals.fill(0.0);
            tab.total_counts.fill(0);
            for s in self.offsets[b]..self.offsets[b + 1] {
                if self.active[s] {
                    for h in 0..d - 1 {
                        let src = &tab.sums[s * stride + h * k..s * stride + (h + 1) * k];
                        for (acc, x) in tab.totals[h * k..(h + 1) * k].iter_mut().zip(src) {
                            *acc += x;
                        }
                        tab.total_counts[h] += tab.counts[s * d + h];
                    }
                }
            }
            let own = &self.sums[b * k..(b + 1) * k];
            for s in self.offsets[b]..self.offsets[b + 1] {
                if !self.active[s] {
                    continue;
                }
                reads += d as u64;
                let dst = self.rev[s];
                tab.next_sums[dst * stride..dst * stride + k].copy_from_slice(own);
                tab.next_counts[dst * d] = t;
                for h in 1..d {
                    for i in 0..k {
                        tab.next_sums[dst * stride + h * k + i] =
                            tab.totals[(h - 1) * k + i] - tab.sums[s * stride + (h - 1) * k + i];
                    }
                    tab.next_counts[dst * d + h] =
                        tab.total_counts[h - 1] - tab.counts[s * d + h - 1];
                }
            }
        }
        std::mem::swap(&mut tab.sums, &mut tab.next_sums);
        std::mem::swap(&mut tab.counts, &mut tab.next_counts);
        self.counters.estimator_reads += reads;
    }

    fn consensus_round(&mut self) {
        let Some(cons) = self.consensus.as_mut() else { return };
        let (n, k, t) = (self.topo.n_agents(), self.dim, self.t);
        std::mem::swap(&mut cons.prev, &mut self.estimates);
        let mut reads = 0u64;
        for a in 0..n {
            cons.clock[a] = match cons.alpha {
                AlphaSchedule::ResetOnPrune if self.lost[a] => 1,
                AlphaSchedule::ResetOnPrune => cons.clock[a] + 1,
                _ => t,
            };
            let alpha = cons.alpha.alpha(cons.clock[a]);
            let da = self.active_deg[a];
            let own_prev = &cons.prev[a * k..(a + 1) * k];
            let out = &mut self.estimates[a * k..(a + 1) * k];
            out.copy_from_slice(own_prev);
            for s in self.offsets[a]..self.offsets[a + 1] {
                if !self.active[s] {
                    continue;
                }
                reads += 1;
                let b = self.peer[s];
                let w = pair_weight(da, self.active_deg[b]);
                for ((o, y), y_own) in out.iter_mut().zip(&cons.prev[b * k..(b + 1) * k]).zip(own_prev) {
                    *o += w * (y - y_own);
                }
            }
            let mean = &self.means[a * k..(a + 1) * k];
            for (o, m) in out.iter_mut().zip(mean) {
                *o = m + alpha * (*o - m);
            }
        }
        self.counters.estimator_reads += reads;
    }
}

impl Simulation for GraphWorld {
    fn step(&mut self, source: &mut dyn SampleSource) {
        let (n, k) = (self.topo.n_agents(), self.dim);
        self.t += 1;
        let t = self.t;
        self.counters = Counters::default();
        std::mem::swap(&mut self.prev_means, &mut self.means);
        for a in 0..n {
            source.draw(a, t, &mut self.sample);
            let sums = &mut self.sums[a * k..(a + 1) * k];
            for (s, x) in sums.iter_mut().zip(&self.sample) {
                *s += x;
            }
            div_into(sums, t as f64, &mut self.means[a * k..(a + 1) * k]);
        }
        self.prune();
        match self.estimator {
            GraphEstimator::Local => self.estimates.copy_from_slice(&self.means),
            GraphEstimator::MessagePassing { .. } => self.message_round(),
            GraphEstimator::Consensus { .. } => self.consensus_round(),
        }
    }

    fn round(&self) -> u64 {
        self.t
    }

    fn n_agents(&self) -> usize {
        self.topo.n_agents()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn estimate(&self, a: usize) -> &[f64] {
        &self.estimates[a * self.dim..(a + 1) * self.dim]
    }

    fn wrong_link_fraction(&self) -> f64 {
        if self.initial_wrong == 0 {
            0.0
        } else {
            self.active_wrong as f64 / self.initial_wrong as f64
        }
    }

    fn same_class_pruned(&self) -> usize {
        self.same_pruned
    }

    fn last_same_class_prune(&self) -> Option<u64> {
        self.last_same_prune
    }

    fn last_counters(&self) -> &Counters {
        &self.counters
    }

    fn agent_state(&self, a: usize) -> AgentState {
        AgentState {
            agent_id: a,
            t: self.t,
            local_mean: self.local_mean(a).to_vec(),
            est_class: self.active_neighbors(a),
            estimate: self.estimate(a).to_vec(),
        }
    }
}

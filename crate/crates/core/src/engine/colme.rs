use crate::confidence::{separated, ConfidenceParams, Geometry, MeanRecord};
use crate::error::{Error, Result};
use crate::topology::Topology;

use super::{div_into, AgentState, Counters, SampleSource, Simulation};

/// Which peers get their distance re-evaluated each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColmeMode {
    /// Every peer still in the estimated class.
    Colme,
    /// Only the peers queried this round.
    SColme,
}

/// Sample-count weighted average of mean records.
///
/// Panics if every record is empty.
pub fn colme_estimate(records: &[MeanRecord<Vec<f64>>]) -> Vec<f64> {
    let dim = records.first().map_or(0, |r| r.mean.len());
    let mut num = vec![0.0; dim];
    let mut den = 0u64;
    for r in records {
        for (n, m) in num.iter_mut().zip(&r.mean) {
            *n += r.count as f64 * m;
        }
        den += r.count;
    }
    assert!(den > 0, "colme_estimate needs at least one sample");
    num.iter().map(|n| n / den as f64).collect()
}

/// All-pairs ColME: each agent keeps stale records of every peer and
/// refreshes `queries` of them per round, round-robin by ascending id.
///
/// Records are stored as sums so the pooled estimate is maintained
/// incrementally. Pruning is one-sided: `a` dropping `b` does not make
/// `b` drop `a`.
pub struct ColmeWorld {
    topo: Topology,
    dim: usize,
    t: u64,
    mode: ColmeMode,
    queries: usize,
    params: Vec<ConfidenceParams>,
    geometry: Geometry,

    sums: Vec<f64>,
    prev_sums: Vec<f64>,
    means: Vec<f64>,
    estimates: Vec<f64>,

    est_class: Vec<Vec<usize>>,
    cursor: Vec<usize>,
    /// `rec_sum[(a * n + b) * dim ..]`, `rec_count[a * n + b]`
    rec_sum: Vec<f64>,
    rec_count: Vec<u64>,
    pool_sum: Vec<f64>,
    pool_count: Vec<u64>,

    initial_wrong: usize,
    active_wrong: usize,
    same_pruned: usize,
    last_same_prune: Option<u64>,
    counters: Counters,
    sample: Vec<f64>,
}

impl ColmeWorld {
    /// Uses `topo` only for its class labels and true means; every agent
    /// can query every other one.
    pub fn new(topo: Topology, params: ConfidenceParams, mode: ColmeMode, queries: usize) -> Result<Self> {
        if queries == 0 {
            return Err(Error::param("ColME needs at least one query per round"));
        }
        let n = topo.n_agents();
        let dim = topo.dim();
        let initial_wrong = (0..n)
            .map(|a| (0..n).filter(|&b| topo.class_of(a) != topo.class_of(b)).count())
            .sum();
        Ok(Self {
            dim,
            t: 0,
            mode,
            queries,
            params: vec![params; n],
            geometry: params.geometry(),
            sums: vec![0.0; n * dim],
            prev_sums: vec![0.0; n * dim],
            means: vec![0.0; n * dim],
            estimates: vec![0.0; n * dim],
            est_class: (0..n).map(|a| (0..n).filter(|&b| b != a).collect()).collect(),
            cursor: vec![0; n],
            rec_sum: vec![0.0; n * n * dim],
            rec_count: vec![0; n * n],
            pool_sum: vec![0.0; n * dim],
            pool_count: vec![0; n],
            initial_wrong,
            active_wrong: initial_wrong,
            same_pruned: 0,
            last_same_prune: None,
            counters: Counters::default(),
            sample: vec![0.0; dim],
            topo,
        })
    }

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
        Ok(self)
    }

    pub fn est_class(&self, a: usize) -> &[usize] {
        &self.est_class[a]
    }

    /// Stale record agent `a` holds about `b`.
    pub fn record(&self, a: usize, b: usize) -> MeanRecord<Vec<f64>> {
        let (n, k) = (self.topo.n_agents(), self.dim);
        let count = self.rec_count[a * n + b];
        let mut mean = vec![0.0; k];
        if count > 0 {
            div_into(&self.rec_sum[(a * n + b) * k..(a * n + b + 1) * k], count as f64, &mut mean);
        }
        MeanRecord::new(mean, count)
    }

    pub fn local_mean(&self, a: usize) -> &[f64] {
        &self.means[a * self.dim..(a + 1) * self.dim]
    }

    fn agent_round(&mut self, a: usize, queried: &mut Vec<usize>) {
        let (n, k, t) = (self.topo.n_agents(), self.dim, self.t);
        let peers = &mut self.est_class[a];
        if peers.is_empty() {
            return;
        }

        // refresh the next `queries` peers in cyclic order
        let q = self.queries.min(peers.len());
        queried.clear();
        for i in 0..q {
            queried.push(peers[(self.cursor[a] + i) % peers.len()]);
        }
        self.cursor[a] = (self.cursor[a] + q) % peers.len();
        for &b in queried.iter() {
            let idx = a * n + b;
            let rec = &mut self.rec_sum[idx * k..(idx + 1) * k];
            let fresh = &self.prev_sums[b * k..(b + 1) * k];
            let pool = &mut self.pool_sum[a * k..(a + 1) * k];
            for ((p, r), &f) in pool.iter_mut().zip(rec.iter_mut()).zip(fresh) {
                *p += f - *r;
                *r = f;
            }
            self.pool_count[a] += (t - 1) - self.rec_count[idx];
            self.rec_count[idx] = t - 1;
        }
        self.counters.estimator_reads += q as u64;

        // membership tests
        let p = self.params[a];
        let own_width = p.multidim_width(t, k);
        let own = &self.means[a * k..(a + 1) * k];
        let mut rec_mean = vec![0.0; k];
        let mut test = |b: usize, evals: &mut u64| -> bool {
            let idx = a * n + b;
            let count = self.rec_count[idx];
            *evals += 1;
            if count == 0 {
                // infinite width: never separated
                return false;
            }
            div_into(&self.rec_sum[idx * k..(idx + 1) * k], count as f64, &mut rec_mean);
            separated(own, &rec_mean, own_width + p.multidim_width(count, k), self.geometry)
        };
        let mut evals = 0u64;
        let mut drop = Vec::new();
        match self.mode {
            ColmeMode::Colme => {
                for &b in peers.iter() {
                    if test(b, &mut evals) {
                        drop.push(b);
                    }
                }
            }
            ColmeMode::SColme => {
                for &b in queried.iter() {
                    if test(b, &mut evals) {
                        drop.push(b);
                    }
                }
                drop.sort_unstable();
            }
        }
        self.counters.distance_evals += evals;

        if !drop.is_empty() {
            let before_cursor = drop
                .iter()
                .filter(|&&b| peers.binary_search(&b).unwrap() < self.cursor[a])
                .count();
            peers.retain(|b| drop.binary_search(b).is_err());
            self.cursor[a] -= before_cursor;
            if self.cursor[a] >= peers.len() {
                self.cursor[a] = 0;
            }
            for &b in &drop {
                let idx = a * n + b;
                for i in 0..k {
                    self.pool_sum[a * k + i] -= self.rec_sum[idx * k + i];
                }
                self.pool_count[a] -= self.rec_count[idx];
                if self.topo.class_of(a) == self.topo.class_of(b) {
                    self.same_pruned += 1;
                    self.last_same_prune = Some(t);
                } else {
                    self.active_wrong -= 1;
                }
            }
        }
    }
}

impl Simulation for ColmeWorld {
    fn step(&mut self, source: &mut dyn SampleSource) {
        let (n, k) = (self.topo.n_agents(), self.dim);
        self.t += 1;
        let t = self.t;
        self.counters = Counters::default();
        self.prev_sums.copy_from_slice(&self.sums);
        for a in 0..n {
            source.draw(a, t, &mut self.sample);
            let sums = &mut self.sums[a * k..(a + 1) * k];
            for (s, x) in sums.iter_mut().zip(&self.sample) {
                *s += x;
            }
            div_into(sums, t as f64, &mut self.means[a * k..(a + 1) * k]);
        }
        let mut queried = Vec::with_capacity(self.queries);
        for a in 0..n {
            self.agent_round(a, &mut queried);
            let mut num = self.sums[a * k..(a + 1) * k].to_vec();
            for (x, p) in num.iter_mut().zip(&self.pool_sum[a * k..(a + 1) * k]) {
                *x += p;
            }
            div_into(&num, (t + self.pool_count[a]) as f64, &mut self.estimates[a * k..(a + 1) * k]);
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

    /// Directed inter-class pairs `(a, b)` with `b` still in `a`'s class
    /// estimate, over their initial number.
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
            est_class: self.est_class[a].clone(),
            estimate: self.estimate(a).to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ConstantSource, FnSource};

    fn world(n: usize, labels: Vec<usize>, means: Vec<Vec<f64>>, mode: ColmeMode, q: usize) -> ColmeWorld {
        let topo = Topology::from_edges(n, &[]).unwrap().with_classes(labels, means).unwrap();
        ColmeWorld::new(topo, ConfidenceParams::sub_gaussian(1.0, 0.01).unwrap(), mode, q).unwrap()
    }

    #[test]
    fn weighted_average() {
        let recs = [MeanRecord::new(vec![0.0], 10), MeanRecord::new(vec![1.0], 30)];
        assert_eq!(colme_estimate(&recs), vec![0.75]);
        assert_eq!(colme_estimate(&recs[..1]), vec![0.0]);
    }

    #[test]
    fn single_peer_queried_every_round() {
        let mut w = world(2, vec![0, 0], vec![vec![0.0]], ColmeMode::SColme, 3);
        let mut src = ConstantSource(vec![2.0]);
        for t in 1..=5 {
            w.step(&mut src);
            assert_eq!(w.record(0, 1).count, t - 1);
            assert_eq!(w.estimate(0), &[2.0]);
        }
    }

    #[test]
    fn round_robin_visits_peers_in_order() {
        let mut w = world(5, vec![0; 5], vec![vec![0.0]], ColmeMode::Colme, 1);
        let mut src = ConstantSource(vec![0.0]);
        for t in 1..=4u64 {
            w.step(&mut src);
            // agent 0 queried peer t at round t
            for b in 1..5u64 {
                let expected = if b <= t { b - 1 } else { 0 };
                assert_eq!(w.record(0, b as usize).count, expected, "round {t} peer {b}");
            }
        }
    }

    #[test]
    fn estimate_matches_record_replay() {
        let mut w = world(4, vec![0; 4], vec![vec![0.0]], ColmeMode::Colme, 2);
        let mut src = FnSource::new(1, |a, t, out: &mut [f64]| out[0] = (a as f64) * 0.1 + (t % 3) as f64 * 0.01);
        for _ in 0..7 {
            w.step(&mut src);
        }
        for a in 0..4 {
            let mut recs = vec![MeanRecord::new(w.local_mean(a).to_vec(), 7)];
            recs.extend(w.est_class(a).iter().map(|&b| w.record(a, b)).filter(|r| r.count > 0));
            let brute = colme_estimate(&recs);
            assert!((brute[0] - w.estimate(a)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_query_modes_agree() {
        let labels: Vec<usize> = (0..8).map(|a| a % 2).collect();
        let run = |mode| {
            let mut w = world(8, labels.clone(), vec![vec![0.0], vec![3.0]], mode, 7);
            let mut src = FnSource::new(1, |a, _t, out: &mut [f64]| out[0] = 3.0 * (a % 2) as f64);
            let mut history = Vec::new();
            for _ in 0..40 {
                w.step(&mut src);
                history.push((0..8).map(|a| w.est_class(a).to_vec()).collect::<Vec<_>>());
            }
            history
        };
        assert_eq!(run(ColmeMode::Colme), run(ColmeMode::SColme));
    }
}

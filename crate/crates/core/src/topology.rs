//! Communication graphs, similarity classes and graph-sizing theory.
//!
//! Graphs are simple and undirected, stored as sorted adjacency lists.
//! Random `r`-regular graphs come from the stub-matching (configuration)
//! model; see [`SamplerKind`] for the two acceptance strategies.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Retry budget for the regular-graph samplers.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Simple undirected graph with per-agent class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: Vec<Vec<usize>>,
    degree: usize,
    class_label: Vec<usize>,
    class_means: Vec<Vec<f64>>,
}

impl Topology {
    /// Builds a topology from adjacency lists, checking simplicity and symmetry.
    ///
    /// Every agent starts in class 0 with true mean `[0.0]`.
    pub fn from_adjacency(mut adjacency: Vec<Vec<usize>>) -> Result<Self> {
        let n = adjacency.len();
        for (a, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param(format!("parallel edge at agent {a}")));
            }
            if list.binary_search(&a).is_ok() {
                return Err(Error::param(format!("self-loop at agent {a}")));
            }
            if let Some(&b) = list.iter().find(|&&b| b >= n) {
                return Err(Error::UnknownAgent(b));
            }
        }
        for (a, list) in adjacency.iter().enumerate() {
            for &b in list {
                if adjacency[b].binary_search(&a).is_err() {
                    return Err(Error::param(format!("asymmetric edge {a} -> {b}")));
                }
            }
        }
        let degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            adjacency,
            degree,
            class_label: vec![0; n],
            class_means: vec![vec![0.0]],
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::UnknownAgent(u.max(v)));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Self::from_adjacency(adjacency)
    }

    /// Attaches class labels and per-class true means.
    pub fn with_classes(mut self, labels: Vec<usize>, means: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != self.n_agents() {
            return Err(Error::DimensionMismatch {
                expected: self.n_agents(),
                got: labels.len(),
            });
        }
        if means.is_empty() {
            return Err(Error::param("at least one class mean is required"));
        }
        let k = means[0].len();
        if k == 0 || means.iter().any(|m| m.len() != k) {
            return Err(Error::param("class means must share a positive dimension"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= means.len()) {
            return Err(Error::param(format!("class label {bad} has no mean")));
        }
        self.class_label = labels;
        self.class_means = means;
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.len()
    }

    /// Maximum degree `r`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.adjacency[a]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn class_of(&self, a: usize) -> usize {
        self.class_label[a]
    }

    pub fn class_labels(&self) -> &[usize] {
        &self.class_label
    }

    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    /// True mean of agent `a`.
    pub fn true_mean(&self, a: usize) -> &[f64] {
        &self.class_means[self.class_label[a]]
    }

    pub fn dim(&self) -> usize {
        self.class_means[0].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Undirected edges with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges whose endpoints carry different class labels.
    pub fn inter_class_edges(&self) -> usize {
        self.edges()
            .filter(|&(u, v)| self.class_label[u] != self.class_label[v])
            .count()
    }

    /// Every vertex has exactly `r` neighbours.
    pub fn is_regular(&self, r: usize) -> bool {
        self.adjacency.iter().all(|l| l.len() == r)
    }

    /// Plain-text edge list: `N r`, then `u v` per edge, then `a k` per agent.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_agents(), self.degree);
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        for (a, k) in self.class_label.iter().enumerate() {
            let _ = writeln!(out, "{a} {k}");
        }
        out
    }

    /// Parses [`Topology::to_edge_list`] output. Class means are left at
    /// zero since the format does not carry them.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let (n, _r) = parse_pair(header)?;
        let body: Vec<(usize, usize)> = lines.map(parse_pair).collect::<Result<_>>()?;
        if body.len() < n {
            return Err(Error::Parse(format!(
                "expected {n} class lines, found {} lines in total",
                body.len()
            )));
        }
        let (edges, classes) = body.split_at(body.len() - n);
        if let Some(&(u, v)) = edges.iter().find(|(u, v)| u >= v) {
            return Err(Error::Parse(format!("edge `{u} {v}` is not ordered u < v")));
        }
        let mut labels = vec![0; n];
        for (i, &(a, k)) in classes.iter().enumerate() {
            if a != i {
                return Err(Error::Parse(format!("class line {i} names agent {a}")));
            }
            labels[a] = k;
        }
        let n_classes = labels.iter().max().map_or(1, |m| m + 1);
        Self::from_edges(n, edges)?.with_classes(labels, vec![vec![0.0]; n_classes])
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }
}

fn parse_pair(line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::Parse(format!("expected two integers, got `{line}`"))),
    }
}

/// Acceptance strategy for the stub-matching sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerKind {
    /// Match all stubs uniformly, restart on any loop or parallel edge.
    /// Exactly uniform over simple graphs, but the acceptance rate decays
    /// like `exp(-(r²-1)/4)`.
    Rejection,
    /// Steger–Wormald: repeatedly pair the remaining stubs at random and
    /// keep only pairs that form new simple edges. Asymptotically uniform
    /// and fast for any fixed `r`.
    StegerWormald,
    /// Rejection for `r ≤ 4`, Steger–Wormald above.
    #[default]
    Auto,
}

/// Samples a simple `r`-regular graph on `n` vertices.
pub fn sample_regular_graph(n: usize, r: usize, seed: u64) -> Result<Topology> {
    sample_regular_graph_with(n, r, seed, SamplerKind::Auto, DEFAULT_MAX_ATTEMPTS)
}

pub fn sample_regular_graph_with(
    n: usize,
    r: usize,
    seed: u64,
    kind: SamplerKind,
    max_attempts: usize,
) -> Result<Topology> {
    if (n * r) % 2 == 1 {
        return Err(Error::param(format!("n*r must be even (n={n}, r={r})")));
    }
    if r >= n && !(n == 0 && r == 0) {
        return Err(Error::param(format!("degree r={r} must be < n={n}")));
    }
    let mut rng = rng_from(seed);
    let kind = match kind {
        SamplerKind::Auto if r <= 4 => SamplerKind::Rejection,
        SamplerKind::Auto => SamplerKind::StegerWormald,
        k => k,
    };
    for _ in 0..max_attempts {
        let attempt = match kind {
            SamplerKind::Rejection => try_rejection(n, r, &mut rng),
            _ => try_steger_wormald(n, r, &mut rng),
        };
        if let Some(adjacency) = attempt {
            return Topology::from_adjacency(adjacency);
        }
    }
    Err(Error::Sampling {
        attempts: max_attempts,
    })
}

fn try_rejection<R: Rng>(n: usize, r: usize, rng: &mut R) -> Option<Vec<Vec<usize>>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, r)).collect();
    stubs.shuffle(rng);
    let mut adjacency = vec![Vec::with_capacity(r); n];
    for pair in stubs.chunks_exact(2) {
        let (u, v) = (pair[0], pair[1]);
        if u == v || adjacency[u].contains(&v) {
            return None;
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    Some(adjacency)
}

fn try_steger_wormald<R: Rng>(n: usize, r: usize, rng: &mut R) -> Option<Vec<Vec<usize>>> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::with_capacity(r); n];
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, r)).collect();
    while !stubs.is_empty() {
        // BTreeMap keeps the leftover order independent of hashing.
        let mut leftover: BTreeMap<usize, usize> = BTreeMap::new();
        stubs.shuffle(rng);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0], pair[1]);
            if u != v && !adjacency[u].contains(&v) {
                adjacency[u].push(v);
                adjacency[v].push(u);
            } else {
                *leftover.entry(u).or_default() += 1;
                *leftover.entry(v).or_default() += 1;
            }
        }
        let pending: Vec<usize> = leftover.keys().copied().collect();
        let can_progress = pending.is_empty()
            || pending.iter().enumerate().any(|(i, &u)| {
                pending[..i].iter().any(|&v| !adjacency[u].contains(&v))
            });
        if !can_progress {
            return None;
        }
        stubs = leftover
            .into_iter()
            .flat_map(|(v, count)| std::iter::repeat_n(v, count))
            .collect();
    }
    Some(adjacency)
}

/// I.i.d. categorical class labels.
pub fn assign_classes(n: usize, class_probs: &[f64], seed: u64) -> Result<Vec<usize>> {
    validate_probs(class_probs)?;
    let mut rng = rng_from(seed);
    let last = class_probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (k, &p) in class_probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            last
        })
        .collect())
}

pub(crate) fn validate_probs(class_probs: &[f64]) -> Result<()> {
    if class_probs.is_empty() {
        return Err(Error::param("class probabilities are empty"));
    }
    if class_probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::param("class probabilities must be finite and >= 0"));
    }
    let total: f64 = class_probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("class probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Connected components of the subgraph made of same-class edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentReport {
    component_id: Vec<usize>,
    sizes: Vec<usize>,
}

impl ComponentReport {
    pub fn component_of(&self, a: usize) -> usize {
        self.component_id[a]
    }

    pub fn component_ids(&self) -> &[usize] {
        &self.component_id
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `|CC_a|`.
    pub fn size_of(&self, a: usize) -> usize {
        self.sizes[self.component_id[a]]
    }

    pub fn members(&self, a: usize) -> Vec<usize> {
        let c = self.component_id[a];
        (0..self.component_id.len())
            .filter(|&b| self.component_id[b] == c)
            .collect()
    }

    /// `CC_a^d` together with the tree flag of that ball.
    pub fn ball(&self, topo: &Topology, a: usize, d: usize) -> Result<Neighborhood> {
        let same = |u: usize, v: usize| topo.class_of(u) == topo.class_of(v);
        d_neighborhood(topo, a, d, Some(&same))
    }

    /// Fraction of class-`k` agents outside the largest class-`k` component.
    pub fn outside_largest_fraction(&self, topo: &Topology, class: usize) -> Option<f64> {
        let members: Vec<usize> = (0..topo.n_agents())
            .filter(|&a| topo.class_of(a) == class)
            .collect();
        if members.is_empty() {
            return None;
        }
        let largest = members.iter().map(|&a| self.size_of(a)).max().unwrap_or(0);
        Some(1.0 - largest as f64 / members.len() as f64)
    }
}

pub fn same_class_components(topo: &Topology) -> ComponentReport {
    let n = topo.n_agents();
    let mut component_id = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if component_id[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        component_id[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in topo.neighbors(u) {
                if component_id[v] == usize::MAX && topo.class_of(v) == topo.class_of(u) {
                    component_id[v] = id;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    ComponentReport {
        component_id,
        sizes,
    }
}

/// Agents within `d` hops and whether the ball is a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    /// Sorted member ids, including the centre.
    pub members: Vec<usize>,
    pub is_tree: bool,
}

/// Breadth-first ball of radius `d` around `a`, optionally restricted to
/// the edges accepted by `edge_filter`.
///
/// The ball is a tree iff it holds exactly `members − 1` internal edges,
/// i.e. no member is reachable through two distinct paths inside the ball.
pub fn d_neighborhood(
    topo: &Topology,
    a: usize,
    d: usize,
    edge_filter: Option<&dyn Fn(usize, usize) -> bool>,
) -> Result<Neighborhood> {
    if a >= topo.n_agents() {
        return Err(Error::UnknownAgent(a));
    }
    let keep = |u: usize, v: usize| edge_filter.is_none_or(|f| f(u, v));
    let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
    depth.insert(a, 0);
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        let du = depth[&u];
        if du == d {
            continue;
        }
        for &v in topo.neighbors(u) {
            if keep(u, v) && !depth.contains_key(&v) {
                depth.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    let internal_edges = depth
        .keys()
        .map(|&u| {
            topo.neighbors(u)
                .iter()
                .filter(|&&v| u < v && depth.contains_key(&v) && keep(u, v))
                .count()
        })
        .sum::<usize>();
    let members: Vec<usize> = depth.into_keys().collect();
    Ok(Neighborhood {
        is_tree: internal_edges + 1 == members.len(),
        members,
    })
}

/// Depth `⌊½ log_{r−1}(N / log_{r−1} N)⌋` that keeps most balls tree-like.
pub fn recommend_d(n: usize, r: usize) -> Result<usize> {
    if r < 3 {
        return Err(Error::param(format!("recommend_d needs r >= 3, got {r}")));
    }
    if n < r + 1 {
        return Err(Error::param(format!("recommend_d needs n >= r + 1, got n={n}, r={r}")));
    }
    let base = ((r - 1) as f64).ln();
    let log_n = (n as f64).ln() / base;
    let value = 0.5 * ((n as f64) / log_n).ln() / base;
    // snap values within rounding noise of an integer before flooring
    let snapped = if (value - value.round()).abs() < 1e-12 {
        value.round()
    } else {
        value.floor()
    };
    Ok(snapped.max(0.0) as usize)
}

/// Degree rule of thumb `⌈4 / p_min⌉`.
pub fn recommend_r(p_min: f64) -> Result<usize> {
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::param(format!("p_min must lie in (0, 1], got {p_min}")));
    }
    Ok(crate::confidence::ceil_count(4.0 / p_min) as usize)
}

/// Extinction probabilities of the single-type (`Bin(r−1, p)` offspring)
/// and the two-stage (root `Bin(r, p)`) branching processes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extinction {
    pub q_gw: f64,
    pub q_2bp: f64,
}

impl Extinction {
    pub fn is_supercritical(r: usize, p: f64) -> bool {
        (r as f64 - 1.0) * p > 1.0
    }
}

pub fn extinction_probability(r: usize, p: f64) -> Result<Extinction> {
    if r < 2 {
        return Err(Error::param(format!("extinction_probability needs r >= 2, got {r}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("p must lie in (0, 1], got {p}")));
    }
    if !Extinction::is_supercritical(r, p) {
        return Ok(Extinction { q_gw: 1.0, q_2bp: 1.0 });
    }
    let g = |t: f64| ((1.0 - p) + p * t).powi(r as i32 - 1) - t;
    // g(0) >= 0; find a point left of 1 where g is negative (root lies in between)
    let mut hi = 0.5;
    let mut step = 0.5;
    while g(hi) >= 0.0 && step > 1e-300 {
        step /= 2.0;
        hi = 1.0 - step;
    }
    let mut lo = 0.0;
    if g(lo) <= 0.0 {
        hi = 0.0;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q_gw = 0.5 * (lo + hi);
    Ok(Extinction {
        q_gw,
        q_2bp: ((1.0 - p) + p * q_gw).powi(r as i32),
    })
}

/// Upper bound `(H+1)H/(2N)` on the chance that a random vertex's
/// `d`-ball is not a tree, with `H = 1 + Σ_{d'=1}^{d} r(r−1)^{d'−1}`.
pub fn tree_probability_bound(n: usize, r: usize, d: usize) -> f64 {
    let mut h = 1.0f64;
    let mut layer = r as f64;
    for _ in 0..d {
        h += layer;
        layer *= (r as f64 - 1.0).max(0.0);
    }
    ((h + 1.0) * h / (2.0 * n as f64)).clamp(0.0, 1.0)
}

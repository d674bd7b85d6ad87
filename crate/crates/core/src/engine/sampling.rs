use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::agent_rng;
use crate::topology::Topology;

/// Where agents' samples come from.
pub trait SampleSource: Send {
    fn dim(&self) -> usize;

    /// Writes agent `agent`'s sample for round `round` (1-based) into `out`.
    fn draw(&mut self, agent: usize, round: u64, out: &mut [f64]);
}

/// Shape of the per-axis noise around each agent's true mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    #[default]
    Gaussian,
    /// Uniform on `[μ − √3σ, μ + √3σ]` (kurtosis 1.8).
    Uniform,
}

/// Independent per-axis noise with a counter-based stream per agent.
pub struct RandomSource {
    rngs: Vec<ChaCha8Rng>,
    means: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    kind: Vec<DistKind>,
    dim: usize,
}

impl RandomSource {
    /// `sigma` and `kind` are indexed by class.
    pub fn new(topo: &Topology, sigma: &[f64], kind: &[DistKind], seed: u64) -> Self {
        let n = topo.n_agents();
        let means = (0..n).map(|a| topo.true_mean(a).to_vec()).collect();
        Self {
            rngs: (0..n).map(|a| agent_rng(seed, a)).collect(),
            means,
            sigma: topo.class_labels().iter().map(|&k| sigma[k]).collect(),
            kind: topo.class_labels().iter().map(|&k| kind[k]).collect(),
            dim: topo.dim(),
        }
    }

    pub fn gaussian(topo: &Topology, sigma: f64, seed: u64) -> Self {
        let classes = topo.class_means().len();
        Self::new(topo, &vec![sigma; classes], &vec![DistKind::Gaussian; classes], seed)
    }
}

impl SampleSource for RandomSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&mut self, agent: usize, _round: u64, out: &mut [f64]) {
        let rng = &mut self.rngs[agent];
        let s = self.sigma[agent];
        for (o, &mu) in out.iter_mut().zip(&self.means[agent]) {
            let z: f64 = match self.kind[agent] {
                DistKind::Gaussian => rng.sample(StandardNormal),
                DistKind::Uniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
            };
            *o = mu + s * z;
        }
    }
}

/// Every sample equals the same constant vector.
pub struct ConstantSource(pub Vec<f64>);

impl SampleSource for ConstantSource {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn draw(&mut self, _agent: usize, _round: u64, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Samples produced by a closure `(agent, round, out)`.
pub struct FnSource<F> {
    dim: usize,
    f: F,
}

impl<F> FnSource<F>
where
    F: FnMut(usize, u64, &mut [f64]) + Send,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> SampleSource for FnSource<F>
where
    F: FnMut(usize, u64, &mut [f64]) + Send,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn draw(&mut self, agent: usize, round: u64, out: &mut [f64]) {
        (self.f)(agent, round, out)
    }
}

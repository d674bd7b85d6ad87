use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use colme::engine::{AlphaSchedule, Algorithm};
use colme::harness::{run_campaign, ExperimentConfig, GammaMode};
use colme::rng::hash64;
use colme::theory::{comparison, BoundInputs};
use colme::topology::{
    assign_classes, d_neighborhood, extinction_probability, recommend_d, same_class_components,
    sample_regular_graph, tree_probability_bound, Extinction,
};
use colme::{ConfidenceParams, DistClass, Error};

#[derive(Parser)]
#[command(name = "colme", version, about = "Collaborative mean estimation over self-pruning graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded campaign and write per-round metrics as CSV.
    Simulate(SimulateArgs),
    /// Print discovery and convergence times of each algorithm.
    Theory(TheoryArgs),
    /// Compare graph-sizing predictions with sampled graphs.
    GraphStats(GraphStatsArgs),
    /// Sample a random regular graph and save its edge list.
    ExportGraph(ExportGraphArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    degree_r: Option<usize>,
    #[arg(long)]
    depth_d: Option<usize>,
    #[arg(long)]
    dimension_k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// `conservative`, `theorem_exact` or `fixed:<gamma>`.
    #[arg(long, value_parser = parse_gamma)]
    gamma_mode: Option<GammaMode>,
    /// `time_varying`, `reset_on_prune` or `constant:<alpha>`.
    #[arg(long, value_parser = parse_alpha)]
    alpha_mode: Option<AlphaSchedule>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    algorithms: Option<Vec<Algorithm>>,
    #[arg(long)]
    colme_queries: Option<usize>,
    /// `sub_gaussian` or `bfmd`.
    #[arg(long, value_parser = parse_dist_class)]
    beta_kind: Option<DistClass>,
    /// Number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    /// Smallest gap between the agent's mean and another class mean.
    #[arg(long, default_value_t = 1.0)]
    gap: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 10)]
    degree_r: usize,
    #[arg(long, default_value_t = 3)]
    depth_d: usize,
    #[arg(long, default_value_t = 2000)]
    n_agents: usize,
    /// Same-class component size; defaults to the class size.
    #[arg(long)]
    component: Option<usize>,
    /// Component members within `depth_d` hops; defaults to the tree-ball
    /// size capped by the component.
    #[arg(long)]
    component_ball: Option<usize>,
    /// Class size; defaults to half the agents.
    #[arg(long)]
    class_size: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    kappa: f64,
    #[arg(long, default_value = "sub_gaussian", value_parser = parse_dist_class)]
    beta_kind: DistClass,
    /// Multiplier standing in for the consensus bound's unknown constant.
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
}

#[derive(Args)]
struct GraphStatsArgs {
    #[arg(long)]
    n_agents: usize,
    #[arg(long)]
    degree_r: usize,
    /// Ball depth; defaults to the recommended depth.
    #[arg(long)]
    depth_d: Option<usize>,
    /// Probability of the class under study.
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

#[derive(Args)]
struct ExportGraphArgs {
    #[arg(long)]
    n_agents: usize,
    #[arg(long)]
    degree_r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    path: PathBuf,
}

fn parse_gamma(s: &str) -> Result<GammaMode, String> {
    s.parse()
}

fn parse_alpha(s: &str) -> Result<AlphaSchedule, String> {
    s.parse()
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::parse(s).ok_or_else(|| format!("unknown algorithm `{s}`"))
}

fn parse_dist_class(s: &str) -> Result<DistClass, String> {
    match s {
        "sub_gaussian" | "subgaussian" => Ok(DistClass::SubGaussian),
        "bfmd" | "bounded_fourth_moment" => Ok(DistClass::BoundedFourthMoment),
        _ => Err(format!("unknown distribution class `{s}`")),
    }
}

/// Bad input is reported with exit code 2, everything else with 1.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::Config { .. }
            | Error::Parse(_)
            | Error::DimensionMismatch { .. }
            | Error::UnknownAgent(_) => Failure::Usage(e.to_string()),
            Error::Sampling { .. } | Error::Io { .. } => Failure::Runtime(e.to_string()),
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    // an unreadable config is bad input, not a runtime failure
    let mut cfg = ExperimentConfig::from_path(&args.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(v) = args.n_agents {
        cfg.n_agents = v;
    }
    if let Some(v) = args.degree_r {
        cfg.degree_r = v;
    }
    if let Some(v) = args.depth_d {
        cfg.depth_d = Some(v);
    }
    if let Some(v) = args.dimension_k {
        cfg.dimension_k = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = args.gamma_mode {
        cfg.gamma_mode = v;
    }
    if let Some(v) = args.alpha_mode {
        cfg.alpha_mode = v;
    }
    if let Some(v) = args.algorithms {
        cfg.algorithms = v;
    }
    if let Some(v) = args.colme_queries {
        cfg.colme_queries = Some(v);
    }
    if let Some(v) = args.beta_kind {
        cfg.beta_kind = v;
    }
    if let Some(v) = args.reps {
        cfg.replications = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    cfg.validate()?;

    let campaign = run_campaign(&cfg)?;
    for &alg in &cfg.algorithms {
        if let Some(row) = campaign.series.last(alg) {
            println!(
                "{:<9} round {:>6}  err_frac {:.4} ± {:.4}  wrong_link {:.4} ± {:.4}",
                alg.name(),
                row.round,
                row.err_frac_mean,
                row.err_frac_ci95,
                row.wrong_link_mean,
                row.wrong_link_ci95,
            );
        }
    }
    campaign.series.write_csv(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn tree_ball_size(r: usize, d: usize) -> usize {
    let mut size = 1usize;
    let mut layer = r;
    for _ in 0..d {
        size = size.saturating_add(layer);
        layer = layer.saturating_mul(r.saturating_sub(1));
    }
    size
}

fn theory(args: TheoryArgs) -> Result<(), Failure> {
    let params = ConfidenceParams::new(args.beta_kind, args.sigma, args.kappa, 0.25)?;
    let class_size = args.class_size.unwrap_or((args.n_agents / 2).max(1));
    let component = args.component.unwrap_or(class_size);
    let inputs = BoundInputs {
        gap: args.gap,
        epsilon: args.epsilon,
        delta: args.delta,
        degree: args.degree_r,
        depth: args.depth_d,
        n_agents: args.n_agents,
        component,
        component_ball: args
            .component_ball
            .unwrap_or_else(|| tree_ball_size(args.degree_r, args.depth_d).min(component)),
        class_size,
        params,
    };
    let rows = comparison(&inputs, args.constant)?;
    println!(
        "N={} r={} d={} |C|={} |CC|={} |CC^d|={} gap={} eps={} delta={}",
        inputs.n_agents,
        inputs.degree,
        inputs.depth,
        inputs.class_size,
        inputs.component,
        inputs.component_ball,
        inputs.gap,
        inputs.epsilon,
        inputs.delta,
    );
    println!("{:<9} {:>10} {:>12} {:>14}", "algorithm", "cost", "discovery", "convergence");
    for row in rows {
        let conv = match row.convergence {
            Some(t) => format!("{t:.1}"),
            None => "-".to_string(),
        };
        println!("{:<9} {:>10} {:>12} {:>14}", row.algorithm, row.per_agent_cost, row.discovery, conv);
    }
    if args.beta_kind == DistClass::BoundedFourthMoment {
        println!("c_colme convergence uses constant {} and is an order-of-magnitude figure", args.constant);
    } else {
        println!("c_colme convergence needs bounded-fourth-moment parameters (--beta-kind bfmd)");
    }
    Ok(())
}

fn graph_stats(args: GraphStatsArgs) -> Result<(), Failure> {
    let (n, r, p) = (args.n_agents, args.degree_r, args.p);
    if args.seeds == 0 {
        return Err(Failure::Usage("seeds must be >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Failure::Usage(format!("p must lie in (0, 1), got {p}")));
    }
    let d = match args.depth_d {
        Some(d) => d,
        None => {
            let d = recommend_d(n, r)?;
            println!("depth_d not given, using recommended depth {d}");
            d
        }
    };
    let ext = extinction_probability(r, p)?;
    println!("q_2bp            {:.6}", ext.q_2bp);
    if !Extinction::is_supercritical(r, p) {
        println!("warning: (r - 1) p = {:.3} <= 1, same-class components stay small", (r as f64 - 1.0) * p);
    }
    println!("non-tree bound   {:.6}  (d={d})", tree_probability_bound(n, r, d));

    let mut outside = 0.0;
    let mut non_tree = 0.0;
    for seed in 0..args.seeds {
        let graph = sample_regular_graph(n, r, hash64(seed, 0))?;
        let labels = assign_classes(n, &[p, 1.0 - p], hash64(seed, 1))?;
        let topo = graph.with_classes(labels, vec![vec![0.0], vec![1.0]])?;
        outside += same_class_components(&topo)
            .outside_largest_fraction(&topo, 0)
            .unwrap_or(1.0);
        let mut bad = 0usize;
        for a in 0..n {
            if !d_neighborhood(&topo, a, d, None)?.is_tree {
                bad += 1;
            }
        }
        non_tree += bad as f64 / n as f64;
    }
    let k = args.seeds as f64;
    println!("empirical outside-largest fraction {:.6}  ({} seeds)", outside / k, args.seeds);
    println!("empirical non-tree fraction        {:.6}", non_tree / k);
    Ok(())
}

fn export_graph(args: ExportGraphArgs) -> Result<(), Failure> {
    let topo = sample_regular_graph(args.n_agents, args.degree_r, args.seed)?;
    topo.write_edge_list(&args.path)?;
    println!("wrote {} edges to {}", topo.n_edges(), args.path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Theory(args) => theory(args),
        Command::GraphStats(args) => graph_stats(args),
        Command::ExportGraph(args) => export_graph(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

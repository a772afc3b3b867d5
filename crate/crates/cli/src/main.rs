use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sfcsim_core::config::{ConfigError, Format, RunConfig};
use sfcsim_core::drl::weights::{load_weights, save_weights, WeightsError};
use sfcsim_core::drl::QNetwork;
use sfcsim_core::sim::eval::{evaluate, evaluate_sweep, CellResult};
use sfcsim_core::sim::report::write_csv;
use sfcsim_core::sim::train::{train, write_curve};
use sfcsim_core::sim::{run_world, EpisodeSeeds, SimError, World};
use sfcsim_core::topology::{build_network, make_clusters};
use sfcsim_core::workload::{generate_bundles, read_workload, write_workload};

#[derive(Parser)]
#[command(name = "sfcsim", version, about = "Distributed SFC provisioning simulator")]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true, env = "SFCSIM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, env = "SFCSIM_SEED")]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true, env = "SFCSIM_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "SFCSIM_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy on the curriculum and write weights and the curve.
    Train,
    /// Evaluate a policy on the configured scenario.
    Eval(PolicyArgs),
    /// Evaluate a policy over the configured sweep grid.
    Sweep(PolicyArgs),
    /// Print the cluster partition of the configured topology.
    Clusters,
    /// Run one episode from a workload file, or export a generated one.
    Replay {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Workload to replay. Without it the seed's workload is generated and saved.
        #[arg(long)]
        workload: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PolicyArgs {
    /// Weight file; required unless epsilon is 1.
    #[arg(long, env = "SFCSIM_WEIGHTS")]
    weights: Option<PathBuf>,
    /// Overrides the evaluation epsilon.
    #[arg(long, env = "SFCSIM_EPSILON")]
    epsilon: Option<f64>,
}

enum Failure {
    Input(String),
    Io(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Io(_) => 3,
            Failure::Run(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Io(m) | Failure::Run(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::StepLimit(_) => Failure::Run(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sfcsim: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if cli.jobs == 0 {
        return Err(Failure::Input("--jobs must be at least 1".into()));
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    match &cli.cmd {
        Cmd::Train => cmd_train(&cfg),
        Cmd::Eval(p) => cmd_eval(&cfg, p, false, cli.jobs),
        Cmd::Sweep(p) => cmd_eval(&cfg, p, true, cli.jobs),
        Cmd::Clusters => cmd_clusters(&cfg, cli.out.is_some()),
        Cmd::Replay { policy, workload } => cmd_replay(&cfg, policy, workload.as_deref()),
    }
}

/// Writes through a temporary file in the target directory.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    fill(tmp.as_file_mut()).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let snap = cfg.to_toml();
    write_atomic(&dir.join("config.resolved.toml"), |w| w.write_all(snap.as_bytes()))?;
    Ok(dir)
}

fn load_policy(cfg: &RunConfig, p: &PolicyArgs) -> Result<(QNetwork, f64), Failure> {
    let epsilon = p.epsilon.unwrap_or(cfg.eval.epsilon);
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Failure::Input("epsilon must lie in [0, 1]".into()));
    }
    let shape = cfg.drl.shape();
    let net = match &p.weights {
        Some(path) => load_weights(path, &shape).map_err(|e| match e {
            WeightsError::Io(io) if io.kind() != std::io::ErrorKind::NotFound => io_err(path, io),
            e => Failure::Input(format!("{}: {e}", path.display())),
        })?,
        None if epsilon == 1.0 => QNetwork::zeros(shape),
        None => return Err(Failure::Input("--weights is required unless epsilon is 1".into())),
    };
    Ok((net, epsilon))
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    episodes: usize,
    update_calls: u64,
    best_block: Option<usize>,
    best_acceptance: Option<f64>,
    final_acceptance: Option<f64>,
    wall_clock_s: f64,
}

fn cmd_train(cfg: &RunConfig) -> Result<(), Failure> {
    let dir = prepare_out(cfg)?;
    let scenario = cfg.scenario()?;
    let started = Instant::now();
    let out = train(&scenario, &cfg.drl, &cfg.train, cfg.seed, |row| {
        if (row.episode + 1) % cfg.train.block_episodes == 0 {
            eprintln!(
                "episode {:>5}  eps {:.3}  acc {}  reward {:.1}",
                row.episode + 1,
                row.epsilon,
                row.acc_ratio.map_or("-".into(), |a| format!("{a:.3}")),
                row.reward
            );
        }
    })?;
    for (name, net) in [("weights.bin", &out.final_net), ("weights.best.bin", &out.best_net)] {
        let path = dir.join(name);
        save_weights(net, &path).map_err(|e| io_err(&path, e))?;
    }
    let curve = dir.join("curve.csv");
    write_atomic(&curve, |w| write_curve(w, &out.curve).map_err(std::io::Error::other))?;
    let summary = TrainSummary {
        seed: cfg.seed,
        episodes: out.curve.len(),
        update_calls: out.update_calls,
        best_block: out.best_block,
        best_acceptance: out.best_acceptance,
        final_acceptance: out.curve.last().and_then(|r| r.acc_ratio),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("train.json"), &summary)
}

fn cmd_eval(cfg: &RunConfig, p: &PolicyArgs, sweep: bool, jobs: usize) -> Result<(), Failure> {
    let (net, epsilon) = load_policy(cfg, p)?;
    let dir = prepare_out(cfg)?;
    let scenario = cfg.scenario()?;
    let mut eval = cfg.eval.clone();
    eval.epsilon = epsilon;
    let cells: Vec<CellResult> = if sweep {
        evaluate_sweep(&scenario, &cfg.sweep, &net, &eval, cfg.seed, jobs)?
    } else {
        vec![evaluate(
            &scenario,
            &net,
            &eval.seed_list(cfg.seed),
            eval.episodes_per_seed,
            eval.epsilon,
        )?]
    };
    for c in &cells {
        eprintln!(
            "{}  clusters {}  acc {}",
            c.meta.scenario_id,
            c.meta.cluster_count,
            c.mean_acceptance().map_or("-".into(), |a| format!("{a:.4}"))
        );
    }
    let stem = if sweep { "sweep" } else { "report" };
    if cfg.output.wants(Format::Csv) {
        let rows: Vec<_> = cells.iter().flat_map(CellResult::rows).collect();
        let path = dir.join(format!("{stem}.csv"));
        write_atomic(&path, |w| write_csv(w, &rows).map_err(std::io::Error::other))?;
    }
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join(format!("{stem}.json")), &cells)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterView {
    id: usize,
    dcs: Vec<usize>,
    centroid: [f64; 2],
    intra_links: Vec<usize>,
    adjacent: Vec<usize>,
}

#[derive(Serialize)]
struct ClustersView {
    seed: u64,
    dc_count: usize,
    link_count: usize,
    size_limit: usize,
    cluster_count: usize,
    clusters: Vec<ClusterView>,
    inter_links: Vec<usize>,
}

/// Prints the partition; also writes `clusters.json` when `--out` is given.
fn cmd_clusters(cfg: &RunConfig, save: bool) -> Result<(), Failure> {
    let seeds = EpisodeSeeds::new(cfg.seed);
    let graph = build_network(&cfg.topology, seeds.topology).map_err(SimError::from)?;
    let part = make_clusters(&graph, cfg.cluster.size_limit, seeds.clusters).map_err(SimError::from)?;
    let view = ClustersView {
        seed: cfg.seed,
        dc_count: graph.dc_count(),
        link_count: graph.links().len(),
        size_limit: part.size_limit,
        cluster_count: part.cluster_count(),
        clusters: (0..part.cluster_count())
            .map(|c| ClusterView {
                id: c,
                dcs: part.clusters[c].clone(),
                centroid: part.centroids[c],
                intra_links: part.intra_links[c].clone(),
                adjacent: part.cluster_adjacency[c].clone(),
            })
            .collect(),
        inter_links: part.inter_links.clone(),
    };
    let text = serde_json::to_string_pretty(&view).expect("cluster view serializes");
    println!("{text}");
    if save {
        std::fs::create_dir_all(&cfg.output.dir).map_err(|e| io_err(&cfg.output.dir, e))?;
        write_json(&cfg.output.dir.join("clusters.json"), &view)?;
    }
    Ok(())
}

fn cmd_replay(cfg: &RunConfig, p: &PolicyArgs, workload: Option<&Path>) -> Result<(), Failure> {
    let (net, epsilon) = load_policy(cfg, p)?;
    let dir = prepare_out(cfg)?;
    let scenario = cfg.scenario()?;
    let seeds = EpisodeSeeds::new(cfg.seed);
    let graph = build_network(&scenario.topology, seeds.topology).map_err(SimError::from)?;
    let requests = match workload {
        Some(path) => {
            let f = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            read_workload(BufReader::new(f), &scenario.catalog, &graph)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeds.workload);
            let reqs = generate_bundles(&scenario.catalog, &graph, scenario.scale, &mut rng);
            write_atomic(&dir.join("workload.jsonl"), |w| write_workload(w, &reqs))?;
            reqs
        }
    };
    let started = Instant::now();
    let mut world = World::from_parts(graph, &scenario, requests, seeds, false)?;
    run_world(&mut world, &net, epsilon, |_, _| {})?;
    let meta = world.meta(scenario.id(), scenario.scale);
    let report = world.report(meta, cfg.seed, started.elapsed().as_secs_f64() * 1e3);
    eprintln!(
        "{}  generated {}  accepted {}  handoffs {}",
        report.meta.scenario_id, report.total.generated, report.total.accepted, report.handoffs
    );
    if cfg.output.wants(Format::Csv) {
        let rows = sfcsim_core::sim::report::csv_rows(&report.meta, &cfg.seed.to_string(), &report.per_type);
        write_atomic(&dir.join("replay.csv"), |w| write_csv(w, &rows).map_err(std::io::Error::other))?;
    }
    if cfg.output.wants(Format::Json) {
        write_json(&dir.join("replay.json"), &report)?;
    }
    write_atomic(&dir.join("handoffs.jsonl"), |w| {
        for h in &world.general.handoffs {
            serde_json::to_writer(&mut *w, h)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

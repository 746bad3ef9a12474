//! `waypoint`: generate benchmarks, solve instances, build training data,
//! train the probe network and compare the two probes.

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use waypoint_core::{
    benchmark_config, curves_csv, dijkstra_all_pairs, disjoint_from, evaluate, evaluation_config,
    generate_graph, generate_instances, load_instances, load_model_for, records_csv,
    run_comparison, run_data_generation, save_instances, save_model, solve_all, top_k_accuracy,
    train_on_dataset, Dataset, GcnModel, GenConfig, Instance, ModelConfig, ProbeKind, Prober,
    SolverConfig, TrainConfig, WeightedGraph, COMPARISON_SIZES,
};

/// Artifact-level choices that a reader of a results directory needs in
/// order to interpret the numbers.
const DEVIATIONS: &[(&str, &str)] = &[
    ("graph_family", "random geometric graph with spanning-tree backbone"),
    ("instances_per_pair", "one size-0 instance per kept pair; sizes >= 1 draw instances_per_pair"),
    ("neural_deeper_order", "network ranking orders the root and every deeper choice point"),
    ("pass_limit", "max(2, ceil(|M|/2)+1) visits per node, doubled once on proved infeasibility"),
    ("network", "3 GCN layers x 32 units, batch norm, dropout 0.1 before the dense layer"),
    ("timing", "wall-clock milliseconds; backtracks are the portable metric"),
];

#[derive(Parser)]
#[command(name = "waypoint", version, about = "Shortest paths through mandatory waypoints")]
struct Cli {
    /// Seed for graph generation, instance sampling, shuffling and initialisation.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Per-run solver timeout in milliseconds (0 disables the timeout).
    #[arg(long, global = true, default_value_t = 3000)]
    timeout_ms: u64,
    /// Branching-order source for `solve`.
    #[arg(long, global = true, default_value = "dijkstra")]
    probe: ProbeKind,
    /// Weights file: read by `solve --probe neural` and `eval`, written by `train`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph and an instance set.
    Generate(GenerateArgs),
    /// Solve every instance of a set with one probe.
    Solve(SolveArgs),
    /// Train the probe network, generating the dataset first if needed.
    Train(TrainArgs),
    /// Compare the reference and neural probes on fresh instances.
    Eval(EvalArgs),
    /// Full pipeline: generate, build data, train, compare.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ShapeArgs {
    /// Benchmark shape (b1: 15 nodes, b2: 22 nodes).
    #[arg(long, default_value = "b1")]
    bench: String,
    /// Override the node count.
    #[arg(long)]
    nodes: Option<usize>,
    /// Override the fraction of ordered pairs kept.
    #[arg(long)]
    keep: Option<f64>,
    /// Override the mandatory-set sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Override the instances drawn per kept pair and size.
    #[arg(long)]
    per_pair: Option<usize>,
}

impl ShapeArgs {
    fn config(&self, seed: u64) -> Result<GenConfig> {
        let mut cfg = benchmark_config(&self.bench, seed)?;
        if let Some(n) = self.nodes {
            cfg.n = n;
        }
        if let Some(k) = self.keep {
            cfg.decimation_keep = k;
        }
        if let Some(s) = &self.sizes {
            cfg.mandatory_sizes = s.clone();
        }
        if let Some(p) = self.per_pair {
            cfg.instances_per_pair = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// Stop each run after this many search nodes.
    #[arg(long)]
    node_limit: Option<u64>,
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Epochs without test-loss improvement before stopping.
    #[arg(long, default_value_t = 20)]
    patience: usize,
    /// Hidden widths of the GCN layers (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "32,32,32")]
    hidden: Vec<usize>,
}

impl TrainingArgs {
    fn configs(&self, seed: u64) -> (ModelConfig, TrainConfig) {
        let model = ModelConfig {
            hidden: self.hidden.clone(),
            ..ModelConfig::default()
        };
        let train = TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed,
            ..TrainConfig::default()
        };
        (model, train)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Existing dataset file.
    #[arg(long, conflicts_with = "instances")]
    dataset: Option<PathBuf>,
    /// Instance set to solve for training data.
    #[arg(long, required_unless_present = "dataset")]
    instances: Option<PathBuf>,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Evaluation instances; generated from the graph when absent.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Instances per kept pair and size when generating.
    #[arg(long, default_value_t = 3)]
    per_pair: usize,
    /// Fraction of ordered pairs kept when generating.
    #[arg(long, default_value_t = 0.2)]
    keep: f64,
    /// Training instances to exclude from a generated evaluation set.
    #[arg(long)]
    exclude: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Evaluation instances per kept pair and size.
    #[arg(long, default_value_t = 3)]
    eval_per_pair: usize,
    #[command(flatten)]
    training: TrainingArgs,
}

struct Ctx {
    seed: u64,
    solver: SolverConfig,
    probe: ProbeKind,
    model: Option<PathBuf>,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn manifest(&self, verb: &str, extra: Value) -> Result<()> {
        let deviations: serde_json::Map<String, Value> = DEVIATIONS
            .iter()
            .map(|(k, v)| (k.to_string(), Value::from(*v)))
            .collect();
        let mut m = json!({
            "verb": verb,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "timeout_ms": self.solver.timeout.map(|t| t.as_millis() as u64),
            "node_limit": self.solver.node_limit,
            "deviations": deviations,
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
            m.extend(e);
        }
        self.write(&format!("manifest_{verb}.json"), &serde_json::to_string_pretty(&m)?)
    }

    fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.path("weights.txt"))
    }
}

fn size_counts(instances: &[Instance], sizes: &[usize]) -> Value {
    sizes
        .iter()
        .map(|&k| (k.to_string(), Value::from(instances.iter().filter(|i| i.mandatory().len() == k).count())))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn generate(ctx: &Ctx, cfg: &GenConfig) -> Result<(WeightedGraph, Vec<Instance>)> {
    let g = generate_graph(cfg);
    let spt = dijkstra_all_pairs(&g);
    let instances = generate_instances(&g, &spt, cfg)?;
    g.save(ctx.path("graph.txt"))?;
    save_instances(&instances, ctx.path("instances.txt"))?;
    ctx.manifest(
        "generate",
        json!({
            "generator": cfg,
            "edges": g.edges().len(),
            "fingerprint": g.fingerprint(),
            "instances": instances.len(),
            "by_size": size_counts(&instances, &cfg.mandatory_sizes),
        }),
    )?;
    println!("generated {} nodes, {} edges, {} instances", g.n(), g.edges().len(), instances.len());
    Ok((g, instances))
}

fn sizes_of(instances: &[Instance]) -> Vec<usize> {
    let mut sizes: Vec<usize> = instances.iter().map(|i| i.mandatory().len()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

fn solve(ctx: &Ctx, args: &SolveArgs) -> Result<()> {
    let g = WeightedGraph::load(&args.graph)?;
    let instances = load_instances(g.n(), &args.instances)?;
    let mut solver = ctx.solver.clone();
    solver.node_limit = args.node_limit.or(solver.node_limit);
    let spt = dijkstra_all_pairs(&g);
    let model;
    let prober = match ctx.probe {
        ProbeKind::Dijkstra => Prober::Dijkstra(&spt),
        ProbeKind::Neural => {
            let path = ctx.model.as_ref().context("--probe neural needs --model")?;
            model = load_model_for(path, &g)?;
            Prober::Neural(&model)
        }
    };
    let started = Instant::now();
    let records = solve_all(&g, &instances, &prober, &solver)?;
    ctx.write("solve.csv", &records_csv(&records))?;
    println!("{:>10} {:>10} {:>10}", "|M|", "instances", "optimal");
    for k in sizes_of(&instances) {
        let rows: Vec<_> = records.iter().filter(|r| r.mandatory == k).collect();
        let opt = rows.iter().filter(|r| r.proved_optimal).count();
        println!("{k:>10} {:>10} {opt:>10}", rows.len());
    }
    let opt = records.iter().filter(|r| r.proved_optimal).count();
    println!("{opt}/{} proved optimal in {:.1}s", records.len(), started.elapsed().as_secs_f64());
    ctx.manifest(
        "solve",
        json!({
            "graph": args.graph,
            "instances": args.instances,
            "probe": ctx.probe,
            "model": ctx.model,
            "proved_optimal": opt,
            "total": records.len(),
        }),
    )
}

/// Solves `instances` with the reference probe and writes the per-size
/// report and the dataset.
fn build_data(ctx: &Ctx, g: &WeightedGraph, instances: &[Instance]) -> Result<Dataset> {
    let spt = dijkstra_all_pairs(g);
    let sizes = sizes_of(instances);
    let started = Instant::now();
    let run = run_data_generation(g, &spt, instances, &sizes, &ctx.solver, ctx.seed)?;
    println!("{}", run.report.to_table());
    log::info!("data generation took {:.1}s", started.elapsed().as_secs_f64());
    ctx.write("datagen.txt", &run.report.to_table())?;
    ctx.write("datagen.csv", &run.report.to_csv())?;
    ctx.write("datagen_runs.csv", &records_csv(&run.records))?;
    run.dataset.save(ctx.path("dataset.txt"))?;
    Ok(run.dataset)
}

fn train_model(ctx: &Ctx, g: &WeightedGraph, ds: &Dataset, args: &TrainingArgs) -> Result<GcnModel> {
    let (model_cfg, train_cfg) = args.configs(ctx.seed);
    let model = GcnModel::new(g, &model_cfg, ctx.seed)?;
    let started = Instant::now();
    let outcome = train_on_dataset(model, ds, &train_cfg)?;
    let test = evaluate(&outcome.model, ds.test())?;
    let train = evaluate(&outcome.model, ds.train())?;
    let top3 = top_k_accuracy(&outcome.model, ds.test(), 3)?;
    println!(
        "best epoch {} of {}: train accuracy {:.4}, test accuracy {:.4}, test top-3 {:.4}",
        outcome.best_epoch,
        outcome.curves.len(),
        train.accuracy,
        test.accuracy,
        top3
    );
    save_model(&outcome.model, ctx.model_path())?;
    ctx.write("curves.csv", &curves_csv(&outcome.curves, 0.8))?;
    ctx.manifest(
        "train",
        json!({
            "model": model_cfg,
            "training": train_cfg,
            "weights": ctx.model_path(),
            "examples": ds.len(),
            "train_examples": ds.train().len(),
            "test_examples": ds.test().len(),
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.curves.len(),
            "stopped_early": outcome.stopped_early,
            "train_accuracy": train.accuracy,
            "test_accuracy": test.accuracy,
            "test_top3_accuracy": top3,
            "seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    Ok(outcome.model)
}

fn train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let g = WeightedGraph::load(&args.graph)?;
    let ds = match (&args.dataset, &args.instances) {
        (Some(path), _) => {
            let ds = Dataset::load(path)?;
            ds.check_graph(&g)?;
            ds
        }
        (None, Some(path)) => build_data(ctx, &g, &load_instances(g.n(), path)?)?,
        (None, None) => bail!("--dataset or --instances is required"),
    };
    train_model(ctx, &g, &ds, &args.training).map(drop)
}

fn compare(ctx: &Ctx, g: &WeightedGraph, model: &GcnModel, instances: &[Instance]) -> Result<()> {
    let spt = dijkstra_all_pairs(g);
    let started = Instant::now();
    let cmp = run_comparison(g, &spt, instances, model, &COMPARISON_SIZES, &ctx.solver)?;
    println!("{}", cmp.report.to_table());
    ctx.write("comparison.txt", &cmp.report.to_table())?;
    ctx.write("comparison.csv", &cmp.report.to_csv())?;
    ctx.write("comparison.json", &cmp.report.to_json())?;
    let mut runs = records_csv(&cmp.reference);
    for r in &cmp.neural {
        runs.push_str(&r.csv_row());
        runs.push('\n');
    }
    ctx.write("comparison_runs.csv", &runs)?;
    ctx.manifest(
        "eval",
        json!({
            "weights": ctx.model_path(),
            "instances": instances.len(),
            "by_size": size_counts(instances, &COMPARISON_SIZES),
            "seconds": started.elapsed().as_secs_f64(),
        }),
    )
}

fn eval_instances(g: &WeightedGraph, cfg: &GenConfig, exclude: &[Instance]) -> Result<Vec<Instance>> {
    let spt = dijkstra_all_pairs(g);
    Ok(disjoint_from(generate_instances(g, &spt, cfg)?, exclude))
}

/// Seed stream of generated evaluation sets, kept apart from training seeds.
fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(1000)
}

fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let g = WeightedGraph::load(&args.graph)?;
    let model = load_model_for(ctx.model.as_ref().context("eval needs --model")?, &g)?;
    let instances = match &args.instances {
        Some(path) => load_instances(g.n(), path)?,
        None => {
            let exclude = match &args.exclude {
                Some(path) => load_instances(g.n(), path)?,
                None => Vec::new(),
            };
            let base = GenConfig {
                decimation_keep: args.keep,
                ..GenConfig::new(ctx.seed, g.n())
            };
            let cfg = evaluation_config(&base, eval_seed(ctx.seed), args.per_pair);
            let instances = eval_instances(&g, &cfg, &exclude)?;
            save_instances(&instances, ctx.path("eval_instances.txt"))?;
            instances
        }
    };
    compare(ctx, &g, &model, &instances)
}

fn bench(ctx: &Ctx, args: &BenchArgs) -> Result<()> {
    let cfg = args.shape.config(ctx.seed)?;
    let (g, instances) = generate(ctx, &cfg)?;
    let ds = build_data(ctx, &g, &instances)?;
    let model = train_model(ctx, &g, &ds, &args.training)?;
    let eval_cfg = evaluation_config(&cfg, eval_seed(ctx.seed), args.eval_per_pair);
    let eval = eval_instances(&g, &eval_cfg, &instances)?;
    save_instances(&eval, ctx.path("eval_instances.txt"))?;
    compare(ctx, &g, &model, &eval)
}

fn run(cli: Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let solver = match cli.timeout_ms {
        0 => SolverConfig::unlimited(),
        ms => SolverConfig::default().with_timeout(Duration::from_millis(ms)),
    };
    let ctx = Ctx {
        seed: cli.seed,
        solver,
        probe: cli.probe,
        model: cli.model,
        out: cli.out,
    };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, &a.shape.config(ctx.seed)?).map(drop),
        Command::Solve(a) => solve(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

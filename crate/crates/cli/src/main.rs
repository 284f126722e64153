use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use elosslab_core::par::Exec;
use elosslab_core::rigidity::{edge_pool, is_globally_rigid, is_rigid, EdgeSet};
use elosslab_core::score_lab::{bias_variance_experiment, default_density, default_point, ToyDiffusionConfig};
use elosslab_core::tasks::bench::{benchmark_losses, DEFAULT_SIZES};
use elosslab_core::tasks::config::parse_key_values;
use elosslab_core::tasks::csv::{field, CsvTable};
use elosslab_core::tasks::format::{checkpoint, mlp_from_checkpoint, Container, CHECKPOINT_MAGIC};
use elosslab_core::tasks::shapes::{evaluate_shapes, gen_shape_dataset, sweep_shape_lr, train_shape, ShapeDataset};
use elosslab_core::tasks::spins::{evaluate_spins, gen_spin_dataset, train_spin, SpinDataset};
use elosslab_core::tasks::svg::{line_plot, Series};
use elosslab_core::tasks::{LossKind, RunManifest, Task, TrainConfig};

#[derive(Parser)]
#[command(name = "elosslab", version, about = "Energy-loss experiments for point clouds and spin glasses")]
struct Cli {
    /// key = value configuration file (a run manifest also works)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; required by every command that generates or trains
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "elosslab-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regular-polygon prediction
    #[command(subcommand)]
    Shapes(ShapesCmd),
    /// Spin-glass ground-state prediction
    #[command(subcommand)]
    Spins(SpinsCmd),
    /// Random regular graphs and rigidity certificates
    #[command(subcommand)]
    Rigidity(RigidityCmd),
    /// Score-estimator bias and variance experiment
    #[command(subcommand, name = "score-lab")]
    ScoreLab(ScoreLabCmd),
    /// Loss wall-time benchmark
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum ShapesCmd {
    /// Write a polygon dataset
    Gen {
        #[arg(long)]
        n_vertices: Option<usize>,
        #[arg(long)]
        theta_aug: Option<f64>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train a model and write metrics, checkpoint and plot
    Train(TrainArgs),
    /// Score a checkpoint on a dataset file
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum SpinsCmd {
    /// Write Hamiltonians with exact ground states
    Gen {
        #[arg(long)]
        lattice: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    Train(TrainArgs),
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    loss: Option<String>,
    /// Comma-separated learning rates; the best validation run is kept
    #[arg(long, value_delimiter = ',')]
    lr_grid: Option<Vec<f64>>,
    /// Extra key=value overrides
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum RigidityCmd {
    /// Sample rigid 2d-regular edge sets and write them as CSV
    Sample {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Certify rigidity of the graphs in an edge CSV (graph,i,j)
    Check {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Node count; defaults to the largest index plus one
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ScoreLabCmd {
    Run {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        sigma_t: Option<f64>,
        #[arg(long)]
        draws_per_trial: Option<usize>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    Losses {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ELOSSLAB_THREADS") {
        let n: usize = v.parse().with_context(|| format!("ELOSSLAB_THREADS = '{v}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

struct Ctx {
    config: BTreeMap<String, String>,
    seed: Option<u64>,
    out: PathBuf,
}

impl Ctx {
    fn require_seed(&self) -> Result<u64> {
        let seed = self
            .seed
            .ok_or_else(|| anyhow!("an explicit --seed is required for reproducibility"))?;
        if let Some(s) = self.config.get("seed") {
            if s.parse::<u64>().ok() != Some(seed) {
                bail!("--seed {seed} disagrees with seed = {s} in the config file");
            }
        }
        Ok(seed)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.config
            .get(key)
            .map(|v| v.parse().map_err(|_| anyhow!("config key '{key}': cannot parse '{v}'")))
            .transpose()
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_key_values(&text)?
        }
        None => BTreeMap::new(),
    };
    let ctx = Ctx {
        config,
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Shapes(ShapesCmd::Gen {
            n_vertices,
            theta_aug,
            size,
        }) => shapes_gen(&ctx, n_vertices, theta_aug, size),
        Command::Shapes(ShapesCmd::Train(a)) => train(&ctx, Task::Shapes, a),
        Command::Shapes(ShapesCmd::Eval(a)) => shapes_eval(&ctx, a),
        Command::Spins(SpinsCmd::Gen { lattice, size }) => spins_gen(&ctx, lattice, size),
        Command::Spins(SpinsCmd::Train(a)) => train(&ctx, Task::Spins, a),
        Command::Spins(SpinsCmd::Eval(a)) => spins_eval(&ctx, a),
        Command::Rigidity(RigidityCmd::Sample { n, dim, count }) => rigidity_sample(&ctx, n, dim, count),
        Command::Rigidity(RigidityCmd::Check { edges, dim, n }) => rigidity_check(&ctx, &edges, dim, n),
        Command::ScoreLab(ScoreLabCmd::Run {
            trials,
            mc_samples,
            sigma_t,
            draws_per_trial,
        }) => score_lab(&ctx, trials, mc_samples, sigma_t, draws_per_trial),
        Command::Bench(BenchCmd::Losses { sizes, repeats, dim }) => bench(&ctx, sizes, repeats, dim),
    }
}

fn finish(mut manifest: RunManifest, start: Instant, dir: &Path) -> Result<()> {
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let path = dir.join("manifest.txt");
    manifest.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn shapes_gen(ctx: &Ctx, n_vertices: Option<usize>, theta_aug: Option<f64>, size: Option<usize>) -> Result<()> {
    let seed = ctx.require_seed()?;
    let start = Instant::now();
    let n_vertices = n_vertices.or(ctx.get("n_vertices")?).unwrap_or(5);
    let theta_aug = theta_aug.or(ctx.get("theta_aug")?).unwrap_or(std::f64::consts::PI);
    let size = size.or(ctx.get("size")?).unwrap_or(10_000);
    let data = gen_shape_dataset(n_vertices, theta_aug, size, seed, Exec::default())?;
    let dir = ctx.out_dir()?;
    let path = dir.join("shapes.bin");
    data.save(&path)?;
    println!("wrote {} ({size} samples)", path.display());
    let m = RunManifest::new(
        "shapes-gen",
        seed,
        vec![
            ("n_vertices".into(), n_vertices.to_string()),
            ("theta_aug".into(), theta_aug.to_string()),
            ("size".into(), size.to_string()),
        ],
    );
    finish(m, start, dir)
}

fn spins_gen(ctx: &Ctx, lattice: Option<usize>, size: Option<usize>) -> Result<()> {
    let seed = ctx.require_seed()?;
    let start = Instant::now();
    let lattice = lattice.or(ctx.get("lattice")?).unwrap_or(4);
    let size = size.or(ctx.get("size")?).unwrap_or(2000);
    let data = gen_spin_dataset(lattice, size, seed, Exec::default())?;
    let dir = ctx.out_dir()?;
    let path = dir.join("spins.bin");
    data.save(&path)?;
    println!("wrote {} ({size} samples)", path.display());
    let m = RunManifest::new(
        "spins-gen",
        seed,
        vec![("lattice".into(), lattice.to_string()), ("size".into(), size.to_string())],
    );
    finish(m, start, dir)
}

fn train(ctx: &Ctx, task: Task, args: TrainArgs) -> Result<()> {
    let seed = ctx.require_seed()?;
    let start = Instant::now();
    let mut map = ctx.config.clone();
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(l) = &args.loss {
        map.insert("loss".into(), l.clone());
    }
    if !map.contains_key("loss") {
        let default = match task {
            Task::Shapes => LossKind::Energy,
            Task::Spins => LossKind::LocalEnergy,
        };
        map.insert("loss".into(), default.name().into());
    }
    map.entry("task".into()).or_insert_with(|| task.name().into());
    let grid_from_config = map.remove("lr_grid");
    let lr_grid = match (args.lr_grid, grid_from_config) {
        (Some(g), _) => Some(g),
        (None, Some(text)) => Some(
            text.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("bad lr_grid entry '{s}'")))
                .collect::<Result<Vec<_>>>()?,
        ),
        (None, None) => None,
    };
    map.insert("seed".into(), seed.to_string());
    let mut cfg = TrainConfig::from_map(&map)?;
    if cfg.task != task {
        bail!("loss '{}' is not a {} loss", cfg.loss.name(), task.name());
    }
    let dir = ctx.out_dir()?.to_path_buf();
    let exec = Exec::default();

    let (kind, csv, mlp, series, y_label, metrics): (_, CsvTable, _, Vec<Series>, _, Vec<(&str, String)>) = match task {
        Task::Shapes => {
            let run = match &lr_grid {
                Some(g) if task == Task::Shapes => sweep_shape_lr(&cfg, g, exec)?,
                _ => train_shape(&cfg, exec)?,
            };
            cfg.lr = run.config.lr;
            let series = ["train", "test"]
                .iter()
                .map(|split| Series {
                    name: split.to_string(),
                    points: run
                        .epochs
                        .iter()
                        .filter(|e| e.split == *split)
                        .map(|e| (e.epoch as f64, e.eval.mean_quality))
                        .collect(),
                })
                .collect();
            let metrics = vec![
                ("test_mean_quality", run.test.mean_quality.to_string()),
                ("val_mean_quality", run.val.mean_quality.to_string()),
                ("test_degenerate", run.test.degenerate.to_string()),
            ];
            ("shapes-train", run.metrics_csv(), run.mlp, series, "mean quality", metrics)
        }
        Task::Spins => {
            if lr_grid.is_some() {
                bail!("--lr-grid is only supported for shapes");
            }
            let run = train_spin(&cfg, exec)?;
            let series = ["train", "test"]
                .iter()
                .map(|split| Series {
                    name: split.to_string(),
                    points: run
                        .epochs
                        .iter()
                        .filter(|e| e.split == *split)
                        .map(|e| (e.epoch as f64, e.eval.mean_pred_energy))
                        .collect(),
                })
                .collect();
            let metrics = vec![
                ("test_mean_pred_energy", run.test.mean_pred_energy.to_string()),
                ("test_mean_ground_energy", run.test.mean_ground_energy.to_string()),
                ("test_accuracy_per_site", run.test.accuracy_per_site.to_string()),
            ];
            ("spins-train", run.metrics_csv(), run.mlp, series, "mean predicted energy", metrics)
        }
    };

    csv.write(&dir.join("metrics.csv"))?;
    checkpoint(&mlp, seed)?.save(&dir.join("checkpoint.bin"))?;
    let title = format!("{} ({})", kind, cfg.loss.name());
    fs::write(dir.join("curve.svg"), line_plot(&title, "epoch", y_label, &series))?;
    println!("wrote {}", dir.join("metrics.csv").display());

    let mut pairs = cfg.to_pairs();
    if let Some(g) = &lr_grid {
        // The sweep reruns on replay; `lr` records the selected rate.
        let text: Vec<String> = g.iter().map(|v| v.to_string()).collect();
        pairs.push(("lr_grid".into(), text.join(",")));
    }
    let mut m = RunManifest::new(kind, seed, pairs);
    for (k, v) in metrics {
        println!("{k} = {v}");
        m.metric(k, v);
    }
    finish(m, start, &dir)
}

fn load_checkpoint(path: &Path) -> Result<elosslab_core::autodiff::Mlp> {
    let c = Container::load(path, CHECKPOINT_MAGIC).with_context(|| format!("reading {}", path.display()))?;
    Ok(mlp_from_checkpoint(&c)?)
}

fn shapes_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let mlp = load_checkpoint(&a.checkpoint)?;
    let data = ShapeDataset::load(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let e = evaluate_shapes(&mlp, &data)?;
    let mut t = CsvTable::new(["samples", "mean_quality", "sigma_dangle", "sigma_radius", "degenerate"]);
    t.push(vec![
        field(data.samples.len()),
        field(e.mean_quality),
        field(e.sigma_dangle),
        field(e.sigma_radius),
        field(e.degenerate),
    ])?;
    let path = ctx.out_dir()?.join("eval.csv");
    t.write(&path)?;
    println!("mean_quality = {}\nwrote {}", e.mean_quality, path.display());
    Ok(())
}

fn spins_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let mlp = load_checkpoint(&a.checkpoint)?;
    let data = SpinDataset::load(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let e = evaluate_spins(&mlp, &data)?;
    let mut t = CsvTable::new(["samples", "mean_pred_energy", "mean_ground_energy", "accuracy_per_site"]);
    t.push(vec![
        field(data.samples.len()),
        field(e.mean_pred_energy),
        field(e.mean_ground_energy),
        field(e.accuracy_per_site),
    ])?;
    let path = ctx.out_dir()?.join("eval.csv");
    t.write(&path)?;
    println!(
        "mean_pred_energy = {}\nmean_ground_energy = {}\nwrote {}",
        e.mean_pred_energy,
        e.mean_ground_energy,
        path.display()
    );
    Ok(())
}

fn rigidity_sample(ctx: &Ctx, n: usize, dim: usize, count: usize) -> Result<()> {
    let seed = ctx.require_seed()?;
    let start = Instant::now();
    let pool = edge_pool(n, dim, count, seed, Exec::default())?;
    let mut t = CsvTable::new(["graph", "i", "j"]);
    for (g, edges) in pool.iter().enumerate() {
        for &(i, j) in edges.edges() {
            t.push(vec![field(g), field(i), field(j)])?;
        }
    }
    let dir = ctx.out_dir()?;
    t.write(&dir.join("edges.csv"))?;
    println!("wrote {} graphs to {}", pool.len(), dir.join("edges.csv").display());
    let m = RunManifest::new(
        "rigidity-sample",
        seed,
        vec![
            ("n".into(), n.to_string()),
            ("dim".into(), dim.to_string()),
            ("count".into(), count.to_string()),
        ],
    );
    finish(m, start, dir)
}

fn rigidity_check(ctx: &Ctx, path: &Path, dim: usize, n: Option<usize>) -> Result<()> {
    let table = CsvTable::read(path).with_context(|| format!("reading {}", path.display()))?;
    let parse = |col: &str| -> Result<Vec<usize>> {
        table
            .column(col)?
            .iter()
            .map(|v| v.parse().map_err(|_| anyhow!("column {col}: bad index '{v}'")))
            .collect()
    };
    let (graph, is, js) = (parse("graph")?, parse("i")?, parse("j")?);
    let n = n.unwrap_or_else(|| is.iter().chain(&js).max().map_or(0, |m| m + 1));
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for k in 0..graph.len() {
        groups.entry(graph[k]).or_default().push((is[k], js[k]));
    }
    let seed = ctx.seed.unwrap_or(0);
    let mut out = CsvTable::new(["graph", "edges", "rigid", "globally_rigid"]);
    for (g, edges) in groups {
        let e = EdgeSet::new(n, edges)?;
        let rigid = is_rigid(&e, dim, seed)?;
        let global = is_globally_rigid(&e, dim, seed)?;
        println!("graph {g}: {} edges, rigid = {rigid}, globally rigid = {global}", e.len());
        out.push(vec![field(g), field(e.len()), field(rigid), field(global)])?;
    }
    out.write(&ctx.out_dir()?.join("rigidity.csv"))?;
    Ok(())
}

fn score_lab(
    ctx: &Ctx,
    trials: Option<usize>,
    mc_samples: Option<usize>,
    sigma_t: Option<f64>,
    draws_per_trial: Option<usize>,
) -> Result<()> {
    let seed = ctx.require_seed()?;
    let start = Instant::now();
    let mut cfg = ToyDiffusionConfig {
        seed,
        ..Default::default()
    };
    if let Some(s) = sigma_t.or(ctx.get("sigma_t")?) {
        cfg.sigma_t = s;
        cfg.alpha_t = (1.0 - s * s).max(0.0).sqrt();
    }
    if let Some(a) = ctx.get("alpha_t")? {
        cfg.alpha_t = a;
    }
    cfg.trials = trials.or(ctx.get("trials")?).unwrap_or(cfg.trials);
    cfg.mc_samples = mc_samples.or(ctx.get("mc_samples")?).unwrap_or(cfg.mc_samples);
    cfg.draws_per_trial = draws_per_trial.or(ctx.get("draws_per_trial")?).unwrap_or(cfg.draws_per_trial);
    let rep = bias_variance_experiment(&default_density(), &default_point(), &cfg, Exec::default())?;
    let mut t = CsvTable::new(["trial", "bias_dist", "bias_mse", "var_dist", "var_mse", "sigma_t", "mc_samples"]);
    for r in &rep.rows {
        t.push(vec![
            field(r.trial),
            field(r.bias_dist),
            field(r.bias_mse),
            field(r.var_dist),
            field(r.var_mse),
            field(cfg.sigma_t),
            field(cfg.mc_samples),
        ])?;
    }
    let dir = ctx.out_dir()?;
    t.write(&dir.join("score_lab.csv"))?;
    println!("wrote {}", dir.join("score_lab.csv").display());
    let mut m = RunManifest::new(
        "score-lab",
        seed,
        vec![
            ("sigma_t".into(), cfg.sigma_t.to_string()),
            ("alpha_t".into(), cfg.alpha_t.to_string()),
            ("trials".into(), cfg.trials.to_string()),
            ("mc_samples".into(), cfg.mc_samples.to_string()),
            ("draws_per_trial".into(), cfg.draws_per_trial.to_string()),
        ],
    );
    for (k, v) in [
        ("bias_norm_dist", rep.bias_norm_dist),
        ("bias_norm_mse", rep.bias_norm_mse),
        ("var_trace_dist", rep.var_trace_dist),
        ("var_trace_mse", rep.var_trace_mse),
        ("se_dist", rep.se_dist),
        ("se_mse", rep.se_mse),
        ("fraction_var_dist_le_mse", rep.fraction_var_dist_le_mse()),
    ] {
        println!("{k} = {v}");
        m.metric(k, v);
    }
    finish(m, start, dir)
}

fn bench(ctx: &Ctx, sizes: Option<Vec<usize>>, repeats: usize, dim: usize) -> Result<()> {
    let start = Instant::now();
    let seed = ctx.seed.unwrap_or(0);
    let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
    let rep = benchmark_losses(&sizes, repeats, dim, seed)?;
    let dir = ctx.out_dir()?;
    rep.to_csv().write(&dir.join("bench.csv"))?;
    print!("{}", rep.to_csv().render().replace("\r\n", "\n"));
    let size_text: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    let mut m = RunManifest::new(
        "bench",
        seed,
        vec![
            ("sizes".into(), size_text.join(",")),
            ("repeats".into(), repeats.to_string()),
            ("dim".into(), dim.to_string()),
        ],
    );
    if let Some(e) = rep.scaling_exponent("sparse-energy") {
        println!("sparse-energy scaling exponent = {e}");
        m.metric("sparse_energy_exponent", e);
    }
    finish(m, start, dir)
}

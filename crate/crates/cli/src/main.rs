//! `nbp`: scene generation, data collection, training, evaluation and trace
//! export for the next-best-path exploration lab.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nbp_core::agent::World;
use nbp_core::bench::{
    derive_seed, eval_scenes, evaluate, generate_scenes, read_trace, trace_csv, trajectory_ppm, BenchConfig,
    PlannerFactory, SceneEntry, TRAIN_SCENE_STREAM,
};
use nbp_core::labels::{rollout_collect, write_records};
use nbp_core::learner::{
    load_checkpoint, save_checkpoint, train, Architecture, LearnedPredictor, Model, TrainLogEntry, TrainObserver,
};
use nbp_core::planning::Predictor;
use nbp_core::sensor::{Pose, N_YAW};
use nbp_core::worldgen::{gt_surface_points, nav_complexity, Scene};
use nbp_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "nbp", version, about = "Next-best-path active mapping lab")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file (key = value lines, `include = file` allowed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate evaluation scenes and write them with summary statistics.
    GenScenes {
        /// Fraction of navigable cells sampled for the navigation-complexity statistic.
        #[arg(long, default_value_t = 0.05)]
        complexity_sample: f64,
    },
    /// Collect training rollouts on the training scenes into a memory file.
    Rollout {
        /// Model used to pick goals; an untrained model when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Trajectories per scene.
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
    },
    /// Train the predictor on generated training scenes.
    Train,
    /// Evaluate planners on the evaluation scenes.
    Eval {
        /// Comma-separated planner ids; overrides the config.
        #[arg(long)]
        planners: Option<String>,
        /// Model checkpoint for the learned planners; overrides the config.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Turn an episode trace into a coverage CSV and a trajectory image.
    TraceExport {
        trace: PathBuf,
        /// Scene file to draw under the trajectory.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Pixels per cell in the image.
        #[arg(long, default_value_t = 8)]
        scale: usize,
    },
}

fn load_config(g: &Global) -> Result<BenchConfig> {
    let mut cfg = match &g.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = g.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn worlds(scenes: Vec<(String, Scene)>) -> Result<Vec<SceneEntry>> {
    scenes.into_par_iter().map(|(id, s)| Ok(SceneEntry { id, world: World::new(s)? })).collect()
}

fn train_scenes(cfg: &BenchConfig) -> Result<Vec<SceneEntry>> {
    worlds(generate_scenes(&cfg.scene_params, &cfg.difficulty, cfg.train_scenes, cfg.seed, TRAIN_SCENE_STREAM)?)
}

fn write_scenes(dir: &Path, scenes: &[SceneEntry]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for s in scenes {
        s.world.scene().save(&dir.join(format!("{}.scene", s.id)))?;
    }
    Ok(())
}

fn gen_scenes(cfg: &BenchConfig, out: &Path, sample: f64) -> Result<()> {
    let scenes = eval_scenes(cfg)?;
    let rows = scenes
        .par_iter()
        .map(|(id, s)| {
            let complexity = nav_complexity(s, sample, cfg.seed)?;
            Ok(format!(
                "{id},{},{},{},{},{complexity:.4}",
                s.width(),
                s.height(),
                s.navigable_cells().len(),
                gt_surface_points(s).len()
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = out.join("scenes");
    std::fs::create_dir_all(&dir)?;
    for (id, s) in &scenes {
        s.save(&dir.join(format!("{id}.scene")))?;
    }
    let mut csv = String::from("scene,width,height,navigable_cells,surface_points,nav_complexity\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    std::fs::write(out.join("scenes.csv"), csv)?;
    println!("wrote {} scenes to {}", scenes.len(), dir.display());
    Ok(())
}

fn architecture(world: &World) -> Result<Architecture> {
    let w = world.window();
    Architecture::new(w.grid_w, w.grid_h, w.slices + 1)
}

fn rollout(cfg: &BenchConfig, out: &Path, checkpoint: Option<&Path>, trajectories: usize) -> Result<()> {
    let model = match checkpoint {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let scenes = train_scenes(cfg)?;
    let model = match model {
        Some(m) => m,
        None => Model::new(architecture(&scenes[0].world)?, &mut ChaCha8Rng::seed_from_u64(cfg.train.seed)),
    };
    let predictor: Arc<dyn Predictor> = Arc::new(LearnedPredictor::new(Arc::new(model)));
    let jobs: Vec<(usize, usize)> = (0..scenes.len()).flat_map(|s| (0..trajectories).map(move |t| (s, t))).collect();
    let samples = jobs
        .par_iter()
        .map(|&(s, t)| {
            let world = &scenes[s].world;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 100 + s as u64, t as u64));
            let cells = world.scene().navigable_cells();
            let start = Pose::new(cells[rng.random_range(0..cells.len())], rng.random_range(0..N_YAW as u8));
            Ok(rollout_collect(world, predictor.clone(), start, cfg.train.rollout_length, cfg.beta, &mut rng)?.samples)
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let path = out.join("memory.bin");
    if path.exists() {
        std::fs::remove_file(&path)?;
    }
    let all: Vec<_> = samples.iter().flatten().collect();
    write_records(&path, all.iter().map(|s| (0, false, *s)))?;
    let labels: usize = all.iter().map(|s| s.value_labels.len()).sum();
    println!("collected {} samples with {labels} value labels into {}", all.len(), path.display());
    Ok(())
}

struct PrintLog(std::fs::File);

impl TrainObserver for PrintLog {
    fn on_log(&mut self, e: &TrainLogEntry) {
        use std::io::Write;
        let line = serde_json::to_string(e).expect("log entries serialize");
        let _ = writeln!(self.0, "{line}");
        eprintln!(
            "iteration {}: holdout loss {:.4} (mse {:.5}, bce {:.4}), {} samples, {} epochs",
            e.iteration, e.holdout_loss, e.holdout_mse, e.holdout_bce, e.train_set, e.epochs
        );
    }
}

fn run_train(cfg: &BenchConfig, out: &Path) -> Result<()> {
    let scenes = train_scenes(cfg)?;
    let arch = architecture(&scenes[0].world)?;
    std::fs::create_dir_all(out)?;
    let mut log = PrintLog(std::fs::File::create(out.join("train_log.jsonl"))?);
    let worlds: Vec<World> = scenes.into_iter().map(|s| s.world).collect();
    let outcome = train(&worlds, arch, &cfg.train, &mut log)?;
    save_checkpoint(&outcome.model, &out.join("model.ckpt"))?;
    outcome.memory.save(&out.join("memory.bin"))?;
    println!("saved {} parameters to {}", outcome.model.param_count(), out.join("model.ckpt").display());
    Ok(())
}

fn run_eval(mut cfg: BenchConfig, out: &Path, planners: Option<&str>, checkpoint: Option<PathBuf>) -> Result<()> {
    if let Some(p) = planners {
        cfg.set("planners", p).map_err(Error::Config)?;
    }
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    cfg.validate()?;
    let factory = PlannerFactory::from_config(&cfg)?;
    let scenes = worlds(eval_scenes(&cfg)?)?;
    let report = evaluate(&cfg, &scenes, &factory)?;
    write_scenes(&out.join("scenes"), &scenes)?;
    report.write(out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn trace_export(trace: &Path, scene: Option<&Path>, out: &Path, scale: usize) -> Result<()> {
    let log = read_trace(trace)?;
    let scene_path = scene.map(Path::to_path_buf).or_else(|| {
        let guess = trace.parent()?.parent()?.join("scenes").join(format!("{}.scene", log.scene_id));
        guess.exists().then_some(guess)
    });
    let scene = scene_path.as_deref().map(Scene::load).transpose()?;
    let stem = trace.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(format!("{stem}.csv")), trace_csv(&log))?;
    std::fs::write(out.join(format!("{stem}.ppm")), trajectory_ppm(&log, scene.as_ref(), scale))?;
    println!("wrote {stem}.csv and {stem}.ppm to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::TraceExport { trace, scene, scale } = &cli.command {
        return trace_export(trace, scene.as_deref(), &cli.global.out, *scale);
    }
    let cfg = load_config(&cli.global)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let out = &cli.global.out;
    match cli.command {
        Command::GenScenes { complexity_sample } => gen_scenes(&cfg, out, complexity_sample),
        Command::Rollout { checkpoint, trajectories } => rollout(&cfg, out, checkpoint.as_deref(), trajectories),
        Command::Train => run_train(&cfg, out),
        Command::Eval { planners, checkpoint } => run_eval(cfg, out, planners.as_deref(), checkpoint),
        Command::TraceExport { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

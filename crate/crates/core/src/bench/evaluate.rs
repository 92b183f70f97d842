use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::episode::{run_episode, EpisodeLog};
use crate::agent::World;
use crate::error::{Error, Result};
use crate::learner::{load_checkpoint, LearnedPredictor, Model, OraclePredictor};
use crate::planning::{
    FbePlanner, GreedyNbvPlanner, Mode, NbpPlanner, ObstacleSource, Planner, Predictor, RandomPlanner,
};
use crate::sensor::{Pose, N_YAW};
use crate::worldgen::{generate_scene_retrying, DifficultyParams, Scene};

/// Seed streams; each use of the master seed draws from its own stream.
pub const SCENE_STREAM: u64 = 1;
pub const START_STREAM: u64 = 2;
pub const PLANNER_STREAM: u64 = 3;
pub const TRAIN_SCENE_STREAM: u64 = 4;

/// Generation attempts per scene before giving up.
const GENERATION_ATTEMPTS: u32 = 100;

/// A seed for item `index` of `stream`, derived from `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(index as u128 * 2);
    rng.next_u64()
}

/// A named scene ready for episodes.
pub struct SceneEntry {
    pub id: String,
    pub world: World,
}

/// `count` generated scenes whose seeds come from `stream` of the master
/// seed. Ids are `{difficulty}-{index:03}`.
pub fn generate_scenes(
    params: &DifficultyParams,
    difficulty: &str,
    count: usize,
    master: u64,
    stream: u64,
) -> Result<Vec<(String, Scene)>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let p = params.clone().with_seed(derive_seed(master, stream, i as u64));
            let (scene, _) = generate_scene_retrying(&p, GENERATION_ATTEMPTS)?;
            Ok((format!("{difficulty}-{i:03}"), scene))
        })
        .collect()
}

/// Loads every `*.scene` file of `dir`, sorted by file name.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<(String, Scene)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scene"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .scene files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().expect("has a file name").to_string_lossy().into_owned();
            Ok((id, Scene::load(p)?))
        })
        .collect()
}

/// The evaluation scenes of a config.
pub fn eval_scenes(cfg: &BenchConfig) -> Result<Vec<(String, Scene)>> {
    match &cfg.scene_dir {
        Some(dir) => load_scene_dir(dir),
        None => generate_scenes(&cfg.scene_params, &cfg.difficulty, cfg.scenes, cfg.seed, SCENE_STREAM),
    }
}

/// Start pose of `(scene, trial)`: uniform over navigable cells and yaws.
pub fn start_pose(scene: &Scene, master: u64, scene_index: usize, trial: usize) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, START_STREAM, job_index(scene_index, trial)));
    let cells = scene.navigable_cells();
    Pose::new(cells[rng.random_range(0..cells.len())], rng.random_range(0..N_YAW as u8))
}

fn job_index(scene_index: usize, trial: usize) -> u64 {
    ((scene_index as u64) << 20) | trial as u64
}

/// Builds planners by id. Learned planners need a model.
pub struct PlannerFactory {
    pub greedy_radius: usize,
    pub oracle_stride: usize,
    pub beta: f64,
    pub model: Option<Arc<Model>>,
}

impl PlannerFactory {
    pub fn from_config(cfg: &BenchConfig) -> Result<Self> {
        let learned = cfg.planners.iter().any(|p| p == "nbp" || p == "nbp-oracle-obstacles");
        let model = match (&cfg.checkpoint, learned) {
            (Some(path), true) => Some(Arc::new(load_checkpoint(path)?)),
            (None, true) => return Err(Error::Config("learned planners need a checkpoint (checkpoint = path)".into())),
            _ => None,
        };
        Ok(Self { greedy_radius: cfg.greedy_radius, oracle_stride: cfg.oracle_stride, beta: cfg.beta, model })
    }

    pub fn build(&self, id: &str) -> Result<Box<dyn Planner>> {
        let nbp = |predictor: Arc<dyn Predictor>, obstacles| -> Box<dyn Planner> {
            Box::new(NbpPlanner { name: id.to_owned(), predictor, mode: Mode::Argmax, beta: self.beta, obstacles })
        };
        let learned = || -> Result<Arc<dyn Predictor>> {
            let model =
                self.model.clone().ok_or_else(|| Error::Config(format!("planner '{id}' needs a checkpoint")))?;
            Ok(Arc::new(LearnedPredictor::new(model)))
        };
        Ok(match id {
            "random" => Box::new(RandomPlanner),
            "fbe" => Box::new(FbePlanner::new()),
            "greedy-nbv" => Box::new(GreedyNbvPlanner { radius: self.greedy_radius }),
            "nbp-oracle" => nbp(Arc::new(OraclePredictor { stride: self.oracle_stride }), ObstacleSource::GroundTruth),
            "nbp" => nbp(learned()?, ObstacleSource::Predicted),
            "nbp-oracle-obstacles" => nbp(learned()?, ObstacleSource::GroundTruth),
            other => return Err(Error::Config(format!("unknown planner '{other}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub planner: String,
    pub episodes: usize,
    pub final_coverage_mean: f64,
    pub final_coverage_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    /// Percent of ground-truth points reconstructed within the threshold.
    pub comp_pct_mean: f64,
    /// Mean capped nearest distance, in centimeters.
    pub comp_cm_mean: f64,
    pub aborted: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub summaries: Vec<PlannerSummary>,
    /// Sorted by planner (config order), scene, then trial.
    pub episodes: Vec<EpisodeLog>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-planner aggregates of `episodes`, in `planners` order.
pub fn summarize(planners: &[String], episodes: &[EpisodeLog]) -> Vec<PlannerSummary> {
    planners
        .iter()
        .map(|p| {
            let logs: Vec<&EpisodeLog> = episodes.iter().filter(|e| &e.planner == p).collect();
            let col = |f: fn(&EpisodeLog) -> f64| logs.iter().map(|e| f(e)).collect::<Vec<f64>>();
            let (final_coverage_mean, final_coverage_std) = mean_std(&col(|e| e.final_coverage));
            let (auc_mean, auc_std) = mean_std(&col(|e| e.auc));
            PlannerSummary {
                planner: p.clone(),
                episodes: logs.len(),
                final_coverage_mean,
                final_coverage_std,
                auc_mean,
                auc_std,
                comp_pct_mean: mean_std(&col(|e| e.comp_pct)).0 * 100.0,
                comp_cm_mean: mean_std(&col(|e| e.comp_dist)).0 * 100.0,
                aborted: logs.iter().filter(|e| e.aborted.is_some()).count(),
            }
        })
        .collect()
}

/// Runs every planner on every `(scene, trial)` with identical start poses
/// and planner seeds, on a pool of `cfg.threads` workers.
pub fn evaluate(cfg: &BenchConfig, scenes: &[SceneEntry], factory: &PlannerFactory) -> Result<Report> {
    cfg.validate()?;
    for p in &cfg.planners {
        factory.build(p)?;
    }
    let mut jobs = Vec::new();
    for (pi, planner) in cfg.planners.iter().enumerate() {
        for (si, entry) in scenes.iter().enumerate() {
            for trial in 0..cfg.trials {
                jobs.push((pi, planner.as_str(), si, entry, trial));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut results: Vec<(usize, usize, usize, EpisodeLog)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(pi, planner, si, entry, trial)| {
                let start = start_pose(entry.world.scene(), cfg.seed, si, trial);
                let seed = derive_seed(cfg.seed, PLANNER_STREAM, job_index(si, trial));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut p = factory.build(planner)?;
                let mut log = run_episode(&entry.world, &entry.id, p.as_mut(), start, cfg.budget, seed, &mut rng)?;
                log.trial = trial;
                Ok((pi, si, trial, log))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    results.sort_by_key(|r| (r.0, r.1, r.2));
    let episodes: Vec<EpisodeLog> = results.into_iter().map(|r| r.3).collect();
    Ok(Report { summaries: summarize(&cfg.planners, &episodes), episodes })
}

impl Report {
    /// Flat per-planner table. Timing is left out so that identical runs
    /// produce identical files.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "planner,episodes,final_coverage_mean,final_coverage_std,auc_mean,auc_std,comp_pct_mean,comp_cm_mean,aborted\n",
        );
        for p in &self.summaries {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                p.planner,
                p.episodes,
                p.final_coverage_mean,
                p.final_coverage_std,
                p.auc_mean,
                p.auc_std,
                p.comp_pct_mean,
                p.comp_cm_mean,
                p.aborted
            )
            .expect("writing to a string");
        }
        s
    }

    pub fn episodes_csv(&self) -> String {
        let mut s = String::from(
            "scene,trial,planner,seed,start_x,start_z,start_yaw,steps,final_coverage,auc,comp_pct,comp_cm,collisions,aborted\n",
        );
        for e in &self.episodes {
            let start = e.records[0].pose;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
                e.scene_id,
                e.trial,
                e.planner,
                e.seed,
                start.cell.x,
                start.cell.z,
                start.yaw,
                e.executed_steps(),
                e.final_coverage,
                e.auc,
                e.comp_pct * 100.0,
                e.comp_dist * 100.0,
                e.collisions,
                e.aborted.as_deref().unwrap_or("").replace([',', '\n'], ";")
            )
            .expect("writing to a string");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "{:<22} {:>4} {:>17} {:>17} {:>8} {:>8}",
            "planner", "n", "final coverage", "AUC", "comp %", "comp cm"
        )
        .expect("writing to a string");
        for p in &self.summaries {
            writeln!(
                s,
                "{:<22} {:>4} {:>8.3} ± {:<6.3} {:>8.3} ± {:<6.3} {:>8.2} {:>8.2}{}",
                p.planner,
                p.episodes,
                p.final_coverage_mean,
                p.final_coverage_std,
                p.auc_mean,
                p.auc_std,
                p.comp_pct_mean,
                p.comp_cm_mean,
                if p.aborted > 0 { format!("  ({} aborted)", p.aborted) } else { String::new() }
            )
            .expect("writing to a string");
        }
        s
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for p in &self.summaries {
            s.push_str(&serde_json::to_string(p)?);
            s.push('\n');
        }
        Ok(s)
    }

    /// Writes `report.csv`, `report.txt`, `report.jsonl`, `episodes.csv` and
    /// one trace per episode under `traces/`.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out.join("traces"))?;
        std::fs::write(out.join("report.csv"), self.to_csv())?;
        std::fs::write(out.join("report.txt"), self.to_text())?;
        std::fs::write(out.join("report.jsonl"), self.to_jsonl()?)?;
        std::fs::write(out.join("episodes.csv"), self.episodes_csv())?;
        for e in &self.episodes {
            let name = format!("{}_{}_t{}.jsonl", e.planner, e.scene_id, e.trial);
            super::trace::write_trace(e, &out.join("traces").join(name))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::episode_auc;

    fn tiny_config(planners: &[&str]) -> BenchConfig {
        let mut cfg = BenchConfig::for_difficulty("simple").unwrap();
        cfg.scenes = 2;
        cfg.trials = 2;
        cfg.budget = 15;
        cfg.seed = 11;
        cfg.planners = planners.iter().map(|p| p.to_string()).collect();
        cfg
    }

    fn entries(cfg: &BenchConfig) -> Vec<SceneEntry> {
        eval_scenes(cfg).unwrap().into_iter().map(|(id, s)| SceneEntry { id, world: World::new(s).unwrap() }).collect()
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(5, 1, 3), derive_seed(5, 1, 3));
        assert_ne!(derive_seed(5, 1, 3), derive_seed(5, 2, 3));
        assert_ne!(derive_seed(5, 1, 3), derive_seed(5, 1, 4));
        assert_ne!(derive_seed(5, 1, 3), derive_seed(6, 1, 3));
    }

    #[test]
    fn aggregates_match_recomputation_from_logs() {
        let cfg = tiny_config(&["random", "fbe"]);
        let scenes = entries(&cfg);
        let report = evaluate(&cfg, &scenes, &PlannerFactory::from_config(&cfg).unwrap()).unwrap();
        assert_eq!(report.episodes.len(), 2 * 2 * 2);
        for s in &report.summaries {
            let logs: Vec<_> = report.episodes.iter().filter(|e| e.planner == s.planner).collect();
            let m = logs.iter().map(|e| e.final_coverage).sum::<f64>() / logs.len() as f64;
            assert!((m - s.final_coverage_mean).abs() < 1e-12);
            for e in logs {
                assert_eq!(episode_auc(&e.coverage_series(), e.budget).unwrap(), e.auc);
                assert!(e.executed_steps() <= cfg.budget);
                assert!(e.coverage_series().windows(2).all(|w| w[0] <= w[1]));
            }
        }
        // Fair start: both planners begin every (scene, trial) at one pose.
        for k in 0..4 {
            assert_eq!(report.episodes[k].records[0].pose, report.episodes[k + 4].records[0].pose);
        }
    }

    #[test]
    fn single_episode_has_zero_spread() {
        let mut cfg = tiny_config(&["fbe"]);
        cfg.scenes = 1;
        cfg.trials = 1;
        let report = evaluate(&cfg, &entries(&cfg), &PlannerFactory::from_config(&cfg).unwrap()).unwrap();
        assert_eq!(report.summaries[0].final_coverage_std, 0.0);
        assert_eq!(report.summaries[0].auc_std, 0.0);
    }

    #[test]
    fn learned_planners_require_a_checkpoint() {
        let cfg = tiny_config(&["nbp"]);
        assert!(matches!(PlannerFactory::from_config(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn reports_do_not_depend_on_thread_count() {
        let mut cfg = tiny_config(&["random", "greedy-nbv"]);
        let scenes = entries(&cfg);
        let factory = PlannerFactory::from_config(&cfg).unwrap();
        let one = evaluate(&cfg, &scenes, &factory).unwrap();
        cfg.threads = 3;
        let three = evaluate(&cfg, &scenes, &factory).unwrap();
        assert_eq!(one.to_csv(), three.to_csv());
        assert_eq!(one.episodes_csv(), three.episodes_csv());
    }
}

//! Episode runner, evaluation harness, configuration and reports.

mod config;
mod episode;
mod evaluate;
mod trace;

pub use config::{default_budget, BenchConfig, PLANNER_IDS};
pub use episode::{episode_auc, run_episode, EpisodeLog, StepRecord};
pub use evaluate::{
    derive_seed, eval_scenes, evaluate, generate_scenes, load_scene_dir, mean_std, start_pose, summarize,
    PlannerFactory, PlannerSummary, Report, SceneEntry, PLANNER_STREAM, SCENE_STREAM, START_STREAM, TRAIN_SCENE_STREAM,
};
pub use trace::{read_trace, trace_csv, trajectory_ppm, write_trace};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::TrainConfig;
use crate::worldgen::DifficultyParams;

/// Nesting limit for `include` directives.
const MAX_INCLUDE_DEPTH: usize = 16;

pub const PLANNER_IDS: [&str; 6] = ["random", "fbe", "greedy-nbv", "nbp-oracle", "nbp", "nbp-oracle-obstacles"];

/// Step budget per difficulty preset.
pub fn default_budget(difficulty: &str) -> Option<usize> {
    match difficulty {
        "simple" => Some(60),
        "normal" => Some(100),
        "hard" => Some(160),
        "insane" => Some(200),
        _ => None,
    }
}

/// Everything a benchmark or training run is configured by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub difficulty: String,
    /// Overrides of the preset's generator knobs.
    pub scene_params: DifficultyParams,
    pub scenes: usize,
    pub trials: usize,
    pub budget: usize,
    pub planners: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub greedy_radius: usize,
    pub oracle_stride: usize,
    pub beta: f64,
    pub checkpoint: Option<PathBuf>,
    /// Load scenes from this directory instead of generating them.
    pub scene_dir: Option<PathBuf>,
    pub train_scenes: usize,
    pub train: TrainConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::for_difficulty("normal").expect("built-in preset")
    }
}

impl BenchConfig {
    pub fn for_difficulty(difficulty: &str) -> Result<Self> {
        Ok(Self {
            difficulty: difficulty.to_owned(),
            scene_params: DifficultyParams::preset(difficulty)?,
            scenes: 10,
            trials: 5,
            budget: default_budget(difficulty).expect("preset has a budget"),
            planners: ["random", "fbe", "greedy-nbv", "nbp-oracle"].map(String::from).to_vec(),
            seed: 0,
            threads: 1,
            greedy_radius: 1,
            oracle_stride: 1,
            beta: crate::planning::DEFAULT_BETA,
            checkpoint: None,
            scene_dir: None,
            train_scenes: 10,
            train: TrainConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.scenes == 0 && self.scene_dir.is_none() {
            return bad("scenes must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.oracle_stride == 0 {
            return bad("oracle_stride must be at least 1".into());
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive".into());
        }
        if self.planners.is_empty() {
            return bad("no planners selected".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.planners {
            if !PLANNER_IDS.contains(&p.as_str()) {
                return bad(format!("unknown planner '{p}' (known: {})", PLANNER_IDS.join(", ")));
            }
            if !seen.insert(p) {
                return bad(format!("planner '{p}' listed twice"));
            }
        }
        self.scene_params.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file. Lines are `key = value`; `#` starts a comment;
    /// `include = other.cfg` splices another file (relative to the including
    /// file) at that point. Later assignments win.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path, 0)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text on top of the defaults; includes resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, base_dir, "<config>", 0)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_file(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!("include nesting too deep at {}", path.display())));
        }
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.apply_text(&text, base, &path.display().to_string(), depth)
    }

    fn apply_text(&mut self, text: &str, base_dir: &Path, origin: &str, depth: usize) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            if key == "include" {
                self.apply_file(&base_dir.join(value), depth + 1)?;
            } else {
                self.set(key, value).map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
            }
        }
        Ok(())
    }

    /// Sets one key. `difficulty` resets the generator knobs and the budget
    /// to the preset's, so put overrides after it.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid number '{v}'"))
        }
        fn range<T: std::str::FromStr>(v: &str) -> std::result::Result<(T, T), String> {
            let (a, b) = v.split_once(',').ok_or_else(|| format!("expected 'min, max', got '{v}'"))?;
            Ok((num(a.trim())?, num(b.trim())?))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(format!("invalid boolean '{v}'")),
            }
        }
        let sp = &mut self.scene_params;
        let tr = &mut self.train;
        match key {
            "difficulty" => {
                *sp = DifficultyParams::preset(value).map_err(|e| e.to_string())?;
                self.budget = default_budget(value).expect("preset has a budget");
                self.difficulty = value.to_owned();
            }
            "room_count_range" => sp.room_count_range = range(value)?,
            "room_size_range" => sp.room_size_range = range(value)?,
            "corridor_width" => sp.corridor_width = num(value)?,
            "door_width" => sp.door_width = num(value)?,
            "window_fraction" => sp.window_fraction = num(value)?,
            "branching_factor" => sp.branching_factor = num(value)?,
            "cell_size" => sp.cell_size = num(value)?,
            "wall_height" => sp.wall_height = num(value)?,
            "agent_height" => sp.agent_height = num(value)?,
            "scenes" => self.scenes = num(value)?,
            "trials" => self.trials = num(value)?,
            "budget" => self.budget = num(value)?,
            "planners" => {
                self.planners = value.split(',').map(|p| p.trim().to_owned()).filter(|p| !p.is_empty()).collect()
            }
            "seed" => self.seed = num(value)?,
            "threads" => self.threads = num(value)?,
            "greedy_radius" => self.greedy_radius = num(value)?,
            "oracle_stride" => self.oracle_stride = num(value)?,
            "beta" => {
                self.beta = num(value)?;
                tr.beta = self.beta;
            }
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "scene_dir" => self.scene_dir = Some(PathBuf::from(value)),
            "train_scenes" => self.train_scenes = num(value)?,
            "iterations" => tr.iterations = num(value)?,
            "curriculum_iterations" => tr.curriculum_iters = num(value)?,
            "trajectories_first" => tr.trajectories_first = num(value)?,
            "trajectories_later" => tr.trajectories_later = num(value)?,
            "rollout_length" => tr.rollout_length = num(value)?,
            "epochs" => tr.epochs = num(value)?,
            "learning_rate" => tr.learning_rate = num(value)?,
            "momentum" => tr.momentum = num(value)?,
            "batch_size" => tr.batch_size = num(value)?,
            "accumulation" => tr.accumulation = num(value)?,
            "plateau_patience" => tr.plateau_patience = num(value)?,
            "lr_decay" => tr.lr_decay = num(value)?,
            "stop_patience" => tr.stop_patience = num(value)?,
            "holdout_size" => tr.holdout_size = num(value)?,
            "replay" => tr.replay = flag(value)?,
            "train_seed" => tr.seed = num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }
}

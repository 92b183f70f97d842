use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, World};
use crate::coverage::{auc, completeness};
use crate::error::{Error, Result};
use crate::planning::{execute_path, Halt, Planner};
use crate::sensor::Pose;

/// Upper bound on consecutive refused moves before an episode is aborted.
const MAX_IDLE_DECISIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0 is the initial observation; `k` is the k-th executed step.
    pub step: usize,
    pub pose: Pose,
    pub coverage: f64,
    /// Why execution stopped after this step, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halt: Option<Halt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scene_id: String,
    pub planner: String,
    pub seed: u64,
    #[serde(default)]
    pub trial: usize,
    pub budget: usize,
    pub records: Vec<StepRecord>,
    pub final_coverage: f64,
    pub auc: f64,
    pub comp_pct: f64,
    pub comp_dist: f64,
    /// Moves refused because the target cell was not traversable.
    pub collisions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    pub wall_time_s: f64,
}

impl EpisodeLog {
    pub fn executed_steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn coverage_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.coverage).collect()
    }
}

/// AUC over steps `1..=budget` of a series whose first entry is the initial
/// observation. With no executed steps the initial coverage stands in.
pub fn episode_auc(series: &[f64], budget: usize) -> Result<f64> {
    let first = *series.first().ok_or(Error::EmptySeries)?;
    if budget == 0 {
        return Ok(first);
    }
    if series.len() == 1 {
        return auc(&[first], budget);
    }
    auc(&series[1..], budget)
}

/// Runs `planner` from `start` until `budget` steps have been executed.
///
/// Each decision yields a path that is executed until it completes, hits a
/// refused move, or exhausts the budget. A decision that moves nothing and
/// was not refused costs one step in place, so every episode terminates.
pub fn run_episode(
    world: &World,
    scene_id: &str,
    planner: &mut dyn Planner,
    start: Pose,
    budget: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog> {
    let t0 = Instant::now();
    let mut state = AgentState::start(world, start)?;
    let mut records = vec![StepRecord { step: 0, pose: start, coverage: state.coverage(), halt: None }];
    let mut collisions = 0;
    let mut idle = 0;
    let mut aborted = None;
    while state.steps < budget {
        let remaining = budget - state.steps;
        let outcome =
            planner.plan(world, &state, rng).and_then(|path| execute_path(&mut state, &path, world, remaining));
        let out = match outcome {
            Ok(o) => o,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        let mut halt = out.halt;
        if out.halt == Halt::CollisionReplan {
            collisions += 1;
        }
        if out.executed == 0 {
            if out.halt == Halt::CollisionReplan {
                idle += 1;
                if idle > MAX_IDLE_DECISIONS {
                    aborted = Some("planner made no progress".into());
                    break;
                }
            } else {
                state.step_to(world, state.pose)?;
                halt = Halt::PathComplete;
            }
        } else {
            idle = 0;
        }
        for k in records.len()..state.history.len() {
            records.push(StepRecord {
                step: k,
                pose: state.history[k],
                coverage: crate::coverage::coverage_fraction(state.covered_counts[k], world.n_gt()),
                halt: None,
            });
        }
        if let Some(last) = records.last_mut() {
            if last.step > 0 {
                last.halt = Some(if state.steps >= budget { Halt::Budget } else { halt });
            }
        }
    }
    let series: Vec<f64> = records.iter().map(|r| r.coverage).collect();
    let (comp_pct, comp_dist) = completeness(world.gt_points(), &state.cloud.to_points(), world.coverage_config())?;
    Ok(EpisodeLog {
        scene_id: scene_id.to_owned(),
        planner: planner.name().to_owned(),
        seed,
        trial: 0,
        budget,
        final_coverage: state.coverage(),
        auc: episode_auc(&series, budget)?,
        records,
        comp_pct,
        comp_dist,
        collisions,
        aborted,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

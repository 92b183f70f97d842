use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{labels_from_coverage, obstacle_gt, TrainingSample};
use crate::agent::{AgentState, World};
use crate::coverage::coverage_fraction;
use crate::error::{Error, Result};
use crate::planning::{execute_path, Halt, Mode, NbpPlanner, ObstacleSource, Planner, Predictor};
use crate::progress::build_embedding_prefix;
use crate::sensor::Pose;

/// Refused moves in a row after which a rollout gives up.
const MAX_REFUSALS: usize = 1000;

/// A collected trajectory and the samples it produced.
pub struct Rollout {
    pub samples: Vec<TrainingSample>,
    pub state: AgentState,
}

/// Explores with Boltzmann-sampled goals from `predictor`, routed on the
/// true obstacle map, for `length` steps. After each executed segment one
/// sample is emitted per segment pose except the last, labeled with every
/// later pose of the segment.
pub fn rollout_collect(
    world: &World,
    predictor: Arc<dyn Predictor>,
    start: Pose,
    length: usize,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    if length == 0 {
        return Err(Error::InvalidParams("rollout length must be positive".into()));
    }
    let mut planner = NbpPlanner {
        name: "rollout".into(),
        predictor,
        mode: Mode::Sample,
        beta,
        obstacles: ObstacleSource::GroundTruth,
    };
    let mut state = AgentState::start(world, start)?;
    let mut samples = Vec::new();
    let mut refusals = 0;
    while state.steps < length {
        let seg_start = state.history.len() - 1;
        let path = planner.plan(world, &state, rng)?;
        let remaining = length - state.steps;
        let out = execute_path(&mut state, &path, world, remaining)?;
        if out.executed == 0 {
            if out.halt == Halt::CollisionReplan {
                refusals += 1;
                if refusals > MAX_REFUSALS {
                    break;
                }
                continue;
            }
            state.step_to(world, state.pose)?;
        }
        refusals = 0;
        let poses = &state.history[seg_start..];
        let cov: Vec<f64> =
            state.covered_counts[seg_start..].iter().map(|&c| coverage_fraction(c, world.n_gt())).collect();
        let labels = labels_from_coverage(poses, &cov, world.window())?;
        for (offset, value_labels) in labels.into_iter().enumerate() {
            let k = seg_start + offset;
            let pose = state.history[k];
            samples.push(TrainingSample {
                embedding: build_embedding_prefix(
                    &state.cloud,
                    Some(state.cloud_lens[k]),
                    &state.history[..=k],
                    pose,
                    world.window(),
                ),
                value_labels,
                obstacle_gt: obstacle_gt(world.scene(), pose, world.window()),
                step_index: k,
            });
        }
    }
    Ok(Rollout { samples, state })
}

use std::sync::Arc;

use super::loss::ValueTarget;
use super::model::Model;
use crate::agent::{AgentState, World};
use crate::error::{Error, Result};
use crate::labels::TrainingSample;
use crate::planning::{ObstacleMap, Prediction, Predictor, ValueMap};
use crate::progress::ExplorationEmbedding;
use crate::sensor::N_YAW;

/// Predictor backed by a trained [`Model`]. Value maps are in units of the
/// model's gain scale.
#[derive(Clone, Debug)]
pub struct LearnedPredictor {
    pub model: Arc<Model>,
}

impl LearnedPredictor {
    pub fn new(model: Arc<Model>) -> Self {
        Self { model }
    }

    pub fn predict_embedding(&self, world: &World, embedding: &ExplorationEmbedding) -> Result<Prediction> {
        let arch = self.model.arch;
        if embedding.width() != arch.width
            || embedding.height() != arch.height
            || embedding.channels() != arch.in_channels
        {
            return Err(Error::Shape("embedding does not match the model input".into()));
        }
        let out = self.model.forward(&embedding.to_input())?;
        let window = world.window();
        let center = embedding.center;
        let mut value_map = ValueMap::zeros(window, center);
        let px = arch.pixels();
        for v in 0..arch.height {
            for u in 0..arch.width {
                for yaw in 0..N_YAW {
                    let i = value_map.index(u, v, yaw);
                    value_map.values[i] = out.values[yaw * px + v * arch.width + u];
                }
            }
        }
        let probs = out.obstacle_logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
        Ok(Prediction { value_map, obstacle_map: ObstacleMap { probs, window: window.clone(), center } })
    }
}

impl Predictor for LearnedPredictor {
    fn predict(&self, world: &World, state: &AgentState) -> Result<Prediction> {
        self.predict_embedding(world, &state.embedding(world))
    }
}

/// Loss targets of a sample for a model with the given output size, gains
/// divided by `gain_scale`.
pub fn value_targets(sample: &TrainingSample, width: usize, height: usize, gain_scale: f64) -> Vec<ValueTarget> {
    sample
        .value_labels
        .iter()
        .map(|l| ValueTarget {
            index: l.yaw as usize * width * height + l.v as usize * width + l.u as usize,
            value: l.gain / gain_scale,
        })
        .collect()
}

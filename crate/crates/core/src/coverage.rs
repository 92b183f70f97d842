//! Surface coverage metrics against the ground-truth surfel set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::sensor::SurfelCloud;
use crate::spatial::SpatialIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    /// A ground-truth surfel is covered when a cloud point lies strictly
    /// closer than this.
    pub epsilon: f64,
    /// Distance threshold for the completeness percentage.
    pub comp_threshold: f64,
    /// Per-point cap on the nearest distance used by the completeness mean,
    /// which also makes the metric finite for an empty cloud.
    pub comp_dist_cap: f64,
}

impl CoverageConfig {
    pub fn for_cell_size(cell_size: f64) -> Self {
        Self { epsilon: cell_size, comp_threshold: cell_size / 2.0, comp_dist_cap: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.comp_threshold > 0.0 && self.comp_dist_cap > 0.0) {
            return Err(Error::InvalidParams("coverage thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Number of ground-truth points with a cloud point strictly within `epsilon`.
pub fn covered_count(gt: &[Point3], cloud: &[Point3], epsilon: f64) -> usize {
    if cloud.is_empty() {
        return 0;
    }
    let index = SpatialIndex::new(cloud.to_vec(), epsilon);
    gt.iter().filter(|&&g| index.any_within(g, epsilon)).count()
}

/// Coverage fraction from a covered count; every coverage value in the crate
/// goes through this so differences of coverages are reproducible bit for bit.
pub fn coverage_fraction(covered: usize, total: usize) -> f64 {
    covered as f64 / total as f64
}

pub fn coverage(gt: &[Point3], cloud: &[Point3], cfg: &CoverageConfig) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    cfg.validate()?;
    Ok(coverage_fraction(covered_count(gt, cloud, cfg.epsilon), gt.len()))
}

/// `Cov(cloud_g) - Cov(cloud_t)`; requires `cloud_g` to contain `cloud_t`.
pub fn coverage_gain(gt: &[Point3], cloud_t: &SurfelCloud, cloud_g: &SurfelCloud, cfg: &CoverageConfig) -> Result<f64> {
    if !cloud_g.contains_cloud(cloud_t) {
        return Err(Error::Precondition("later cloud must contain the earlier cloud".into()));
    }
    let after = coverage(gt, &cloud_g.to_points(), cfg)?;
    let before = coverage(gt, &cloud_t.to_points(), cfg)?;
    Ok(after - before)
}

/// Mean coverage over steps `1..=horizon`, padding a short series with its
/// final value.
pub fn auc(series: &[f64], horizon: usize) -> Result<f64> {
    let last = *series.last().ok_or(Error::EmptySeries)?;
    if horizon == 0 || series.len() > horizon {
        return Err(Error::Precondition(format!("series of length {} does not fit horizon {horizon}", series.len())));
    }
    let sum: f64 = series.iter().sum::<f64>() + last * (horizon - series.len()) as f64;
    Ok(sum / horizon as f64)
}

/// `(comp_pct, comp_dist)`: the fraction of ground-truth points whose nearest
/// cloud point is closer than `comp_threshold`, and the mean nearest distance
/// with each term capped at `comp_dist_cap`.
pub fn completeness(gt: &[Point3], cloud: &[Point3], cfg: &CoverageConfig) -> Result<(f64, f64)> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    cfg.validate()?;
    let index = SpatialIndex::new(cloud.to_vec(), cfg.comp_threshold.max(cfg.comp_dist_cap / 4.0));
    let mut hits = 0usize;
    let mut total = 0.0;
    for &g in gt {
        let d = index.nearest(g, cfg.comp_dist_cap).map_or(cfg.comp_dist_cap, |(_, d)| d);
        if d < cfg.comp_threshold {
            hits += 1;
        }
        total += d.min(cfg.comp_dist_cap);
    }
    Ok((coverage_fraction(hits, gt.len()), total / gt.len() as f64))
}

/// Incremental coverage of a growing cloud: a covered flag per ground-truth
/// surfel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageTracker {
    covered: Vec<bool>,
    count: usize,
}

impl CoverageTracker {
    pub fn new(n_gt: usize) -> Self {
        Self { covered: vec![false; n_gt], count: 0 }
    }

    pub fn total(&self) -> usize {
        self.covered.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn coverage(&self) -> f64 {
        coverage_fraction(self.count, self.covered.len())
    }

    pub fn is_covered(&self, id: u32) -> bool {
        self.covered[id as usize]
    }

    pub fn flags(&self) -> &[bool] {
        &self.covered
    }

    /// Marks `ids` covered and returns how many were new.
    pub fn absorb(&mut self, ids: &[u32]) -> usize {
        let before = self.count;
        for &id in ids {
            let slot = &mut self.covered[id as usize];
            if !*slot {
                *slot = true;
                self.count += 1;
            }
        }
        self.count - before
    }

    /// Number of `ids` not yet covered, without marking them.
    pub fn gain_of(&self, ids: &[u32]) -> usize {
        ids.iter().filter(|&&id| !self.covered[id as usize]).count()
    }
}

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::{EpisodeLog, StepRecord};
use crate::error::{Error, Result};
use crate::geom::Cell;
use crate::worldgen::Scene;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum TraceLine {
    Header {
        scene_id: String,
        planner: String,
        seed: u64,
        trial: usize,
        budget: usize,
    },
    Step(StepRecord),
    Summary {
        final_coverage: f64,
        auc: f64,
        comp_pct: f64,
        comp_dist: f64,
        collisions: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aborted: Option<String>,
        wall_time_s: f64,
    },
}

/// Writes an episode as JSON lines: a header, one line per step record
/// (step 0 is the initial observation) and a summary.
pub fn write_trace(log: &EpisodeLog, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = TraceLine::Header {
        scene_id: log.scene_id.clone(),
        planner: log.planner.clone(),
        seed: log.seed,
        trial: log.trial,
        budget: log.budget,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for r in &log.records {
        writeln!(w, "{}", serde_json::to_string(&TraceLine::Step(r.clone()))?)?;
    }
    let summary = TraceLine::Summary {
        final_coverage: log.final_coverage,
        auc: log.auc,
        comp_pct: log.comp_pct,
        comp_dist: log.comp_dist,
        collisions: log.collisions,
        aborted: log.aborted.clone(),
        wall_time_s: log.wall_time_s,
    };
    writeln!(w, "{}", serde_json::to_string(&summary)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<EpisodeLog> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut log: Option<EpisodeLog> = None;
    let mut finished = false;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format(format!("{}:{}: {m}", path.display(), n + 1));
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
        match (parsed, log.as_mut()) {
            (TraceLine::Header { scene_id, planner, seed, trial, budget }, None) => {
                log = Some(EpisodeLog {
                    scene_id,
                    planner,
                    seed,
                    trial,
                    budget,
                    records: Vec::new(),
                    final_coverage: 0.0,
                    auc: 0.0,
                    comp_pct: 0.0,
                    comp_dist: 0.0,
                    collisions: 0,
                    aborted: None,
                    wall_time_s: 0.0,
                })
            }
            (TraceLine::Step(r), Some(l)) if !finished => {
                if r.step != l.records.len() {
                    return Err(bad("steps out of order"));
                }
                l.records.push(r);
            }
            (
                TraceLine::Summary { final_coverage, auc, comp_pct, comp_dist, collisions, aborted, wall_time_s },
                Some(l),
            ) if !finished => {
                l.final_coverage = final_coverage;
                l.auc = auc;
                l.comp_pct = comp_pct;
                l.comp_dist = comp_dist;
                l.collisions = collisions;
                l.aborted = aborted;
                l.wall_time_s = wall_time_s;
                finished = true;
            }
            _ => return Err(bad("unexpected record")),
        }
    }
    match log {
        Some(l) if finished && !l.records.is_empty() => Ok(l),
        _ => Err(Error::Format(format!("{}: incomplete trace", path.display()))),
    }
}

/// Coverage-versus-step table with the pose of every step; one row per
/// executed step plus the initial observation.
pub fn trace_csv(log: &EpisodeLog) -> String {
    let mut s = String::from("step,x,z,yaw,coverage,halt\n");
    for r in &log.records {
        let halt = r.halt.map(|h| serde_json::to_string(&h).expect("plain enum").replace('"', "")).unwrap_or_default();
        writeln!(s, "{},{},{},{},{:.6},{}", r.step, r.pose.cell.x, r.pose.cell.z, r.pose.yaw, r.coverage, halt)
            .expect("writing to a string");
    }
    s
}

/// Binary PPM of the trajectory drawn over the scene plan (walls dark,
/// navigable cells light), visited cells shaded from blue (early) to red
/// (late), the start green. Without a scene the trajectory's bounding box
/// is drawn on gray.
pub fn trajectory_ppm(log: &EpisodeLog, scene: Option<&Scene>, scale: usize) -> Vec<u8> {
    let scale = scale.max(1);
    let (x0, z0, w, h) = match scene {
        Some(s) => (0, 0, s.width(), s.height()),
        None => {
            let xs = log.records.iter().map(|r| r.pose.cell.x);
            let zs = log.records.iter().map(|r| r.pose.cell.z);
            let (xmin, xmax) = (xs.clone().min().unwrap_or(0), xs.max().unwrap_or(0));
            let (zmin, zmax) = (zs.clone().min().unwrap_or(0), zs.max().unwrap_or(0));
            (xmin - 1, zmin - 1, (xmax - xmin + 3) as usize, (zmax - zmin + 3) as usize)
        }
    };
    let mut px = vec![[128u8, 128, 128]; w * h];
    if let Some(s) = scene {
        for (i, p) in px.iter_mut().enumerate() {
            let c = Cell::new((i % w) as i32, (i / w) as i32);
            *p = if s.is_navigable(c) {
                [235, 235, 235]
            } else if s.is_wall(c) {
                [40, 40, 40]
            } else {
                [90, 90, 90]
            };
        }
    }
    let n = log.records.len().max(2) - 1;
    for (k, r) in log.records.iter().enumerate() {
        let (x, z) = (r.pose.cell.x - x0, r.pose.cell.z - z0);
        if x < 0 || z < 0 || x as usize >= w || z as usize >= h {
            continue;
        }
        let t = k as f64 / n as f64;
        px[z as usize * w + x as usize] = [(255.0 * t) as u8, 40, (255.0 * (1.0 - t)) as u8];
    }
    if let Some(first) = log.records.first() {
        let (x, z) = (first.pose.cell.x - x0, first.pose.cell.z - z0);
        if x >= 0 && z >= 0 && (x as usize) < w && (z as usize) < h {
            px[z as usize * w + x as usize] = [0, 200, 0];
        }
    }
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for row in 0..h * scale {
        for col in 0..w * scale {
            out.extend_from_slice(&px[(row / scale) * w + col / scale]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::World;
    use crate::bench::run_episode;
    use crate::planning::FbePlanner;
    use crate::sensor::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trace_round_trips_and_exports() {
        let plan = "########\n#......#\n#......#\n#......#\n########";
        let world = World::new(Scene::from_ascii(plan, 0.5, 3.0, 1.65, None).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = Pose::new(Cell::new(2, 2), 0);
        let log = run_episode(&world, "room", &mut FbePlanner::new(), start, 12, 1, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace(&log, &path).unwrap();
        assert_eq!(read_trace(&path).unwrap(), log);

        let csv = trace_csv(&log);
        assert_eq!(csv.lines().count(), 1 + log.executed_steps() + 1);
        let ppm = trajectory_ppm(&log, Some(world.scene()), 4);
        assert!(ppm.starts_with(b"P6\n32 20\n255\n"));
        assert_eq!(ppm.len(), "P6\n32 20\n255\n".len() + 32 * 20 * 3);
        assert!(trajectory_ppm(&log, None, 1).starts_with(b"P6\n"));

        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }
}

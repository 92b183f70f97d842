use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::geom::bfs_distances;
use crate::geom::UNREACHED;
use crate::worldgen::{generate_scene, DifficultyParams, Scene};

fn room(w: usize, h: usize) -> Scene {
    let mut plan = "#".repeat(w + 2) + "\n";
    for _ in 0..h {
        plan += &format!("#{}#\n", ".".repeat(w));
    }
    plan += &"#".repeat(w + 2);
    Scene::from_ascii(&plan, 0.5, 3.0, 1.65, None).unwrap()
}

fn window() -> WindowSpec {
    WindowSpec::desk(0.5, 3.0)
}

#[test]
fn two_cell_boltzmann_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let hits = (0..n).filter(|_| boltzmann_index(&[1.0, 0.0], 1.0, &mut rng).unwrap() == 0).count();
    let p = hits as f64 / n as f64;
    let expected = 1.0 / (1.0 + (-1.0f64).exp());
    assert!((expected - 0.7311).abs() < 1e-4);
    assert!((p - expected).abs() < 0.015, "{p}");
}

#[test]
fn uniform_map_samples_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = 16;
    let n = 10_000;
    let mut counts = vec![0usize; k];
    for _ in 0..n {
        counts[boltzmann_index(&vec![0.3; k], 0.1, &mut rng).unwrap()] += 1;
    }
    let e = n as f64 / k as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2} p {p}");
}

#[test]
fn cold_boltzmann_is_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
    let best = argmax_index(&values);
    let hits = (0..10_000).filter(|_| boltzmann_index(&values, 1e-6, &mut rng).unwrap() == best).count();
    assert!(hits as f64 / 10_000.0 >= 0.999);
}

#[test]
fn boltzmann_rejects_bad_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(boltzmann_index(&[1.0, f64::NAN], 1.0, &mut rng).is_err());
    assert!(boltzmann_index(&[1.0], 0.0, &mut rng).is_err());
}

#[test]
fn constant_shift_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
    let shifted: Vec<f64> = values.iter().map(|v| v + 7.5).collect();
    assert_eq!(argmax_index(&values), argmax_index(&shifted));
    let mut a = ChaCha8Rng::seed_from_u64(5);
    let mut b = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        assert_eq!(boltzmann_index(&values, 0.2, &mut a).unwrap(), boltzmann_index(&shifted, 0.2, &mut b).unwrap());
    }
}

#[test]
fn argmax_rules() {
    let w = window();
    let center = Pose::new(Cell::new(40, 40), 0);
    let mut m = ValueMap::zeros(&w, center);
    let i = m.index(3, 5, 6);
    m.values[i] = 0.2;
    assert_eq!(argmax_goal(&m), Pose::new(Cell::new(40 + 3 - 16, 40 + 5 - 16), 6));
    let j = m.index(1, 0, 2);
    m.values[j] = 0.2;
    assert_eq!(argmax_index(&m.values), j);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let vals: Vec<f64> = (0..100).map(|_| rng.random_range(0..10) as f64).collect();
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(argmax_index(&vals), vals.iter().position(|&v| v == max).unwrap());
    }
}

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> Grid<bool> {
    Grid::from_vec(w, h, (0..w * h).map(|_| rng.random::<f64>() > p).collect())
}

#[test]
fn dijkstra_basics() {
    let open = Grid::new(6, 4, true);
    assert_eq!(dijkstra_path(&open, Cell::new(1, 1), Cell::new(1, 1)).unwrap(), Some(vec![Cell::new(1, 1)]));
    let p = dijkstra_path(&open, Cell::new(0, 0), Cell::new(3, 0)).unwrap().unwrap();
    assert_eq!(p, (0..4).map(|x| Cell::new(x, 0)).collect::<Vec<_>>());
    let mut sealed = open.clone();
    for c in Cell::new(4, 2).neighbors4() {
        sealed.set(c, false);
    }
    assert_eq!(dijkstra_path(&sealed, Cell::new(0, 0), Cell::new(4, 2)).unwrap(), None);
    let mut blocked_goal = open.clone();
    blocked_goal.set(Cell::new(5, 3), false);
    assert_eq!(dijkstra_path(&blocked_goal, Cell::new(0, 0), Cell::new(5, 3)).unwrap(), None);
    assert!(matches!(dijkstra_path(&blocked_goal, Cell::new(5, 3), Cell::new(0, 0)), Err(Error::StartBlocked(_))));
}

#[test]
fn dijkstra_costs_match_bfs_and_subpaths_are_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let g = random_grid(&mut rng, 12, 10, 0.3);
        let free: Vec<Cell> = g.cells().filter(|&c| g.is_set(c)).collect();
        if free.len() < 2 {
            continue;
        }
        let s = free[rng.random_range(0..free.len())];
        let bfs = bfs_distances(&g, s);
        let tree = shortest_path_tree(&g, s).unwrap();
        for &t in &free {
            let d = *bfs.get(t).unwrap();
            match tree.path_to(t) {
                None => assert_eq!(d, UNREACHED),
                Some(path) => {
                    assert_eq!(path.len() as u32 - 1, d);
                    for w in path.windows(2) {
                        assert_eq!(w[0].manhattan(w[1]), 1);
                    }
                    let (i, j) = (path.len() / 3, path.len() - 1);
                    let sub = dijkstra_path(&g, path[i], path[j]).unwrap().unwrap();
                    assert_eq!(sub.len(), j - i + 1);
                }
            }
        }
    }
}

#[test]
fn orientations_follow_mode() {
    let w = window();
    let center = Pose::new(Cell::new(40, 40), 0);
    let mut m = ValueMap::zeros(&w, center);
    let cells = vec![Cell::new(40, 40), Cell::new(41, 40), Cell::new(42, 40)];
    for c in &cells {
        let (u, v) = w.pixel_of_cell(center.cell, *c).unwrap();
        let i = m.index(u, v, 5);
        m.values[i] = 10.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let path = assign_orientations(&cells, &m, Mode::Argmax, 0.1, &mut rng).unwrap();
    assert!(path.iter().all(|p| p.yaw == 5));
    let cold = assign_orientations(&cells, &m, Mode::Sample, 1e-6, &mut rng).unwrap();
    assert_eq!(cold, path);
    assert!(matches!(
        assign_orientations(&[Cell::new(80, 40)], &m, Mode::Argmax, 0.1, &mut rng),
        Err(Error::OutsideWindow(_))
    ));
    let flat = ValueMap::zeros(&w, center);
    let mut counts = [0usize; N_YAW];
    for _ in 0..10_000 {
        let p = assign_orientations(&cells[..1], &flat, Mode::Sample, 0.1, &mut rng).unwrap();
        counts[p[0].yaw as usize] += 1;
    }
    let e = 10_000.0 / N_YAW as f64;
    for c in counts {
        // 3 sigma of a binomial(10000, 1/8)
        assert!((c as f64 - e).abs() < 3.0 * (10_000.0 * 0.125 * 0.875f64).sqrt());
    }
}

fn world_of(scene: Scene) -> World {
    World::new(scene).unwrap()
}

#[test]
fn execute_path_examples() {
    let world = world_of(room(8, 3));
    let start = Pose::new(Cell::new(1, 1), 0);
    let straight: Path = (1..=5).map(|x| Pose::new(Cell::new(x, 1), 0)).collect();

    let mut s = AgentState::start(&world, start).unwrap();
    let out = execute_path(&mut s, &straight, &world, 100).unwrap();
    assert_eq!(out, ExecOutcome { executed: 4, halt: Halt::PathComplete });
    assert_eq!(s.steps, 4);

    let mut s = AgentState::start(&world, start).unwrap();
    let into_wall = vec![start, Pose::new(Cell::new(1, 0), 0)];
    let out = execute_path(&mut s, &into_wall, &world, 100).unwrap();
    assert_eq!(out, ExecOutcome { executed: 0, halt: Halt::CollisionReplan });
    assert_eq!(s.steps, 0);
    assert!(s.bumped.contains(&Cell::new(1, 0)));

    let mut s = AgentState::start(&world, start).unwrap();
    let mut long: Path = (1..=8).map(|x| Pose::new(Cell::new(x, 1), 0)).collect();
    long.extend([Pose::new(Cell::new(8, 2), 2), Pose::new(Cell::new(7, 2), 4)]);
    assert_eq!(long.len(), 10);
    let out = execute_path(&mut s, &long, &world, 2).unwrap();
    assert_eq!(out, ExecOutcome { executed: 2, halt: Halt::Budget });
}

#[test]
fn frontier_examples() {
    let mut k = KnownMap::new(6, 6);
    for c in Grid::new(6, 6, ()).cells().collect::<Vec<_>>() {
        k.set(c, CellKnowledge::Free);
    }
    assert_eq!(frontier_goal(&k, Cell::new(0, 0)), None);
    k.set(Cell::new(3, 3), CellKnowledge::Unknown);
    assert_eq!(frontier_goal(&k, Cell::new(3, 0)), Some(Cell::new(3, 2)));
    assert_eq!(frontier_goal(&k, Cell::new(0, 3)), Some(Cell::new(2, 3)));
}

#[test]
fn nearer_frontier_wins() {
    // a corridor with unknown space 3 cells to the left and 7 to the right
    let mut k = KnownMap::new(13, 1);
    for x in 1..12 {
        k.set(Cell::new(x, 0), CellKnowledge::Free);
    }
    let agent = Cell::new(4, 0);
    let goal = frontier_goal(&k, agent).unwrap();
    assert_eq!(goal, Cell::new(1, 0));
    assert_eq!(goal.manhattan(agent), 3);
}

#[test]
fn frontier_is_at_minimal_bfs_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..40 {
        let mut k = KnownMap::new(10, 10);
        let mut free = Grid::new(10, 10, false);
        for c in free.cells().collect::<Vec<_>>() {
            let r: f64 = rng.random();
            let state = if r < 0.6 {
                free.set(c, true);
                CellKnowledge::Free
            } else if r < 0.8 {
                CellKnowledge::Obstacle
            } else {
                CellKnowledge::Unknown
            };
            k.set(c, state);
        }
        let Some(agent) = free.cells().find(|&c| free.is_set(c)) else {
            continue;
        };
        let dist = bfs_distances(&free, agent);
        let frontier_dist = free
            .cells()
            .filter(|&c| free.is_set(c) && c.neighbors4().iter().any(|&n| k.is_unknown(n)))
            .map(|c| *dist.get(c).unwrap())
            .filter(|&d| d != UNREACHED)
            .min();
        match frontier_goal(&k, agent) {
            None => assert_eq!(frontier_dist, None),
            Some(g) => assert_eq!(Some(*dist.get(g).unwrap()), frontier_dist),
        }
    }
}

#[test]
fn random_policy_is_uniform_and_safe() {
    let world = world_of(room(5, 5));
    // corner cell: only +x and +z are open
    let s = AgentState::start(&world, Pose::new(Cell::new(1, 1), 0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..10_000 {
        let p = random_policy(&world, &s, &mut rng);
        assert!(world.scene().is_navigable(p.cell));
        *counts.entry(p).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 16);
    let e = 10_000.0 / 16.0;
    let sd = (10_000.0 * (1.0 / 16.0) * (15.0 / 16.0f64)).sqrt();
    assert!(counts.values().all(|&c| (c as f64 - e).abs() < 3.5 * sd));
    let mut a = ChaCha8Rng::seed_from_u64(3);
    let mut b = ChaCha8Rng::seed_from_u64(3);
    assert_eq!(random_policy(&world, &s, &mut a), random_policy(&world, &s, &mut b));
}

#[test]
fn greedy_behaviour() {
    let world = world_of(room(6, 6));
    let start = Pose::new(Cell::new(3, 3), 0);
    let mut s = AgentState::start(&world, start).unwrap();
    // brute force one-step gains over the candidate list
    let (goal, _) = greedy_nbv_goal(&world, &s, 1).unwrap();
    let mut best = (0usize, start);
    let mut candidates: Vec<Cell> = vec![start.cell];
    let mut ns: Vec<Cell> = start.cell.neighbors4().into_iter().filter(|&c| world.scene().is_navigable(c)).collect();
    ns.sort_by_key(|c| world.scene().navgrid().index(*c));
    candidates.extend(ns);
    let mut first = true;
    for c in candidates {
        for y in 0..8 {
            let p = Pose::new(c, y);
            let mut probe = s.clone();
            let before = probe.tracker.count();
            probe.step_to(&world, p).unwrap();
            let g = probe.tracker.count() - before;
            if first || g > best.0 {
                best = (g, p);
                first = false;
            }
        }
    }
    assert_eq!(goal, best.1);
    assert!(best.0 > 0);

    // radius 0 only turns in place
    let (g0, path0) = greedy_nbv_goal(&world, &s, 0).unwrap();
    assert_eq!(g0.cell, start.cell);
    assert_eq!(path0.len(), 2);

    // once everything nearby is seen, greedy stalls on the lowest index
    for c in world.scene().navigable_cells() {
        for y in 0..8 {
            let v = world.view(Pose::new(c, y)).unwrap();
            s.tracker.absorb(&v.covered);
        }
    }
    let (stall, _) = greedy_nbv_goal(&world, &s, 1).unwrap();
    assert_eq!(stall, Pose::new(start.cell, 0));
}

struct NoisePredictor(u64);

impl Predictor for NoisePredictor {
    fn predict(&self, world: &World, state: &AgentState) -> Result<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0 + state.steps as u64);
        let mut m = ValueMap::zeros(world.window(), state.pose);
        m.values.iter_mut().for_each(|v| *v = rng.random());
        let probs = (0..world.window().pixels()).map(|_| rng.random()).collect();
        Ok(Prediction {
            value_map: m,
            obstacle_map: ObstacleMap { probs, window: world.window().clone(), center: state.pose },
        })
    }
}

#[test]
fn true_obstacle_map_never_collides() {
    let scene = generate_scene(&DifficultyParams::preset("normal").unwrap().with_seed(12)).unwrap();
    let world = world_of(scene);
    let start = Pose::new(world.scene().navigable_cells()[0], 0);
    let mut planner = NbpPlanner {
        name: "nbp-test".into(),
        predictor: Arc::new(NoisePredictor(1)),
        mode: Mode::Sample,
        beta: 0.1,
        obstacles: ObstacleSource::GroundTruth,
    };
    let mut s = AgentState::start(&world, start).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..15 {
        let path = planner.plan(&world, &s, &mut rng).unwrap();
        let out = execute_path(&mut s, &path, &world, 1000).unwrap();
        assert_ne!(out.halt, Halt::CollisionReplan);
    }
    assert!(s.steps > 0);
}

#[test]
fn predicted_obstacles_can_bump_and_replan() {
    let scene = generate_scene(&DifficultyParams::preset("simple").unwrap().with_seed(14)).unwrap();
    let world = world_of(scene);
    let start = Pose::new(world.scene().navigable_cells()[5], 0);
    let mut planner = NbpPlanner {
        name: "nbp-test".into(),
        predictor: Arc::new(NoisePredictor(2)),
        mode: Mode::Argmax,
        beta: 0.1,
        obstacles: ObstacleSource::Predicted,
    };
    let mut s = AgentState::start(&world, start).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut bumps = BTreeSet::new();
    for _ in 0..40 {
        let path = planner.plan(&world, &s, &mut rng).unwrap();
        for w in path.windows(2) {
            assert!(w[0].cell.manhattan(w[1].cell) <= 1);
        }
        let out = execute_path(&mut s, &path, &world, 1000).unwrap();
        if out.halt == Halt::CollisionReplan {
            // the same refused cell is never tried twice
            let blocked = s.bumped.iter().copied().find(|c| !bumps.contains(c)).unwrap();
            bumps.insert(blocked);
        }
    }
    for c in &s.history {
        assert!(world.scene().is_navigable(c.cell));
    }
}

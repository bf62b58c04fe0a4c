//! Privileged shortest-path expert: proportional path tracking, geodesic
//! subgoal sampling, oracle action rollouts, and route validation.

use crate::world::{
    is_collision, polyline_length, render, shortest_path, step_kinematic, Camera, Embodiment,
    Observation, OccupancyScene, Pose, Twist, WorldError,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("oracle rollout collided at step {step}")]
    RolloutCollision { step: usize },
    #[error("route manifest line {line} is malformed: {reason}")]
    MalformedManifest { line: usize, reason: String },
}

/// Expert controller and subgoal-sampling parameters.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Minimum geodesic gap between consecutive subgoals, meters.
    pub d_min: f64,
    /// Maximum geodesic gap between consecutive subgoals, meters.
    pub d_max: f64,
    /// Planning clearance to obstacles, meters (agent radius + margin).
    pub clearance: f64,
    /// Proportional heading gain, 1/s.
    pub kp_heading: f64,
    /// Waypoint rollout horizon, steps.
    pub horizon: usize,
    /// Closed-loop step budget for validation and episodes.
    pub max_steps: usize,
    /// Arrival radius for validation and evaluation, meters.
    pub success_radius: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            d_min: 0.5,
            d_max: 3.0,
            clearance: 0.3,
            kp_heading: 2.0,
            horizon: 5,
            max_steps: 500,
            success_radius: 0.4,
        }
    }
}

impl OracleConfig {
    /// Tracking lookahead: two control periods of forward motion.
    pub fn lookahead(&self, emb: &Embodiment) -> f64 {
        2.0 * emb.v_max * emb.dt
    }
}

/// A map node sampled along a route: privileged pose (labeling/eval only)
/// plus the observation captured there.
#[derive(Debug, Clone)]
pub struct Subgoal {
    pub pose: Pose,
    pub observation: Observation,
    pub index: usize,
}

/// A validated training/evaluation route.
#[derive(Debug, Clone)]
pub struct RouteSpec {
    pub scene_seed: u64,
    pub start: Pose,
    pub goal: Pose,
    pub subgoals: Vec<Subgoal>,
}

/// Arc-length parametrization of a polyline: cumulative lengths per vertex.
fn cumulative_lengths(path: &[Pose]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(path.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in path.windows(2) {
        total += w[0].distance(&w[1]);
        acc.push(total);
    }
    acc
}

/// Point and tangent heading at arc length `s` along the polyline.
fn point_at_arc(path: &[Pose], cum: &[f64], s: f64) -> Pose {
    let total = *cum.last().unwrap();
    let s = s.clamp(0.0, total);
    // segment containing s
    let mut i = match cum.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i + 1 >= path.len() {
        i = path.len() - 2;
    }
    let seg = cum[i + 1] - cum[i];
    let t = if seg > 1e-12 { (s - cum[i]) / seg } else { 0.0 };
    let a = &path[i];
    let b = &path[i + 1];
    let heading = (b.y - a.y).atan2(b.x - a.x);
    Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), heading)
}

/// Arc length of the path point closest to `pose` (projection).
fn project_onto_path(path: &[Pose], cum: &[f64], pose: &Pose) -> f64 {
    if path.len() == 1 {
        return 0.0;
    }
    let mut best_d2 = f64::INFINITY;
    let mut best_s = 0.0;
    for i in 0..path.len() - 1 {
        let (ax, ay) = (path[i].x, path[i].y);
        let (bx, by) = (path[i + 1].x, path[i + 1].y);
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 1e-18 {
            (((pose.x - ax) * dx + (pose.y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (px, py) = (ax + t * dx, ay + t * dy);
        let d2 = (pose.x - px) * (pose.x - px) + (pose.y - py) * (pose.y - py);
        if d2 < best_d2 {
            best_d2 = d2;
            best_s = cum[i] + t * (cum[i + 1] - cum[i]);
        }
    }
    best_s
}

/// Samples subgoals along a path: each next subgoal sits at an arc-length
/// increment drawn uniformly from [d_min, d_max]; the final subgoal is
/// forced onto the path end. Subgoal headings follow the local tangent and
/// each subgoal carries its rendered observation.
pub fn sample_subgoals(
    scene: &OccupancyScene,
    path: &[Pose],
    cfg: &OracleConfig,
    camera: &Camera,
    light_level: f32,
    seed: u64,
) -> Result<Vec<Subgoal>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cum = cumulative_lengths(path);
    let total = *cum.last().unwrap();
    let mut arcs: Vec<f64> = Vec::new();
    let mut s = 0.0;
    loop {
        s += rng.gen_range(cfg.d_min..=cfg.d_max);
        if s >= total - 1e-9 {
            break;
        }
        arcs.push(s);
    }
    arcs.push(total);
    let mut subgoals = Vec::with_capacity(arcs.len());
    for (index, &arc) in arcs.iter().enumerate() {
        let pose = point_at_arc(path, &cum, arc);
        let observation = render(scene, &pose, camera, light_level)?;
        subgoals.push(Subgoal {
            pose,
            observation,
            index,
        });
    }
    Ok(subgoals)
}

/// Proportional path-tracking control: steer toward the lookahead point,
/// slow with the cosine of the heading error, stop at the path end.
pub fn oracle_action(
    pose: &Pose,
    path: &[Pose],
    cfg: &OracleConfig,
    emb: &Embodiment,
) -> Twist {
    if path.is_empty() {
        return Twist::STOP;
    }
    let cum = cumulative_lengths(path);
    let total = *cum.last().unwrap();
    let proj = project_onto_path(path, &cum, pose);
    let target_arc = (proj + cfg.lookahead(emb)).min(total);
    let target = point_at_arc(path, &cum, target_arc);
    let dist = pose.distance(&target);
    if dist < 1e-9 {
        return Twist::STOP;
    }
    let alpha = crate::world::wrap_angle((target.y - pose.y).atan2(target.x - pose.x) - pose.theta);
    let omega = (cfg.kp_heading * alpha).clamp(-emb.omega_max, emb.omega_max);
    let v = emb.v_max * alpha.cos().max(0.0);
    Twist::new(v, omega)
}

/// Rolls the oracle out `horizon` steps from `pose` and returns the visited
/// poses expressed in the frame of the starting pose.
pub fn rollout_oracle(
    scene: &OccupancyScene,
    pose: &Pose,
    path: &[Pose],
    cfg: &OracleConfig,
    emb: &Embodiment,
) -> Result<Vec<Pose>, OracleError> {
    let start = *pose;
    let mut cur = *pose;
    let mut rel = Vec::with_capacity(cfg.horizon);
    for step in 0..cfg.horizon {
        let twist = oracle_action(&cur, path, cfg, emb);
        let (next, collided) = step_kinematic(scene, &cur, &twist, emb)?;
        if collided {
            return Err(OracleError::RolloutCollision { step });
        }
        cur = next;
        rel.push(start.relative_to(&cur));
    }
    Ok(rel)
}

/// Closed-loop simulation of the oracle from `start` toward `goal` along a
/// freshly planned path. Returns the executed poses when the goal is
/// reached; None on timeout or any collision.
fn simulate_oracle(
    scene: &OccupancyScene,
    start: &Pose,
    goal: &Pose,
    cfg: &OracleConfig,
    emb: &Embodiment,
) -> Option<Vec<Pose>> {
    let path = shortest_path(scene, start, goal, cfg.clearance).ok()?;
    let mut cur = *start;
    let mut visited = vec![cur];
    for _ in 0..cfg.max_steps {
        if cur.distance(goal) <= cfg.success_radius {
            return Some(visited);
        }
        let twist = oracle_action(&cur, &path, cfg, emb);
        let (next, collided) = step_kinematic(scene, &cur, &twist, emb).ok()?;
        if collided {
            return None;
        }
        cur = next;
        visited.push(cur);
    }
    if cur.distance(goal) <= cfg.success_radius {
        Some(visited)
    } else {
        None
    }
}

/// True iff a clearance-respecting path exists and the closed-loop oracle
/// reaches within `success_radius` of the goal inside `max_steps` with zero
/// collisions.
pub fn validate_route(
    scene: &OccupancyScene,
    start: &Pose,
    goal: &Pose,
    cfg: &OracleConfig,
    emb: &Embodiment,
) -> bool {
    if is_collision(scene, start, emb.radius) || is_collision(scene, goal, emb.radius) {
        return false;
    }
    simulate_oracle(scene, start, goal, cfg, emb).is_some()
}

/// Draws a validated route on the scene: start/goal at traversable cell
/// centers, geodesic length within [min_len, max_len], start heading random,
/// subgoals sampled along the planned path. Returns None if no acceptable
/// route is found within the try budget.
#[allow(clippy::too_many_arguments)]
pub fn sample_route(
    scene: &OccupancyScene,
    scene_seed: u64,
    cfg: &OracleConfig,
    emb: &Embodiment,
    camera: &Camera,
    light_level: f32,
    min_len: f64,
    max_len: f64,
    seed: u64,
) -> Option<RouteSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<(u32, u32)> = (0..scene.height())
        .flat_map(|cy| (0..scene.width()).map(move |cx| (cx, cy)))
        .filter(|&(cx, cy)| scene.traversable(cx, cy, cfg.clearance))
        .collect();
    if candidates.len() < 2 {
        return None;
    }
    for _ in 0..60 {
        let (sx, sy) = candidates[rng.gen_range(0..candidates.len())];
        let (gx, gy) = candidates[rng.gen_range(0..candidates.len())];
        if (sx, sy) == (gx, gy) {
            continue;
        }
        let (sx_m, sy_m) = scene.center_of(sx, sy);
        let (gx_m, gy_m) = scene.center_of(gx, gy);
        let start = Pose::new(sx_m, sy_m, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let goal_tmp = Pose::new(gx_m, gy_m, 0.0);
        let d = match crate::world::geodesic_distance(scene, &start, &goal_tmp, cfg.clearance) {
            Ok(d) => d,
            Err(_) => continue,
        };
        if !d.is_finite() || d < min_len || d > max_len {
            continue;
        }
        let path = match shortest_path(scene, &start, &goal_tmp, cfg.clearance) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let goal = *path.last().unwrap();
        if !validate_route(scene, &start, &goal, cfg, emb) {
            continue;
        }
        let subgoals = match sample_subgoals(scene, &path, cfg, camera, light_level, seed ^ 0xa5a5) {
            Ok(s) => s,
            Err(_) => continue,
        };
        return Some(RouteSpec {
            scene_seed,
            start,
            goal,
            subgoals,
        });
    }
    None
}

/// One manifest line per route with fixed field order:
/// `scene_file seed sx sy st gx gy gt k x1 y1 t1 ... xk yk tk`.
pub fn manifest_line(scene_file: &str, route: &RouteSpec) -> String {
    let mut f = format!(
        "{} {} {:?} {:?} {:?} {:?} {:?} {:?} {}",
        scene_file,
        route.scene_seed,
        route.start.x,
        route.start.y,
        route.start.theta,
        route.goal.x,
        route.goal.y,
        route.goal.theta,
        route.subgoals.len()
    );
    for sg in &route.subgoals {
        f.push_str(&format!(" {:?} {:?} {:?}", sg.pose.x, sg.pose.y, sg.pose.theta));
    }
    f
}

/// Parsed manifest record (poses only; observations are re-rendered from
/// the scene when needed).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub scene_file: String,
    pub seed: u64,
    pub start: Pose,
    pub goal: Pose,
    pub subgoal_poses: Vec<Pose>,
}

pub fn parse_manifest_line(line: &str, line_no: usize) -> Result<ManifestRecord, OracleError> {
    let err = |reason: &str| OracleError::MalformedManifest {
        line: line_no,
        reason: reason.to_string(),
    };
    let mut it = line.split_whitespace();
    let scene_file = it.next().ok_or_else(|| err("missing scene file"))?.to_string();
    let next_f64 = |what: &str, it: &mut std::str::SplitWhitespace| -> Result<f64, OracleError> {
        it.next()
            .ok_or_else(|| err(&format!("missing {what}")))?
            .parse::<f64>()
            .map_err(|_| err(&format!("bad {what}")))
    };
    let seed = it
        .next()
        .ok_or_else(|| err("missing seed"))?
        .parse::<u64>()
        .map_err(|_| err("bad seed"))?;
    let sx = next_f64("start.x", &mut it)?;
    let sy = next_f64("start.y", &mut it)?;
    let st = next_f64("start.theta", &mut it)?;
    let gx = next_f64("goal.x", &mut it)?;
    let gy = next_f64("goal.y", &mut it)?;
    let gt = next_f64("goal.theta", &mut it)?;
    let k = it
        .next()
        .ok_or_else(|| err("missing subgoal count"))?
        .parse::<usize>()
        .map_err(|_| err("bad subgoal count"))?;
    let mut subgoal_poses = Vec::with_capacity(k);
    for _ in 0..k {
        let x = next_f64("subgoal.x", &mut it)?;
        let y = next_f64("subgoal.y", &mut it)?;
        let t = next_f64("subgoal.theta", &mut it)?;
        subgoal_poses.push(Pose::new(x, y, t));
    }
    if it.next().is_some() {
        return Err(err("trailing fields"));
    }
    Ok(ManifestRecord {
        scene_file,
        seed,
        start: Pose::new(sx, sy, st),
        goal: Pose::new(gx, gy, gt),
        subgoal_poses,
    })
}

/// Length of the route's planned path (for budgeting and SPL references).
pub fn route_path_length(
    scene: &OccupancyScene,
    route: &RouteSpec,
    cfg: &OracleConfig,
) -> Result<f64, OracleError> {
    let path = shortest_path(scene, &route.start, &route.goal, cfg.clearance)?;
    Ok(polyline_length(&path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scene, SceneCategory};

    fn corridor_scene(len_cells: u32) -> OccupancyScene {
        // a straight free corridor 9 cells tall, len_cells long
        let w = len_cells + 2;
        let h = 11u32;
        let n = (w * h) as usize;
        let mut occ = vec![false; n];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    occ[(y * w + x) as usize] = true;
                }
            }
        }
        OccupancyScene::from_parts(
            w,
            h,
            0.1,
            occ,
            vec![0.5; n],
            vec![0; n],
            SceneCategory::OpenSpace,
        )
    }

    fn straight_path(from: (f64, f64), to: (f64, f64)) -> Vec<Pose> {
        let heading = (to.1 - from.1).atan2(to.0 - from.0);
        vec![
            Pose::new(from.0, from.1, heading),
            Pose::new(to.0, to.1, heading),
        ]
    }

    #[test]
    fn short_path_yields_single_terminal_subgoal() {
        let scene = corridor_scene(60);
        let cfg = OracleConfig::default();
        let path = straight_path((0.3, 0.55), (0.6, 0.55));
        let sgs =
            sample_subgoals(&scene, &path, &cfg, &Camera::default(), 1.0, 5).unwrap();
        assert_eq!(sgs.len(), 1);
        assert!(sgs[0].pose.distance(path.last().unwrap()) < 1e-9);
    }

    #[test]
    fn subgoal_gaps_stay_within_bounds() {
        let scene = corridor_scene(110); // 11 m corridor
        let cfg = OracleConfig::default();
        let path = straight_path((0.5, 0.55), (10.5, 0.55));
        for seed in 0..8u64 {
            let sgs =
                sample_subgoals(&scene, &path, &cfg, &Camera::default(), 1.0, seed).unwrap();
            let mut prev = 0.0;
            for (i, sg) in sgs.iter().enumerate() {
                let arc = sg.pose.x - 0.5; // straight path: arc == x offset
                let gap = arc - prev;
                if i + 1 < sgs.len() {
                    assert!(
                        gap >= cfg.d_min - 1e-9 && gap <= cfg.d_max + 1e-9,
                        "gap {gap} out of [{}, {}]",
                        cfg.d_min,
                        cfg.d_max
                    );
                } else {
                    assert!(gap <= cfg.d_max + 1e-9);
                }
                prev = arc;
            }
            assert!(sgs.last().unwrap().pose.distance(path.last().unwrap()) < 1e-9);
        }
    }

    #[test]
    fn subgoal_sampling_is_deterministic() {
        let scene = corridor_scene(110);
        let cfg = OracleConfig::default();
        let path = straight_path((0.5, 0.55), (10.5, 0.55));
        let a = sample_subgoals(&scene, &path, &cfg, &Camera::default(), 1.0, 42).unwrap();
        let b = sample_subgoals(&scene, &path, &cfg, &Camera::default(), 1.0, 42).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.pose, y.pose);
            assert_eq!(x.observation, y.observation);
        }
    }

    #[test]
    fn aligned_tracking_drives_at_full_speed() {
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let path = straight_path((0.0, 0.0), (5.0, 0.0));
        let t = oracle_action(&Pose::new(1.0, 0.0, 0.0), &path, &cfg, &emb);
        assert!((t.v - emb.v_max).abs() < 1e-9);
        assert!(t.omega.abs() < 1e-9);
    }

    #[test]
    fn reversed_heading_stops_and_turns_at_limit() {
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let path = straight_path((0.0, 0.0), (5.0, 0.0));
        // facing exactly away from the lookahead point
        let t = oracle_action(&Pose::new(1.0, 0.0, std::f64::consts::PI), &path, &cfg, &emb);
        assert_eq!(t.v, 0.0);
        assert!((t.omega.abs() - emb.omega_max).abs() < 1e-9);
    }

    #[test]
    fn proportional_gain_below_clamp() {
        let cfg = OracleConfig {
            kp_heading: 2.0,
            ..OracleConfig::default()
        };
        let emb = Embodiment::default();
        // place the lookahead at bearing 0.1 rad: pose heading -0.1 on the path
        let path = straight_path((0.0, 0.0), (5.0, 0.0));
        let t = oracle_action(&Pose::new(1.0, 0.0, -0.1), &path, &cfg, &emb);
        assert!((t.omega - 0.2).abs() < 1e-9, "omega {}", t.omega);
    }

    #[test]
    fn rollout_at_path_end_is_stationary() {
        let scene = corridor_scene(60);
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let path = straight_path((0.5, 0.55), (3.0, 0.55));
        let end = *path.last().unwrap();
        let wps = rollout_oracle(&scene, &end, &path, &cfg, &emb).unwrap();
        assert_eq!(wps.len(), cfg.horizon);
        for wp in wps {
            assert_eq!(wp, Pose::new(0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn straight_rollout_advances_by_v_dt() {
        let scene = corridor_scene(60);
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let path = straight_path((0.5, 0.55), (5.5, 0.55));
        let wps = rollout_oracle(&scene, &Pose::new(0.6, 0.55, 0.0), &path, &cfg, &emb).unwrap();
        for (k, wp) in wps.iter().enumerate() {
            let expect = 0.075 * (k + 1) as f64;
            assert!((wp.x - expect).abs() < 1e-9, "wp {k}: {wp:?}");
            assert!(wp.y.abs() < 1e-9);
            assert!(wp.theta.abs() < 1e-9);
        }
    }

    #[test]
    fn rollout_matches_independent_resimulation() {
        let scene = generate_scene(SceneCategory::Clutter, 48, 11).unwrap();
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let camera = Camera::default();
        let route = sample_route(&scene, 11, &cfg, &emb, &camera, 1.0, 1.0, 3.5, 21)
            .expect("route should exist");
        let path = shortest_path(&scene, &route.start, &route.goal, cfg.clearance).unwrap();
        // walk the closed loop a few steps, checking the rollout each time
        let mut cur = route.start;
        for _ in 0..10 {
            let wps = rollout_oracle(&scene, &cur, &path, &cfg, &emb).unwrap();
            // independent re-simulation, one step at a time
            let mut sim = cur;
            for (k, wp) in wps.iter().enumerate() {
                let tw = oracle_action(&sim, &path, &cfg, &emb);
                let (next, collided) = step_kinematic(&scene, &sim, &tw, &emb).unwrap();
                assert!(!collided);
                sim = next;
                let rel = cur.relative_to(&sim);
                assert!(
                    (rel.x - wp.x).abs() < 1e-12
                        && (rel.y - wp.y).abs() < 1e-12
                        && (rel.theta - wp.theta).abs() < 1e-12,
                    "step {k} mismatch"
                );
            }
            let tw = oracle_action(&cur, &path, &cfg, &emb);
            cur = step_kinematic(&scene, &cur, &tw, &emb).unwrap().0;
        }
    }

    #[test]
    fn unreachable_goal_fails_validation() {
        // two rooms separated by a solid wall
        let w = 20u32;
        let h = 20u32;
        let n = (w * h) as usize;
        let mut occ = vec![false; n];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 || x == 10 {
                    occ[(y * w + x) as usize] = true;
                }
            }
        }
        let scene = OccupancyScene::from_parts(
            w,
            h,
            0.1,
            occ,
            vec![0.5; n],
            vec![0; n],
            SceneCategory::OpenSpace,
        );
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        assert!(!validate_route(
            &scene,
            &Pose::new(0.55, 1.0, 0.0),
            &Pose::new(1.55, 1.0, 0.0),
            &cfg,
            &emb
        ));
    }

    #[test]
    fn start_at_goal_validates_immediately() {
        let scene = corridor_scene(60);
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let p = Pose::new(1.0, 0.55, 0.0);
        assert!(validate_route(&scene, &p, &p, &cfg, &emb));
    }

    #[test]
    fn straight_corridor_validates_within_budget() {
        let scene = corridor_scene(60); // 6 m long, free span ~5.8 m
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let start = Pose::new(0.35, 0.55, 0.0);
        let goal = Pose::new(5.35, 0.55, 0.0);
        assert!(validate_route(&scene, &start, &goal, &cfg, &emb));
        // ~5 m at 0.075 m/step minus the 0.4 m arrival radius: well under 500
        let visited = simulate_oracle(&scene, &start, &goal, &cfg, &emb).unwrap();
        assert!(visited.len() < 120, "took {} steps", visited.len());
    }

    #[test]
    fn manifest_round_trip() {
        let scene = generate_scene(SceneCategory::OpenSpace, 48, 5).unwrap();
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let route = sample_route(&scene, 5, &cfg, &emb, &Camera::default(), 1.0, 1.0, 3.5, 9)
            .expect("route should exist");
        let line = manifest_line("scenes/open_space_5.tnls", &route);
        let rec = parse_manifest_line(&line, 1).unwrap();
        assert_eq!(rec.scene_file, "scenes/open_space_5.tnls");
        assert_eq!(rec.seed, 5);
        assert_eq!(rec.start, route.start);
        assert_eq!(rec.goal, route.goal);
        assert_eq!(rec.subgoal_poses.len(), route.subgoals.len());
        for (p, sg) in rec.subgoal_poses.iter().zip(&route.subgoals) {
            assert_eq!(*p, sg.pose);
        }
    }
}

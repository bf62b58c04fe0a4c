//! Deployment stack: topological map construction, place descriptors,
//! Bayesian-filtered subgoal selection, the waypoint-following PD
//! controller, and the closed-loop navigation episode.

use crate::dataset::{decode_observation_bytes, encode_observation_bytes};
use crate::oracle::{OracleError, RouteSpec};
use crate::policy::{FrozenEncoder, Policy, PolicyError, WaypointPrediction};
use crate::world::{
    geodesic_distance, is_collision, render, shortest_path, step_kinematic, wrap_angle, Camera,
    Embodiment, Observation, OccupancyScene, Pose, Twist, WorldError,
};
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopoError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("map file is malformed: {reason} at byte offset {offset}")]
    MalformedMap { reason: String, offset: usize },
    #[error("map must have at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed seed of the place-descriptor projection; independent of any policy.
const DESCRIPTOR_SEED: u64 = 0x544e_504c;

/// Pooled frozen robust features, L2-normalized: the place-recognition
/// stand-in. Exactly invariant to the illumination level.
pub struct DescriptorEncoder {
    frozen: FrozenEncoder,
}

impl DescriptorEncoder {
    pub fn new(obs_width: usize, sem_channels: usize, patch_width: usize, token_dim: usize) -> Self {
        Self {
            frozen: FrozenEncoder::new(
                DESCRIPTOR_SEED,
                obs_width,
                sem_channels,
                patch_width,
                token_dim,
            ),
        }
    }

    pub fn for_camera(camera: &Camera) -> Self {
        Self::new(
            camera.width as usize,
            crate::world::SEM_CHANNELS as usize,
            4,
            32,
        )
    }

    pub fn dim(&self) -> usize {
        self.frozen.token_dim
    }

    /// Unit-norm descriptor of an observation.
    pub fn descriptor(&self, obs: &Observation) -> Vec<f64> {
        let d = self.frozen.token_dim;
        let tokens = self.frozen.robust_tokens(obs);
        let t = tokens.len() / d;
        let mut pooled = vec![0.0; d];
        for ti in 0..t {
            for j in 0..d {
                pooled[j] += tokens[ti * d + j];
            }
        }
        for v in pooled.iter_mut() {
            *v /= t as f64;
        }
        let norm = pooled.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in pooled.iter_mut() {
                *v /= norm;
            }
        }
        pooled
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One map node: the stored subgoal image, its descriptor, and the
/// privileged pose (used only for evaluation).
#[derive(Debug, Clone)]
pub struct TopoNode {
    pub observation: Observation,
    pub descriptor: Vec<f64>,
    pub eval_pose: Pose,
}

/// An ordered route map.
#[derive(Debug, Clone)]
pub struct TopoMap {
    pub nodes: Vec<TopoNode>,
    pub node_spacing: f64,
}

impl TopoMap {
    pub fn goal_pose(&self) -> Pose {
        self.nodes.last().expect("map has nodes").eval_pose
    }
}

/// Drives the oracle's planned route, capturing a node every `node_spacing`
/// meters of arc length plus the final pose.
pub fn build_map(
    scene: &OccupancyScene,
    route: &RouteSpec,
    node_spacing: f64,
    clearance: f64,
    camera: &Camera,
    light_level: f32,
) -> Result<TopoMap, TopoError> {
    let path = shortest_path(scene, &route.start, &route.goal, clearance)?;
    let enc = DescriptorEncoder::for_camera(camera);
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(&w[1]));
    }
    let total = *cum.last().unwrap();
    let mut arcs = Vec::new();
    let mut s = 0.0;
    while s < total - 1e-9 {
        arcs.push(s);
        s += node_spacing;
    }
    arcs.push(total);
    let mut nodes = Vec::with_capacity(arcs.len());
    for &arc in &arcs {
        let pose = pose_at_arc(&path, &cum, arc);
        let observation = render(scene, &pose, camera, light_level)?;
        let descriptor = enc.descriptor(&observation);
        nodes.push(TopoNode {
            observation,
            descriptor,
            eval_pose: pose,
        });
    }
    if nodes.len() < 2 {
        // a zero-length route still carries distinct start and goal entries
        let n = nodes[0].clone();
        nodes.push(n);
    }
    Ok(TopoMap {
        nodes,
        node_spacing,
    })
}

fn pose_at_arc(path: &[Pose], cum: &[f64], s: f64) -> Pose {
    if path.len() == 1 {
        return path[0];
    }
    let total = *cum.last().unwrap();
    let s = s.clamp(0.0, total);
    let mut i = match cum.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i + 1 >= path.len() {
        i = path.len() - 2;
    }
    let seg = cum[i + 1] - cum[i];
    let t = if seg > 1e-12 { (s - cum[i]) / seg } else { 0.0 };
    let (a, b) = (&path[i], &path[i + 1]);
    let heading = (b.y - a.y).atan2(b.x - a.x);
    Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), heading)
}

/// Discrete Bayesian filter parameters for subgoal selection.
#[derive(Debug, Clone, Copy)]
pub struct FilterParams {
    /// Transition kernel: stay, advance one node, advance two nodes.
    pub p_stay: f64,
    pub p_fwd1: f64,
    pub p_fwd2: f64,
    /// Softmax temperature over cosine similarities.
    pub tau: f64,
    /// Nodes ahead of the posterior argmax to hand to the policy.
    pub lookahead: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        // the kernel's expected advance per control period must track the
        // agent's physical speed (~0.05 node pitches per step at 0.3 m/s,
        // 0.25 s, 1.5 m spacing); faster kernels race ahead of the agent
        // whenever the likelihood is flat
        Self {
            p_stay: 0.9,
            p_fwd1: 0.08,
            p_fwd2: 0.02,
            tau: 0.07,
            lookahead: 1,
        }
    }
}

/// Posterior over map nodes.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub posterior: Vec<f64>,
    pub last_selected: usize,
    /// Count of degenerate likelihood updates that fell back to uniform.
    pub degenerate_updates: u64,
}

impl FilterState {
    pub fn uniform(n: usize) -> Self {
        Self {
            posterior: vec![1.0 / n as f64; n],
            last_selected: 0,
            degenerate_updates: 0,
        }
    }
}

/// One predict-update cycle of the subgoal filter. Returns the selected
/// subgoal image, its node index, and the new state.
pub fn subgoal_select(
    state: &FilterState,
    obs: &Observation,
    map: &TopoMap,
    enc: &DescriptorEncoder,
    params: &FilterParams,
) -> (Observation, usize, FilterState) {
    let n = map.nodes.len();
    // predict: forward-biased transition, absorbing at the last node
    let mut predicted = vec![0.0; n];
    for (i, &p) in state.posterior.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        predicted[i] += params.p_stay * p;
        predicted[(i + 1).min(n - 1)] += params.p_fwd1 * p;
        predicted[(i + 2).min(n - 1)] += params.p_fwd2 * p;
    }
    // update: softmax likelihood over scaled cosine similarities
    let desc = enc.descriptor(obs);
    let sims: Vec<f64> = map
        .nodes
        .iter()
        .map(|node| cosine_similarity(&desc, &node.descriptor))
        .collect();
    let max_sim = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lik: Vec<f64> = sims.iter().map(|s| ((s - max_sim) / params.tau).exp()).collect();
    let mut posterior: Vec<f64> = predicted.iter().zip(&lik).map(|(p, l)| p * l).collect();
    let sum: f64 = posterior.iter().sum();
    let mut degenerate = state.degenerate_updates;
    if sum > 0.0 && sum.is_finite() {
        for p in posterior.iter_mut() {
            *p /= sum;
        }
    } else {
        degenerate += 1;
        posterior = vec![1.0 / n as f64; n];
    }
    let argmax = posterior
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.total_cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let selected = (argmax + params.lookahead).min(n - 1);
    let new_state = FilterState {
        posterior,
        last_selected: selected,
        degenerate_updates: degenerate,
    };
    (map.nodes[selected].observation.clone(), selected, new_state)
}

/// Waypoint-following PD controller gains.
#[derive(Debug, Clone, Copy)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
    /// Distance below which forward speed scales down linearly.
    pub d_slow: f64,
    /// Index of the tracked waypoint (0-based; default the 3rd).
    pub k_track: usize,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: 2.0,
            kd: 0.2,
            d_slow: 0.3,
            k_track: 2,
        }
    }
}

/// Stateful PD controller: steers at the tracked waypoint's bearing with a
/// derivative term on the bearing error.
#[derive(Debug, Clone)]
pub struct PdController {
    pub gains: PdGains,
    prev_alpha: Option<f64>,
}

impl PdController {
    pub fn new(gains: PdGains) -> Self {
        Self {
            gains,
            prev_alpha: None,
        }
    }

    pub fn reset(&mut self) {
        self.prev_alpha = None;
    }

    /// Computes a velocity command from a waypoint prediction expressed in
    /// the robot frame. A waypoint with negligible displacement but a
    /// commanded heading steers by that heading (rotation in place).
    pub fn control(&mut self, pred: &WaypointPrediction, emb: &Embodiment) -> Twist {
        let k = self.gains.k_track.min(pred.waypoints.len() - 1);
        let [x, y, theta_wp] = pred.waypoints[k];
        let dist = x.hypot(y);
        let alpha = if dist >= 0.02 {
            y.atan2(x)
        } else {
            wrap_angle(theta_wp)
        };
        let d_term = match self.prev_alpha {
            Some(prev) => (wrap_angle(alpha - prev)) / emb.dt,
            None => 0.0,
        };
        self.prev_alpha = Some(alpha);
        let omega = (self.gains.kp * alpha + self.gains.kd * d_term)
            .clamp(-emb.omega_max, emb.omega_max);
        let v = (emb.v_max * alpha.cos().max(0.0) * (dist / self.gains.d_slow).min(1.0))
            .clamp(0.0, emb.v_max);
        Twist::new(v, omega)
    }
}

/// Anything that predicts waypoints from an observation stack and a subgoal
/// image: the trained policy, or test stand-ins.
pub trait WaypointSource {
    fn waypoints(
        &mut self,
        obs_stack: &[Observation],
        goal: &Observation,
    ) -> Result<WaypointPrediction, PolicyError>;
    /// Stack length the source expects.
    fn frames(&self) -> usize;
    /// Privileged hook fed the executed pose before each prediction; vision
    /// policies ignore it, oracle-replay diagnostics use it.
    fn observe_pose(&mut self, _pose: &Pose) {}
}

impl WaypointSource for Policy {
    fn waypoints(
        &mut self,
        obs_stack: &[Observation],
        goal: &Observation,
    ) -> Result<WaypointPrediction, PolicyError> {
        self.predict(obs_stack, goal)
    }

    fn frames(&self) -> usize {
        self.cfg.p_frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    /// Reserved for deployments that can leave the route; the desk-scale
    /// loop never emits it.
    Lost,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub steps: usize,
    pub path_length: f64,
    pub shortest_length: f64,
    pub trajectory: Vec<Pose>,
    /// Per-step commanded twists, aligned with trajectory[1..].
    pub twists: Vec<Twist>,
    /// Per-step selected node indices.
    pub selected: Vec<usize>,
    /// Whether the filter had localized to the last map node at episode end.
    pub localized_last: bool,
}

impl EpisodeResult {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NavigateParams {
    pub camera: Camera,
    pub light_level: f32,
    pub embodiment: Embodiment,
    pub max_steps: usize,
    pub success_radius: f64,
    pub filter: FilterParams,
    pub pd: PdGains,
}

impl Default for NavigateParams {
    fn default() -> Self {
        Self {
            camera: Camera::default(),
            light_level: 1.0,
            embodiment: Embodiment::default(),
            max_steps: 500,
            success_radius: 0.4,
            filter: FilterParams::default(),
            pd: PdGains::default(),
        }
    }
}

/// Closed-loop episode: render, select subgoal, predict waypoints, control,
/// step. Success is arrival within `success_radius` of the final node's
/// privileged pose; a gated collision ends the episode as `Collision`;
/// `max_steps` elapses to `Timeout`.
pub fn navigate(
    scene: &OccupancyScene,
    map: &TopoMap,
    source: &mut dyn WaypointSource,
    start: &Pose,
    params: &NavigateParams,
) -> Result<EpisodeResult, TopoError> {
    if map.nodes.len() < 2 {
        return Err(TopoError::TooFewNodes(map.nodes.len()));
    }
    let emb = params.embodiment;
    if is_collision(scene, start, emb.radius) {
        return Err(TopoError::World(WorldError::PoseInCollision {
            x: start.x,
            y: start.y,
        }));
    }
    let goal = map.goal_pose();
    // reference length for SPL: geodesic at the agent's physical clearance
    let spl_clearance = emb.radius + scene.cell_size() as f64 / 2.0;
    let shortest_length = geodesic_distance(scene, start, &goal, spl_clearance)
        .unwrap_or(f64::INFINITY);

    let enc = DescriptorEncoder::for_camera(&params.camera);
    let mut filter = FilterState::uniform(map.nodes.len());
    let mut pd = PdController::new(params.pd);
    let mut pose = *start;
    let mut trajectory = vec![pose];
    let mut twists = Vec::new();
    let mut selected_log = Vec::new();
    let mut path_length = 0.0;
    let mut stack: VecDeque<Observation> = VecDeque::with_capacity(source.frames());

    let mut outcome = Outcome::Timeout;
    let mut steps = 0;
    if pose.distance(&goal) <= params.success_radius {
        outcome = Outcome::Success;
    } else {
        for step in 0..params.max_steps {
            let obs = render(scene, &pose, &params.camera, params.light_level)?;
            if stack.is_empty() {
                // front-pad the first frame to fill the history
                for _ in 0..source.frames() {
                    stack.push_back(obs.clone());
                }
            } else {
                stack.pop_front();
                stack.push_back(obs.clone());
            }
            let (subgoal_obs, selected, new_filter) =
                subgoal_select(&filter, &obs, map, &enc, &params.filter);
            filter = new_filter;
            selected_log.push(selected);
            let frames: Vec<Observation> = stack.iter().cloned().collect();
            source.observe_pose(&pose);
            let pred = source.waypoints(&frames, &subgoal_obs)?;
            let twist = pd.control(&pred, &emb);
            let (next, collided) = step_kinematic(scene, &pose, &twist, &emb)?;
            twists.push(twist);
            steps = step + 1;
            if collided {
                outcome = Outcome::Collision;
                break;
            }
            path_length += pose.distance(&next);
            pose = next;
            trajectory.push(pose);
            if pose.distance(&goal) <= params.success_radius {
                outcome = Outcome::Success;
                break;
            }
        }
    }
    let localized_last = filter.last_selected + 1 == map.nodes.len();
    Ok(EpisodeResult {
        outcome,
        steps,
        path_length,
        shortest_length,
        trajectory,
        twists,
        selected: selected_log,
        localized_last,
    })
}

/// Exports an episode trace as CSV: step, pose, twist, selected node,
/// outcome.
pub fn episode_trace_csv(result: &EpisodeResult) -> String {
    let mut out = String::from("step,x,y,theta,v,omega,selected_node,outcome\n");
    for i in 0..result.twists.len() {
        let pose = result.trajectory[(i + 1).min(result.trajectory.len() - 1)];
        let sel = result.selected.get(i).copied().unwrap_or(0);
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            i,
            pose.x,
            pose.y,
            pose.theta,
            result.twists[i].v,
            result.twists[i].omega,
            sel,
            result.outcome.name()
        ));
    }
    out
}

const MAP_MAGIC: &[u8; 4] = b"TNTM";
const MAP_VERSION: u16 = 1;

/// Serializes a map: observations, descriptors, and privileged poses.
pub fn encode_map(map: &TopoMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&MAP_VERSION.to_le_bytes());
    let first = &map.nodes[0].observation;
    out.extend_from_slice(&(first.width() as u16).to_le_bytes());
    out.extend_from_slice(&(first.num_sem_channels() as u16).to_le_bytes());
    out.extend_from_slice(&map.node_spacing.to_le_bytes());
    out.extend_from_slice(&(map.nodes.len() as u32).to_le_bytes());
    out.extend_from_slice(&(map.nodes[0].descriptor.len() as u16).to_le_bytes());
    for node in &map.nodes {
        encode_observation_bytes(&mut out, &node.observation);
        for &v in &node.descriptor {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for v in [node.eval_pose.x, node.eval_pose.y, node.eval_pose.theta] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_map(bytes: &[u8]) -> Result<TopoMap, TopoError> {
    let fail = |reason: &str, offset: usize| TopoError::MalformedMap {
        reason: reason.to_string(),
        offset,
    };
    if bytes.len() < 24 {
        return Err(fail("file too short", bytes.len()));
    }
    if &bytes[0..4] != MAP_MAGIC {
        return Err(fail("bad magic bytes", 0));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != MAP_VERSION {
        return Err(fail(&format!("unsupported version {version}"), 4));
    }
    let w = u16::from_le_bytes(bytes[6..8].try_into().unwrap()) as usize;
    let c = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
    let node_spacing = f64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let n = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
    let ddim = u16::from_le_bytes(bytes[22..24].try_into().unwrap()) as usize;
    let mut off = 24usize;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (observation, consumed) = decode_observation_bytes(&bytes[off..], w, c)
            .map_err(|e| fail(&format!("bad observation: {e}"), off))?;
        off += consumed;
        if off + 4 * ddim + 24 > bytes.len() {
            return Err(fail("truncated node record", off));
        }
        let mut descriptor = Vec::with_capacity(ddim);
        for k in 0..ddim {
            descriptor.push(f32::from_le_bytes(
                bytes[off + 4 * k..off + 4 * k + 4].try_into().unwrap(),
            ) as f64);
        }
        off += 4 * ddim;
        let x = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let y = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
        let t = f64::from_le_bytes(bytes[off + 16..off + 24].try_into().unwrap());
        off += 24;
        nodes.push(TopoNode {
            observation,
            descriptor,
            eval_pose: Pose::new(x, y, t),
        });
    }
    if off != bytes.len() {
        return Err(fail("trailing bytes", off));
    }
    Ok(TopoMap {
        nodes,
        node_spacing,
    })
}

pub fn save_map(path: &Path, map: &TopoMap) -> Result<(), TopoError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_map(map))?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<TopoMap, TopoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_map(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{rollout_oracle, sample_route, OracleConfig};
    use crate::world::{generate_scene, SceneCategory};

    fn corridor_scene(len_cells: u32) -> OccupancyScene {
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
            (0..n).map(|i| 0.3 + (i % 5) as f32 / 10.0).collect(),
            (0..n).map(|i| (i % 4) as u8).collect(),
            SceneCategory::OpenSpace,
        )
    }

    fn straight_route(scene: &OccupancyScene, from_x: f64, to_x: f64) -> RouteSpec {
        let cfg = OracleConfig::default();
        let camera = Camera::default();
        let path = shortest_path(
            scene,
            &Pose::new(from_x, 0.55, 0.0),
            &Pose::new(to_x, 0.55, 0.0),
            cfg.clearance,
        )
        .unwrap();
        let subgoals =
            crate::oracle::sample_subgoals(scene, &path, &cfg, &camera, 1.0, 3).unwrap();
        RouteSpec {
            scene_seed: 0,
            start: *path.first().unwrap(),
            goal: *path.last().unwrap(),
            subgoals,
        }
    }

    #[test]
    fn six_meter_route_with_1p5_spacing_has_five_nodes() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 6.55); // exactly 6 m
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        assert_eq!(map.nodes.len(), 5);
        assert!(map.nodes[0].eval_pose.distance(&route.start) < 1e-9);
        assert!(map.nodes.last().unwrap().eval_pose.distance(&route.goal) < 1e-9);
    }

    #[test]
    fn short_route_keeps_start_and_goal() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 1.35); // 0.8 m < spacing
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        assert_eq!(map.nodes.len(), 2);
    }

    #[test]
    fn map_construction_is_deterministic() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let a = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let b = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        assert_eq!(encode_map(&a), encode_map(&b));
    }

    #[test]
    fn descriptor_is_unit_norm_and_self_similar() {
        let scene = corridor_scene(40);
        let enc = DescriptorEncoder::for_camera(&Camera::default());
        let obs = render(&scene, &Pose::new(1.0, 0.55, 0.2), &Camera::default(), 1.0).unwrap();
        let d = enc.descriptor(&obs);
        let norm: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((cosine_similarity(&d, &d) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn descriptor_ignores_light_level() {
        let scene = corridor_scene(40);
        let enc = DescriptorEncoder::for_camera(&Camera::default());
        let cam = Camera::default();
        let bright = render(&scene, &Pose::new(1.0, 0.55, 0.2), &cam, 1.0).unwrap();
        let dim = render(&scene, &Pose::new(1.0, 0.55, 0.2), &cam, 0.15).unwrap();
        let sim = cosine_similarity(&enc.descriptor(&bright), &enc.descriptor(&dim));
        assert!((sim - 1.0).abs() < 1e-6, "similarity {sim}");
    }

    #[test]
    fn filter_update_matches_hand_computation() {
        // hand-crafted map: all nodes carry orthogonal unit descriptors
        // except node k, which matches the observation exactly, so the
        // likelihood is sharply peaked at k; lookahead 0 must select k
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let mut map = build_map(&scene, &route, 1.0, 0.3, &Camera::default(), 1.0).unwrap();
        let enc = DescriptorEncoder::for_camera(&Camera::default());
        let params = FilterParams {
            lookahead: 0,
            ..Default::default()
        };
        let k = 2usize.min(map.nodes.len() - 1);
        let obs = map.nodes[k].observation.clone();
        let dim = enc.dim();
        for (i, node) in map.nodes.iter_mut().enumerate() {
            if i != k {
                let mut basis = vec![0.0; dim];
                basis[i % dim] = 1.0;
                node.descriptor = basis;
            }
        }
        let state = FilterState::uniform(map.nodes.len());
        let (_, selected, new_state) = subgoal_select(&state, &obs, &map, &enc, &params);

        // hand-computed: predict then multiply by softmax likelihood
        let n = map.nodes.len();
        let mut predicted = vec![0.0; n];
        for i in 0..n {
            let p = 1.0 / n as f64;
            predicted[i] += params.p_stay * p;
            predicted[(i + 1).min(n - 1)] += params.p_fwd1 * p;
            predicted[(i + 2).min(n - 1)] += params.p_fwd2 * p;
        }
        let desc = enc.descriptor(&obs);
        let sims: Vec<f64> = map
            .nodes
            .iter()
            .map(|nd| cosine_similarity(&desc, &nd.descriptor))
            .collect();
        let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lik: Vec<f64> = sims.iter().map(|s| ((s - m) / params.tau).exp()).collect();
        let mut posterior: Vec<f64> = predicted.iter().zip(&lik).map(|(p, l)| p * l).collect();
        let sum: f64 = posterior.iter().sum();
        for p in posterior.iter_mut() {
            *p /= sum;
        }
        for (a, b) in new_state.posterior.iter().zip(&posterior) {
            assert!((a - b).abs() < 1e-12);
        }
        let hand_argmax = (0..n).max_by(|&a, &b| posterior[a].total_cmp(&posterior[b])).unwrap();
        assert_eq!(selected, hand_argmax);
        assert_eq!(selected, k, "likelihood should localize to node {k}");
    }

    #[test]
    fn posterior_stays_normalized_and_absorbs_at_last() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let map = build_map(&scene, &route, 1.0, 0.3, &Camera::default(), 1.0).unwrap();
        let enc = DescriptorEncoder::for_camera(&Camera::default());
        let params = FilterParams::default();
        let n = map.nodes.len();
        let mut state = FilterState::uniform(n);
        // all mass on the last node stays there (absorbing)
        state.posterior = vec![0.0; n];
        state.posterior[n - 1] = 1.0;
        let obs = map.nodes[n - 1].observation.clone();
        let (_, selected, new_state) = subgoal_select(&state, &obs, &map, &enc, &params);
        assert_eq!(selected, n - 1);
        let sum: f64 = new_state.posterior.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(new_state.posterior.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn pd_controller_examples() {
        let emb = Embodiment::default();
        let mut pd = PdController::new(PdGains::default());
        // straight ahead: no turn, positive speed
        let ahead = WaypointPrediction {
            waypoints: vec![[0.5, 0.0, 0.0]; 5],
        };
        let t = pd.control(&ahead, &emb);
        assert_eq!(t.omega, 0.0);
        assert!(t.v > 0.0);

        // arrived: zero speed
        let mut pd = PdController::new(PdGains::default());
        let arrived = WaypointPrediction {
            waypoints: vec![[0.0, 0.0, 0.0]; 5],
        };
        let t = pd.control(&arrived, &emb);
        assert_eq!(t.v, 0.0);

        // bearing pi/2 with kp 1, kd 0: clamped at omega_max
        let mut pd = PdController::new(PdGains {
            kp: 1.0,
            kd: 0.0,
            ..Default::default()
        });
        let side = WaypointPrediction {
            waypoints: vec![[0.0, 0.4, 0.0]; 5],
        };
        let t = pd.control(&side, &emb);
        assert!((t.omega - 1.0).abs() < 1e-12); // pi/2 * 1.0 clamped to 1.0
    }

    /// Replays oracle rollouts as waypoint predictions.
    struct OracleSource {
        scene: OccupancyScene,
        path: Vec<Pose>,
        cfg: OracleConfig,
        emb: Embodiment,
        pose: Pose,
    }

    impl WaypointSource for OracleSource {
        fn waypoints(
            &mut self,
            _obs: &[Observation],
            _goal: &Observation,
        ) -> Result<WaypointPrediction, PolicyError> {
            let wps = rollout_oracle(&self.scene, &self.pose, &self.path, &self.cfg, &self.emb)
                .unwrap_or_else(|_| vec![Pose::new(0.0, 0.0, 0.0); self.cfg.horizon]);
            Ok(WaypointPrediction {
                waypoints: wps.into_iter().map(|p| [p.x, p.y, p.theta]).collect(),
            })
        }

        fn frames(&self) -> usize {
            6
        }

        fn observe_pose(&mut self, pose: &Pose) {
            self.pose = *pose;
        }
    }

    /// Always predicts zero waypoints.
    struct FrozenInPlace;

    impl WaypointSource for FrozenInPlace {
        fn waypoints(
            &mut self,
            _obs: &[Observation],
            _goal: &Observation,
        ) -> Result<WaypointPrediction, PolicyError> {
            Ok(WaypointPrediction {
                waypoints: vec![[0.0, 0.0, 0.0]; 5],
            })
        }

        fn frames(&self) -> usize {
            6
        }
    }

    #[test]
    fn start_near_goal_is_immediate_success() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let start = Pose::new(4.8, 0.55, 0.0); // within 0.4 m of the goal
        let mut src = FrozenInPlace;
        let r = navigate(&scene, &map, &mut src, &start, &NavigateParams::default()).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.steps, 0);
        assert_eq!(r.path_length, 0.0);
    }

    #[test]
    fn zero_waypoint_policy_times_out_at_exactly_500_steps() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let mut src = FrozenInPlace;
        let r = navigate(
            &scene,
            &map,
            &mut src,
            &route.start,
            &NavigateParams::default(),
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::Timeout);
        assert_eq!(r.steps, 500);
    }

    #[test]
    fn oracle_replay_navigates_a_straight_route() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let cfg = OracleConfig::default();
        let path = shortest_path(&scene, &route.start, &route.goal, cfg.clearance).unwrap();
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let mut src = OracleSource {
            scene: scene.clone(),
            path,
            cfg,
            emb: Embodiment::default(),
            pose: route.start,
        };
        let r = navigate(
            &scene,
            &map,
            &mut src,
            &route.start,
            &NavigateParams::default(),
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::Success, "steps {}", r.steps);
        // collision-free trajectory and plausible SPL reference; successful
        // episodes may stop up to success_radius short of the goal pose
        let emb = Embodiment::default();
        for p in &r.trajectory {
            assert!(!is_collision(&scene, p, emb.radius));
        }
        let slack = 0.4 + scene.cell_size() as f64 + 1e-9;
        assert!(r.path_length >= r.shortest_length - slack);
        // success semantics: the filter tracked to the last node
        assert_eq!(*r.selected.last().unwrap(), map.nodes.len() - 1);
    }

    #[test]
    fn navigation_on_generated_scene_with_oracle_replay() {
        let scene = generate_scene(SceneCategory::Clutter, 48, 3).unwrap();
        let cfg = OracleConfig::default();
        let emb = Embodiment::default();
        let camera = Camera::default();
        let route = sample_route(&scene, 3, &cfg, &emb, &camera, 1.0, 1.5, 3.5, 77)
            .expect("route should exist");
        let path = shortest_path(&scene, &route.start, &route.goal, cfg.clearance).unwrap();
        let map = build_map(&scene, &route, 1.5, cfg.clearance, &camera, 1.0).unwrap();
        let mut src = OracleSource {
            scene: scene.clone(),
            path,
            cfg,
            emb,
            pose: route.start,
        };
        let r = navigate(&scene, &map, &mut src, &route.start, &NavigateParams::default())
            .unwrap();
        assert_eq!(r.outcome, Outcome::Success, "steps {}", r.steps);
    }

    #[test]
    fn map_file_round_trip() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let bytes = encode_map(&map);
        let back = decode_map(&bytes).unwrap();
        assert_eq!(encode_map(&back), bytes);
        assert_eq!(back.nodes.len(), map.nodes.len());
    }

    #[test]
    fn trace_csv_has_a_row_per_step() {
        let scene = corridor_scene(70);
        let route = straight_route(&scene, 0.55, 5.0);
        let map = build_map(&scene, &route, 1.5, 0.3, &Camera::default(), 1.0).unwrap();
        let mut src = FrozenInPlace;
        let mut params = NavigateParams::default();
        params.max_steps = 10;
        let r = navigate(&scene, &map, &mut src, &route.start, &params).unwrap();
        let csv = episode_trace_csv(&r);
        assert_eq!(csv.lines().count(), 11); // header + 10 steps
        assert!(csv.lines().nth(1).unwrap().ends_with("timeout"));
    }
}

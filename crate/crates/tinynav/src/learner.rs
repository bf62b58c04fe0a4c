//! Training loops: behavior cloning over triplet datasets and DAgger rounds
//! with beta^round student/oracle mixing, collision-gated student actions,
//! and round-wise dataset accumulation.

use crate::dataset::Triplet;
use crate::nn::{AdamW, AdamWConfig, Binder, Graph};
use crate::oracle::{rollout_oracle, sample_route, OracleConfig, OracleError, RouteSpec};
use crate::policy::{Policy, PolicyError};
use crate::topo::{PdController, PdGains};
use crate::world::{
    is_collision, render, shortest_path, step_kinematic, Camera, Embodiment, Observation,
    OccupancyScene, Pose, WorldError,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::VecDeque;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("round {round} must be >= 1")]
    BadRound { round: usize },
    #[error(
        "route sampling failed systematically: {failed} of {attempted} attempts unusable"
    )]
    RouteFailures { failed: usize, attempted: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Probability that the student acts at a mixing round: beta^round, with
/// rounds indexed from 1.
pub fn student_action_probability(beta: f64, round: usize) -> Result<f64, LearnerError> {
    if round < 1 {
        return Err(LearnerError::BadRound { round });
    }
    Ok(beta.powi(round as i32))
}

/// DAgger loop parameters.
#[derive(Debug, Clone, Copy)]
pub struct DaggerConfig {
    pub rounds: usize,
    pub beta: f64,
    pub trajectories_per_round: usize,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DaggerConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            beta: 0.8,
            trajectories_per_round: 20,
            epochs_per_round: 1,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Shared simulation context for data collection.
#[derive(Debug, Clone, Copy)]
pub struct CollectContext {
    pub camera: Camera,
    pub light_level: f32,
    pub embodiment: Embodiment,
    pub oracle: OracleConfig,
    pub pd: PdGains,
    /// Geodesic route length bounds for sampled routes, meters.
    pub route_min_len: f64,
    pub route_max_len: f64,
    /// Observation stack depth when collecting without a policy.
    pub p_frames: usize,
}

impl Default for CollectContext {
    fn default() -> Self {
        Self {
            camera: Camera::default(),
            light_level: 1.0,
            embodiment: Embodiment::default(),
            oracle: OracleConfig::default(),
            pd: PdGains::default(),
            route_min_len: 1.2,
            route_max_len: 4.5,
            p_frames: 6,
        }
    }
}

/// Per-round collection statistics.
#[derive(Debug, Clone, Default)]
pub struct CollectStats {
    pub triplets: usize,
    pub student_steps: usize,
    pub oracle_steps: usize,
    /// Student proposals replaced by the oracle because their Euler step
    /// collided.
    pub gated_steps: usize,
    pub failed_routes: usize,
    pub skipped_labels: usize,
    /// Manifest lines of every route driven this round.
    pub route_manifest: Vec<String>,
}

/// Training outcome record.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// (round, epoch, mean loss); round 0 for plain behavior cloning.
    pub epoch_losses: Vec<(usize, usize, f64)>,
    pub round_samples: Vec<usize>,
    pub student_steps: usize,
    pub oracle_steps: usize,
    pub gated_steps: usize,
    pub wall_time_secs: f64,
    /// Manifest lines of every training route.
    pub route_manifest: Vec<String>,
}

impl TrainReport {
    /// Per-epoch loss CSV (deterministic, no wall time).
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("round,epoch,loss\n");
        for (round, epoch, loss) in &self.epoch_losses {
            out.push_str(&format!("{round},{epoch},{loss:.12}\n"));
        }
        out
    }

    /// Human-readable log, including wall time.
    pub fn text_log(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples_per_round: {:?}\ntotal_samples: {}\n",
            self.round_samples,
            self.round_samples.iter().sum::<usize>()
        ));
        out.push_str(&format!(
            "student_steps: {}\noracle_steps: {}\ngated_steps: {}\n",
            self.student_steps, self.oracle_steps, self.gated_steps
        ));
        for (round, epoch, loss) in &self.epoch_losses {
            out.push_str(&format!("round {round} epoch {epoch}: loss {loss:.6}\n"));
        }
        out.push_str(&format!("wall_time_secs: {:.1}\n", self.wall_time_secs));
        out
    }
}

fn mix_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut h = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^= index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 32)
}

/// Trains in-place over shuffled mini-batches for the given epochs with a
/// fresh cosine-scheduled AdamW. Returns per-epoch mean losses.
pub fn train_epochs(
    policy: &mut Policy,
    triplets: &[Triplet],
    epochs: usize,
    batch_size: usize,
    opt_cfg: &AdamWConfig,
    seed: u64,
) -> Result<Vec<f64>, LearnerError> {
    if triplets.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    if epochs == 0 {
        return Ok(Vec::new());
    }
    let batches_per_epoch = triplets.len().div_ceil(batch_size);
    let cfg = AdamWConfig {
        total_steps: (epochs * batches_per_epoch) as u64,
        ..*opt_cfg
    };
    let mut opt = AdamW::new(cfg, &policy.store);
    let mut losses = Vec::with_capacity(epochs);
    let mut indices: Vec<usize> = (0..triplets.len()).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5f5f, epoch as u64));
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(batch_size) {
            let mut g = Graph::new();
            let mut binder = Binder::new(&policy.store);
            let mut sample_losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let t = &triplets[i];
                let nodes = policy.build_forward(&mut g, &mut binder, &t.obs_stack, &t.goal_obs)?;
                let target = g.leaf(
                    t.waypoints.len(),
                    3,
                    t.waypoints.iter().flatten().copied().collect(),
                );
                let loss = g.mse_wrapped(nodes.prediction, target, 2)?;
                sample_losses.push(loss);
            }
            let stacked = g.concat_rows(&sample_losses)?;
            let batch_loss = g.mean_all(stacked);
            g.backward(batch_loss);
            let grads = binder.grads(&g);
            opt.apply(&mut policy.store, &grads)?;
            epoch_loss += g.scalar(batch_loss);
            batches += 1;
        }
        losses.push(epoch_loss / batches as f64);
    }
    Ok(losses)
}

/// Behavior cloning: supervised training on a fixed dataset.
pub fn train_bc(
    policy: &mut Policy,
    triplets: &[Triplet],
    epochs: usize,
    batch_size: usize,
    opt_cfg: &AdamWConfig,
    seed: u64,
) -> Result<TrainReport, LearnerError> {
    let started = Instant::now();
    let losses = train_epochs(policy, triplets, epochs, batch_size, opt_cfg, seed)?;
    Ok(TrainReport {
        epoch_losses: losses
            .into_iter()
            .enumerate()
            .map(|(e, l)| (0, e, l))
            .collect(),
        round_samples: vec![triplets.len()],
        wall_time_secs: started.elapsed().as_secs_f64(),
        ..Default::default()
    })
}

/// Index of the active subgoal during collection: the first subgoal whose
/// arc position lies ahead of the agent's projection onto the path.
fn active_subgoal(arcs: &[f64], agent_arc: f64) -> usize {
    for (i, &a) in arcs.iter().enumerate() {
        if a > agent_arc + 1e-6 {
            return i;
        }
    }
    arcs.len() - 1
}

fn project_arc(path: &[Pose], cum: &[f64], pose: &Pose) -> f64 {
    let mut best_d2 = f64::INFINITY;
    let mut best = 0.0;
    for i in 0..path.len().saturating_sub(1) {
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
            best = cum[i] + t * (cum[i + 1] - cum[i]);
        }
    }
    best
}

/// Executes one mixed student/oracle trajectory along a validated route and
/// logs (observation stack, subgoal image, oracle rollout) triplets.
fn collect_trajectory(
    scene: &OccupancyScene,
    route: &RouteSpec,
    policy: Option<&Policy>,
    p_student: f64,
    ctx: &CollectContext,
    seed: u64,
) -> Result<(Vec<Triplet>, CollectStats), LearnerError> {
    let mut stats = CollectStats::default();
    let emb = ctx.embodiment;
    let path = shortest_path(scene, &route.start, &route.goal, ctx.oracle.clearance)?;
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(&w[1]));
    }
    let subgoal_arcs: Vec<f64> = route
        .subgoals
        .iter()
        .map(|sg| project_arc(&path, &cum, &sg.pose))
        .collect();

    let p_frames = policy.map_or(ctx.p_frames, |p| p.cfg.p_frames);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pd = PdController::new(ctx.pd);
    let mut pose = route.start;
    let mut stack: VecDeque<Observation> = VecDeque::with_capacity(p_frames);
    let mut triplets = Vec::new();

    for _ in 0..ctx.oracle.max_steps {
        if pose.distance(&route.goal) <= ctx.oracle.success_radius {
            break;
        }
        let obs = render(scene, &pose, &ctx.camera, ctx.light_level)?;
        if stack.is_empty() {
            for _ in 0..p_frames {
                stack.push_back(obs.clone());
            }
        } else {
            stack.pop_front();
            stack.push_back(obs.clone());
        }
        let agent_arc = project_arc(&path, &cum, &pose);
        let subgoal = &route.subgoals[active_subgoal(&subgoal_arcs, agent_arc)];
        let frames: Vec<Observation> = stack.iter().cloned().collect();

        // the label is always the oracle rollout from the current state
        let label = match rollout_oracle(scene, &pose, &path, &ctx.oracle, &emb) {
            Ok(wps) => Some(
                wps.iter()
                    .map(|p| [p.x, p.y, p.theta])
                    .collect::<Vec<[f64; 3]>>(),
            ),
            Err(_) => {
                stats.skipped_labels += 1;
                None
            }
        };
        if let Some(waypoints) = label {
            triplets.push(Triplet {
                obs_stack: frames.clone(),
                goal_obs: subgoal.observation.clone(),
                waypoints,
            });
        }

        let oracle_twist = crate::oracle::oracle_action(&pose, &path, &ctx.oracle, &emb);
        let twist = if policy.is_some() && rng.gen::<f64>() < p_student {
            let pred = policy.unwrap().predict(&frames, &subgoal.observation)?;
            let student_twist = pd.control(&pred, &emb);
            // gate: a student action whose Euler step collides is replaced
            let candidate = Pose::new(
                pose.x + student_twist.v * pose.theta.cos() * emb.dt,
                pose.y + student_twist.v * pose.theta.sin() * emb.dt,
                pose.theta + student_twist.omega * emb.dt,
            );
            if is_collision(scene, &candidate, emb.radius) {
                stats.gated_steps += 1;
                oracle_twist
            } else {
                stats.student_steps += 1;
                student_twist
            }
        } else {
            stats.oracle_steps += 1;
            oracle_twist
        };
        let (next, collided) = step_kinematic(scene, &pose, &twist, &emb)?;
        if !collided {
            pose = next;
        }
    }
    stats.triplets = triplets.len();
    Ok((triplets, stats))
}

/// Collects one DAgger round: `trajectories_per_round` validated routes,
/// student actions proposed with probability beta^round, oracle labels
/// regardless of the executed action. Route sampling failures above 50%
/// abort with diagnostics.
pub fn collect_round(
    policy: Option<&Policy>,
    scenes: &[(u64, OccupancyScene)],
    cfg: &DaggerConfig,
    ctx: &CollectContext,
    round: usize,
) -> Result<(Vec<Triplet>, CollectStats), LearnerError> {
    let p_student = if policy.is_some() {
        student_action_probability(cfg.beta, round)?
    } else {
        0.0
    };
    let jobs: Vec<usize> = (0..cfg.trajectories_per_round).collect();
    let results: Vec<Result<(Vec<Triplet>, CollectStats), LearnerError>> = jobs
        .par_iter()
        .map(|&j| {
            let (scene_seed, scene) = &scenes[j % scenes.len()];
            let route_seed = mix_seed(cfg.seed, 0x1000 + round as u64, j as u64);
            let route = sample_route(
                scene,
                *scene_seed,
                &ctx.oracle,
                &ctx.embodiment,
                &ctx.camera,
                ctx.light_level,
                ctx.route_min_len,
                ctx.route_max_len,
                route_seed,
            );
            match route {
                None => Ok((
                    Vec::new(),
                    CollectStats {
                        failed_routes: 1,
                        ..Default::default()
                    },
                )),
                Some(route) => {
                    let scene_file =
                        format!("{}_{}.tnls", scene.category().name(), scene_seed);
                    let line = crate::oracle::manifest_line(&scene_file, &route);
                    collect_trajectory(
                        scene,
                        &route,
                        policy,
                        p_student,
                        ctx,
                        mix_seed(cfg.seed, 0x2000 + round as u64, j as u64),
                    )
                    .map(|(t, mut s)| {
                        s.route_manifest.push(line);
                        (t, s)
                    })
                }
            }
        })
        .collect();
    let mut triplets = Vec::new();
    let mut stats = CollectStats::default();
    for r in results {
        let (t, s) = r?;
        triplets.extend(t);
        stats.triplets += s.triplets;
        stats.student_steps += s.student_steps;
        stats.oracle_steps += s.oracle_steps;
        stats.gated_steps += s.gated_steps;
        stats.failed_routes += s.failed_routes;
        stats.skipped_labels += s.skipped_labels;
        stats.route_manifest.extend(s.route_manifest);
    }
    if stats.failed_routes * 2 > cfg.trajectories_per_round {
        return Err(LearnerError::RouteFailures {
            failed: stats.failed_routes,
            attempted: cfg.trajectories_per_round,
        });
    }
    Ok((triplets, stats))
}

/// Full DAgger: per round, collect with the current policy at p = beta^round,
/// aggregate every round collected so far, and train `epochs_per_round` on
/// the union. Returns the report and the aggregated dataset.
pub fn run_dagger(
    policy: &mut Policy,
    scenes: &[(u64, OccupancyScene)],
    cfg: &DaggerConfig,
    ctx: &CollectContext,
    opt_cfg: &AdamWConfig,
) -> Result<(TrainReport, Vec<Triplet>), LearnerError> {
    let started = Instant::now();
    let mut report = TrainReport::default();
    let mut aggregate: Vec<Triplet> = Vec::new();
    for round in 1..=cfg.rounds {
        let (new_triplets, stats) = collect_round(Some(policy), scenes, cfg, ctx, round)?;
        report.round_samples.push(new_triplets.len());
        report.student_steps += stats.student_steps;
        report.oracle_steps += stats.oracle_steps;
        report.gated_steps += stats.gated_steps;
        report.route_manifest.extend(stats.route_manifest);
        aggregate.extend(new_triplets);
        let losses = train_epochs(
            policy,
            &aggregate,
            cfg.epochs_per_round,
            cfg.batch_size,
            opt_cfg,
            mix_seed(cfg.seed, 0x3000, round as u64),
        )?;
        for (e, l) in losses.into_iter().enumerate() {
            report.epoch_losses.push((round, e, l));
        }
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((report, aggregate))
}

/// Seed used by `run_dagger` for round `round`'s training phase; exposed so
/// equal-budget baselines can reproduce the exact stream.
pub fn dagger_train_seed(base: u64, round: usize) -> u64 {
    mix_seed(base, 0x3000, round as u64)
}

/// Seed used by `collect_round` for route sampling, for manifest checks.
pub fn dagger_route_seed(base: u64, round: usize, index: usize) -> u64 {
    mix_seed(base, 0x1000 + round as u64, index as u64)
}

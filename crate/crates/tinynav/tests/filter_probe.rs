//! Filter-tracking diagnostic, ignored by default.

use tinynav::config::{ExperimentConfig, ExperimentKind};
use tinynav::experiment::build_eval_suite;
use tinynav::oracle::{oracle_action, OracleConfig};
use tinynav::topo::{subgoal_select, DescriptorEncoder, FilterParams, FilterState};
use tinynav::world::{
    render, shortest_path, step_kinematic, Camera, Embodiment, SceneCategory,
};

/// Drives the oracle closed-loop and measures how well the Bayesian filter
/// tracks the agent's true progress along the map.
#[test]
#[ignore]
fn filter_tracking_probe() {
    let cfg = ExperimentConfig::new(ExperimentKind::BcVsDagger);
    let suite = build_eval_suite(
        &cfg,
        &Default::default(),
        11,
        30,
        &[1.0],
        &SceneCategory::ALL,
    )
    .unwrap();
    for params in [
        FilterParams::default(),
        FilterParams {
            p_stay: 0.9,
            p_fwd1: 0.08,
            p_fwd2: 0.02,
            ..Default::default()
        },
    ] {
        let mut abs_err = 0.0f64;
        let mut count = 0usize;
        let mut behind = 0usize;
        let mut far_ahead = 0usize;
        for er in &suite.routes {
            let scene = &suite.scenes[er.scene_idx];
            let map = &er.maps[0].1;
            let oracle_cfg = OracleConfig::default();
            let emb = Embodiment::default();
            let enc = DescriptorEncoder::for_camera(&Camera::default());
            let path =
                shortest_path(scene, &er.route.start, &er.route.goal, oracle_cfg.clearance)
                    .unwrap();
            let mut pose = er.route.start;
            let mut filter = FilterState::uniform(map.nodes.len());
            for _ in 0..oracle_cfg.max_steps {
                if pose.distance(&er.route.goal) <= oracle_cfg.success_radius {
                    break;
                }
                let obs = render(scene, &pose, &Camera::default(), 1.0).unwrap();
                let (_, selected, nf) = subgoal_select(&filter, &obs, map, &enc, &params);
                filter = nf;
                // ground truth: nearest map node by pose distance
                let truth = map
                    .nodes
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        pose.distance(&a.eval_pose)
                            .total_cmp(&pose.distance(&b.eval_pose))
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                let diff = selected as i64 - truth as i64;
                abs_err += diff.unsigned_abs() as f64;
                count += 1;
                if diff < 0 {
                    behind += 1;
                }
                if diff > 2 {
                    far_ahead += 1;
                }
                let tw = oracle_action(&pose, &path, &oracle_cfg, &emb);
                let (next, collided) = step_kinematic(scene, &pose, &tw, &emb).unwrap();
                if collided {
                    break;
                }
                pose = next;
            }
        }
        println!(
            "kernel ({:.2},{:.2},{:.2}): MAE {:.2} nodes, behind {:.1}%, >2 ahead {:.1}%  (n={count})",
            params.p_stay,
            params.p_fwd1,
            params.p_fwd2,
            abs_err / count as f64,
            100.0 * behind as f64 / count as f64,
            100.0 * far_ahead as f64 / count as f64,
        );
    }
}

/// Reproduces the single oracle-replay timeout seen on seed 2 route suites
/// and prints its trajectory tail.
#[test]
#[ignore]
fn replay_straggler_probe() {
    use tinynav::oracle::rollout_oracle;
    use tinynav::policy::WaypointPrediction;
    use tinynav::topo::{navigate, NavigateParams, WaypointSource};
    use tinynav::world::{Observation, OccupancyScene, Pose};

    struct Replay {
        scene: OccupancyScene,
        path: Vec<Pose>,
        cfg: OracleConfig,
        emb: Embodiment,
        pose: Pose,
    }
    impl WaypointSource for Replay {
        fn waypoints(
            &mut self,
            _o: &[Observation],
            _g: &Observation,
        ) -> Result<WaypointPrediction, tinynav::policy::PolicyError> {
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

    let cfg = ExperimentConfig::new(ExperimentKind::BcVsDagger);
    for seed in [1u64, 2, 3, 4] {
        let suite = build_eval_suite(
            &cfg,
            &Default::default(),
            seed,
            30,
            &[1.0],
            &SceneCategory::ALL,
        )
        .unwrap();
        for (ri, er) in suite.routes.iter().enumerate() {
            let scene = &suite.scenes[er.scene_idx];
            let oracle_cfg = OracleConfig::default();
            let path = shortest_path(scene, &er.route.start, &er.route.goal, oracle_cfg.clearance)
                .unwrap();
            let mut src = Replay {
                scene: scene.clone(),
                path,
                cfg: oracle_cfg,
                emb: Embodiment::default(),
                pose: er.route.start,
            };
            let map = &er.maps[0].1;
            let r = navigate(scene, map, &mut src, &er.route.start, &NavigateParams::default())
                .unwrap();
            if !r.success() {
                println!(
                    "seed {seed} route {ri} cat {:?}: {:?} after {} steps, shortest {:.2}",
                    er.category, r.outcome, r.steps, r.shortest_length
                );
                let n = r.trajectory.len();
                for p in r.trajectory.iter().skip(n.saturating_sub(6)) {
                    println!("   pose ({:.3},{:.3},{:.3})", p.x, p.y, p.theta);
                }
                println!(
                    "   goal ({:.3},{:.3}) selected tail {:?}",
                    er.route.goal.x,
                    er.route.goal.y,
                    &r.selected[r.selected.len().saturating_sub(5)..]
                );
            }
        }
    }
    println!("done");
}

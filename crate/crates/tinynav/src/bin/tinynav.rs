//! Command-line interface for the navigation laboratory.
//!
//! Exit codes: 0 success, 1 usage error, 2 experiment failure.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tinynav::config::{workspace_dir, ExperimentConfig, ExperimentKind};
use tinynav::dataset::{write_manifest, write_shard, ShardDims};
use tinynav::experiment::{
    arms_for, build_eval_suite, evaluate_policy, run_experiment, train_arm, TrainMethod,
};
use tinynav::learner::{collect_round, CollectContext, DaggerConfig};
use tinynav::metrics::Metrics;
use tinynav::oracle::{sample_route, OracleConfig};
use tinynav::policy::load_policy;
use tinynav::topo::{build_map, episode_trace_csv, navigate, save_map, NavigateParams};
use tinynav::world::{generate_scene, Camera, Embodiment, SceneCategory};

#[derive(Parser)]
#[command(
    name = "tinynav",
    about = "Desk-scale topological image-goal navigation laboratory",
    version
)]
struct Cli {
    /// Workspace directory (overrides TINYNAV_WORKSPACE).
    #[arg(long, global = true)]
    workspace: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene files for every category.
    GenScenes {
        /// Scenes per category.
        #[arg(long, default_value_t = 2)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
    },
    /// Collect oracle-driven triplet shards from validated routes.
    Collect {
        #[arg(long, default_value_t = 20)]
        trajectories: usize,
        #[arg(long, default_value_t = 64)]
        scene_size: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output shard file stem (under <workspace>/shards/).
        #[arg(long, default_value = "oracle")]
        out: String,
    },
    /// Train a behavior-cloning arm of the configured experiment.
    TrainBc {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train a DAgger arm of the configured experiment.
    TrainDagger {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 0.8)]
        beta: f64,
        #[arg(long)]
        trajectories_per_round: Option<usize>,
    },
    /// Build a topological map along a validated route of a scene.
    BuildMap {
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 64)]
        scene_size: u32,
        #[arg(long, default_value_t = 1)]
        scene_seed: u64,
        #[arg(long, default_value_t = 7)]
        route_seed: u64,
        #[arg(long, default_value_t = 1.5)]
        spacing: f64,
        #[arg(long, default_value_t = 1.0)]
        light: f32,
        #[arg(long, default_value = "route.tntm")]
        out: String,
    },
    /// Run one navigation episode with a trained policy and export a trace.
    Navigate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 64)]
        scene_size: u32,
        #[arg(long, default_value_t = 1)]
        scene_seed: u64,
        #[arg(long, default_value_t = 7)]
        route_seed: u64,
        #[arg(long, default_value_t = 1.0)]
        light: f32,
        #[arg(long, default_value = "trace.csv")]
        trace: String,
    },
    /// Evaluate a trained policy on a held-out route suite.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        routes: Option<usize>,
        #[arg(long, default_value = "eval_metrics.csv")]
        out: String,
    },
    /// Run a configured experiment end to end and write reports.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Experiment kind when no config file is given.
        #[arg(long)]
        kind: Option<String>,
    },
}

fn load_or_default(
    config: &Option<PathBuf>,
    kind: ExperimentKind,
) -> Result<ExperimentConfig, String> {
    match config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| e.to_string()),
        None => Ok(ExperimentConfig::new(kind)),
    }
}

fn parse_category(s: &str) -> Result<SceneCategory, String> {
    SceneCategory::from_name(s).ok_or_else(|| {
        format!(
            "unknown category {s:?}; expected one of open_space, tight_maneuver, clutter"
        )
    })
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    let usage = |m: String| (1u8, m);
    let failure = |m: String| (2u8, m);
    let ws = workspace_dir(cli.workspace.as_deref());
    std::fs::create_dir_all(&ws).map_err(|e| failure(e.to_string()))?;

    match cli.command {
        Command::GenScenes {
            count,
            size,
            seed_base,
        } => {
            let dir = ws.join("scenes");
            std::fs::create_dir_all(&dir).map_err(|e| failure(e.to_string()))?;
            let mut manifest = String::new();
            for (ci, cat) in SceneCategory::ALL.iter().enumerate() {
                for k in 0..count {
                    let seed = seed_base + (ci * count + k) as u64;
                    let scene =
                        generate_scene(*cat, size, seed).map_err(|e| failure(e.to_string()))?;
                    let name = format!("{}_{seed}.tnls", cat.name());
                    scene
                        .save(&dir.join(&name))
                        .map_err(|e| failure(e.to_string()))?;
                    manifest.push_str(&format!("{name} {}\n", cat.name()));
                    println!("wrote {}", dir.join(&name).display());
                }
            }
            std::fs::write(dir.join("scenes.manifest"), manifest)
                .map_err(|e| failure(e.to_string()))?;
            Ok(())
        }
        Command::Collect {
            trajectories,
            scene_size,
            seed,
            out,
        } => {
            let mut scenes = Vec::new();
            for (ci, cat) in SceneCategory::ALL.iter().enumerate() {
                let s = seed + ci as u64 * 101;
                scenes.push((
                    s,
                    generate_scene(*cat, scene_size, s).map_err(|e| failure(e.to_string()))?,
                ));
            }
            let ctx = CollectContext::default();
            let cfg = DaggerConfig {
                trajectories_per_round: trajectories,
                seed,
                ..Default::default()
            };
            let (triplets, stats) =
                collect_round(None, &scenes, &cfg, &ctx, 1).map_err(|e| failure(e.to_string()))?;
            let dir = ws.join("shards");
            std::fs::create_dir_all(&dir).map_err(|e| failure(e.to_string()))?;
            let dims = ShardDims {
                p: ctx.p_frames as u16,
                h: ctx.oracle.horizon as u16,
                w: ctx.camera.width as u16,
                c: tinynav::world::SEM_CHANNELS as u16,
            };
            let shard = dir.join(format!("{out}.tntd"));
            write_shard(&shard, &dims, &triplets).map_err(|e| failure(e.to_string()))?;
            write_manifest(
                &dir.join(format!("{out}.manifest")),
                &[(format!("{out}.tntd"), triplets.len() as u64)],
            )
            .map_err(|e| failure(e.to_string()))?;
            std::fs::write(
                dir.join(format!("{out}.routes.manifest")),
                stats.route_manifest.join("\n") + "\n",
            )
            .map_err(|e| failure(e.to_string()))?;
            println!(
                "collected {} triplets over {} trajectories -> {}",
                triplets.len(),
                trajectories - stats.failed_routes,
                shard.display()
            );
            Ok(())
        }
        Command::TrainBc { config, seed } => {
            let cfg = load_or_default(&config, ExperimentKind::BcVsDagger).map_err(usage)?;
            let arm = arms_for(&cfg)
                .into_iter()
                .find(|a| a.method == TrainMethod::BehaviorCloning)
                .ok_or_else(|| usage("config has no behavior-cloning arm".into()))?;
            let trained =
                train_arm(&ws, &cfg, &arm, seed).map_err(|e| failure(e.to_string()))?;
            println!("checkpoint: {}", trained.checkpoint_path.display());
            Ok(())
        }
        Command::TrainDagger {
            config,
            seed,
            rounds,
            beta,
            trajectories_per_round,
        } => {
            let mut cfg = load_or_default(&config, ExperimentKind::BcVsDagger).map_err(usage)?;
            if config.is_none() {
                cfg.dagger.rounds = rounds;
                cfg.dagger.beta = beta;
                if let Some(t) = trajectories_per_round {
                    cfg.dagger.trajectories_per_round = t;
                }
            }
            let arm = arms_for(&cfg)
                .into_iter()
                .find(|a| a.method == TrainMethod::Dagger)
                .ok_or_else(|| usage("config has no DAgger arm".into()))?;
            let trained =
                train_arm(&ws, &cfg, &arm, seed).map_err(|e| failure(e.to_string()))?;
            println!("checkpoint: {}", trained.checkpoint_path.display());
            Ok(())
        }
        Command::BuildMap {
            category,
            scene_size,
            scene_seed,
            route_seed,
            spacing,
            light,
            out,
        } => {
            let cat = parse_category(&category).map_err(usage)?;
            let scene =
                generate_scene(cat, scene_size, scene_seed).map_err(|e| failure(e.to_string()))?;
            let oracle_cfg = OracleConfig::default();
            let route = sample_route(
                &scene,
                scene_seed,
                &oracle_cfg,
                &Embodiment::default(),
                &Camera::default(),
                light,
                1.2,
                4.0,
                route_seed,
            )
            .ok_or_else(|| failure("no validated route found for these seeds".into()))?;
            let map = build_map(
                &scene,
                &route,
                spacing,
                oracle_cfg.clearance,
                &Camera::default(),
                light,
            )
            .map_err(|e| failure(e.to_string()))?;
            save_map(&ws.join(&out), &map).map_err(|e| failure(e.to_string()))?;
            println!("map with {} nodes -> {}", map.nodes.len(), ws.join(&out).display());
            Ok(())
        }
        Command::Navigate {
            policy,
            category,
            scene_size,
            scene_seed,
            route_seed,
            light,
            trace,
        } => {
            let cat = parse_category(&category).map_err(usage)?;
            let scene =
                generate_scene(cat, scene_size, scene_seed).map_err(|e| failure(e.to_string()))?;
            let (mut pol, _) = load_policy(&policy).map_err(|e| failure(e.to_string()))?;
            let camera = Camera {
                width: pol.cfg.obs_width as u32,
                ..Camera::default()
            };
            let oracle_cfg = OracleConfig::default();
            let route = sample_route(
                &scene,
                scene_seed,
                &oracle_cfg,
                &Embodiment::default(),
                &camera,
                light,
                1.2,
                4.0,
                route_seed,
            )
            .ok_or_else(|| failure("no validated route found for these seeds".into()))?;
            let map = build_map(&scene, &route, 1.5, oracle_cfg.clearance, &camera, light)
                .map_err(|e| failure(e.to_string()))?;
            let params = NavigateParams {
                camera,
                light_level: light,
                ..Default::default()
            };
            let result = navigate(&scene, &map, &mut pol, &route.start, &params)
                .map_err(|e| failure(e.to_string()))?;
            std::fs::write(ws.join(&trace), episode_trace_csv(&result))
                .map_err(|e| failure(e.to_string()))?;
            println!(
                "outcome: {} in {} steps (path {:.2} m, shortest {:.2} m)",
                result.outcome.name(),
                result.steps,
                result.path_length,
                result.shortest_length
            );
            Ok(())
        }
        Command::Eval {
            policy,
            config,
            seed,
            routes,
            out,
        } => {
            let mut cfg = load_or_default(&config, ExperimentKind::BcVsDagger).map_err(usage)?;
            if let Some(r) = routes {
                cfg.eval_routes = r;
            }
            let (pol, _) = load_policy(&policy).map_err(|e| failure(e.to_string()))?;
            let suite = build_eval_suite(
                &cfg,
                &pol.cfg,
                seed,
                cfg.eval_routes,
                &[1.0],
                &SceneCategory::ALL,
            )
            .map_err(|e| failure(e.to_string()))?;
            let results = evaluate_policy(&pol, &suite, 1.0, 1.0, Embodiment::default(), None)
                .map_err(|e| failure(e.to_string()))?;
            let metrics = Metrics::compute(&results).map_err(|e| failure(e.to_string()))?;
            let mut csv = String::from("split,n,sr,spl\n");
            csv.push_str(&format!(
                "all,{},{:.6},{:.6}\n",
                metrics.n, metrics.sr, metrics.spl
            ));
            for (cat, sr, spl, n) in &metrics.per_category {
                csv.push_str(&format!("{},{n},{sr:.6},{spl:.6}\n", cat.name()));
            }
            std::fs::write(ws.join(&out), csv).map_err(|e| failure(e.to_string()))?;
            println!(
                "SR {:.3}, SPL {:.3} over {} routes -> {}",
                metrics.sr,
                metrics.spl,
                metrics.n,
                ws.join(&out).display()
            );
            Ok(())
        }
        Command::Report { config, kind } => {
            let cfg = match (&config, &kind) {
                (Some(path), _) => ExperimentConfig::load(path).map_err(|e| usage(e.to_string()))?,
                (None, Some(k)) => {
                    let kind = ExperimentKind::from_name(k)
                        .ok_or_else(|| usage(format!("unknown experiment kind {k:?}")))?;
                    ExperimentConfig::new(kind)
                }
                (None, None) => {
                    return Err(usage("report needs --config or --kind".into()));
                }
            };
            let report = run_experiment(&ws, &cfg).map_err(|e| failure(e.to_string()))?;
            println!("metrics: {}", report.metrics_csv.display());
            println!("deltas:  {}", report.deltas_csv.display());
            for p in &report.plots {
                println!("plot:    {}", p.display());
            }
            for arm in arms_for(&cfg) {
                if let Some(sr) = report.mean_sr(&arm.name, "all") {
                    println!("arm {:24} mean SR {:.3}", arm.name, sr);
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes; everything else is usage
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

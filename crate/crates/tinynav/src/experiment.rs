//! Experiment runners reproducing the qualitative comparisons at desk
//! scale: BC vs DAgger, data scale, the binocular ablation, illumination
//! robustness, and the embodiment swap. Emits CSV reports, pairwise deltas,
//! and SVG plots, all reproducible from (config, seeds).

use crate::config::{fnv1a, ExperimentConfig, ExperimentKind};
use crate::learner::{
    collect_round, run_dagger, train_bc, CollectContext, DaggerConfig, LearnerError, TrainReport,
};
use crate::metrics::Metrics;
use crate::oracle::{manifest_line, sample_route, OracleConfig, RouteSpec};
use crate::policy::{load_policy, save_policy, BinocularVariant, EncoderMode, Policy, PolicyConfig};
use crate::topo::{build_map, navigate, NavigateParams, TopoError, TopoMap};
use crate::world::{generate_scene, Camera, Embodiment, OccupancyScene, SceneCategory, WorldError};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error("missing checkpoint for arm {0}")]
    MissingCheckpoint(String),
    #[error("unknown experiment arm {0}")]
    UnknownArm(String),
    #[error("evaluation suite could not be built: {0}")]
    SuiteConstruction(String),
    #[error("training and evaluation route manifests intersect: {0}")]
    RouteOverlap(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn mix_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut h = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    h ^= index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 29;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 32)
}

/// Training method of an experiment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    BehaviorCloning,
    Dagger,
}

/// One trainable arm of an experiment.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub name: String,
    pub method: TrainMethod,
    pub policy: PolicyConfig,
    pub dagger: DaggerConfig,
    pub bc_epochs: usize,
}

impl ArmSpec {
    /// Canonical identity string; includes everything that affects the
    /// trained weights so equal arms share cached checkpoints across
    /// experiments.
    fn identity(&self, cfg: &ExperimentConfig, seed: u64) -> String {
        format!(
            "arm={} method={:?} seed={} scenes={}x{} routes=[{:?},{:?}] dagger=({},{:?},{},{},{}) bc_epochs={} policy=({},{},{},{},{},{},{},{},{},{},{},{}) opt=({:?},{:?},{:?},{:?},{:?})",
            self.name,
            self.method,
            seed,
            cfg.train_scenes_per_category,
            cfg.scene_size,
            cfg.route_min_len,
            cfg.route_max_len,
            self.dagger.rounds,
            self.dagger.beta,
            self.dagger.trajectories_per_round,
            self.dagger.epochs_per_round,
            self.dagger.batch_size,
            self.bc_epochs,
            self.policy.p_frames,
            self.policy.horizon,
            self.policy.obs_width,
            self.policy.token_dim,
            self.policy.patch_width,
            self.policy.bin_layers,
            self.policy.bin_heads,
            self.policy.seq_layers,
            self.policy.seq_heads,
            self.policy.variant.name(),
            self.policy.encoder_mode.name(),
            self.policy.encoder_seed,
            cfg.optimizer.base_lr,
            cfg.optimizer.beta1,
            cfg.optimizer.beta2,
            cfg.optimizer.eps,
            cfg.optimizer.weight_decay,
        )
    }
}

fn camera_for(policy: &PolicyConfig) -> Camera {
    Camera {
        fov: 110.0f64.to_radians(),
        width: policy.obs_width as u32,
        max_range: 10.0,
    }
}

fn collect_context(cfg: &ExperimentConfig, policy: &PolicyConfig) -> CollectContext {
    CollectContext {
        camera: camera_for(policy),
        light_level: 1.0,
        embodiment: Embodiment::default(),
        oracle: OracleConfig::default(),
        pd: crate::topo::PdGains::default(),
        route_min_len: cfg.route_min_len,
        route_max_len: cfg.route_max_len,
        p_frames: policy.p_frames,
    }
}

/// Generates the training scene set for a run seed: per category,
/// `train_scenes_per_category` scenes on seeds derived from the run seed.
pub fn training_scenes(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(u64, OccupancyScene)>, ExperimentError> {
    let mut scenes = Vec::new();
    for (ci, cat) in SceneCategory::ALL.iter().enumerate() {
        for k in 0..cfg.train_scenes_per_category {
            let scene_seed = mix_seed(seed, 0xA100 + ci as u64, k as u64);
            scenes.push((scene_seed, generate_scene(*cat, cfg.scene_size, scene_seed)?));
        }
    }
    Ok(scenes)
}

/// Outcome of training (or cache-loading) one arm.
pub struct TrainedArm {
    pub policy: Policy,
    pub checkpoint_path: PathBuf,
    pub checkpoint_hash: u64,
    pub report: Option<TrainReport>,
    pub train_manifest: Vec<String>,
}

/// Trains an arm, or loads it from the workspace cache when an identical
/// arm was already trained. Also writes the loss CSV, text log, and the
/// training route manifest next to the checkpoint.
pub fn train_arm(
    ws: &Path,
    cfg: &ExperimentConfig,
    arm: &ArmSpec,
    seed: u64,
) -> Result<TrainedArm, ExperimentError> {
    let identity = arm.identity(cfg, seed);
    let hash = fnv1a(identity.as_bytes());
    let dir = ws.join("arms").join(format!("{}_{hash:016x}", arm.name));
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("policy.tnpc");
    let manifest_path = dir.join("train_routes.manifest");
    if ckpt.exists() {
        let (policy, _) = load_policy(&ckpt)?;
        let bytes = std::fs::read(&ckpt)?;
        let train_manifest = std::fs::read_to_string(&manifest_path)
            .map(|t| t.lines().map(str::to_string).collect())
            .unwrap_or_default();
        return Ok(TrainedArm {
            policy,
            checkpoint_path: ckpt,
            checkpoint_hash: fnv1a(&bytes),
            report: None,
            train_manifest,
        });
    }

    let scenes = training_scenes(cfg, seed)?;
    let ctx = collect_context(cfg, &arm.policy);
    let dagger_cfg = DaggerConfig {
        seed: mix_seed(seed, 0xB200, 0),
        ..arm.dagger
    };
    let param_seed = mix_seed(seed, 0xC300, fnv1a(arm.name.as_bytes()));
    let mut policy = Policy::new(arm.policy, param_seed);
    let (report, manifest) = match arm.method {
        TrainMethod::Dagger => {
            let (report, _) = run_dagger(&mut policy, &scenes, &dagger_cfg, &ctx, &cfg.optimizer)?;
            let manifest = report.route_manifest.clone();
            (report, manifest)
        }
        TrainMethod::BehaviorCloning => {
            // equal collected-sample budget: the same rounds of routes,
            // driven purely by the oracle
            let mut triplets = Vec::new();
            let mut manifest = Vec::new();
            let mut report = TrainReport::default();
            for round in 1..=dagger_cfg.rounds {
                let (t, stats) = collect_round(None, &scenes, &dagger_cfg, &ctx, round)?;
                report.round_samples.push(t.len());
                report.oracle_steps += stats.oracle_steps;
                manifest.extend(stats.route_manifest);
                triplets.extend(t);
            }
            let bc = train_bc(
                &mut policy,
                &triplets,
                arm.bc_epochs,
                dagger_cfg.batch_size,
                &cfg.optimizer,
                mix_seed(dagger_cfg.seed, 0x3000, 0),
            )?;
            report.epoch_losses = bc.epoch_losses;
            report.wall_time_secs = bc.wall_time_secs;
            (report, manifest)
        }
    };
    save_policy(&ckpt, &policy, None)?;
    std::fs::write(dir.join("losses.csv"), report.losses_csv())?;
    std::fs::write(dir.join("train.log"), report.text_log())?;
    std::fs::write(&manifest_path, manifest.join("\n") + "\n")?;
    let bytes = std::fs::read(&ckpt)?;
    Ok(TrainedArm {
        policy,
        checkpoint_path: ckpt,
        checkpoint_hash: fnv1a(&bytes),
        report: Some(report),
        train_manifest: manifest,
    })
}

/// One evaluation route: scene index, category, the validated route, and
/// prebuilt maps per map light level.
pub struct EvalRoute {
    pub category: SceneCategory,
    pub scene_idx: usize,
    pub route: RouteSpec,
    pub maps: Vec<(f32, TopoMap)>,
    pub manifest: String,
}

/// The held-out evaluation suite for one run seed.
pub struct EvalSuite {
    pub scenes: Vec<OccupancyScene>,
    pub routes: Vec<EvalRoute>,
}

impl EvalSuite {
    pub fn manifest_lines(&self) -> Vec<String> {
        self.routes.iter().map(|r| r.manifest.clone()).collect()
    }
}

/// Builds the held-out suite: freshly generated scenes on eval-tagged
/// seeds, stratified across categories, with maps prebuilt at the given
/// light levels.
pub fn build_eval_suite(
    cfg: &ExperimentConfig,
    policy_cfg: &PolicyConfig,
    seed: u64,
    routes_total: usize,
    map_lights: &[f32],
    categories: &[SceneCategory],
) -> Result<EvalSuite, ExperimentError> {
    let oracle_cfg = OracleConfig::default();
    let emb = Embodiment::default();
    let camera = camera_for(policy_cfg);
    let scenes_per_cat = 2usize;
    let mut scenes = Vec::new();
    let mut scene_meta = Vec::new();
    for (ci, cat) in categories.iter().enumerate() {
        for k in 0..scenes_per_cat {
            let scene_seed = mix_seed(seed, 0xE400 + ci as u64, k as u64);
            scenes.push(generate_scene(*cat, cfg.scene_size, scene_seed)?);
            scene_meta.push((*cat, scene_seed));
        }
    }
    let per_cat = routes_total.div_ceil(categories.len());
    let jobs: Vec<(usize, usize)> = categories
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..per_cat).map(move |i| (ci, i)))
        .collect();
    let routes: Vec<Option<EvalRoute>> = jobs
        .par_iter()
        .map(|&(ci, i)| {
            // try a few derived seeds until a validated route appears
            for attempt in 0..8u64 {
                let scene_idx = ci * scenes_per_cat + (i + attempt as usize) % scenes_per_cat;
                let (cat, scene_seed) = scene_meta[scene_idx];
                let scene = &scenes[scene_idx];
                let route_seed =
                    mix_seed(seed, 0xF500 + ci as u64, (i as u64) << 8 | attempt);
                if let Some(route) = sample_route(
                    scene,
                    scene_seed,
                    &oracle_cfg,
                    &emb,
                    &camera,
                    1.0,
                    cfg.route_min_len,
                    cfg.route_max_len,
                    route_seed,
                ) {
                    let mut maps = Vec::new();
                    for &ml in map_lights {
                        match build_map(scene, &route, cfg.node_spacing, oracle_cfg.clearance, &camera, ml)
                        {
                            Ok(m) => maps.push((ml, m)),
                            Err(_) => return None,
                        }
                    }
                    let scene_file = format!("{}_{}.tnls", cat.name(), scene_seed);
                    return Some(EvalRoute {
                        category: cat,
                        scene_idx,
                        route: route.clone(),
                        maps,
                        manifest: manifest_line(&scene_file, &route),
                    });
                }
            }
            None
        })
        .collect();
    let routes: Vec<EvalRoute> = routes.into_iter().flatten().collect();
    if routes.len() < routes_total / 2 {
        return Err(ExperimentError::SuiteConstruction(format!(
            "only {} of {} requested routes could be validated",
            routes.len(),
            routes_total
        )));
    }
    Ok(EvalSuite { scenes, routes })
}

/// Evaluates a policy over the suite at one (map light, eval light,
/// embodiment) condition. Episodes run in parallel; results keep suite
/// order.
pub fn evaluate_policy(
    policy: &Policy,
    suite: &EvalSuite,
    map_light: f32,
    eval_light: f32,
    embodiment: Embodiment,
    categories: Option<&[SceneCategory]>,
) -> Result<Vec<(SceneCategory, crate::topo::EpisodeResult)>, ExperimentError> {
    let params = NavigateParams {
        camera: camera_for(&policy.cfg),
        light_level: eval_light,
        embodiment,
        ..Default::default()
    };
    let jobs: Vec<&EvalRoute> = suite
        .routes
        .iter()
        .filter(|r| categories.is_none_or(|cats| cats.contains(&r.category)))
        .collect();
    let results: Vec<Result<(SceneCategory, crate::topo::EpisodeResult), ExperimentError>> = jobs
        .par_iter()
        .map(|er| {
            let map = er
                .maps
                .iter()
                .find(|(ml, _)| *ml == map_light)
                .map(|(_, m)| m)
                .ok_or_else(|| {
                    ExperimentError::SuiteConstruction(format!(
                        "no map at light {map_light} for an eval route"
                    ))
                })?;
            let mut policy = policy.clone();
            let r = navigate(
                &suite.scenes[er.scene_idx],
                map,
                &mut policy,
                &er.route.start,
                &params,
            )?;
            Ok((er.category, r))
        })
        .collect();
    results.into_iter().collect()
}

/// One row of the metrics report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub experiment: String,
    pub arm: String,
    pub seed: u64,
    /// "all", a category name, or a condition like "map1_eval0.15".
    pub split: String,
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
    pub config_hash: u64,
    pub checkpoint_hash: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub metrics_csv: PathBuf,
    pub deltas_csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

impl ExperimentReport {
    /// Mean SR of an arm over seeds on a split.
    pub fn mean_sr(&self, arm: &str, split: &str) -> Option<f64> {
        let rows: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.arm == arm && r.split == split)
            .collect();
        if rows.is_empty() {
            return None;
        }
        Some(rows.iter().map(|r| r.sr).sum::<f64>() / rows.len() as f64)
    }

    pub fn sd_sr(&self, arm: &str, split: &str) -> Option<f64> {
        let rows: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.arm == arm && r.split == split)
            .map(|r| r.sr)
            .collect();
        if rows.len() < 2 {
            return Some(0.0);
        }
        let mean = rows.iter().sum::<f64>() / rows.len() as f64;
        Some(
            (rows.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (rows.len() - 1) as f64)
                .sqrt(),
        )
    }
}

fn rows_for(
    experiment: &str,
    arm: &str,
    seed: u64,
    split_prefix: &str,
    results: &[(SceneCategory, crate::topo::EpisodeResult)],
    config_hash: u64,
    checkpoint_hash: u64,
    with_categories: bool,
) -> Vec<ReportRow> {
    let metrics = Metrics::compute(results).expect("non-empty evaluation");
    let mut rows = vec![ReportRow {
        experiment: experiment.to_string(),
        arm: arm.to_string(),
        seed,
        split: if split_prefix.is_empty() {
            "all".to_string()
        } else {
            split_prefix.to_string()
        },
        n: metrics.n,
        sr: metrics.sr,
        spl: metrics.spl,
        config_hash,
        checkpoint_hash,
    }];
    if with_categories {
        for (cat, sr, spl, n) in &metrics.per_category {
            rows.push(ReportRow {
                experiment: experiment.to_string(),
                arm: arm.to_string(),
                seed,
                split: if split_prefix.is_empty() {
                    cat.name().to_string()
                } else {
                    format!("{split_prefix}_{}", cat.name())
                },
                n: *n,
                sr: *sr,
                spl: *spl,
                config_hash,
                checkpoint_hash,
            });
        }
    }
    rows
}

fn write_metrics_csv(path: &Path, rows: &[ReportRow]) -> std::io::Result<()> {
    let mut out =
        String::from("experiment,arm,seed,split,n,sr,spl,config_hash,checkpoint_hash\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:016x},{:016x}\n",
            r.experiment, r.arm, r.seed, r.split, r.n, r.sr, r.spl, r.config_hash, r.checkpoint_hash
        ));
    }
    std::fs::write(path, out)
}

fn write_deltas_csv(path: &Path, rows: &[ReportRow]) -> std::io::Result<()> {
    // pairwise arm deltas on the "all" split, per seed
    let arms: BTreeSet<String> = rows.iter().map(|r| r.arm.clone()).collect();
    let seeds: BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    let mut out = String::from("experiment,arm_a,arm_b,seed,delta_sr,delta_spl\n");
    let arms: Vec<String> = arms.into_iter().collect();
    for i in 0..arms.len() {
        for j in i + 1..arms.len() {
            for &seed in &seeds {
                let a = rows
                    .iter()
                    .find(|r| r.arm == arms[i] && r.seed == seed && r.split == "all");
                let b = rows
                    .iter()
                    .find(|r| r.arm == arms[j] && r.seed == seed && r.split == "all");
                if let (Some(a), Some(b)) = (a, b) {
                    out.push_str(&format!(
                        "{},{},{},{},{:.6},{:.6}\n",
                        a.experiment,
                        arms[i],
                        arms[j],
                        seed,
                        a.sr - b.sr,
                        a.spl - b.spl
                    ));
                }
            }
        }
    }
    std::fs::write(path, out)
}

/// Minimal SVG line plot: one polyline per series over shared axes.
pub fn write_svg_line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> std::io::Result<()> {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (64.0, 24.0, 48.0, 56.0);
    let xs: Vec<f64> = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let xspan = (xmax - xmin).max(1e-9);
    let map_x = |x: f64| ml + (x - xmin) / xspan * (w - ml - mr);
    let map_y = |y: f64| h - mb - y.clamp(0.0, 1.0) * (h - mt - mb);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    ));
    for k in 0..=4 {
        let y = k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{y:.2}</text>\n",
            ml - 6.0,
            map_y(y) + 4.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            map_y(y),
            w - mr,
            map_y(y)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 16.0
    ));
    for (si, (name, pts)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let mut sorted = pts.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<String> = sorted
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", map_x(x), map_y(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            d.join(" ")
        ));
        for &(x, y) in &sorted {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                map_x(x),
                map_y(y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            w - mr - 180.0,
            mt + 16.0 * si as f64
        ));
        // x tick labels from the first series
        if si == 0 {
            for &(x, _) in &sorted {
                svg.push_str(&format!(
                    "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x:.2}</text>\n",
                    map_x(x),
                    h - mb + 16.0
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)
}

/// Arm lineups per experiment kind.
pub fn arms_for(cfg: &ExperimentConfig) -> Vec<ArmSpec> {
    let base_policy = cfg.policy;
    let dagger = cfg.dagger;
    match cfg.kind {
        ExperimentKind::BcVsDagger => vec![
            ArmSpec {
                name: "bc".into(),
                method: TrainMethod::BehaviorCloning,
                policy: base_policy,
                dagger,
                bc_epochs: cfg.bc_epochs,
            },
            ArmSpec {
                name: "dagger".into(),
                method: TrainMethod::Dagger,
                policy: base_policy,
                dagger,
                bc_epochs: cfg.bc_epochs,
            },
        ],
        ExperimentKind::DataScale => vec![
            ArmSpec {
                name: "dagger".into(),
                method: TrainMethod::Dagger,
                policy: base_policy,
                dagger,
                bc_epochs: cfg.bc_epochs,
            },
            ArmSpec {
                name: "dagger_10pct".into(),
                method: TrainMethod::Dagger,
                policy: base_policy,
                dagger: DaggerConfig {
                    trajectories_per_round: (dagger.trajectories_per_round / 10).max(1),
                    ..dagger
                },
                bc_epochs: cfg.bc_epochs,
            },
        ],
        ExperimentKind::BinocularAblation => BinocularVariant::ALL
            .into_iter()
            .map(|variant| ArmSpec {
                name: variant.name().into(),
                method: TrainMethod::Dagger,
                policy: PolicyConfig {
                    variant,
                    ..base_policy
                },
                dagger,
                bc_epochs: cfg.bc_epochs,
            })
            .collect(),
        ExperimentKind::Illumination => vec![
            ArmSpec {
                name: "frozen_robust".into(),
                method: TrainMethod::Dagger,
                policy: PolicyConfig {
                    encoder_mode: EncoderMode::FrozenRobust,
                    ..base_policy
                },
                dagger,
                bc_epochs: cfg.bc_epochs,
            },
            ArmSpec {
                name: "trainable_appearance".into(),
                method: TrainMethod::Dagger,
                policy: PolicyConfig {
                    encoder_mode: EncoderMode::TrainableAppearance,
                    ..base_policy
                },
                dagger,
                bc_epochs: cfg.bc_epochs,
            },
        ],
        ExperimentKind::EmbodimentSwap => vec![ArmSpec {
            name: "dagger".into(),
            method: TrainMethod::Dagger,
            policy: base_policy,
            dagger,
            bc_epochs: cfg.bc_epochs,
        }],
    }
}

fn assert_disjoint_routes(
    train_manifest: &[String],
    eval_manifest: &[String],
) -> Result<(), ExperimentError> {
    let train: BTreeSet<&String> = train_manifest.iter().collect();
    for line in eval_manifest {
        if train.contains(line) {
            return Err(ExperimentError::RouteOverlap(line.clone()));
        }
    }
    Ok(())
}

/// Runs a configured experiment end to end: trains (or loads) every arm for
/// every seed, evaluates on the held-out suite, and writes metrics, deltas,
/// and plots under `<ws>/experiments/<kind>/`.
pub fn run_experiment(
    ws: &Path,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let out_dir = ws.join("experiments").join(cfg.kind.name());
    std::fs::create_dir_all(&out_dir)?;
    let config_hash = cfg.config_hash();
    std::fs::write(out_dir.join("config.cfg"), cfg.canonical())?;
    let arms = arms_for(cfg);

    // maps for illumination are prebuilt at the configured light levels
    let map_lights: Vec<f32> = match cfg.kind {
        ExperimentKind::Illumination => cfg.map_light_levels.clone(),
        _ => vec![1.0],
    };
    let categories: &[SceneCategory] = match cfg.kind {
        ExperimentKind::EmbodimentSwap => &[SceneCategory::OpenSpace],
        _ => &SceneCategory::ALL,
    };
    let suites: Vec<(u64, EvalSuite)> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            build_eval_suite(
                cfg,
                &cfg.policy,
                mix_seed(seed, 0xEE00, 0),
                cfg.eval_routes,
                &map_lights,
                categories,
            )
            .map(|s| (seed, s))
        })
        .collect::<Result<_, _>>()?;

    // arm training is single-threaded per instance; fan independent
    // (seed, arm) jobs across workers and reassemble rows in fixed order
    let jobs: Vec<(usize, usize)> = (0..suites.len())
        .flat_map(|si| (0..arms.len()).map(move |ai| (si, ai)))
        .collect();
    let job_rows: Vec<Result<Vec<ReportRow>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(si, ai)| {
            let (seed, suite) = &suites[si];
            let seed = *seed;
            let arm = &arms[ai];
            let mut rows: Vec<ReportRow> = Vec::new();
            let eval_manifest = suite.manifest_lines();
            let trained = train_arm(ws, cfg, arm, seed)?;
            assert_disjoint_routes(&trained.train_manifest, &eval_manifest)?;
            let kind_name = cfg.kind.name();
            match cfg.kind {
                ExperimentKind::Illumination => {
                    for &ml in &cfg.map_light_levels {
                        for &el in &cfg.eval_light_levels {
                            let results = evaluate_policy(
                                &trained.policy,
                                suite,
                                ml,
                                el,
                                Embodiment::default(),
                                None,
                            )?;
                            rows.extend(rows_for(
                                kind_name,
                                &arm.name,
                                seed,
                                &format!("map{ml:?}_eval{el:?}"),
                                &results,
                                config_hash,
                                trained.checkpoint_hash,
                                false,
                            ));
                        }
                    }
                }
                ExperimentKind::EmbodimentSwap => {
                    let nominal = evaluate_policy(
                        &trained.policy,
                        suite,
                        1.0,
                        1.0,
                        Embodiment::default(),
                        Some(&[SceneCategory::OpenSpace]),
                    )?;
                    rows.extend(rows_for(
                        kind_name,
                        &arm.name,
                        seed,
                        "nominal",
                        &nominal,
                        config_hash,
                        trained.checkpoint_hash,
                        false,
                    ));
                    let swapped_emb = Embodiment {
                        v_max: cfg.swap_v_max,
                        omega_max: Embodiment::default().omega_max * cfg.swap_omega_scale,
                        ..Embodiment::default()
                    };
                    let swapped = evaluate_policy(
                        &trained.policy,
                        suite,
                        1.0,
                        1.0,
                        swapped_emb,
                        Some(&[SceneCategory::OpenSpace]),
                    )?;
                    rows.extend(rows_for(
                        kind_name,
                        &arm.name,
                        seed,
                        "swapped",
                        &swapped,
                        config_hash,
                        trained.checkpoint_hash,
                        false,
                    ));
                }
                _ => {
                    let results = evaluate_policy(
                        &trained.policy,
                        suite,
                        1.0,
                        1.0,
                        Embodiment::default(),
                        None,
                    )?;
                    rows.extend(rows_for(
                        kind_name,
                        &arm.name,
                        seed,
                        "",
                        &results,
                        config_hash,
                        trained.checkpoint_hash,
                        true,
                    ));
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows: Vec<ReportRow> = Vec::new();
    for r in job_rows {
        rows.extend(r?);
    }

    let metrics_csv = out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_csv, &rows)?;
    let deltas_csv = out_dir.join("deltas.csv");
    write_deltas_csv(&deltas_csv, &rows)?;

    let mut plots = Vec::new();
    let plot_dir = out_dir.join("plots");
    std::fs::create_dir_all(&plot_dir)?;
    match cfg.kind {
        ExperimentKind::Illumination => {
            // SR vs eval light level, one series per (arm, map light)
            let mut series = Vec::new();
            for arm in &arms {
                for &ml in &cfg.map_light_levels {
                    let mut pts = Vec::new();
                    for &el in &cfg.eval_light_levels {
                        let split = format!("map{ml:?}_eval{el:?}");
                        let srs: Vec<f64> = rows
                            .iter()
                            .filter(|r| r.arm == arm.name && r.split == split)
                            .map(|r| r.sr)
                            .collect();
                        if !srs.is_empty() {
                            pts.push((el as f64, srs.iter().sum::<f64>() / srs.len() as f64));
                        }
                    }
                    series.push((format!("{} map@{ml:?}", arm.name), pts));
                }
            }
            let p = plot_dir.join("sr_vs_illumination.svg");
            write_svg_line_plot(&p, "SR vs illumination level", "evaluation light level", &series)?;
            plots.push(p);
        }
        ExperimentKind::DataScale => {
            let mut series = Vec::new();
            for arm in &arms {
                let budget = arm.dagger.rounds * arm.dagger.trajectories_per_round;
                let srs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.arm == arm.name && r.split == "all")
                    .map(|r| r.sr)
                    .collect();
                if !srs.is_empty() {
                    series.push((
                        arm.name.clone(),
                        vec![(budget as f64, srs.iter().sum::<f64>() / srs.len() as f64)],
                    ));
                }
            }
            // single series across budgets is more readable
            let mut combined: Vec<(f64, f64)> =
                series.iter().flat_map(|(_, pts)| pts.clone()).collect();
            combined.sort_by(|a, b| a.0.total_cmp(&b.0));
            let p = plot_dir.join("sr_vs_budget.svg");
            write_svg_line_plot(
                &p,
                "SR vs sample budget",
                "collected trajectories",
                &[("dagger".to_string(), combined)],
            )?;
            plots.push(p);
        }
        _ => {}
    }

    Ok(ExperimentReport {
        rows,
        metrics_csv,
        deltas_csv,
        plots,
    })
}

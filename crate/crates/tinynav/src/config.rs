//! Experiment configuration: a sectioned key-value file format, canonical
//! emission for provenance hashing, and the workspace directory convention.

use crate::learner::DaggerConfig;
use crate::nn::AdamWConfig;
use crate::policy::{BinocularVariant, EncoderMode, PolicyConfig};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

/// Environment variable selecting the global workspace directory.
pub const WORKSPACE_ENV: &str = "TINYNAV_WORKSPACE";

pub fn workspace_dir(cli_override: Option<&str>) -> PathBuf {
    if let Some(p) = cli_override {
        return PathBuf::from(p);
    }
    match std::env::var(WORKSPACE_ENV) {
        Ok(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("tinynav-workspace"),
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown experiment kind {0:?}")]
    UnknownKind(String),
    #[error("invalid value for {key}: {value}")]
    BadValue { key: String, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    BcVsDagger,
    DataScale,
    BinocularAblation,
    Illumination,
    EmbodimentSwap,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::BcVsDagger,
        ExperimentKind::DataScale,
        ExperimentKind::BinocularAblation,
        ExperimentKind::Illumination,
        ExperimentKind::EmbodimentSwap,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::BcVsDagger => "bc_vs_dagger",
            ExperimentKind::DataScale => "data_scale",
            ExperimentKind::BinocularAblation => "binocular_ablation",
            ExperimentKind::Illumination => "illumination",
            ExperimentKind::EmbodimentSwap => "embodiment_swap",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Full experiment description; sections of the config file map onto the
/// grouped fields below.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    // [scenes]
    pub scene_size: u32,
    pub train_scenes_per_category: usize,
    // [eval]
    pub eval_routes: usize,
    pub route_min_len: f64,
    pub route_max_len: f64,
    pub node_spacing: f64,
    // [dagger]
    pub dagger: DaggerConfig,
    pub bc_epochs: usize,
    // [policy]
    pub policy: PolicyConfig,
    // [optimizer]
    pub optimizer: AdamWConfig,
    // [illumination]
    pub map_light_levels: Vec<f32>,
    pub eval_light_levels: Vec<f32>,
    // [embodiment_swap]
    pub swap_v_max: f64,
    pub swap_omega_scale: f64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seeds: vec![1, 2, 3],
            scene_size: 64,
            train_scenes_per_category: 2,
            eval_routes: 100,
            route_min_len: 1.2,
            route_max_len: 4.0,
            node_spacing: 1.5,
            dagger: DaggerConfig::default(),
            bc_epochs: 6,
            policy: PolicyConfig::default(),
            optimizer: AdamWConfig::default(),
            map_light_levels: vec![1.0, 0.15],
            eval_light_levels: vec![1.0, 0.6, 0.3, 0.15],
            swap_v_max: 0.4,
            swap_omega_scale: 4.0 / 3.0,
        }
    }

    /// Canonical key-value emission: fixed section and key order, float
    /// round-trip formatting. Equal configs emit identical text.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        out.push_str("[experiment]\n");
        out.push_str(&format!("kind = {}\n", self.kind.name()));
        out.push_str(&format!(
            "seeds = {}\n",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        out.push_str("\n[scenes]\n");
        out.push_str(&format!("size = {}\n", self.scene_size));
        out.push_str(&format!(
            "train_per_category = {}\n",
            self.train_scenes_per_category
        ));
        out.push_str("\n[eval]\n");
        out.push_str(&format!("routes = {}\n", self.eval_routes));
        out.push_str(&format!("route_min_len = {:?}\n", self.route_min_len));
        out.push_str(&format!("route_max_len = {:?}\n", self.route_max_len));
        out.push_str(&format!("node_spacing = {:?}\n", self.node_spacing));
        out.push_str("\n[dagger]\n");
        out.push_str(&format!("rounds = {}\n", self.dagger.rounds));
        out.push_str(&format!("beta = {:?}\n", self.dagger.beta));
        out.push_str(&format!(
            "trajectories_per_round = {}\n",
            self.dagger.trajectories_per_round
        ));
        out.push_str(&format!(
            "epochs_per_round = {}\n",
            self.dagger.epochs_per_round
        ));
        out.push_str(&format!("batch_size = {}\n", self.dagger.batch_size));
        out.push_str(&format!("bc_epochs = {}\n", self.bc_epochs));
        out.push_str("\n[policy]\n");
        out.push_str(&format!("p_frames = {}\n", self.policy.p_frames));
        out.push_str(&format!("horizon = {}\n", self.policy.horizon));
        out.push_str(&format!("obs_width = {}\n", self.policy.obs_width));
        out.push_str(&format!("token_dim = {}\n", self.policy.token_dim));
        out.push_str(&format!("patch_width = {}\n", self.policy.patch_width));
        out.push_str(&format!("bin_layers = {}\n", self.policy.bin_layers));
        out.push_str(&format!("bin_heads = {}\n", self.policy.bin_heads));
        out.push_str(&format!("seq_layers = {}\n", self.policy.seq_layers));
        out.push_str(&format!("seq_heads = {}\n", self.policy.seq_heads));
        out.push_str(&format!("variant = {}\n", self.policy.variant.name()));
        out.push_str(&format!(
            "encoder_mode = {}\n",
            self.policy.encoder_mode.name()
        ));
        out.push_str(&format!("encoder_seed = {}\n", self.policy.encoder_seed));
        out.push_str("\n[optimizer]\n");
        out.push_str(&format!("base_lr = {:?}\n", self.optimizer.base_lr));
        out.push_str(&format!("beta1 = {:?}\n", self.optimizer.beta1));
        out.push_str(&format!("beta2 = {:?}\n", self.optimizer.beta2));
        out.push_str(&format!("eps = {:?}\n", self.optimizer.eps));
        out.push_str(&format!(
            "weight_decay = {:?}\n",
            self.optimizer.weight_decay
        ));
        out.push_str("\n[illumination]\n");
        out.push_str(&format!(
            "map_light_levels = {}\n",
            join_f32(&self.map_light_levels)
        ));
        out.push_str(&format!(
            "eval_light_levels = {}\n",
            join_f32(&self.eval_light_levels)
        ));
        out.push_str("\n[embodiment_swap]\n");
        out.push_str(&format!("v_max = {:?}\n", self.swap_v_max));
        out.push_str(&format!("omega_scale = {:?}\n", self.swap_omega_scale));
        out
    }

    pub fn config_hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }

    /// Parses the sectioned key-value format emitted by [`Self::canonical`].
    /// Unknown keys are rejected; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<(String, String), String> = BTreeMap::new();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: ln + 1,
                reason: "expected key = value".into(),
            })?;
            kv.insert(
                (section.clone(), k.trim().to_string()),
                v.trim().to_string(),
            );
        }
        let kind_name =
            kv.get(&("experiment".into(), "kind".into()))
                .ok_or(ConfigError::Parse {
                    line: 0,
                    reason: "missing [experiment] kind".into(),
                })?;
        let kind = ExperimentKind::from_name(kind_name)
            .ok_or_else(|| ConfigError::UnknownKind(kind_name.clone()))?;
        let mut cfg = ExperimentConfig::new(kind);

        let bad = |key: &str, value: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        for ((section, key), value) in &kv {
            let path = format!("{section}.{key}");
            match path.as_str() {
                "experiment.kind" => {}
                "experiment.seeds" => {
                    cfg.seeds = value
                        .split(',')
                        .map(|s| s.trim().parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(&path, value))?;
                }
                "scenes.size" => cfg.scene_size = value.parse().map_err(|_| bad(&path, value))?,
                "scenes.train_per_category" => {
                    cfg.train_scenes_per_category =
                        value.parse().map_err(|_| bad(&path, value))?
                }
                "eval.routes" => cfg.eval_routes = value.parse().map_err(|_| bad(&path, value))?,
                "eval.route_min_len" => {
                    cfg.route_min_len = value.parse().map_err(|_| bad(&path, value))?
                }
                "eval.route_max_len" => {
                    cfg.route_max_len = value.parse().map_err(|_| bad(&path, value))?
                }
                "eval.node_spacing" => {
                    cfg.node_spacing = value.parse().map_err(|_| bad(&path, value))?
                }
                "dagger.rounds" => {
                    cfg.dagger.rounds = value.parse().map_err(|_| bad(&path, value))?
                }
                "dagger.beta" => cfg.dagger.beta = value.parse().map_err(|_| bad(&path, value))?,
                "dagger.trajectories_per_round" => {
                    cfg.dagger.trajectories_per_round =
                        value.parse().map_err(|_| bad(&path, value))?
                }
                "dagger.epochs_per_round" => {
                    cfg.dagger.epochs_per_round = value.parse().map_err(|_| bad(&path, value))?
                }
                "dagger.batch_size" => {
                    cfg.dagger.batch_size = value.parse().map_err(|_| bad(&path, value))?
                }
                "dagger.bc_epochs" => {
                    cfg.bc_epochs = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.p_frames" => {
                    cfg.policy.p_frames = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.horizon" => {
                    cfg.policy.horizon = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.obs_width" => {
                    cfg.policy.obs_width = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.token_dim" => {
                    cfg.policy.token_dim = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.patch_width" => {
                    cfg.policy.patch_width = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.bin_layers" => {
                    cfg.policy.bin_layers = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.bin_heads" => {
                    cfg.policy.bin_heads = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.seq_layers" => {
                    cfg.policy.seq_layers = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.seq_heads" => {
                    cfg.policy.seq_heads = value.parse().map_err(|_| bad(&path, value))?
                }
                "policy.variant" => {
                    cfg.policy.variant =
                        BinocularVariant::from_name(value).ok_or_else(|| bad(&path, value))?
                }
                "policy.encoder_mode" => {
                    cfg.policy.encoder_mode =
                        EncoderMode::from_name(value).ok_or_else(|| bad(&path, value))?
                }
                "policy.encoder_seed" => {
                    cfg.policy.encoder_seed = value.parse().map_err(|_| bad(&path, value))?
                }
                "optimizer.base_lr" => {
                    cfg.optimizer.base_lr = value.parse().map_err(|_| bad(&path, value))?
                }
                "optimizer.beta1" => {
                    cfg.optimizer.beta1 = value.parse().map_err(|_| bad(&path, value))?
                }
                "optimizer.beta2" => {
                    cfg.optimizer.beta2 = value.parse().map_err(|_| bad(&path, value))?
                }
                "optimizer.eps" => {
                    cfg.optimizer.eps = value.parse().map_err(|_| bad(&path, value))?
                }
                "optimizer.weight_decay" => {
                    cfg.optimizer.weight_decay = value.parse().map_err(|_| bad(&path, value))?
                }
                "illumination.map_light_levels" => {
                    cfg.map_light_levels = parse_f32_list(value).map_err(|_| bad(&path, value))?
                }
                "illumination.eval_light_levels" => {
                    cfg.eval_light_levels = parse_f32_list(value).map_err(|_| bad(&path, value))?
                }
                "embodiment_swap.v_max" => {
                    cfg.swap_v_max = value.parse().map_err(|_| bad(&path, value))?
                }
                "embodiment_swap.omega_scale" => {
                    cfg.swap_omega_scale = value.parse().map_err(|_| bad(&path, value))?
                }
                other => {
                    return Err(ConfigError::Parse {
                        line: 0,
                        reason: format!("unknown key {other}"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn join_f32(values: &[f32]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_f32_list(s: &str) -> Result<Vec<f32>, std::num::ParseFloatError> {
    s.split(',').map(|v| v.trim().parse::<f32>()).collect()
}

/// FNV-1a 64-bit hash, used for config and checkpoint provenance.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

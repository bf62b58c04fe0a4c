//! The goal-reaching waypoint policy: frozen (or trainable) observation
//! encoders, binocular goal conditioning in five variants, per-frame token
//! compression, a sequence encoder with a learnable state token, and an MLP
//! waypoint head.

use crate::nn::{
    copy_values, decode_checkpoint, encode_checkpoint, AdamW, Binder, DecoderLayerParams,
    EncoderLayerParams, Graph, Init, LayerNormParams, LinearParams, NnError, NodeId, ParamId,
    ParamStore,
};
use crate::world::{wrap_angle, Observation};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("observation width {got} does not match configured width {want}")]
    WidthMismatch { got: u32, want: u32 },
    #[error("observation stack has {got} frames, policy expects {want}")]
    StackLength { got: usize, want: usize },
    #[error("policy file is malformed: {0}")]
    MalformedPolicyFile(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Goal-conditioning architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinocularVariant {
    /// Goal tokens pass through unconditioned.
    NoBlock,
    /// Raw observation and goal channels are concatenated and encoded by a
    /// trainable convolutional stack (no frozen encoder on this path).
    EarlyConv,
    /// Encoded goal and observation tokens are concatenated channel-wise
    /// and refined by a 3-layer convolution.
    LateConv,
    /// Goal and observation tokens form one sequence for a self-attention
    /// encoder; the goal positions are returned.
    CatBlock,
    /// Alternating self-attention on goal tokens and cross-attention onto
    /// observation tokens.
    CrossBlock,
}

impl BinocularVariant {
    pub const ALL: [BinocularVariant; 5] = [
        BinocularVariant::NoBlock,
        BinocularVariant::EarlyConv,
        BinocularVariant::LateConv,
        BinocularVariant::CatBlock,
        BinocularVariant::CrossBlock,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BinocularVariant::NoBlock => "no_block",
            BinocularVariant::EarlyConv => "early_conv",
            BinocularVariant::LateConv => "late_conv",
            BinocularVariant::CatBlock => "cat_block",
            BinocularVariant::CrossBlock => "cross_block",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    fn tag(&self) -> u8 {
        match self {
            BinocularVariant::NoBlock => 0,
            BinocularVariant::EarlyConv => 1,
            BinocularVariant::LateConv => 2,
            BinocularVariant::CatBlock => 3,
            BinocularVariant::CrossBlock => 4,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == t)
    }
}

/// Frame-encoder regimes for the robustness ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    /// Fixed seeded projection over all channels; excluded from training.
    FrozenRobust,
    /// Trainable projection that sees only the appearance channel.
    TrainableAppearance,
}

impl EncoderMode {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderMode::FrozenRobust => "frozen_robust",
            EncoderMode::TrainableAppearance => "trainable_appearance",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "frozen_robust" => Some(EncoderMode::FrozenRobust),
            "trainable_appearance" => Some(EncoderMode::TrainableAppearance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Past observation frames fed to the sequence encoder.
    pub p_frames: usize,
    /// Predicted waypoints per forward pass.
    pub horizon: usize,
    /// Observation columns.
    pub obs_width: usize,
    /// Semantic channels per column (incl. no-hit).
    pub sem_channels: usize,
    /// Token feature dimension.
    pub token_dim: usize,
    /// Columns per patch token.
    pub patch_width: usize,
    pub bin_layers: usize,
    pub bin_heads: usize,
    pub seq_layers: usize,
    pub seq_heads: usize,
    pub variant: BinocularVariant,
    pub encoder_mode: EncoderMode,
    /// Seed of the fixed frozen projection.
    pub encoder_seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            p_frames: 6,
            horizon: 5,
            obs_width: 32,
            sem_channels: crate::world::SEM_CHANNELS as usize,
            token_dim: 32,
            patch_width: 4,
            bin_layers: 4,
            bin_heads: 4,
            seq_layers: 4,
            seq_heads: 4,
            variant: BinocularVariant::CrossBlock,
            encoder_mode: EncoderMode::FrozenRobust,
            encoder_seed: 17,
        }
    }
}

impl PolicyConfig {
    /// Tokens per frame.
    pub fn tokens(&self) -> usize {
        assert_eq!(
            self.obs_width % self.patch_width,
            0,
            "obs width must be divisible by patch width"
        );
        self.obs_width / self.patch_width
    }

    /// Raw channels per column (inverse depth, appearance, semantics).
    pub fn channels(&self) -> usize {
        2 + self.sem_channels
    }
}

/// Predicted relative waypoints; headings are wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPrediction {
    pub waypoints: Vec<[f64; 3]>,
}

/// Fixed seeded affine projection from patch channels to tokens, plus a
/// sinusoidal positional table. The projection is partitioned by channel
/// group so the appearance rows can be excluded (robust sub-projection).
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    pub token_dim: usize,
    pub patch_width: usize,
    pub sem_channels: usize,
    /// [in_dim, token_dim] with in_dim = patch_width * (2 + sem_channels);
    /// row layout: depth block, appearance block, semantic block.
    weight: Vec<f64>,
    bias: Vec<f64>,
    /// [tokens, token_dim] sinusoidal positions.
    positional: Vec<f64>,
    tokens: usize,
}

impl FrozenEncoder {
    pub fn new(
        seed: u64,
        obs_width: usize,
        sem_channels: usize,
        patch_width: usize,
        token_dim: usize,
    ) -> Self {
        assert_eq!(obs_width % patch_width, 0);
        let tokens = obs_width / patch_width;
        let in_dim = patch_width * (2 + sem_channels);
        let mut init = Init::new(seed);
        let weight = init.xavier(in_dim, token_dim);
        let bias = init.zeros(token_dim);
        let positional = crate::nn::sinusoidal_encoding(tokens, token_dim);
        Self {
            token_dim,
            patch_width,
            sem_channels,
            weight,
            bias,
            positional,
            tokens,
        }
    }

    fn in_dim(&self) -> usize {
        self.patch_width * (2 + self.sem_channels)
    }

    /// Patch features, channel blocks in row order depth | appearance |
    /// semantics; [tokens, in_dim] row-major.
    pub fn patch_features(&self, obs: &Observation) -> Vec<f64> {
        let pw = self.patch_width;
        let c = self.sem_channels;
        let in_dim = self.in_dim();
        let mut out = vec![0.0; self.tokens * in_dim];
        for t in 0..self.tokens {
            let row = &mut out[t * in_dim..(t + 1) * in_dim];
            for j in 0..pw {
                let col = t * pw + j;
                row[j] = obs.inv_depth[col] as f64;
                row[pw + j] = obs.appearance[col] as f64;
                let onehot = obs.semantic_onehot(col);
                for (ci, &v) in onehot.iter().enumerate().take(c) {
                    row[2 * pw + j * c + ci] = v as f64;
                }
            }
        }
        out
    }

    /// Full frozen tokens including positional encoding, [tokens, token_dim].
    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        let feats = self.patch_features(obs);
        let mut out = self.positional.clone();
        self.project(&feats, &mut out, None);
        out
    }

    /// Tokens from the depth and semantic sub-projections only, without
    /// positional encoding; exactly invariant to the light level.
    pub fn robust_tokens(&self, obs: &Observation) -> Vec<f64> {
        let feats = self.patch_features(obs);
        let mut out = vec![0.0; self.tokens * self.token_dim];
        let pw = self.patch_width;
        self.project(&feats, &mut out, Some((pw, 2 * pw)));
        out
    }

    /// out += feats @ weight + bias, optionally skipping the input-row range
    /// [skip.0, skip.1) (the appearance block).
    fn project(&self, feats: &[f64], out: &mut [f64], skip: Option<(usize, usize)>) {
        let in_dim = self.in_dim();
        let d = self.token_dim;
        for t in 0..self.tokens {
            let frow = &feats[t * in_dim..(t + 1) * in_dim];
            let orow = &mut out[t * d..(t + 1) * d];
            for j in 0..d {
                orow[j] += self.bias[j];
            }
            for (i, &f) in frow.iter().enumerate() {
                if let Some((lo, hi)) = skip {
                    if i >= lo && i < hi {
                        continue;
                    }
                }
                if f == 0.0 {
                    continue;
                }
                let wrow = &self.weight[i * d..(i + 1) * d];
                for j in 0..d {
                    orow[j] += f * wrow[j];
                }
            }
        }
    }

    /// Raw bytes of the projection, for frozen-stability assertions.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for v in self.weight.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

#[derive(Debug, Clone)]
struct ConvParams {
    w: ParamId,
    b: ParamId,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvParams {
    fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        kernel: usize,
        stride: usize,
        pad: usize,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let w = store.register(
            &format!("{name}.w"),
            kernel * c_in,
            c_out,
            init.xavier(kernel * c_in, c_out),
        );
        let b = store.register(&format!("{name}.b"), 1, c_out, init.zeros(c_out));
        Self {
            w,
            b,
            kernel,
            stride,
            pad,
        }
    }

    fn apply(&self, g: &mut Graph, binder: &mut Binder, x: NodeId) -> Result<NodeId, NnError> {
        let w = binder.node(g, self.w);
        let b = binder.node(g, self.b);
        g.conv1d(x, w, b, self.kernel, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
enum BinocularParams {
    NoBlock,
    CrossBlock {
        layers: Vec<DecoderLayerParams>,
        norm: LayerNormParams,
    },
    CatBlock {
        layers: Vec<EncoderLayerParams>,
        norm: LayerNormParams,
    },
    LateConv {
        convs: Vec<ConvParams>,
    },
    EarlyConv {
        goal_convs: Vec<ConvParams>,
    },
}

#[derive(Debug, Clone)]
enum FrameEncoderParams {
    /// Frozen constants only.
    Frozen,
    /// Trainable appearance-only projection.
    Appearance(LinearParams),
    /// Trainable convolutional stack over raw channels (EarlyConv).
    Conv(Vec<ConvParams>),
}

#[derive(Debug, Clone)]
struct CompressParams {
    conv: ConvParams,
    affine: LinearParams,
}

#[derive(Debug, Clone)]
struct PolicyParams {
    frame: FrameEncoderParams,
    binocular: BinocularParams,
    compress: CompressParams,
    seq_layers: Vec<EncoderLayerParams>,
    seq_norm: LayerNormParams,
    state_token: ParamId,
    head1: LinearParams,
    head2: LinearParams,
    head3: LinearParams,
}

/// The goal-reaching policy. A policy instance owns its trainable parameter
/// store; the frozen encoder is constant data shared by reference.
#[derive(Debug, Clone)]
pub struct Policy {
    pub cfg: PolicyConfig,
    pub store: ParamStore,
    frozen: FrozenEncoder,
    params: PolicyParams,
}

/// Node handles produced while building one forward pass.
pub struct ForwardNodes {
    /// [horizon, 3] prediction.
    pub prediction: NodeId,
    /// CrossBlock cross-attention maps, per layer then per head.
    pub cross_attention: Vec<Vec<NodeId>>,
}

const COMPRESS_CHANNELS: usize = 16;

impl Policy {
    pub fn new(cfg: PolicyConfig, param_seed: u64) -> Self {
        let frozen = FrozenEncoder::new(
            cfg.encoder_seed,
            cfg.obs_width,
            cfg.sem_channels,
            cfg.patch_width,
            cfg.token_dim,
        );
        let mut store = ParamStore::new();
        let mut init = Init::new(param_seed);
        let d = cfg.token_dim;
        let ch = cfg.channels();

        let frame = match (cfg.variant, cfg.encoder_mode) {
            (BinocularVariant::EarlyConv, _) => FrameEncoderParams::Conv(vec![
                ConvParams::register(
                    &mut store,
                    &mut init,
                    "frame.conv1",
                    cfg.patch_width,
                    cfg.patch_width,
                    0,
                    ch,
                    d,
                ),
                ConvParams::register(&mut store, &mut init, "frame.conv2", 3, 1, 1, d, d),
            ]),
            (_, EncoderMode::FrozenRobust) => FrameEncoderParams::Frozen,
            (_, EncoderMode::TrainableAppearance) => FrameEncoderParams::Appearance(
                LinearParams::register(&mut store, &mut init, "frame.proj", cfg.patch_width, d),
            ),
        };

        let binocular = match cfg.variant {
            BinocularVariant::NoBlock => BinocularParams::NoBlock,
            BinocularVariant::CrossBlock => BinocularParams::CrossBlock {
                layers: (0..cfg.bin_layers)
                    .map(|i| {
                        DecoderLayerParams::register(
                            &mut store,
                            &mut init,
                            &format!("bin.layer{i}"),
                            d,
                            cfg.bin_heads,
                        )
                    })
                    .collect(),
                norm: LayerNormParams::register(&mut store, &mut init, "bin.norm", d),
            },
            BinocularVariant::CatBlock => BinocularParams::CatBlock {
                layers: (0..cfg.bin_layers)
                    .map(|i| {
                        EncoderLayerParams::register(
                            &mut store,
                            &mut init,
                            &format!("bin.layer{i}"),
                            d,
                            cfg.bin_heads,
                        )
                    })
                    .collect(),
                norm: LayerNormParams::register(&mut store, &mut init, "bin.norm", d),
            },
            BinocularVariant::LateConv => BinocularParams::LateConv {
                convs: vec![
                    ConvParams::register(&mut store, &mut init, "bin.conv1", 3, 1, 1, 2 * d, d),
                    ConvParams::register(&mut store, &mut init, "bin.conv2", 3, 1, 1, d, d),
                    ConvParams::register(&mut store, &mut init, "bin.conv3", 3, 1, 1, d, d),
                ],
            },
            BinocularVariant::EarlyConv => BinocularParams::EarlyConv {
                goal_convs: vec![
                    ConvParams::register(
                        &mut store,
                        &mut init,
                        "bin.conv1",
                        cfg.patch_width,
                        cfg.patch_width,
                        0,
                        2 * ch,
                        d,
                    ),
                    ConvParams::register(&mut store, &mut init, "bin.conv2", 3, 1, 1, d, d),
                    ConvParams::register(&mut store, &mut init, "bin.conv3", 3, 1, 1, d, d),
                ],
            },
        };

        let compress = CompressParams {
            conv: ConvParams::register(
                &mut store,
                &mut init,
                "compress.conv",
                3,
                1,
                0,
                d,
                COMPRESS_CHANNELS,
            ),
            affine: LinearParams::register(
                &mut store,
                &mut init,
                "compress.affine",
                (cfg.tokens() - 2) * COMPRESS_CHANNELS,
                d,
            ),
        };

        let seq_layers = (0..cfg.seq_layers)
            .map(|i| {
                EncoderLayerParams::register(
                    &mut store,
                    &mut init,
                    &format!("seq.layer{i}"),
                    d,
                    cfg.seq_heads,
                )
            })
            .collect();
        let seq_norm = LayerNormParams::register(&mut store, &mut init, "seq.norm", d);
        let state_token = store.register("seq.state_token", 1, d, init.zeros(d));

        let head1 = LinearParams::register(&mut store, &mut init, "head.fc1", d, 4 * d);
        let head2 = LinearParams::register(&mut store, &mut init, "head.fc2", 4 * d, 4 * d);
        let head3 = LinearParams::register(
            &mut store,
            &mut init,
            "head.fc3",
            4 * d,
            cfg.horizon * 3,
        );

        Self {
            cfg,
            store,
            frozen,
            params: PolicyParams {
                frame,
                binocular,
                compress,
                seq_layers,
                seq_norm,
                state_token,
                head1,
                head2,
                head3,
            },
        }
    }

    pub fn frozen_encoder(&self) -> &FrozenEncoder {
        &self.frozen
    }

    pub fn trainable_scalars(&self) -> usize {
        self.store.num_scalars()
    }

    fn check_obs(&self, obs: &Observation) -> Result<(), PolicyError> {
        if obs.width() as usize != self.cfg.obs_width {
            return Err(PolicyError::WidthMismatch {
                got: obs.width(),
                want: self.cfg.obs_width as u32,
            });
        }
        Ok(())
    }

    /// Raw per-column channel matrix [obs_width, channels].
    fn raw_columns(&self, obs: &Observation) -> Vec<f64> {
        let ch = self.cfg.channels();
        let c = self.cfg.sem_channels;
        let mut out = vec![0.0; self.cfg.obs_width * ch];
        for col in 0..self.cfg.obs_width {
            let row = &mut out[col * ch..(col + 1) * ch];
            row[0] = obs.inv_depth[col] as f64;
            row[1] = obs.appearance[col] as f64;
            let onehot = obs.semantic_onehot(col);
            for (ci, &v) in onehot.iter().enumerate().take(c) {
                row[2 + ci] = v as f64;
            }
        }
        out
    }

    /// Appearance-only patch features [tokens, patch_width].
    fn appearance_patches(&self, obs: &Observation) -> Vec<f64> {
        let pw = self.cfg.patch_width;
        let t = self.cfg.tokens();
        let mut out = vec![0.0; t * pw];
        for ti in 0..t {
            for j in 0..pw {
                out[ti * pw + j] = obs.appearance[ti * pw + j] as f64;
            }
        }
        out
    }

    /// Per-frame token grid on the graph.
    fn encode_frame(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        obs: &Observation,
        pe_node: NodeId,
    ) -> Result<NodeId, PolicyError> {
        self.check_obs(obs)?;
        let t = self.cfg.tokens();
        let d = self.cfg.token_dim;
        let node = match &self.params.frame {
            FrameEncoderParams::Frozen => {
                let tokens = self.frozen.encode(obs);
                // frozen tokens enter the graph as constants
                g.leaf(t, d, tokens)
            }
            FrameEncoderParams::Appearance(proj) => {
                let feats = self.appearance_patches(obs);
                let x = g.leaf(t, self.cfg.patch_width, feats);
                let y = proj.apply(g, binder, x)?;
                g.add(y, pe_node)?
            }
            FrameEncoderParams::Conv(convs) => {
                let raw = self.raw_columns(obs);
                let x = g.leaf(self.cfg.obs_width, self.cfg.channels(), raw);
                let mut y = convs[0].apply(g, binder, x)?;
                for conv in &convs[1..] {
                    y = g.gelu(y);
                    y = conv.apply(g, binder, y)?;
                }
                g.add(y, pe_node)?
            }
        };
        Ok(node)
    }

    /// Refines goal tokens against the latest observation per the configured
    /// variant. For EarlyConv the inputs are raw channel grids instead of
    /// encoded tokens. Returns the refined [tokens, token_dim] grid and any
    /// cross-attention maps.
    fn binocular_encode(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        goal_tokens: NodeId,
        obs_tokens: NodeId,
        ) -> Result<(NodeId, Vec<Vec<NodeId>>), PolicyError> {
        match &self.params.binocular {
            BinocularParams::NoBlock => Ok((goal_tokens, Vec::new())),
            BinocularParams::CrossBlock { layers, norm } => {
                let mut x = goal_tokens;
                let mut maps = Vec::with_capacity(layers.len());
                for layer in layers {
                    let (nx, layer_maps) = layer.apply(g, binder, x, obs_tokens)?;
                    x = nx;
                    maps.push(layer_maps);
                }
                let x = norm.apply(g, binder, x)?;
                Ok((x, maps))
            }
            BinocularParams::CatBlock { layers, norm } => {
                let t = self.cfg.tokens();
                let mut x = g.concat_rows(&[goal_tokens, obs_tokens])?;
                for layer in layers {
                    let (nx, _) = layer.apply(g, binder, x)?;
                    x = nx;
                }
                let x = norm.apply(g, binder, x)?;
                Ok((g.slice_rows(x, 0, t), Vec::new()))
            }
            BinocularParams::LateConv { convs } => {
                let mut x = g.concat_cols(&[goal_tokens, obs_tokens])?;
                for (i, conv) in convs.iter().enumerate() {
                    if i > 0 {
                        x = g.gelu(x);
                    }
                    x = conv.apply(g, binder, x)?;
                }
                Ok((x, Vec::new()))
            }
            BinocularParams::EarlyConv { goal_convs } => {
                // here the "token grids" are raw channel matrices
                let mut x = g.concat_cols(&[obs_tokens, goal_tokens])?;
                for (i, conv) in goal_convs.iter().enumerate() {
                    if i > 0 {
                        x = g.gelu(x);
                    }
                    x = conv.apply(g, binder, x)?;
                }
                Ok((x, Vec::new()))
            }
        }
    }

    fn compress(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        tokens: NodeId,
    ) -> Result<NodeId, PolicyError> {
        let y = self.params.compress.conv.apply(g, binder, tokens)?;
        let y = g.gelu(y);
        let s = g.shape(y);
        let flat = g.reshape(y, 1, s.rows * s.cols)?;
        Ok(self.params.compress.affine.apply(g, binder, flat)?)
    }

    /// Builds the full forward pass on `g`. The observation stack is
    /// oldest-first and must have exactly `p_frames` entries.
    pub fn build_forward(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        obs_stack: &[Observation],
        goal: &Observation,
    ) -> Result<ForwardNodes, PolicyError> {
        if obs_stack.len() != self.cfg.p_frames {
            return Err(PolicyError::StackLength {
                got: obs_stack.len(),
                want: self.cfg.p_frames,
            });
        }
        self.check_obs(goal)?;
        let t = self.cfg.tokens();
        let d = self.cfg.token_dim;
        let pe_node = g.leaf(t, d, self.frozen.positional.clone());

        // binocular stage input: encoded tokens, or raw channels for EarlyConv
        let latest = &obs_stack[self.cfg.p_frames - 1];
        let (refined_goal, cross_maps) = if self.cfg.variant == BinocularVariant::EarlyConv {
            let w = self.cfg.obs_width;
            let ch = self.cfg.channels();
            let goal_raw = g.leaf(w, ch, self.raw_columns(goal));
            let obs_raw = g.leaf(w, ch, self.raw_columns(latest));
            let (refined, maps) = self.binocular_encode(g, binder, goal_raw, obs_raw)?;
            let refined = g.add(refined, pe_node)?;
            (refined, maps)
        } else {
            let goal_tokens = self.encode_frame(g, binder, goal, pe_node)?;
            let latest_tokens = self.encode_frame(g, binder, latest, pe_node)?;
            self.binocular_encode(g, binder, goal_tokens, latest_tokens)?
        };

        // per-frame vectors
        let mut seq_items = Vec::with_capacity(self.cfg.p_frames + 2);
        for obs in obs_stack {
            let tokens = self.encode_frame(g, binder, obs, pe_node)?;
            seq_items.push(self.compress(g, binder, tokens)?);
        }
        seq_items.push(self.compress(g, binder, refined_goal)?);
        seq_items.push(binder.node(g, self.params.state_token));

        let seq_len = self.cfg.p_frames + 2;
        let seq = g.concat_rows(&seq_items)?;
        let seq_pe = g.leaf(seq_len, d, crate::nn::sinusoidal_encoding(seq_len, d));
        let mut x = g.add(seq, seq_pe)?;
        for layer in &self.params.seq_layers {
            let (nx, _) = layer.apply(g, binder, x)?;
            x = nx;
        }
        let x = self.params.seq_norm.apply(g, binder, x)?;
        let state_out = g.slice_rows(x, seq_len - 1, 1);

        let h = self.params.head1.apply(g, binder, state_out)?;
        let h = g.gelu(h);
        let h = self.params.head2.apply(g, binder, h)?;
        let h = g.gelu(h);
        let h = self.params.head3.apply(g, binder, h)?;
        let prediction = g.reshape(h, self.cfg.horizon, 3)?;
        Ok(ForwardNodes {
            prediction,
            cross_attention: cross_maps,
        })
    }

    /// Runs the policy on one input, returning wrapped waypoints.
    pub fn predict(
        &self,
        obs_stack: &[Observation],
        goal: &Observation,
    ) -> Result<WaypointPrediction, PolicyError> {
        Ok(self.predict_with_attention(obs_stack, goal)?.0)
    }

    /// As [`Policy::predict`], also returning the per-layer per-head
    /// cross-attention maps (empty for variants without cross-attention).
    #[allow(clippy::type_complexity)]
    pub fn predict_with_attention(
        &self,
        obs_stack: &[Observation],
        goal: &Observation,
    ) -> Result<(WaypointPrediction, Vec<Vec<Vec<f64>>>), PolicyError> {
        let mut g = Graph::new();
        let mut binder = Binder::new(&self.store);
        let nodes = self.build_forward(&mut g, &mut binder, obs_stack, goal)?;
        let raw = g.value(nodes.prediction);
        let waypoints = raw
            .chunks_exact(3)
            .map(|c| [c[0], c[1], wrap_angle(c[2])])
            .collect();
        let maps = nodes
            .cross_attention
            .iter()
            .map(|layer| layer.iter().map(|&m| g.value(m).to_vec()).collect())
            .collect();
        Ok((WaypointPrediction { waypoints }, maps))
    }
}

/// Mean squared error over all waypoint components, with the heading
/// component differenced on the wrapped circle.
pub fn loss_mse(pred: &WaypointPrediction, label: &[[f64; 3]]) -> f64 {
    assert_eq!(pred.waypoints.len(), label.len());
    let mut sum = 0.0;
    for (p, l) in pred.waypoints.iter().zip(label) {
        let dx = p[0] - l[0];
        let dy = p[1] - l[1];
        let dt = wrap_angle(p[2] - l[2]);
        sum += dx * dx + dy * dy + dt * dt;
    }
    sum / (label.len() * 3) as f64
}

const POLICY_MAGIC: &[u8; 4] = b"TNPC";
const POLICY_VERSION: u16 = 1;

/// Serializes a policy: config record plus the embedded parameter table.
pub fn encode_policy(policy: &Policy, optimizer: Option<&AdamW>) -> Vec<u8> {
    let cfg = &policy.cfg;
    let mut out = Vec::new();
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&POLICY_VERSION.to_le_bytes());
    out.push(cfg.variant.tag());
    out.push(match cfg.encoder_mode {
        EncoderMode::FrozenRobust => 0,
        EncoderMode::TrainableAppearance => 1,
    });
    out.extend_from_slice(&cfg.encoder_seed.to_le_bytes());
    for v in [
        cfg.p_frames,
        cfg.horizon,
        cfg.obs_width,
        cfg.sem_channels,
        cfg.token_dim,
        cfg.patch_width,
        cfg.bin_layers,
        cfg.bin_heads,
        cfg.seq_layers,
        cfg.seq_heads,
    ] {
        out.extend_from_slice(&(v as u16).to_le_bytes());
    }
    out.extend_from_slice(&encode_checkpoint(&policy.store, optimizer));
    out
}

pub fn decode_policy(bytes: &[u8]) -> Result<(Policy, Option<AdamW>), PolicyError> {
    let malformed = |s: &str| PolicyError::MalformedPolicyFile(s.to_string());
    if bytes.len() < 36 {
        return Err(malformed("file too short"));
    }
    if &bytes[0..4] != POLICY_MAGIC {
        return Err(malformed("bad magic bytes"));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != POLICY_VERSION {
        return Err(malformed(&format!("unsupported version {version}")));
    }
    let variant = BinocularVariant::from_tag(bytes[6]).ok_or_else(|| malformed("bad variant"))?;
    let encoder_mode = match bytes[7] {
        0 => EncoderMode::FrozenRobust,
        1 => EncoderMode::TrainableAppearance,
        _ => return Err(malformed("bad encoder mode")),
    };
    let encoder_seed = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let mut fields = [0usize; 10];
    for (i, f) in fields.iter_mut().enumerate() {
        *f = u16::from_le_bytes(bytes[16 + 2 * i..18 + 2 * i].try_into().unwrap()) as usize;
    }
    let cfg = PolicyConfig {
        p_frames: fields[0],
        horizon: fields[1],
        obs_width: fields[2],
        sem_channels: fields[3],
        token_dim: fields[4],
        patch_width: fields[5],
        bin_layers: fields[6],
        bin_heads: fields[7],
        seq_layers: fields[8],
        seq_heads: fields[9],
        variant,
        encoder_mode,
        encoder_seed,
    };
    let (loaded_store, optimizer) = decode_checkpoint(&bytes[36..])?;
    let mut policy = Policy::new(cfg, 0);
    copy_values(&mut policy.store, &loaded_store)?;
    Ok((policy, optimizer))
}

pub fn save_policy(
    path: &Path,
    policy: &Policy,
    optimizer: Option<&AdamW>,
) -> Result<(), PolicyError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_policy(policy, optimizer))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<(Policy, Option<AdamW>), PolicyError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_policy(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{render, Camera, OccupancyScene, Pose, SceneCategory};

    fn test_cfg(variant: BinocularVariant, mode: EncoderMode) -> PolicyConfig {
        PolicyConfig {
            p_frames: 3,
            horizon: 5,
            obs_width: 16,
            token_dim: 16,
            patch_width: 4,
            bin_layers: 2,
            bin_heads: 2,
            seq_layers: 2,
            seq_heads: 2,
            variant,
            encoder_mode: mode,
            ..Default::default()
        }
    }

    fn room() -> OccupancyScene {
        let (w, h) = (40u32, 20u32);
        let n = (w * h) as usize;
        let mut occ = vec![false; n];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    occ[(y * w + x) as usize] = true;
                }
            }
        }
        // an interior pillar for texture
        occ[(10 * w + 20) as usize] = true;
        OccupancyScene::from_parts(
            w,
            h,
            0.1,
            occ,
            (0..n).map(|i| 0.2 + (i % 11) as f32 / 13.0).collect(),
            (0..n).map(|i| (i % 4) as u8).collect(),
            SceneCategory::OpenSpace,
        )
    }

    fn cam() -> Camera {
        Camera {
            fov: 110.0f64.to_radians(),
            width: 16,
            max_range: 10.0,
        }
    }

    fn obs_at(scene: &OccupancyScene, x: f64, y: f64, theta: f64, light: f32) -> Observation {
        render(scene, &Pose::new(x, y, theta), &cam(), light).unwrap()
    }

    fn stack(scene: &OccupancyScene, n: usize) -> Vec<Observation> {
        (0..n)
            .map(|i| obs_at(scene, 1.0 + 0.075 * i as f64, 1.0, 0.1 * i as f64, 1.0))
            .collect()
    }

    #[test]
    fn frozen_encoding_is_deterministic() {
        let scene = room();
        let enc = FrozenEncoder::new(17, 16, 5, 4, 16);
        let obs = obs_at(&scene, 1.0, 1.0, 0.3, 1.0);
        assert_eq!(enc.encode(&obs), enc.encode(&obs));
    }

    #[test]
    fn robust_tokens_ignore_light_level() {
        let scene = room();
        let enc = FrozenEncoder::new(17, 16, 5, 4, 16);
        let bright = obs_at(&scene, 1.0, 1.0, 0.3, 1.0);
        let dim = obs_at(&scene, 1.0, 1.0, 0.3, 0.15);
        assert_eq!(enc.robust_tokens(&bright), enc.robust_tokens(&dim));
        // full tokens do differ (appearance rows contribute)
        assert_ne!(enc.encode(&bright), enc.encode(&dim));
    }

    #[test]
    fn frozen_projection_is_not_trainable_and_is_stable() {
        let cfg = test_cfg(BinocularVariant::CrossBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 1);
        for e in policy.store.entries() {
            assert!(
                !e.name.starts_with("frozen"),
                "frozen projection leaked into the trainable store"
            );
        }
        let before = policy.frozen_encoder().fingerprint();
        // building and differentiating a forward pass must not touch it
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let mut g = Graph::new();
        let mut binder = Binder::new(&policy.store);
        let nodes = policy
            .build_forward(&mut g, &mut binder, &stack(&scene, 3), &goal)
            .unwrap();
        let target = g.leaf(5, 3, vec![0.05; 15]);
        let loss = g.mse_wrapped(nodes.prediction, target, 2).unwrap();
        g.backward(loss);
        assert_eq!(policy.frozen_encoder().fingerprint(), before);
    }

    #[test]
    fn forward_is_deterministic_and_shaped() {
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        for variant in BinocularVariant::ALL {
            let cfg = test_cfg(variant, EncoderMode::FrozenRobust);
            let policy = Policy::new(cfg, 3);
            let a = policy.predict(&stack(&scene, 3), &goal).unwrap();
            let b = policy.predict(&stack(&scene, 3), &goal).unwrap();
            assert_eq!(a, b, "variant {variant:?} not deterministic");
            assert_eq!(a.waypoints.len(), 5, "variant {variant:?} wrong horizon");
        }
    }

    #[test]
    fn no_block_passes_goal_tokens_through() {
        let cfg = test_cfg(BinocularVariant::NoBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 3);
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let mut g = Graph::new();
        let mut binder = Binder::new(&policy.store);
        let t = policy.cfg.tokens();
        let d = policy.cfg.token_dim;
        let pe = g.leaf(t, d, policy.frozen.positional.clone());
        let goal_tokens = policy.encode_frame(&mut g, &mut binder, &goal, pe).unwrap();
        let obs_tokens = policy
            .encode_frame(&mut g, &mut binder, &goal, pe)
            .unwrap();
        let (refined, maps) = policy
            .binocular_encode(&mut g, &mut binder, goal_tokens, obs_tokens)
            .unwrap();
        assert_eq!(refined, goal_tokens);
        assert!(maps.is_empty());
    }

    #[test]
    fn variant_outputs_preserve_token_shape() {
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let latest = obs_at(&scene, 1.2, 1.0, 0.2, 1.0);
        for variant in BinocularVariant::ALL {
            let cfg = test_cfg(variant, EncoderMode::FrozenRobust);
            let policy = Policy::new(cfg, 5);
            let mut g = Graph::new();
            let mut binder = Binder::new(&policy.store);
            let t = policy.cfg.tokens();
            let d = policy.cfg.token_dim;
            let (gt, ot) = if variant == BinocularVariant::EarlyConv {
                let ch = policy.cfg.channels();
                (
                    g.leaf(policy.cfg.obs_width, ch, policy.raw_columns(&goal)),
                    g.leaf(policy.cfg.obs_width, ch, policy.raw_columns(&latest)),
                )
            } else {
                let pe = g.leaf(t, d, policy.frozen.positional.clone());
                (
                    policy.encode_frame(&mut g, &mut binder, &goal, pe).unwrap(),
                    policy
                        .encode_frame(&mut g, &mut binder, &latest, pe)
                        .unwrap(),
                )
            };
            let (refined, _) = policy.binocular_encode(&mut g, &mut binder, gt, ot).unwrap();
            let s = g.shape(refined);
            assert_eq!((s.rows, s.cols), (t, d), "variant {variant:?}");
        }
    }

    #[test]
    fn cross_attention_rows_are_distributions() {
        let cfg = test_cfg(BinocularVariant::CrossBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 7);
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let (_, maps) = policy
            .predict_with_attention(&stack(&scene, 3), &goal)
            .unwrap();
        assert_eq!(maps.len(), 2); // bin_layers
        let t = policy.cfg.tokens();
        for layer in &maps {
            assert_eq!(layer.len(), 2); // heads
            for head in layer {
                assert_eq!(head.len(), t * t);
                for r in 0..t {
                    let sum: f64 = head[r * t..(r + 1) * t].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn compress_of_zero_tokens_with_zero_bias_is_zero() {
        let cfg = test_cfg(BinocularVariant::NoBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 9);
        // biases are zero-initialized, so a zero token grid compresses to zero
        let mut g = Graph::new();
        let mut binder = Binder::new(&policy.store);
        let t = policy.cfg.tokens();
        let d = policy.cfg.token_dim;
        let zeros = g.leaf(t, d, vec![0.0; t * d]);
        let v = policy.compress(&mut g, &mut binder, zeros).unwrap();
        assert_eq!(g.shape(v).cols, d);
        assert!(g.value(v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_stack_length_is_an_error() {
        let cfg = test_cfg(BinocularVariant::NoBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 9);
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        assert!(matches!(
            policy.predict(&stack(&scene, 2), &goal),
            Err(PolicyError::StackLength { got: 2, want: 3 })
        ));
    }

    #[test]
    fn shuffled_stack_changes_the_output() {
        let cfg = test_cfg(BinocularVariant::CrossBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 11);
        let scene = room();
        let goal = obs_at(&scene, 1.8, 1.2, 0.4, 1.0);
        let base = stack(&scene, 3);
        let mut shuffled = base.clone();
        shuffled.swap(0, 2);
        let a = policy.predict(&base, &goal).unwrap();
        let b = policy.predict(&shuffled, &goal).unwrap();
        assert_ne!(a, b, "sequence encoder must receive frame order");
    }

    #[test]
    fn loss_mse_examples() {
        let pred = WaypointPrediction {
            waypoints: vec![[0.1, 0.2, 0.3]; 5],
        };
        let label: Vec<[f64; 3]> = vec![[0.1, 0.2, 0.3]; 5];
        assert_eq!(loss_mse(&pred, &label), 0.0);

        let shifted: Vec<[f64; 3]> = vec![[0.2, 0.3, 0.4]; 5];
        assert!((loss_mse(&pred, &shifted) - 0.01).abs() < 1e-12);

        let p = WaypointPrediction {
            waypoints: vec![[0.0, 0.0, 3.1]],
        };
        let l = vec![[0.0, 0.0, -3.1]];
        let wrapped = 2.0 * std::f64::consts::PI - 6.2;
        assert!((loss_mse(&p, &l) - wrapped * wrapped / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trainable_parameter_counts_are_comparable() {
        let counts: Vec<(BinocularVariant, usize)> = BinocularVariant::ALL
            .into_iter()
            .map(|v| {
                let cfg = PolicyConfig {
                    variant: v,
                    ..Default::default()
                };
                (v, Policy::new(cfg, 1).trainable_scalars())
            })
            .collect();
        let min = counts.iter().map(|(_, c)| *c).min().unwrap();
        let max = counts.iter().map(|(_, c)| *c).max().unwrap();
        assert!(
            (max as f64) < 2.0 * min as f64,
            "parameter budgets diverge: {counts:?}"
        );
    }

    #[test]
    fn policy_file_round_trip() {
        let cfg = test_cfg(BinocularVariant::CrossBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 13);
        let bytes = encode_policy(&policy, None);
        let (back, opt) = decode_policy(&bytes).unwrap();
        assert!(opt.is_none());
        assert_eq!(back.cfg, policy.cfg);
        assert_eq!(encode_policy(&back, None), bytes);
        // disk storage is f32, so the first save quantizes; after that the
        // round trip is a fixed point and predictions are bit-identical
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let a = policy.predict(&stack(&scene, 3), &goal).unwrap();
        let b = back.predict(&stack(&scene, 3), &goal).unwrap();
        for (wa, wb) in a.waypoints.iter().zip(&b.waypoints) {
            for k in 0..3 {
                assert!((wa[k] - wb[k]).abs() < 1e-5);
            }
        }
        let (back2, _) = decode_policy(&encode_policy(&back, None)).unwrap();
        let c = back2.predict(&stack(&scene, 3), &goal).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn full_policy_graph_gradcheck_sampled() {
        let cfg = test_cfg(BinocularVariant::CrossBlock, EncoderMode::FrozenRobust);
        let policy = Policy::new(cfg, 15);
        let scene = room();
        let goal = obs_at(&scene, 1.5, 1.0, 0.0, 1.0);
        let obs = stack(&scene, 3);
        let label = vec![[0.05, -0.02, 0.1]; 5];

        let eval = |store: &ParamStore| -> (f64, Vec<Vec<f64>>) {
            let mut g = Graph::new();
            let mut binder = Binder::new(store);
            let mut p2 = policy.clone();
            p2.store = store.clone();
            let nodes = p2.build_forward(&mut g, &mut binder, &obs, &goal).unwrap();
            let target = g.leaf(5, 3, label.iter().flatten().copied().collect());
            let loss = g.mse_wrapped(nodes.prediction, target, 2).unwrap();
            g.backward(loss);
            (g.scalar(loss), binder.grads(&g))
        };
        let (_, analytic) = eval(&policy.store);
        let h = 1e-3;
        // probe a few elements of every parameter tensor
        for (pi, entry) in policy.store.entries().iter().enumerate() {
            let n = entry.value.len();
            for &ei in [0usize, n / 2, n - 1].iter() {
                let mut plus = policy.store.clone();
                plus.value_mut(ParamId(pi))[ei] += h;
                let mut minus = policy.store.clone();
                minus.value_mut(ParamId(pi))[ei] -= h;
                let numeric = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let a = analytic[pi][ei];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                assert!(
                    rel < 1e-4,
                    "param {} elem {ei}: analytic {a}, numeric {numeric}, rel {rel}",
                    entry.name
                );
            }
        }
    }
}

//! Layer builders over the autodiff graph: linear, layer norm, multi-head
//! attention, and pre-LN transformer blocks.

use super::graph::{Graph, NodeId};
use super::optim::{Init, ParamId, ParamStore};
use super::NnError;

/// Binds store parameters to graph leaves, one leaf per parameter per graph.
pub struct Binder<'a> {
    store: &'a ParamStore,
    bound: Vec<Option<NodeId>>,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            bound: vec![None; store.len()],
            store,
        }
    }

    pub fn node(&mut self, g: &mut Graph, id: ParamId) -> NodeId {
        if let Some(n) = self.bound[id.0] {
            return n;
        }
        let e = self.store.entry(id);
        let n = g.leaf(e.rows, e.cols, e.value.clone());
        self.bound[id.0] = Some(n);
        n
    }

    /// Gradients per store entry in registration order; zeros for
    /// parameters unused by this graph.
    pub fn grads(&self, g: &Graph) -> Vec<Vec<f64>> {
        self.store
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| match self.bound[i] {
                Some(n) => g.grad(n).to_vec(),
                None => vec![0.0; e.value.len()],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.register(&format!("{name}.w"), in_dim, out_dim, init.xavier(in_dim, out_dim));
        let b = store.register(&format!("{name}.b"), 1, out_dim, init.zeros(out_dim));
        Self { w, b }
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let w = binder.node(g, self.w);
        let b = binder.node(g, self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn register(store: &mut ParamStore, init: &mut Init, name: &str, dim: usize) -> Self {
        let gamma = store.register(&format!("{name}.gamma"), 1, dim, init.ones(dim));
        let beta = store.register(&format!("{name}.beta"), 1, dim, init.zeros(dim));
        Self { gamma, beta }
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let gamma = binder.node(g, self.gamma);
        let beta = binder.node(g, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MhaParams {
    pub q: LinearParams,
    pub k: LinearParams,
    pub v: LinearParams,
    pub o: LinearParams,
    pub heads: usize,
}

impl MhaParams {
    pub fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            q: LinearParams::register(store, init, &format!("{name}.q"), dim, dim),
            k: LinearParams::register(store, init, &format!("{name}.k"), dim, dim),
            v: LinearParams::register(store, init, &format!("{name}.v"), dim, dim),
            o: LinearParams::register(store, init, &format!("{name}.o"), dim, dim),
            heads,
        }
    }
}

/// Standard scaled dot-product multi-head attention. Queries come from
/// `q_input`, keys/values from `kv_input` (identical for self-attention).
/// Returns the output and the per-head attention weight matrices.
pub fn multi_head_attention(
    g: &mut Graph,
    binder: &mut Binder,
    q_input: NodeId,
    kv_input: NodeId,
    p: &MhaParams,
    ) -> Result<(NodeId, Vec<NodeId>), NnError> {
    let dim = g.shape(q_input).cols;
    if dim % p.heads != 0 {
        return Err(NnError::ShapeMismatch {
            op: "attention".into(),
            lhs: format!("model dim {dim}"),
            rhs: format!("{} heads", p.heads),
        });
    }
    let dh = dim / p.heads;
    let q = p.q.apply(g, binder, q_input)?;
    let k = p.k.apply(g, binder, kv_input)?;
    let v = p.v.apply(g, binder, kv_input)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut head_outs = Vec::with_capacity(p.heads);
    let mut attn_maps = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let qh = g.slice_cols(q, h * dh, dh);
        let kh = g.slice_cols(k, h * dh, dh);
        let vh = g.slice_cols(v, h * dh, dh);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax(scores);
        attn_maps.push(attn);
        head_outs.push(g.matmul(attn, vh)?);
    }
    let concat = g.concat_cols(&head_outs)?;
    let out = p.o.apply(g, binder, concat)?;
    Ok((out, attn_maps))
}

#[derive(Debug, Clone, Copy)]
pub struct MlpParams {
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

impl MlpParams {
    pub fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dim: usize,
        hidden: usize,
    ) -> Self {
        Self {
            fc1: LinearParams::register(store, init, &format!("{name}.fc1"), dim, hidden),
            fc2: LinearParams::register(store, init, &format!("{name}.fc2"), hidden, dim),
        }
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        x: NodeId,
    ) -> Result<NodeId, NnError> {
        let h = self.fc1.apply(g, binder, x)?;
        let h = g.gelu(h);
        self.fc2.apply(g, binder, h)
    }
}

/// Pre-LN transformer encoder layer: self-attention and MLP residuals.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayerParams {
    pub ln1: LayerNormParams,
    pub attn: MhaParams,
    pub ln2: LayerNormParams,
    pub mlp: MlpParams,
}

impl EncoderLayerParams {
    pub fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            ln1: LayerNormParams::register(store, init, &format!("{name}.ln1"), dim),
            attn: MhaParams::register(store, init, &format!("{name}.attn"), dim, heads),
            ln2: LayerNormParams::register(store, init, &format!("{name}.ln2"), dim),
            mlp: MlpParams::register(store, init, &format!("{name}.mlp"), dim, 4 * dim),
        }
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        x: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>), NnError> {
        let normed = self.ln1.apply(g, binder, x)?;
        let (attn_out, maps) = multi_head_attention(g, binder, normed, normed, &self.attn)?;
        let x = g.add(x, attn_out)?;
        let normed = self.ln2.apply(g, binder, x)?;
        let mlp_out = self.mlp.apply(g, binder, normed)?;
        let x = g.add(x, mlp_out)?;
        Ok((x, maps))
    }
}

/// Pre-LN transformer decoder layer: self-attention on the queries,
/// cross-attention onto `memory`, then an MLP, all residual.
#[derive(Debug, Clone, Copy)]
pub struct DecoderLayerParams {
    pub ln1: LayerNormParams,
    pub self_attn: MhaParams,
    pub ln2: LayerNormParams,
    pub cross_attn: MhaParams,
    pub ln3: LayerNormParams,
    pub mlp: MlpParams,
}

impl DecoderLayerParams {
    pub fn register(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        Self {
            ln1: LayerNormParams::register(store, init, &format!("{name}.ln1"), dim),
            self_attn: MhaParams::register(store, init, &format!("{name}.self"), dim, heads),
            ln2: LayerNormParams::register(store, init, &format!("{name}.ln2"), dim),
            cross_attn: MhaParams::register(store, init, &format!("{name}.cross"), dim, heads),
            ln3: LayerNormParams::register(store, init, &format!("{name}.ln3"), dim),
            mlp: MlpParams::register(store, init, &format!("{name}.mlp"), dim, 4 * dim),
        }
    }

    /// Returns the refined queries and this layer's cross-attention maps.
    pub fn apply(
        &self,
        g: &mut Graph,
        binder: &mut Binder,
        x: NodeId,
        memory: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>), NnError> {
        let normed = self.ln1.apply(g, binder, x)?;
        let (self_out, _) = multi_head_attention(g, binder, normed, normed, &self.self_attn)?;
        let x = g.add(x, self_out)?;
        let normed = self.ln2.apply(g, binder, x)?;
        let (cross_out, cross_maps) =
            multi_head_attention(g, binder, normed, memory, &self.cross_attn)?;
        let x = g.add(x, cross_out)?;
        let normed = self.ln3.apply(g, binder, x)?;
        let mlp_out = self.mlp.apply(g, binder, normed)?;
        let x = g.add(x, mlp_out)?;
        Ok((x, cross_maps))
    }
}

/// Fixed sinusoidal positional encoding table, [len, dim].
pub fn sinusoidal_encoding(len: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            out[pos * dim + 2 * i] = (pos as f64 * freq).sin();
            out[pos * dim + 2 * i + 1] = (pos as f64 * freq).cos();
        }
    }
    out
}

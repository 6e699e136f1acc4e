//! Dynamic-query digest resampler and the baseline context pipelines.
//!
//! The main module compresses a text context `C` (m×d) into a digest the
//! same length as the visual tokens `V` (n×d): queries start as `Q⁰ = V`,
//! and each layer applies pre-norm cross-attention over the memory
//! `M = [C; Q]` followed by a feed-forward block, with each residual branch
//! multiplied by a learnable scalar gate initialized near zero. At init the
//! whole stack is therefore an approximate identity on `V`.
//!
//! Baselines: raw concatenation, a token-wise residual MLP adapter, and a
//! fixed-length learned-query resampler (same block mechanics, gates pinned
//! to one).

use crate::error::{Error, Result};
use crate::tensor::{Graph, Leaves, ParamSet, Tensor, Value};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weight init scale for all projection matrices.
pub const WEIGHT_INIT_STD: f64 = 0.02;

/// Default number of learned queries for the fixed-query baseline.
pub const DEFAULT_FIXED_QUERIES: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivaConfig {
    /// Model dimension shared with the LM.
    pub d: usize,
    /// Number of stacked blocks.
    pub n_layers: usize,
    pub n_heads: usize,
    /// FFN hidden width = `ffn_mult * d`.
    pub ffn_mult: usize,
    /// Initial value of both scalar gates in every layer.
    pub g0: f64,
}

impl Default for DivaConfig {
    fn default() -> Self {
        DivaConfig {
            d: 64,
            n_layers: 2,
            n_heads: 4,
            ffn_mult: 4,
            g0: 1e-3,
        }
    }
}

impl DivaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d={} must be a positive multiple of n_heads={}",
                self.d, self.n_heads
            )));
        }
        if self.n_layers < 1 {
            return Err(Error::InvalidConfig("n_layers must be >= 1".into()));
        }
        if self.ffn_mult == 0 {
            return Err(Error::InvalidConfig("ffn_mult must be >= 1".into()));
        }
        if !(self.g0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("g0={} must be >= 0", self.g0)));
        }
        Ok(())
    }
}

/// Parameters of the gated resampler. Tensors live in a named [`ParamSet`]
/// (`layer{i}.w_q`, `layer{i}.g_attn`, …) so the trainer and checkpoint
/// code can treat every method uniformly.
#[derive(Clone, Debug)]
pub struct DivaParams {
    pub config: DivaConfig,
    pub set: ParamSet,
    /// When false the scalar gates are absent and both residual branches
    /// are applied at full strength (the ungated ablation).
    pub gated: bool,
}

impl DivaParams {
    /// Current value of a gate scalar, if the variant has gates.
    pub fn gate(&self, layer: usize, which: GateKind) -> Option<f64> {
        let name = format!("layer{layer}.{}", which.suffix());
        self.set.get(&name).map(|t| t.data()[0])
    }

    pub fn set_gate(&mut self, layer: usize, which: GateKind, value: f64) {
        let name = format!("layer{layer}.{}", which.suffix());
        if let Some(t) = self.set.get_mut(&name) {
            t.data_mut()[0] = value;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Attn,
    Ffn,
}

impl GateKind {
    fn suffix(&self) -> &'static str {
        match self {
            GateKind::Attn => "g_attn",
            GateKind::Ffn => "g_ffn",
        }
    }
}

/// The fused output: one row per visual token.
#[derive(Clone, Debug)]
pub struct Digest {
    pub vectors: Tensor,
}

impl Digest {
    pub fn rows(&self) -> usize {
        self.vectors.rows()
    }
}

fn init_block_layers(set: &mut ParamSet, cfg: &DivaConfig, gated: bool, rng: &mut ChaCha8Rng) {
    let d = cfg.d;
    let hidden = cfg.ffn_mult * d;
    for i in 0..cfg.n_layers {
        let p = |s: &str| format!("layer{i}.{s}");
        set.insert(p("ln_q.gain"), Tensor::full(vec![d], 1.0));
        set.insert(p("ln_q.bias"), Tensor::zeros(vec![d]));
        set.insert(p("ln_m.gain"), Tensor::full(vec![d], 1.0));
        set.insert(p("ln_m.bias"), Tensor::zeros(vec![d]));
        set.insert(p("ln_f.gain"), Tensor::full(vec![d], 1.0));
        set.insert(p("ln_f.bias"), Tensor::zeros(vec![d]));
        set.insert(p("w_q"), Tensor::randn(vec![d, d], WEIGHT_INIT_STD, rng));
        set.insert(p("w_k"), Tensor::randn(vec![d, d], WEIGHT_INIT_STD, rng));
        set.insert(p("w_v"), Tensor::randn(vec![d, d], WEIGHT_INIT_STD, rng));
        set.insert(p("w_o"), Tensor::randn(vec![d, d], WEIGHT_INIT_STD, rng));
        set.insert(
            p("ffn.w1"),
            Tensor::randn(vec![d, hidden], WEIGHT_INIT_STD, rng),
        );
        set.insert(p("ffn.b1"), Tensor::zeros(vec![hidden]));
        set.insert(
            p("ffn.w2"),
            Tensor::randn(vec![hidden, d], WEIGHT_INIT_STD, rng),
        );
        set.insert(p("ffn.b2"), Tensor::zeros(vec![d]));
        if gated {
            set.insert(p("g_attn"), Tensor::scalar(cfg.g0));
            set.insert(p("g_ffn"), Tensor::scalar(cfg.g0));
        }
    }
}

/// Fresh gated resampler parameters: projections from a scaled normal,
/// layer-norm gains one / biases zero, every gate exactly `g0`.
pub fn init_diva(config: DivaConfig, seed: u64) -> Result<DivaParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    init_block_layers(&mut set, &config, true, &mut rng);
    Ok(DivaParams {
        config,
        set,
        gated: true,
    })
}

/// Ungated variant: same block weights, no gate scalars in the set.
pub fn init_diva_ungated(config: DivaConfig, seed: u64) -> Result<DivaParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    init_block_layers(&mut set, &config, false, &mut rng);
    Ok(DivaParams {
        config,
        set,
        gated: false,
    })
}

/// Key/value memory for one block: context rows first, then the current
/// query states, in order.
pub fn build_memory(context: &Tensor, queries: &Tensor) -> Result<Tensor> {
    if context.ndim() != 2 || queries.ndim() != 2 || context.cols() != queries.cols() {
        return Err(Error::ShapeMismatch {
            op: "build_memory",
            lhs: context.shape().to_vec(),
            rhs: queries.shape().to_vec(),
        });
    }
    let mut data = Vec::with_capacity(context.numel() + queries.numel());
    data.extend_from_slice(context.data());
    data.extend_from_slice(queries.data());
    Tensor::from_vec(vec![context.rows() + queries.rows(), context.cols()], data)
}

/// Multi-head attention of `q_in` (n×d) over `kv_in` (t×d), head dim
/// d/n_heads, 1/√head_dim score scaling, concat + output projection.
fn multi_head_attention(
    g: &mut Graph,
    q_in: Value,
    kv_in: Value,
    leaves: &Leaves,
    prefix: &str,
    d: usize,
    n_heads: usize,
) -> Result<Value> {
    let head_dim = d / n_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = g.matmul(q_in, leaves.get(&format!("{prefix}.w_q")))?;
    let k = g.matmul(kv_in, leaves.get(&format!("{prefix}.w_k")))?;
    let v = g.matmul(kv_in, leaves.get(&format!("{prefix}.w_v")))?;
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale)?;
        let probs = g.softmax_rows(scores)?;
        heads.push(g.matmul(probs, vh)?);
    }
    let ctx = g.concat_cols(&heads)?;
    g.matmul(ctx, leaves.get(&format!("{prefix}.w_o")))
}

fn layer_norm_named(g: &mut Graph, x: Value, leaves: &Leaves, prefix: &str) -> Result<Value> {
    let gain = leaves.get(&format!("{prefix}.gain"));
    let bias = leaves.get(&format!("{prefix}.bias"));
    g.layer_norm(x, gain, bias)
}

/// One gated block: Q += g_attn · CrossAttn(LNq(Q), LNm([C;Q])), then
/// Q += g_ffn · FFN(LNf(Q)). With `gated` false the branches are ungated.
pub fn diva_layer_graph(
    g: &mut Graph,
    queries: Value,
    context: Value,
    layer: usize,
    leaves: &Leaves,
    cfg: &DivaConfig,
    gated: bool,
) -> Result<Value> {
    let p = format!("layer{layer}");
    let memory = g.concat_rows(&[context, queries])?;
    let qn = layer_norm_named(g, queries, leaves, &format!("{p}.ln_q"))?;
    let mn = layer_norm_named(g, memory, leaves, &format!("{p}.ln_m"))?;
    let attn = multi_head_attention(g, qn, mn, leaves, &p, cfg.d, cfg.n_heads)?;
    let attn_branch = if gated {
        g.scale_by(attn, leaves.get(&format!("{p}.g_attn")))?
    } else {
        attn
    };
    let q1 = g.add(queries, attn_branch)?;

    let fin = layer_norm_named(g, q1, leaves, &format!("{p}.ln_f"))?;
    let h = g.matmul(fin, leaves.get(&format!("{p}.ffn.w1")))?;
    let h = g.add_bias(h, leaves.get(&format!("{p}.ffn.b1")))?;
    let h = g.gelu(h)?;
    let f = g.matmul(h, leaves.get(&format!("{p}.ffn.w2")))?;
    let f = g.add_bias(f, leaves.get(&format!("{p}.ffn.b2")))?;
    let ffn_branch = if gated {
        g.scale_by(f, leaves.get(&format!("{p}.g_ffn")))?
    } else {
        f
    };
    let out = g.add(q1, ffn_branch)?;
    g.assert_finite(out, &format!("diva layer {layer}"))?;
    Ok(out)
}

/// Full stack on an existing graph: Q⁰ = `queries`, N blocks, digest out.
pub fn diva_forward_graph(
    g: &mut Graph,
    context: Value,
    queries: Value,
    leaves: &Leaves,
    cfg: &DivaConfig,
    gated: bool,
) -> Result<Value> {
    if g.value(queries).rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "diva_forward",
            lhs: g.value(queries).shape().to_vec(),
            rhs: vec![1, cfg.d],
        });
    }
    let mut q = queries;
    for layer in 0..cfg.n_layers {
        q = diva_layer_graph(g, q, context, layer, leaves, cfg, gated)?;
    }
    Ok(q)
}

/// Inference entry point: digest of `context` under queries initialized
/// from `visual` (row count of the digest == row count of `visual`).
pub fn diva_forward(context: &Tensor, visual: &Tensor, params: &DivaParams) -> Result<Digest> {
    let mut g = Graph::new();
    let c = g.constant(context.clone());
    let v = g.constant(visual.clone());
    let leaves = Leaves::insert(&mut g, &params.set, false);
    let out = diva_forward_graph(&mut g, c, v, &leaves, &params.config, params.gated)?;
    Ok(Digest {
        vectors: g.value(out).clone(),
    })
}

// ── Adapter baseline ─────────────────────────────────────────────────

/// Token-wise two-layer MLP applied around a residual. The second matrix
/// starts at zero so a fresh adapter is exactly the identity.
#[derive(Clone, Debug)]
pub struct AdapterParams {
    pub d: usize,
    pub set: ParamSet,
}

pub fn init_adapter(d: usize, seed: u64) -> AdapterParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    set.insert(
        "adapter.w1",
        Tensor::randn(vec![d, d], WEIGHT_INIT_STD, &mut rng),
    );
    set.insert("adapter.b1", Tensor::zeros(vec![d]));
    set.insert("adapter.w2", Tensor::zeros(vec![d, d]));
    set.insert("adapter.b2", Tensor::zeros(vec![d]));
    AdapterParams { d, set }
}

pub fn adapter_forward_graph(g: &mut Graph, x: Value, leaves: &Leaves) -> Result<Value> {
    let h = g.matmul(x, leaves.get("adapter.w1"))?;
    let h = g.add_bias(h, leaves.get("adapter.b1"))?;
    let h = g.gelu(h)?;
    let y = g.matmul(h, leaves.get("adapter.w2"))?;
    let y = g.add_bias(y, leaves.get("adapter.b2"))?;
    g.add(x, y)
}

pub fn adapter_forward(x: &Tensor, params: &AdapterParams) -> Result<Tensor> {
    if x.ndim() != 2 || x.cols() != params.d {
        return Err(Error::ShapeMismatch {
            op: "adapter_forward",
            lhs: x.shape().to_vec(),
            rhs: vec![params.d],
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let leaves = Leaves::insert(&mut g, &params.set, false);
    let out = adapter_forward_graph(&mut g, xv, &leaves)?;
    Ok(g.value(out).clone())
}

// ── Fixed-query resampler baseline ───────────────────────────────────

/// K learned input-independent queries plus the same block weights as the
/// gated resampler, with both branches applied at full strength.
#[derive(Clone, Debug)]
pub struct FixedResamplerParams {
    pub config: DivaConfig,
    pub k: usize,
    pub set: ParamSet,
}

pub fn init_fixed_resampler(
    config: DivaConfig,
    k: usize,
    seed: u64,
) -> Result<FixedResamplerParams> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("fixed resampler needs k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    set.insert(
        "queries",
        Tensor::randn(vec![k, config.d], WEIGHT_INIT_STD, &mut rng),
    );
    init_block_layers(&mut set, &config, false, &mut rng);
    Ok(FixedResamplerParams { config, k, set })
}

pub fn fixed_resampler_forward_graph(
    g: &mut Graph,
    context: Value,
    leaves: &Leaves,
    cfg: &DivaConfig,
) -> Result<Value> {
    let mut q = leaves.get("queries");
    for layer in 0..cfg.n_layers {
        q = diva_layer_graph(g, q, context, layer, leaves, cfg, false)?;
    }
    Ok(q)
}

/// K output rows for any input length, including an empty context (the
/// queries then attend only to themselves).
pub fn fixed_resampler_forward(x: &Tensor, params: &FixedResamplerParams) -> Result<Tensor> {
    if x.ndim() != 2 || x.cols() != params.config.d {
        return Err(Error::ShapeMismatch {
            op: "fixed_resampler_forward",
            lhs: x.shape().to_vec(),
            rhs: vec![params.config.d],
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let leaves = Leaves::insert(&mut g, &params.set, false);
    let out = fixed_resampler_forward_graph(&mut g, xv, &leaves, &params.config)?;
    Ok(g.value(out).clone())
}

// ── Direct concatenation ─────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConcatOrder {
    VisionFirst,
    TextFirst,
}

/// Plain row concatenation of the two modality blocks, no transformation.
pub fn direct_concat(vision: &Tensor, text: &Tensor, order: ConcatOrder) -> Result<Tensor> {
    match order {
        ConcatOrder::VisionFirst => build_memory(vision, text),
        ConcatOrder::TextFirst => build_memory(text, vision),
    }
    .map_err(|_| Error::ShapeMismatch {
        op: "direct_concat",
        lhs: vision.shape().to_vec(),
        rhs: text.shape().to_vec(),
    })
}

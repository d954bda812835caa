//! Differentiable blocks shared by the forward and echo halves of the cycle.
//!
//! Each block appends its operations to a [`Graph`] and pulls its weights by
//! name, so invoking a block twice on one tape reuses the same parameters.
//! Dense BEV maps are `(H·W)×K` (one row per cell), scene tokens `N_s×K`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Block, Graph, Var};
use crate::params::ModelParams;
use crate::tensor::Tensor;
use crate::world::{NavigationCommand, SemanticRaster, HORIZON, SEM_CHANNELS};

/// Normalization epsilon used by every layer norm in the model.
pub const LN_EPS: f64 = 1e-5;

/// Dense `(H·W)×K` feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct BevFeature(pub Tensor);

/// `N_s×K` sparse scene representation.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneTokens(pub Tensor);

fn check_raster(g: &Graph<'_>, raster: &SemanticRaster) -> Result<()> {
    let cfg = g.params().config();
    if raster.h != cfg.grid_h || raster.w != cfg.grid_w {
        return Err(Error::ShapeMismatch {
            what: "raster grid",
            expected: (cfg.grid_h, cfg.grid_w),
            actual: (raster.h, raster.w),
        });
    }
    Ok(())
}

/// Stand-in BEV encoder: two same-padded 3×3 convolutions with tanh, the
/// second carrying a learned per-cell bias so pooled tokens can tell where
/// a feature came from.
pub fn encode_bev(g: &mut Graph<'_>, raster: &SemanticRaster) -> Result<Var> {
    check_raster(g, raster)?;
    let x = g.constant(raster.to_tensor());
    encode_bev_from(g, x)
}

/// [`encode_bev`] on an arbitrary `(H·W)×5` input variable.
pub fn encode_bev_from(g: &mut Graph<'_>, x: Var) -> Result<Var> {
    let cfg = *g.params().config();
    let shape = g.value(x).shape();
    if shape != (cfg.cells(), SEM_CHANNELS) {
        return Err(Error::ShapeMismatch {
            what: "encode_bev input",
            expected: (cfg.cells(), SEM_CHANNELS),
            actual: shape,
        });
    }
    g.record(Block::EncodeBev);
    let w1 = g.param("encoder.conv1.weight");
    let b1 = g.param("encoder.conv1.bias");
    let w2 = g.param("encoder.conv2.weight");
    let b2 = g.param("encoder.conv2.bias");
    let pos = g.param("encoder.pos_bias");
    let h = g.conv3x3(x, w1, b1, cfg.grid_h, cfg.grid_w);
    let h = g.tanh(h);
    let h = g.conv3x3(h, w2, b2, cfg.grid_h, cfg.grid_w);
    let h = g.add(h, pos);
    Ok(g.tanh(h))
}

/// Forward-only encoding, used for supervision targets.
pub fn encode_bev_value(params: &ModelParams, raster: &SemanticRaster) -> Result<Tensor> {
    let mut g = Graph::new(params);
    let v = encode_bev(&mut g, raster)?;
    Ok(g.value(v).clone())
}

/// Adds the command's learned embedding to every cell.
pub fn encode_command(g: &mut Graph<'_>, command: NavigationCommand, bev: Var) -> Var {
    g.record(Block::EncodeCommand);
    let table = g.param("command.embedding");
    let row = g.slice_rows(table, command.index(), 1);
    g.add_row(bev, row)
}

pub struct TokenLearnOut {
    pub tokens: Var,
    /// `N_s×(H·W)`; each row is a distribution over cells.
    pub weights: Var,
}

/// Pools the dense map into `N_s` tokens, each a softmax-weighted average
/// over all cells of a learned linear score.
pub fn token_learn(g: &mut Graph<'_>, bev: Var) -> TokenLearnOut {
    g.record(Block::TokenLearn);
    let w = g.param("token_learner.score.weight");
    let scores = g.matmul(bev, w);
    let per_token = g.transpose(scores);
    let weights = g.softmax_rows(per_token);
    let tokens = g.matmul(weights, bev);
    TokenLearnOut { tokens, weights }
}

pub struct TokenFuseOut {
    pub bev: Var,
    /// `(H·W)×N_s`; each row is a distribution over tokens.
    pub weights: Var,
}

/// Expands tokens back to a dense map: each cell's learned positional query
/// attends over the (projected) tokens and takes the attention-weighted mix
/// of the tokens mapped through a linear output layer.
pub fn token_fuse(g: &mut Graph<'_>, tokens: Var) -> TokenFuseOut {
    g.record(Block::TokenFuse);
    let k = g.params().config().channels;
    let query = g.param("token_fuser.pos_query");
    let wk = g.param("token_fuser.key.weight");
    let wo = g.param("token_fuser.out.weight");
    let bo = g.param("token_fuser.out.bias");
    let keys = g.matmul(tokens, wk);
    let logits = g.matmul_bt(query, keys);
    let logits = g.scale(logits, 1.0 / libm::sqrt(k as f64));
    let weights = g.softmax_rows(logits);
    let values = g.matmul(tokens, wo);
    let out = g.matmul(weights, values);
    let bev = g.add_row(out, bo);
    TokenFuseOut { bev, weights }
}

pub struct MlnOut {
    pub tokens: Var,
    /// Tokens after normalization, before the motion-generated affine.
    pub normalized: Var,
    pub gamma: Var,
    pub beta: Var,
}

/// Motion-aware layer norm: per-token normalization whose scale and shift
/// are generated from the flattened `N_t×2` trajectory.
pub fn mln(g: &mut Graph<'_>, tokens: Var, trajectory: Var) -> Result<MlnOut> {
    let shape = g.value(trajectory).shape();
    if shape != (HORIZON, 2) {
        return Err(Error::ShapeMismatch {
            what: "mln trajectory",
            expected: (HORIZON, 2),
            actual: shape,
        });
    }
    g.record(Block::Mln);
    let flat = g.reshape(trajectory, 1, 2 * HORIZON);
    let w1 = g.param("mln.hidden.weight");
    let b1 = g.param("mln.hidden.bias");
    let wg = g.param("mln.gamma.weight");
    let bg = g.param("mln.gamma.bias");
    let wb = g.param("mln.beta.weight");
    let bb = g.param("mln.beta.bias");
    let hidden = g.matmul(flat, w1);
    let hidden = g.add_row(hidden, b1);
    let hidden = g.tanh(hidden);
    let gamma = g.matmul(hidden, wg);
    let gamma = g.add_row(gamma, bg);
    let beta = g.matmul(hidden, wb);
    let beta = g.add_row(beta, bb);
    let normalized = g.layer_norm_rows(tokens, LN_EPS);
    let scaled = g.mul_row(normalized, gamma);
    let tokens = g.add_row(scaled, beta);
    Ok(MlnOut {
        tokens,
        normalized,
        gamma,
        beta,
    })
}

/// Multi-head scaled dot-product attention of `queries` over `context`,
/// projections named `{prefix}.{q,k,v,o}`. Returns the output and the
/// per-head attention weights.
pub fn multi_head_attention(
    g: &mut Graph<'_>,
    prefix: &str,
    queries: Var,
    context: Var,
) -> (Var, Vec<Var>) {
    let cfg = *g.params().config();
    let heads = cfg.heads;
    let d = cfg.channels / heads;
    let proj = |g: &mut Graph<'_>, x: Var, name: &str| {
        let w = g.param(&format!("{prefix}.{name}.weight"));
        let b = g.param(&format!("{prefix}.{name}.bias"));
        let y = g.matmul(x, w);
        g.add_row(y, b)
    };
    let q = proj(g, queries, "q");
    let k = proj(g, context, "k");
    let v = proj(g, context, "v");
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * d, d);
        let kh = g.slice_cols(k, h * d, d);
        let vh = g.slice_cols(v, h * d, d);
        let s = g.matmul_bt(qh, kh);
        let s = g.scale(s, scale);
        let a = g.softmax_rows(s);
        outs.push(g.matmul(a, vh));
        weights.push(a);
    }
    let cat = g.concat_cols(&outs);
    (proj(g, cat, "o"), weights)
}

/// `x ← norm(x + attend(x, context))` with a learned affine.
pub(crate) fn attention_layer(
    g: &mut Graph<'_>,
    prefix: &str,
    x: Var,
    context: Option<Var>,
) -> (Var, Vec<Var>) {
    let (o, w) = multi_head_attention(g, prefix, x, context.unwrap_or(x));
    let y = g.add(x, o);
    let y = g.layer_norm_rows(y, LN_EPS);
    let gain = g.param(&format!("{prefix}.norm.gain"));
    let bias = g.param(&format!("{prefix}.norm.bias"));
    let y = g.mul_row(y, gain);
    (g.add_row(y, bias), w)
}

pub struct AttentionOut {
    pub tokens: Var,
    /// Per layer, per head `N_s×N_s` weights.
    pub weights: Vec<Vec<Var>>,
}

fn self_attention_stack(g: &mut Graph<'_>, prefix: &str, tokens: Var) -> AttentionOut {
    let layers = g.params().config().attn_layers;
    let mut x = tokens;
    let mut weights = Vec::with_capacity(layers);
    for l in 0..layers {
        let (y, w) = attention_layer(g, &format!("{prefix}.{l}"), x, None);
        x = y;
        weights.push(w);
    }
    AttentionOut { tokens: x, weights }
}

/// Self-attention stack applied to freshly pooled scene tokens.
pub fn scene_attention(g: &mut Graph<'_>, tokens: Var) -> AttentionOut {
    g.record(Block::SceneAttention);
    self_attention_stack(g, "scene_attn", tokens)
}

/// Self-attention stack that turns motion-conditioned tokens into the scene
/// representation of the other time step.
pub fn self_attention_refine(g: &mut Graph<'_>, tokens: Var) -> AttentionOut {
    g.record(Block::SelfAttentionRefine);
    self_attention_stack(g, "refine_attn", tokens)
}

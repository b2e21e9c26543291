//! Layer-level building blocks over the autograd graph.
//!
//! Parameters are registered into a [`ParamStore`] under dotted names
//! (`block.3.mha.wq`, `conv.0.weight`, ...) and bound into each forward
//! graph on demand. Initialization is uniform in ±1/sqrt(fan_in) unless a
//! caller overrides.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

pub fn register_linear(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(&format!("{prefix}.weight"), Tensor::uniform(&[fan_in, fan_out], bound, rng))?;
    store.insert(&format!("{prefix}.bias"), Tensor::uniform(&[fan_out], bound, rng))
}

/// Linear layer with both weight and bias zeroed; used for adapter
/// up-projections so a freshly mounted adapter is a no-op.
pub fn register_linear_zero(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    store.insert(&format!("{prefix}.weight"), Tensor::zeros(&[fan_in, fan_out]))?;
    store.insert(&format!("{prefix}.bias"), Tensor::zeros(&[fan_out]))
}

pub fn register_layer_norm(store: &mut ParamStore, prefix: &str, width: usize) -> Result<()> {
    store.insert(
        &format!("{prefix}.gamma"),
        Tensor::new(vec![width], vec![1.0; width]).unwrap(),
    )?;
    store.insert(&format!("{prefix}.beta"), Tensor::zeros(&[width]))
}

pub fn linear(
    graph: &mut Graph,
    params: &mut BoundParams,
    x: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    let w = params.node(graph, &format!("{prefix}.weight"))?;
    let b = params.node(graph, &format!("{prefix}.bias"))?;
    graph.linear(x, w, b)
}

pub fn layer_norm(
    graph: &mut Graph,
    params: &mut BoundParams,
    x: NodeId,
    prefix: &str,
) -> Result<NodeId> {
    let gamma = params.node(graph, &format!("{prefix}.gamma"))?;
    let beta = params.node(graph, &format!("{prefix}.beta"))?;
    graph.layer_norm(x, gamma, beta, LN_EPS)
}

pub struct MhaOut {
    pub out: NodeId,
    /// One attention matrix node per head, for inspection and tests.
    pub attn: Vec<NodeId>,
}

pub fn register_mha(store: &mut ParamStore, prefix: &str, h: usize, rng: &mut Rng) -> Result<()> {
    for name in ["q", "k", "v", "o"] {
        register_linear(store, &format!("{prefix}.{name}"), h, h, rng)?;
    }
    Ok(())
}

/// Scaled dot-product self-attention with per-head projections.
pub fn multi_head_attention(
    graph: &mut Graph,
    params: &mut BoundParams,
    x: NodeId,
    prefix: &str,
    n_heads: usize,
) -> Result<MhaOut> {
    let h = graph.value(x).cols();
    if n_heads == 0 || h % n_heads != 0 {
        return Err(Error::Config(format!(
            "hidden size {h} not divisible by {n_heads} heads"
        )));
    }
    let head_dim = h / n_heads;
    let q = linear(graph, params, x, &format!("{prefix}.q"))?;
    let k = linear(graph, params, x, &format!("{prefix}.k"))?;
    let v = linear(graph, params, x, &format!("{prefix}.v"))?;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut attn = Vec::with_capacity(n_heads);
    for i in 0..n_heads {
        let qi = graph.slice_cols(q, i * head_dim, head_dim)?;
        let ki = graph.slice_cols(k, i * head_dim, head_dim)?;
        let vi = graph.slice_cols(v, i * head_dim, head_dim)?;
        let scores = graph.matmul_nt(qi, ki)?;
        let scaled = graph.scale(scores, scale);
        let weights = graph.softmax_rows(scaled);
        attn.push(weights);
        heads.push(graph.matmul_nn(weights, vi)?);
    }
    let merged = graph.concat_cols(&heads)?;
    let out = linear(graph, params, merged, &format!("{prefix}.o"))?;
    Ok(MhaOut { out, attn })
}

fn subsample_stages(factor: usize) -> Result<usize> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::Config(format!(
            "subsample factor must be a power of two >= 2, got {factor}"
        )));
    }
    Ok(factor.trailing_zeros() as usize)
}

pub fn register_conv_subsample(
    store: &mut ParamStore,
    prefix: &str,
    in_channels: usize,
    hidden: usize,
    factor: usize,
    rng: &mut Rng,
) -> Result<()> {
    let stages = subsample_stages(factor)?;
    let mut cin = in_channels;
    for s in 0..stages {
        register_linear(store, &format!("{prefix}.{s}"), 3 * cin, hidden, rng)?;
        cin = hidden;
    }
    Ok(())
}

/// Strided convolution stack reducing time by `factor` (one stride-2 stage
/// per factor of two, kernel 3, ReLU after each stage). Output length is
/// exactly floor(L / factor).
pub fn conv_subsample(
    graph: &mut Graph,
    params: &mut BoundParams,
    x: NodeId,
    prefix: &str,
    factor: usize,
) -> Result<NodeId> {
    let stages = subsample_stages(factor)?;
    let len = graph.value(x).rows();
    if len < factor {
        return Err(Error::InputTooShort { len, min: factor });
    }
    let mut cur = x;
    for s in 0..stages {
        let w = params.node(graph, &format!("{prefix}.{s}.weight"))?;
        let b = params.node(graph, &format!("{prefix}.{s}.bias"))?;
        // pad-left 1 with kernel 3, stride 2 halves the length, flooring
        cur = graph.conv1d(cur, w, b, 2, 3, 1)?;
        cur = graph.relu(cur);
    }
    Ok(cur)
}

/// Feature-axis concatenation with the auxiliary sequence first. `None`
/// encodes the width-zero auxiliary case, which passes `features` through
/// untouched.
pub fn concat_features(
    graph: &mut Graph,
    aux: Option<NodeId>,
    features: NodeId,
) -> Result<NodeId> {
    match aux {
        Some(a) => graph.concat_cols(&[a, features]),
        None => Ok(features),
    }
}

//! Bottleneck adapter with an auxiliary speaker-feature net.
//!
//! An adapter sits after the multi-head attention of one encoder block. The
//! auxiliary net K projects speaker features (per-frame fMLLR rows or a
//! per-utterance x-vector tiled over time); the projected sequence is
//! appended in front of the MHA output and pushed through a
//! down-project / transform / up-project stack:
//!
//!   a = relu(U(relu(D(relu(V(append(K(s), m)))))))
//!
//! The up-projection U starts at zero, so a freshly mounted adapter leaves
//! the encoder output untouched until finetuning moves it.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn;
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    None,
    Fmllr,
    Xvector,
}

impl AuxKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuxKind::None => "none",
            AuxKind::Fmllr => "fmllr",
            AuxKind::Xvector => "xvector",
        }
    }

    pub fn parse(s: &str) -> Result<AuxKind> {
        match s {
            "none" => Ok(AuxKind::None),
            "fmllr" => Ok(AuxKind::Fmllr),
            "xvector" => Ok(AuxKind::Xvector),
            other => Err(Error::Config(format!("unknown auxiliary feature kind: {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdapterSpec {
    /// Block the adapter mounts after, 1-based.
    pub block_index: usize,
    pub bottleneck_dim: usize,
    pub aux_kind: AuxKind,
    /// Width p of the raw auxiliary features (0 iff kind is none).
    pub aux_dim: usize,
    /// Width p' of the auxiliary net output.
    pub aux_proj_dim: usize,
    /// Apply a ReLU after the up-projection U as well, constraining
    /// a >= 0. Off by default: with the zero-initialized U the trailing
    /// ReLU sits exactly at its dead point, so no gradient would ever reach
    /// the adapter and stage-1 training could not move it.
    pub relu_after_up: bool,
}

impl AdapterSpec {
    pub fn new(block_index: usize, bottleneck_dim: usize, aux_kind: AuxKind, aux_dim: usize) -> Self {
        AdapterSpec {
            block_index,
            bottleneck_dim,
            aux_kind,
            aux_dim,
            aux_proj_dim: 64,
            relu_after_up: false,
        }
    }

    pub fn validate(&self, n_blocks: usize) -> Result<()> {
        if self.block_index < 1 || self.block_index > n_blocks {
            return Err(Error::Config(format!(
                "adapter block index {} outside 1..={n_blocks}",
                self.block_index
            )));
        }
        if self.bottleneck_dim == 0 {
            return Err(Error::Config("adapter bottleneck width must be >= 1".into()));
        }
        match self.aux_kind {
            AuxKind::None if self.aux_dim != 0 => Err(Error::Config(format!(
                "aux kind none requires aux width 0, got {}",
                self.aux_dim
            ))),
            AuxKind::Fmllr | AuxKind::Xvector if self.aux_dim == 0 => Err(Error::Config(
                format!("aux kind {} requires a positive aux width", self.aux_kind.as_str()),
            )),
            _ => Ok(()),
        }
    }

    pub fn prefix(&self) -> String {
        format!("adapter.{}", self.block_index)
    }

    fn has_aux(&self) -> bool {
        self.aux_kind != AuxKind::None
    }

    /// Width of the adapter bottleneck input: p' + h with an auxiliary net,
    /// plain h without.
    fn concat_width(&self, hidden: usize) -> usize {
        if self.has_aux() {
            self.aux_proj_dim + hidden
        } else {
            hidden
        }
    }

    /// Parameters the adapter adds: V, D, U and the auxiliary net.
    pub fn param_count(&self, hidden: usize) -> usize {
        let cw = self.concat_width(hidden);
        let d = self.bottleneck_dim;
        let aux = if self.has_aux() {
            self.aux_dim * self.aux_proj_dim + self.aux_proj_dim
        } else {
            0
        };
        cw * d + d + d * d + d + d * hidden + hidden + aux
    }

    pub fn register(&self, store: &mut ParamStore, hidden: usize, rng: &mut Rng) -> Result<()> {
        let prefix = self.prefix();
        if self.has_aux() {
            nn::register_linear(store, &format!("{prefix}.aux"), self.aux_dim, self.aux_proj_dim, rng)?;
        }
        nn::register_linear(store, &format!("{prefix}.v"), self.concat_width(hidden), self.bottleneck_dim, rng)?;
        nn::register_linear(store, &format!("{prefix}.d"), self.bottleneck_dim, self.bottleneck_dim, rng)?;
        nn::register_linear_zero(store, &format!("{prefix}.u"), self.bottleneck_dim, hidden)
    }
}

/// Speaker-feature sequence feeding one adapter.
#[derive(Debug, Clone)]
pub struct AuxSequence {
    pub kind: AuxKind,
    pub values: Tensor,
}

impl AuxSequence {
    pub fn fmllr(values: Tensor) -> Self {
        AuxSequence { kind: AuxKind::Fmllr, values }
    }

    /// A per-utterance embedding, stored as a single row; tiled to the
    /// encoder's frame count when consumed.
    pub fn xvector(embedding: &[f64]) -> Self {
        AuxSequence {
            kind: AuxKind::Xvector,
            values: Tensor::new(vec![1, embedding.len()], embedding.to_vec()).unwrap(),
        }
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    /// Nearest-neighbor resample along time; tiles single-row sequences.
    pub fn resample(&self, frames: usize) -> AuxSequence {
        let t_old = self.values.rows();
        if t_old == frames {
            return self.clone();
        }
        let w = self.values.cols();
        let mut data = Vec::with_capacity(frames * w);
        for r in 0..frames {
            let src = (r * t_old) / frames;
            data.extend_from_slice(self.values.row(src.min(t_old - 1)));
        }
        AuxSequence { kind: self.kind, values: Tensor::new(vec![frames, w], data).unwrap() }
    }
}

/// K(s) = relu(linear(s)).
pub fn auxiliary_net(
    graph: &mut Graph,
    params: &mut BoundParams,
    spec: &AdapterSpec,
    aux: NodeId,
) -> Result<NodeId> {
    let projected = nn::linear(graph, params, aux, &format!("{}.aux", spec.prefix()))?;
    Ok(graph.relu(projected))
}

/// The bottleneck stack over the appended sequence.
pub fn adapter_forward(
    graph: &mut Graph,
    params: &mut BoundParams,
    spec: &AdapterSpec,
    mha_out: NodeId,
    projected_aux: Option<NodeId>,
) -> Result<NodeId> {
    if let Some(k) = projected_aux {
        let got = graph.value(k).cols();
        if got != spec.aux_proj_dim {
            return Err(Error::Config(format!(
                "adapter at block {} expects projected aux width {}, got {got}",
                spec.block_index, spec.aux_proj_dim
            )));
        }
    }
    let prefix = spec.prefix();
    let c = nn::concat_features(graph, projected_aux, mha_out)?;
    let expect = spec.concat_width(graph.value(mha_out).cols());
    if graph.value(c).cols() != expect {
        return Err(Error::Config(format!(
            "adapter at block {} bottleneck input width {} does not match spec width {expect}",
            spec.block_index,
            graph.value(c).cols()
        )));
    }
    let v = nn::linear(graph, params, c, &format!("{prefix}.v"))?;
    let v = graph.relu(v);
    let d = nn::linear(graph, params, v, &format!("{prefix}.d"))?;
    let d = graph.relu(d);
    let u = nn::linear(graph, params, d, &format!("{prefix}.u"))?;
    Ok(if spec.relu_after_up { graph.relu(u) } else { u })
}

/// Residual add followed by row normalization: layer_norm(m + a). Inside a
/// block this is the pre-norm feeding the feed-forward sublayer, so a zero
/// adapter output reproduces the standard path exactly.
pub fn adapter_combine(
    graph: &mut Graph,
    params: &mut BoundParams,
    ln_prefix: &str,
    mha_out: NodeId,
    adapter_out: NodeId,
) -> Result<(NodeId, NodeId)> {
    let stream = graph.add(mha_out, adapter_out)?;
    let normed = nn::layer_norm(graph, params, stream, ln_prefix)?;
    Ok((stream, normed))
}

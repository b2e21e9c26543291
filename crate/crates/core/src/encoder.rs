//! Context encoder: conv subsampler feeding a stack of pre-norm MHA blocks,
//! a CTC output head, and mount points for bottleneck adapters.
//!
//! Block b computes
//!
//!   m_b = x + MHA(LN1(x))
//!   s_b = m_b + a_b            (adapter mounted at b; a_b = 0 otherwise)
//!   out = s_b + FFN(LN2(s_b))
//!
//! so with zero-initialized up-projections a mounted adapter is exactly
//! invisible, and LN2(s_b) realizes the layer-normalized combination of the
//! MHA output with the adapter output.

use std::collections::BTreeMap;

use crate::adapter::{adapter_forward, auxiliary_net, AdapterSpec, AuxKind, AuxSequence};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn;
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub subsample_factor: usize,
    pub ffn_width: usize,
}

impl EncoderConfig {
    /// Small configuration that trains in seconds on a CPU.
    pub fn desk_scale() -> Self {
        EncoderConfig { hidden_size: 64, n_blocks: 6, n_heads: 4, subsample_factor: 4, ffn_width: 256 }
    }

    /// Reference dimensions of the large pretrained encoder this design
    /// mirrors (24 blocks of width 1024). Too big to train here; kept for
    /// documentation and width checks.
    pub fn paper_scale() -> Self {
        EncoderConfig {
            hidden_size: 1024,
            n_blocks: 24,
            n_heads: 16,
            subsample_factor: 4,
            ffn_width: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::Config("encoder needs at least one block".into()));
        }
        if self.n_heads == 0 || self.hidden_size % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.n_heads
            )));
        }
        if self.ffn_width == 0 {
            return Err(Error::Config("ffn width must be >= 1".into()));
        }
        if self.subsample_factor < 2 || !self.subsample_factor.is_power_of_two() {
            return Err(Error::Config(format!(
                "subsample factor must be a power of two >= 2, got {}",
                self.subsample_factor
            )));
        }
        Ok(())
    }
}

/// Per-block activations kept for feature extraction and inspection.
#[derive(Debug, Clone)]
pub struct EncoderBlockState {
    pub mha_output: Tensor,
    pub block_output: Tensor,
}

/// Auxiliary sequences keyed by adapter block index.
#[derive(Debug, Clone, Default)]
pub struct AuxInputs {
    by_block: BTreeMap<usize, AuxSequence>,
}

impl AuxInputs {
    pub fn none() -> Self {
        AuxInputs::default()
    }

    pub fn with(mut self, block: usize, seq: AuxSequence) -> Self {
        self.by_block.insert(block, seq);
        self
    }

    pub fn insert(&mut self, block: usize, seq: AuxSequence) {
        self.by_block.insert(block, seq);
    }

    pub fn get(&self, block: usize) -> Option<&AuxSequence> {
        self.by_block.get(&block)
    }
}

pub struct EncodedNodes {
    pub final_hidden: NodeId,
    /// (m_b, block output) node pairs, one per block.
    pub states: Vec<(NodeId, NodeId)>,
}

pub struct Encoder {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    pub params: ParamStore,
    adapters: Vec<AdapterSpec>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, vocab_size: usize, seed: u64) -> Result<Encoder> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::Config(format!(
                "output head needs >= 2 classes (incl. blank), got {vocab_size}"
            )));
        }
        let mut params = ParamStore::new();
        let mut rng = Rng::new(seed);
        let h = config.hidden_size;
        nn::register_conv_subsample(&mut params, "conv", 1, h, config.subsample_factor, &mut rng)?;
        for b in 1..=config.n_blocks {
            nn::register_layer_norm(&mut params, &format!("block.{b}.ln1"), h)?;
            nn::register_mha(&mut params, &format!("block.{b}.mha"), h, &mut rng)?;
            nn::register_layer_norm(&mut params, &format!("block.{b}.ln2"), h)?;
            nn::register_linear(&mut params, &format!("block.{b}.ffn.1"), h, config.ffn_width, &mut rng)?;
            nn::register_linear(&mut params, &format!("block.{b}.ffn.2"), config.ffn_width, h, &mut rng)?;
        }
        nn::register_linear(&mut params, "head", h, vocab_size, &mut rng)?;
        Ok(Encoder { config, vocab_size, params, adapters: Vec::new() })
    }

    /// Reassemble a model from restored parts (checkpoint loading).
    pub fn from_parts(
        config: EncoderConfig,
        vocab_size: usize,
        params: ParamStore,
        adapters: Vec<AdapterSpec>,
    ) -> Result<Encoder> {
        config.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for spec in &adapters {
            spec.validate(config.n_blocks)?;
            if !seen.insert(spec.block_index) {
                return Err(Error::Config(format!(
                    "two adapters restored at block {}",
                    spec.block_index
                )));
            }
        }
        let mut adapters = adapters;
        adapters.sort_by_key(|a| a.block_index);
        Ok(Encoder { config, vocab_size, params, adapters })
    }

    /// Swap the CTC output head for a freshly initialized one of a new
    /// width; used when finetuning onto a different vocabulary.
    pub fn replace_head(&mut self, vocab_size: usize, seed: u64) -> Result<()> {
        if vocab_size < 2 {
            return Err(Error::Config(format!(
                "output head needs >= 2 classes (incl. blank), got {vocab_size}"
            )));
        }
        let mut fresh = ParamStore::new();
        let mut rng = Rng::new(seed);
        nn::register_linear(&mut fresh, "head", self.config.hidden_size, vocab_size, &mut rng)?;
        for name in ["head.weight", "head.bias"] {
            let value = fresh.get(name).unwrap().clone();
            *self.params.get_mut(name).unwrap() = value;
        }
        self.vocab_size = vocab_size;
        Ok(())
    }

    pub fn adapters(&self) -> &[AdapterSpec] {
        &self.adapters
    }

    pub fn adapter_at(&self, block: usize) -> Option<&AdapterSpec> {
        self.adapters.iter().find(|a| a.block_index == block)
    }

    /// Mount one adapter. At most one adapter per block.
    pub fn mount(&mut self, spec: AdapterSpec, seed: u64) -> Result<()> {
        spec.validate(self.config.n_blocks)?;
        if self.adapter_at(spec.block_index).is_some() {
            return Err(Error::Config(format!(
                "block {} already has an adapter",
                spec.block_index
            )));
        }
        let mut rng = Rng::new(seed);
        spec.register(&mut self.params, self.config.hidden_size, &mut rng)?;
        self.adapters.push(spec);
        self.adapters.sort_by_key(|a| a.block_index);
        Ok(())
    }

    /// Mount the x-vector and fMLLR adapters together. Their blocks must
    /// differ; parameter names are disjoint by the per-block prefix.
    pub fn mount_dual(&mut self, spec_x: AdapterSpec, spec_f: AdapterSpec, seed: u64) -> Result<()> {
        if spec_x.block_index == spec_f.block_index {
            return Err(Error::Config(format!(
                "dual adapters need distinct blocks, both at {}",
                spec_x.block_index
            )));
        }
        self.mount(spec_x, seed)?;
        self.mount(spec_f, seed.wrapping_add(1))
    }

    /// Frame count the subsampler produces for a waveform of length `len`.
    pub fn out_frames(&self, len: usize) -> usize {
        len / self.config.subsample_factor
    }

    /// Build the encoder forward into `graph`, with adapters applied.
    pub fn encode_nodes(
        &self,
        graph: &mut Graph,
        bound: &mut BoundParams,
        waveform: NodeId,
        aux: &AuxInputs,
    ) -> Result<EncodedNodes> {
        let cfg = &self.config;
        let mut x = nn::conv_subsample(graph, bound, waveform, "conv", cfg.subsample_factor)?;
        let frames = graph.value(x).rows();
        let mut states = Vec::with_capacity(cfg.n_blocks);
        for b in 1..=cfg.n_blocks {
            let normed = nn::layer_norm(graph, bound, x, &format!("block.{b}.ln1"))?;
            let mha = nn::multi_head_attention(graph, bound, normed, &format!("block.{b}.mha"), cfg.n_heads)?;
            let m_b = graph.add(x, mha.out)?;

            let stream = match self.adapter_at(b) {
                Some(spec) => {
                    let projected = match spec.aux_kind {
                        AuxKind::None => None,
                        kind => {
                            let seq = aux.get(b).ok_or_else(|| {
                                Error::Config(format!(
                                    "adapter at block {b} has no auxiliary input"
                                ))
                            })?;
                            if seq.kind != kind {
                                return Err(Error::Config(format!(
                                    "adapter at block {b} expects {} features, got {}",
                                    kind.as_str(),
                                    seq.kind.as_str()
                                )));
                            }
                            if seq.width() != spec.aux_dim {
                                return Err(Error::Config(format!(
                                    "adapter at block {b} expects aux width {}, got {}",
                                    spec.aux_dim,
                                    seq.width()
                                )));
                            }
                            let aligned = seq.resample(frames);
                            let aux_node = graph.leaf(aligned.values, false);
                            Some(auxiliary_net(graph, bound, spec, aux_node)?)
                        }
                    };
                    let a_b = adapter_forward(graph, bound, spec, m_b, projected)?;
                    graph.add(m_b, a_b)?
                }
                None => m_b,
            };

            let normed2 = nn::layer_norm(graph, bound, stream, &format!("block.{b}.ln2"))?;
            let ff = nn::linear(graph, bound, normed2, &format!("block.{b}.ffn.1"))?;
            let ff = graph.relu(ff);
            let ff = nn::linear(graph, bound, ff, &format!("block.{b}.ffn.2"))?;
            x = graph.add(stream, ff)?;
            states.push((m_b, x));
        }
        Ok(EncodedNodes { final_hidden: x, states })
    }

    /// Encoder states plus CTC logits, for training and decoding.
    pub fn logits_nodes(
        &self,
        graph: &mut Graph,
        bound: &mut BoundParams,
        waveform: NodeId,
        aux: &AuxInputs,
    ) -> Result<(EncodedNodes, NodeId)> {
        let encoded = self.encode_nodes(graph, bound, waveform, aux)?;
        let logits = nn::linear(graph, bound, encoded.final_hidden, "head")?;
        Ok((encoded, logits))
    }

    /// Inference-only forward; returns the final hidden states and all block
    /// states.
    pub fn encode(&self, waveform: &Tensor, aux: &AuxInputs) -> Result<(Tensor, Vec<EncoderBlockState>)> {
        let mut graph = Graph::new();
        let mut bound = BoundParams::bind(&self.params, false);
        let wave = graph.leaf(waveform.clone(), false);
        let encoded = self.encode_nodes(&mut graph, &mut bound, wave, aux)?;
        let states = encoded
            .states
            .iter()
            .map(|&(m, o)| EncoderBlockState {
                mha_output: graph.value(m).clone(),
                block_output: graph.value(o).clone(),
            })
            .collect();
        Ok((graph.value(encoded.final_hidden).clone(), states))
    }

    /// CTC logits for one utterance, inference only.
    pub fn logits(&self, waveform: &Tensor, aux: &AuxInputs) -> Result<Tensor> {
        let mut graph = Graph::new();
        let mut bound = BoundParams::bind(&self.params, false);
        let wave = graph.leaf(waveform.clone(), false);
        let (_, logits) = self.logits_nodes(&mut graph, &mut bound, wave, aux)?;
        Ok(graph.value(logits).clone())
    }

    /// Final-block hidden states with no adapters applied and no gradient
    /// tracking; the input side of the fMLLR pipeline.
    pub fn extract_features(&self, waveform: &Tensor) -> Result<Tensor> {
        let bare = Encoder {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            params: self.params.clone(),
            adapters: Vec::new(),
        };
        let (hidden, _) = bare.encode(waveform, &AuxInputs::none())?;
        Ok(hidden)
    }
}

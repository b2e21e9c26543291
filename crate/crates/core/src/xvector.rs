//! Toy x-vector extractor: frame-wise linear+ReLU layers, mean+std
//! statistics pooling over time, and a linear projection to a fixed-width
//! embedding, trained with a speaker-classification objective.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::nn;
use crate::optim::{AdamW, TrainConfig};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct XvectorConfig {
    pub layer_width: usize,
    pub embed_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl XvectorConfig {
    /// The full-size extractor emits 512-dimensional embeddings.
    pub fn paper_scale() -> Self {
        XvectorConfig { layer_width: 512, embed_dim: 512, epochs: 4, lr: 1e-3, seed: 0 }
    }

    pub fn desk_scale() -> Self {
        XvectorConfig { layer_width: 32, embed_dim: 32, epochs: 6, lr: 5e-3, seed: 0 }
    }
}

pub struct XvectorExtractor {
    params: ParamStore,
    pub in_dim: usize,
    pub embed_dim: usize,
}

impl XvectorExtractor {
    fn register(in_dim: usize, n_speakers: usize, cfg: &XvectorConfig) -> Result<ParamStore> {
        let mut params = ParamStore::new();
        let mut rng = Rng::new(cfg.seed);
        nn::register_linear(&mut params, "xv.l1", in_dim, cfg.layer_width, &mut rng)?;
        nn::register_linear(&mut params, "xv.l2", cfg.layer_width, cfg.layer_width, &mut rng)?;
        nn::register_linear(&mut params, "xv.emb", 2 * cfg.layer_width, cfg.embed_dim, &mut rng)?;
        nn::register_linear(&mut params, "xv.cls", cfg.embed_dim, n_speakers, &mut rng)?;
        Ok(params)
    }

    fn embed_nodes(graph: &mut Graph, bound: &mut BoundParams, frames: NodeId) -> Result<NodeId> {
        let h1 = nn::linear(graph, bound, frames, "xv.l1")?;
        let h1 = graph.relu(h1);
        let h2 = nn::linear(graph, bound, h1, "xv.l2")?;
        let h2 = graph.relu(h2);
        let pooled = graph.stats_pool(h2)?;
        nn::linear(graph, bound, pooled, "xv.emb")
    }

    /// Train on (frames, speaker index) pairs with cross-entropy over
    /// speakers. Deterministic under the config seed.
    pub fn train(
        utterances: &[(Tensor, usize)],
        n_speakers: usize,
        cfg: &XvectorConfig,
    ) -> Result<XvectorExtractor> {
        let Some((first, _)) = utterances.first() else {
            return Err(Error::Data("x-vector training set is empty".into()));
        };
        if n_speakers < 2 {
            return Err(Error::Data("x-vector training needs at least 2 speakers".into()));
        }
        let in_dim = first.cols();
        let mut params = Self::register(in_dim, n_speakers, cfg)?;

        let steps_per_epoch = utterances.len();
        let total = (cfg.epochs * steps_per_epoch).max(2);
        let train_cfg = TrainConfig {
            peak_lr: cfg.lr,
            warmup_steps: (total / 20).max(1),
            total_steps: total + 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            grad_clip_norm: 5.0,
            epochs: cfg.epochs,
            seed: cfg.seed,
            stage1_steps: 0,
            batch_size: 1,
        };
        let mut opt = AdamW::new();
        let mut order: Vec<usize> = (0..utterances.len()).collect();
        let mut rng = Rng::new(cfg.seed ^ 0x5eed);
        let mut step = 0usize;
        for _epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for &idx in &order {
                let (frames, speaker) = &utterances[idx];
                step += 1;
                let mut graph = Graph::new();
                let mut bound = BoundParams::bind(&params, true);
                let x = graph.leaf(frames.clone(), false);
                let emb = Self::embed_nodes(&mut graph, &mut bound, x)?;
                let logits = nn::linear(&mut graph, &mut bound, emb, "xv.cls")?;
                let loss = graph.cross_entropy(logits, *speaker)?;
                graph.backward(loss)?;
                let grads: BTreeMap<String, Tensor> = bound.grads(&graph);
                opt.step(&mut params, &grads, step, &train_cfg)?;
            }
        }
        Ok(XvectorExtractor { params, in_dim, embed_dim: cfg.embed_dim })
    }

    /// Embedding of one utterance; frame order does not matter because the
    /// pooling is a per-column mean and standard deviation.
    pub fn extract(&self, frames: &Tensor) -> Result<Vec<f64>> {
        if frames.rows() < 2 {
            return Err(Error::Estimation(format!(
                "x-vector extraction needs >= 2 frames, got {}",
                frames.rows()
            )));
        }
        if frames.cols() != self.in_dim {
            return Err(Error::Shape {
                left: frames.shape().to_vec(),
                right: vec![frames.rows(), self.in_dim],
            });
        }
        let mut graph = Graph::new();
        let mut bound = BoundParams::bind(&self.params, false);
        let x = graph.leaf(frames.clone(), false);
        let emb = Self::embed_nodes(&mut graph, &mut bound, x)?;
        Ok(graph.value(emb).data().to_vec())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speaker_frames(rng: &mut Rng, center: f64, t: usize) -> Tensor {
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..3).map(|_| center + 0.3 * rng.normal()).collect())
            .collect();
        Tensor::from_rows(&rows).unwrap()
    }

    fn tiny_training_set() -> Vec<(Tensor, usize)> {
        let mut rng = Rng::new(77);
        let mut data = Vec::new();
        for (spk, center) in [(0usize, -1.5f64), (1, 1.5)] {
            for _ in 0..12 {
                data.push((speaker_frames(&mut rng, center, 8), spk));
            }
        }
        data
    }

    #[test]
    fn embedding_is_order_invariant() {
        let mut cfg = XvectorConfig::desk_scale();
        cfg.epochs = 1;
        let data = tiny_training_set();
        let ext = XvectorExtractor::train(&data, 2, &cfg).unwrap();

        let frames = data[0].0.clone();
        let e1 = ext.extract(&frames).unwrap();
        // reverse the frame order
        let rows: Vec<Vec<f64>> = (0..frames.rows()).rev().map(|t| frames.row(t).to_vec()).collect();
        let reversed = Tensor::from_rows(&rows).unwrap();
        let e2 = ext.extract(&reversed).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_widths() {
        assert_eq!(XvectorConfig::paper_scale().embed_dim, 512);
        let cfg = XvectorConfig::desk_scale();
        assert_eq!(cfg.embed_dim, 32);
        let ext = XvectorExtractor::train(&tiny_training_set(), 2, &cfg).unwrap();
        let emb = ext.extract(&tiny_training_set()[0].0).unwrap();
        assert_eq!(emb.len(), 32);
    }

    #[test]
    fn same_speaker_more_similar_than_cross() {
        let cfg = XvectorConfig::desk_scale();
        let data = tiny_training_set();
        let ext = XvectorExtractor::train(&data, 2, &cfg).unwrap();
        let mut rng = Rng::new(101);
        let a1 = ext.extract(&speaker_frames(&mut rng, -1.5, 9)).unwrap();
        let a2 = ext.extract(&speaker_frames(&mut rng, -1.5, 7)).unwrap();
        let b1 = ext.extract(&speaker_frames(&mut rng, 1.5, 8)).unwrap();
        let same = cosine(&a1, &a2);
        let cross = 0.5 * (cosine(&a1, &b1) + cosine(&a2, &b1));
        assert!(same > cross, "same {same} vs cross {cross}");
    }

    #[test]
    fn single_frame_rejected() {
        let cfg = XvectorConfig::desk_scale();
        let ext = XvectorExtractor::train(&tiny_training_set(), 2, &cfg).unwrap();
        let one = Tensor::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(ext.extract(&one), Err(Error::Estimation(_))));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = XvectorConfig::desk_scale();
        let data = tiny_training_set();
        let e1 = XvectorExtractor::train(&data, 2, &cfg).unwrap();
        let e2 = XvectorExtractor::train(&data, 2, &cfg).unwrap();
        let a = e1.extract(&data[0].0).unwrap();
        let b = e2.extract(&data[0].0).unwrap();
        assert_eq!(a, b);
    }
}

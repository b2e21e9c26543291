//! CTC training loop with the two-stage adapter schedule.
//!
//! Stage 1 freezes everything except adapter and auxiliary-net parameters
//! for `stage1_steps` optimizer steps, letting the encoder wire itself to
//! the speaker features; stage 2 unfreezes the whole model and runs until
//! the dev loss stops improving or the epoch budget is spent.
//!
//! All shuffling derives from the training seed and parameter iteration is
//! name-ordered, so identical configs produce bit-identical runs.

use std::collections::BTreeMap;

use crate::adapter::{AuxKind, AuxSequence};
use crate::corpus::{Severity, UtteranceRecord};
use crate::ctc::greedy_decode;
use crate::encoder::{AuxInputs, Encoder};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::optim::{AdamW, TrainConfig};
use crate::params::BoundParams;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::wer::{score_with_breakdown, WerReport};

/// Early stopping: dev loss must improve by this much...
const EARLY_STOP_DELTA: f64 = 1e-3;
/// ...at least once in this many consecutive epochs.
const EARLY_STOP_PATIENCE: usize = 3;

/// One utterance as the trainer consumes it.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub utt_id: String,
    pub speaker_id: String,
    pub severity: Severity,
    pub waveform: Tensor,
    pub transcript: Vec<usize>,
}

impl TrainItem {
    pub fn from_record(record: &UtteranceRecord) -> TrainItem {
        TrainItem {
            utt_id: record.utt_id.clone(),
            speaker_id: record.speaker_id.clone(),
            severity: record.severity,
            waveform: record.waveform(),
            transcript: record.transcript.clone(),
        }
    }
}

/// Extracted speaker features, keyed by utterance id.
#[derive(Debug, Clone, Default)]
pub struct AuxFeatures {
    pub fmllr: BTreeMap<String, Tensor>,
    pub xvectors: BTreeMap<String, Vec<f64>>,
}

impl AuxFeatures {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Auxiliary inputs for one utterance covering every mounted adapter.
    pub fn inputs_for(&self, model: &Encoder, utt_id: &str) -> Result<AuxInputs> {
        let mut inputs = AuxInputs::none();
        for spec in model.adapters() {
            match spec.aux_kind {
                AuxKind::None => {}
                AuxKind::Fmllr => {
                    let f = self.fmllr.get(utt_id).ok_or_else(|| {
                        Error::Data(format!("no fMLLR features for utterance {utt_id}"))
                    })?;
                    inputs.insert(spec.block_index, AuxSequence::fmllr(f.clone()));
                }
                AuxKind::Xvector => {
                    let g = self.xvectors.get(utt_id).ok_or_else(|| {
                        Error::Data(format!("no x-vector for utterance {utt_id}"))
                    })?;
                    inputs.insert(spec.block_index, AuxSequence::xvector(g));
                }
            }
        }
        Ok(inputs)
    }
}

#[derive(Debug, Clone)]
pub struct StepLine {
    pub step: usize,
    pub stage: u8,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct EpochLine {
    pub epoch: usize,
    pub stage: u8,
    pub mean_loss: f64,
    pub dev_loss: f64,
    pub dev_wer: WerReport,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub steps: Vec<StepLine>,
    pub epochs: Vec<EpochLine>,
}

impl TrainLog {
    /// One line per epoch: epoch, stage, mean train loss, dev loss, dev WER
    /// overall and per severity tier (NA where a tier is absent).
    pub fn epochs_tsv(&self) -> String {
        let mut out = String::from("epoch\tstage\tmean_loss\tdev_loss\twer_overall\twer_VL\twer_L\twer_M\twer_H\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                e.epoch, e.stage, e.mean_loss, e.dev_loss, e.dev_wer.overall
            ));
            for sev in Severity::ALL {
                match e.dev_wer.per_severity.get(&sev) {
                    Some(w) => out.push_str(&format!("\t{w:.6}")),
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// One line per optimizer step: step, stage, learning rate, batch loss.
    pub fn steps_tsv(&self) -> String {
        let mut out = String::from("step\tstage\tlr\tloss\n");
        for s in &self.steps {
            out.push_str(&format!("{}\t{}\t{:.8e}\t{:.6}\n", s.step, s.stage, s.lr, s.loss));
        }
        out
    }
}

/// Mean CTC loss and greedy WER over a set, without gradients.
pub fn evaluate(model: &Encoder, items: &[TrainItem], aux: &AuxFeatures) -> Result<(f64, WerReport)> {
    if items.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let blank = model.vocab_size - 1;
    let mut total_loss = 0.0;
    let mut scored = Vec::with_capacity(items.len());
    for item in items {
        let inputs = aux.inputs_for(model, &item.utt_id)?;
        let logits = model.logits(&item.waveform, &inputs)?;
        let mut graph = Graph::new();
        let node = graph.leaf(logits.clone(), false);
        let loss = graph.ctc_loss(node, &item.transcript, blank)?;
        total_loss += graph.scalar_value(loss);
        scored.push((item.severity, item.transcript.clone(), greedy_decode(&logits, blank)));
    }
    Ok((total_loss / items.len() as f64, score_with_breakdown(&scored)?))
}

/// Decode one utterance with the model's mounted adapters.
pub fn decode(model: &Encoder, item: &TrainItem, aux: &AuxFeatures) -> Result<Vec<usize>> {
    let inputs = aux.inputs_for(model, &item.utt_id)?;
    let logits = model.logits(&item.waveform, &inputs)?;
    Ok(greedy_decode(&logits, model.vocab_size - 1))
}

fn stage_of(step: usize, two_stage: bool, cfg: &TrainConfig) -> u8 {
    if two_stage && step <= cfg.stage1_steps {
        1
    } else {
        2
    }
}

/// Run CTC training. With `two_stage` the model must have adapters mounted
/// and auxiliary features must cover every utterance; stage 1 trains only
/// `adapter.*` parameters.
pub fn train_ctc(
    model: &mut Encoder,
    train: &[TrainItem],
    dev: &[TrainItem],
    aux: &AuxFeatures,
    cfg: &TrainConfig,
    two_stage: bool,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if two_stage && model.adapters().is_empty() {
        return Err(Error::Config("two-stage finetuning needs mounted adapters".into()));
    }
    // fail fast on missing auxiliary features, naming the utterance
    for item in train.iter().chain(dev) {
        aux.inputs_for(model, &item.utt_id)?;
    }

    let blank = model.vocab_size - 1;
    let mut opt = AdamW::new();
    let mut log = TrainLog::default();
    let base_rng = Rng::new(cfg.seed);
    let mut step = 0usize;
    let mut in_stage1 = two_stage && cfg.stage1_steps > 0;
    if in_stage1 {
        model.params.freeze_except(|name| name.starts_with("adapter."));
    }

    let mut best_dev = f64::INFINITY;
    let mut stale_epochs = 0usize;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = base_rng.fork(epoch as u64);
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            if in_stage1 && step > cfg.stage1_steps {
                model.params.unfreeze_all();
                in_stage1 = false;
            }
            let stage = stage_of(step, two_stage, cfg);

            let mut graph = Graph::new();
            let mut bound = BoundParams::bind(&model.params, true);
            let mut batch_loss = None;
            for &idx in batch {
                let item = &train[idx];
                let inputs = aux.inputs_for(model, &item.utt_id)?;
                let wave = graph.leaf(item.waveform.clone(), false);
                let (_, logits) = model.logits_nodes(&mut graph, &mut bound, wave, &inputs)?;
                let loss = graph.ctc_loss(logits, &item.transcript, blank)?;
                batch_loss = Some(match batch_loss {
                    None => loss,
                    Some(acc) => graph.add(acc, loss)?,
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = graph.scale(total, 1.0 / batch.len() as f64);
            graph.backward(mean)?;
            let grads = bound.grads(&graph);
            opt.step(&mut model.params, &grads, step, cfg)?;

            let loss_value = graph.scalar_value(mean);
            epoch_loss += loss_value;
            epoch_batches += 1;
            log.steps.push(StepLine { step, stage, lr: cfg.lr_at(step), loss: loss_value });
        }

        let (dev_loss, dev_wer) = if dev.is_empty() {
            (f64::NAN, WerReport { overall: f64::NAN, per_severity: BTreeMap::new(), n_utterances: 0 })
        } else {
            evaluate(model, dev, aux)?
        };
        log.epochs.push(EpochLine {
            epoch,
            stage: stage_of(step, two_stage, cfg),
            mean_loss: epoch_loss / epoch_batches.max(1) as f64,
            dev_loss,
            dev_wer,
        });

        // convergence: dev loss must keep improving once stage 1 is over
        if !dev.is_empty() && !in_stage1 {
            if dev_loss < best_dev - EARLY_STOP_DELTA {
                best_dev = dev_loss;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= EARLY_STOP_PATIENCE {
                    break 'epochs;
                }
            }
        } else if !dev.is_empty() {
            best_dev = best_dev.min(dev_loss);
        }
    }
    model.params.unfreeze_all();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::AdapterSpec;
    use crate::encoder::EncoderConfig;

    fn tiny_model(seed: u64) -> Encoder {
        let cfg = EncoderConfig { hidden_size: 16, n_blocks: 2, n_heads: 2, subsample_factor: 4, ffn_width: 32 };
        Encoder::new(cfg, 4, seed).unwrap()
    }

    fn tiny_items(n: usize, seed: u64) -> Vec<TrainItem> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let token = i % 3;
                // crude "phone" rendering: token value occupies the waveform
                let wave: Vec<f64> =
                    (0..24).map(|_| token as f64 - 1.0 + 0.1 * rng.normal()).collect();
                TrainItem {
                    utt_id: format!("u{i:03}"),
                    speaker_id: format!("s{}", i % 2),
                    severity: Severity::Low,
                    waveform: Tensor::new(vec![24, 1], wave).unwrap(),
                    transcript: vec![token],
                }
            })
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            peak_lr: 1e-3,
            warmup_steps: 5,
            total_steps: 200,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            grad_clip_norm: 1.0,
            epochs: 2,
            seed: 3,
            stage1_steps: 4,
            batch_size: 4,
        }
    }

    #[test]
    fn loss_decreases_on_tiny_task() {
        let mut model = tiny_model(1);
        let items = tiny_items(24, 5);
        let aux = AuxFeatures::empty();
        let (loss_before, _) = evaluate(&model, &items, &aux).unwrap();
        let mut cfg = tiny_cfg();
        cfg.epochs = 6;
        train_ctc(&mut model, &items, &[], &aux, &cfg, false).unwrap();
        let (loss_after, _) = evaluate(&model, &items, &aux).unwrap();
        assert!(loss_after < loss_before, "{loss_after} vs {loss_before}");
    }

    #[test]
    fn stage_one_freezes_everything_but_adapters() {
        let mut model = tiny_model(2);
        model.mount(AdapterSpec::new(2, 2, AuxKind::None, 0), 9).unwrap();
        let snapshot: Vec<(String, Tensor)> = model
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();

        let items = tiny_items(16, 6);
        let mut cfg = tiny_cfg();
        cfg.epochs = 3;
        cfg.stage1_steps = 1000; // never leaves stage 1
        let log = train_ctc(&mut model, &items, &[], &AuxFeatures::empty(), &cfg, true).unwrap();
        assert!(log.steps.iter().all(|s| s.stage == 1));
        assert!(log.steps.len() >= 10);

        let mut adapter_moved = false;
        for (name, before) in &snapshot {
            let after = model.params.get(name).unwrap();
            if name.starts_with("adapter.") {
                adapter_moved |= !after.bit_eq(before);
            } else {
                assert!(after.bit_eq(before), "{name} drifted during stage 1");
            }
        }
        assert!(adapter_moved, "adapter parameters never moved");
    }

    #[test]
    fn stage_marker_flips_after_stage1_steps() {
        let mut model = tiny_model(3);
        model.mount(AdapterSpec::new(1, 2, AuxKind::None, 0), 9).unwrap();
        let items = tiny_items(16, 7);
        let cfg = tiny_cfg(); // stage1_steps = 4
        let log = train_ctc(&mut model, &items, &[], &AuxFeatures::empty(), &cfg, true).unwrap();
        let stage1_count = log.steps.iter().filter(|s| s.stage == 1).count();
        assert_eq!(stage1_count, 4);
        assert!(log.steps.iter().all(|s| (s.stage == 1) == (s.step <= 4)));
    }

    #[test]
    fn missing_aux_named_before_training_starts() {
        let mut model = tiny_model(4);
        model.mount(AdapterSpec::new(1, 2, AuxKind::Fmllr, 3), 9).unwrap();
        let items = tiny_items(4, 8);
        let err = train_ctc(&mut model, &items, &[], &AuxFeatures::empty(), &tiny_cfg(), true)
            .unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("u000"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn identical_seeds_identical_runs() {
        let items = tiny_items(12, 9);
        let run = || {
            let mut model = tiny_model(5);
            let cfg = tiny_cfg();
            let log = train_ctc(&mut model, &items, &[], &AuxFeatures::empty(), &cfg, false).unwrap();
            (log.steps_tsv(), model)
        };
        let (log_a, model_a) = run();
        let (log_b, model_b) = run();
        assert_eq!(log_a, log_b);
        for (name, t) in model_a.params.iter() {
            assert!(t.bit_eq(model_b.params.get(name).unwrap()), "{name} differs");
        }
    }

    #[test]
    fn epoch_log_is_parseable() {
        let mut model = tiny_model(6);
        let items = tiny_items(12, 10);
        let dev = tiny_items(4, 11);
        let mut cfg = tiny_cfg();
        cfg.epochs = 2;
        let log = train_ctc(&mut model, &items, &dev, &AuxFeatures::empty(), &cfg, false).unwrap();
        let tsv = log.epochs_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 1 + log.epochs.len());
        for line in &lines[1..] {
            assert_eq!(line.split('\t').count(), 9);
        }
    }
}

//! Mount speaker adapters on a trained encoder and show that the
//! zero-initialized up-projection makes them exactly invisible until
//! training moves them.
//!
//! ```bash
//! cargo run --release --example adapter_zero_init
//! ```

use sasr::adapter::{AdapterSpec, AuxKind, AuxSequence};
use sasr::corpus::Severity;
use sasr::encoder::{AuxInputs, Encoder, EncoderConfig};
use sasr::optim::TrainConfig;
use sasr::rng::Rng;
use sasr::tensor::Tensor;
use sasr::trainer::{train_ctc, AuxFeatures, TrainItem};

fn main() {
    let cfg = EncoderConfig { hidden_size: 32, n_blocks: 4, n_heads: 4, subsample_factor: 4, ffn_width: 128 };
    let mut rng = Rng::new(3);
    let wave = Tensor::uniform(&[48, 1], 1.0, &mut rng);

    let plain = Encoder::new(cfg.clone(), 8, 7).unwrap();
    let (before, _) = plain.encode(&wave, &AuxInputs::none()).unwrap();

    // dual mount: x-vectors at block 2, fMLLR at the last block
    let mut model = Encoder::new(cfg.clone(), 8, 7).unwrap();
    let spec_x = AdapterSpec::new(2, 4, AuxKind::Xvector, 6);
    let spec_f = AdapterSpec::new(cfg.n_blocks, 4, AuxKind::Fmllr, 6);
    let added = spec_x.param_count(cfg.hidden_size) + spec_f.param_count(cfg.hidden_size);
    model.mount_dual(spec_x, spec_f, 99).unwrap();
    println!(
        "adapters add {added} parameters ({:.2}% of the encoder's {})",
        100.0 * added as f64 / plain.params.n_values() as f64,
        plain.params.n_values()
    );

    let aux = AuxInputs::none()
        .with(2, AuxSequence::xvector(&[0.2, -0.4, 0.7, 0.1, -0.9, 0.3]))
        .with(cfg.n_blocks, AuxSequence::fmllr(Tensor::uniform(&[12, 6], 1.0, &mut rng)));
    let (after, _) = model.encode(&wave, &aux).unwrap();
    println!("mounted, zero-init:   outputs bit-identical = {}", before.bit_eq(&after));

    // a few adapter-only training steps later the outputs diverge
    let mut aux_feats = AuxFeatures::empty();
    let items: Vec<TrainItem> = (0..8)
        .map(|i| {
            let utt = format!("u{i}");
            aux_feats.fmllr.insert(utt.clone(), Tensor::uniform(&[12, 6], 1.0, &mut rng));
            aux_feats.xvectors.insert(utt.clone(), (0..6).map(|_| rng.normal()).collect());
            TrainItem {
                utt_id: utt,
                speaker_id: "s0".into(),
                severity: Severity::Mid,
                waveform: Tensor::uniform(&[48, 1], 1.0, &mut rng),
                transcript: vec![i % 7],
            }
        })
        .collect();
    let mut tc = TrainConfig::desk_scale();
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.stage1_steps = 1000; // adapter-only updates
    train_ctc(&mut model, &items, &[], &aux_feats, &tc, true).unwrap();

    let (trained, _) = model.encode(&wave, &aux).unwrap();
    println!("after stage-1 steps:  outputs bit-identical = {}", before.bit_eq(&trained));
    println!("max output change:    {:.3e}", before.max_abs_diff(&trained));
}

//! Where should the x-vector adapter sit? Train one per block placement
//! and emit the block-index/WER CSV.
//!
//! ```bash
//! cargo run --release --example block_sweep
//! ```

use sasr::config::ExperimentConfig;
use sasr::corpus::Severity;
use sasr::pipeline::*;

fn main() {
    let root = std::env::temp_dir().join("sasr_example_sweep");
    std::fs::remove_dir_all(&root).ok();
    std::fs::create_dir_all(&root).unwrap();

    let mut cfg = ExperimentConfig::desk_scale();
    cfg.encoder.hidden_size = 32;
    cfg.encoder.n_blocks = 4;
    cfg.encoder.ffn_width = 128;
    cfg.corpus.n_phones = 30;
    cfg.corpus.n_words = 60;
    cfg.corpus.utterances_per_speaker = 60;
    for s in Severity::ALL {
        cfg.corpus.speakers_per_tier.insert(s, 1);
    }
    cfg.train.peak_lr = 1.5e-3;
    cfg.train.warmup_steps = 20;
    cfg.train.total_steps = 400;
    cfg.train.epochs = 4;
    cfg.train.stage1_steps = 40;
    cfg.adapter.bottleneck_dim = 16;
    cfg.adapter.aux_proj_dim = 32;
    cfg.xvector.layer_width = 24;
    cfg.xvector.embed_dim = 16;
    cfg.xvector.epochs = 6;

    // corpus, a quickly pretrained base model, and x-vectors
    let dys = root.join("corpus");
    cmd_generate(&cfg.corpus, 7, &dys).unwrap();

    let mut pre_cfg = cfg.clone();
    pre_cfg.corpus.distortion_base = 0.35;
    pre_cfg.corpus.offset_base = 0.25;
    pre_cfg.corpus.jitter_base = 0.2;
    pre_cfg.corpus.noise_base = 0.25;
    pre_cfg.corpus.speakers_per_tier.clear();
    pre_cfg.corpus.speakers_per_tier.insert(Severity::VeryLow, 6);
    pre_cfg.train.peak_lr = 2e-3;
    pre_cfg.train.total_steps = 1200;
    pre_cfg.train.epochs = 8;
    pre_cfg.train.stage1_steps = 0;
    let controls = root.join("controls");
    cmd_generate(&pre_cfg.corpus, 999, &controls).unwrap();
    println!("pretraining the base encoder...");
    cmd_pretrain(&pre_cfg, &controls, 5, &root.join("pre")).unwrap();
    let ckpt = root.join("pre").join(CHECKPOINT_FILE);

    let feat = root.join("features");
    cmd_extract_xvector(&cfg, &dys, 0, &feat).unwrap();

    println!("sweeping adapter placements...");
    let blocks: Vec<usize> = (1..=cfg.encoder.n_blocks).collect();
    let csv = cmd_sweep_blocks(
        &cfg,
        &ckpt,
        &dys,
        &feat.join(XVECTORS_FILE),
        &blocks,
        0,
        &root.join("sweep"),
    )
    .unwrap();
    println!("\n{csv}");
    println!("csv written to {}", root.join("sweep").join("sweep.csv").display());
}

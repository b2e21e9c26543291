//! The whole experiment at miniature scale: generate corpora, pretrain on
//! healthy-control speakers, extract fMLLR features and x-vectors,
//! finetune plain and adapted variants, and print the severity report.
//!
//! Takes a minute or two on a laptop CPU.
//!
//! ```bash
//! cargo run --release --example full_pipeline
//! ```

use std::path::PathBuf;

use sasr::config::{AuxSelection, ExperimentConfig};
use sasr::corpus::Severity;
use sasr::pipeline::*;

fn base_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.encoder.hidden_size = 32;
    cfg.encoder.n_blocks = 4;
    cfg.encoder.ffn_width = 128;
    cfg.corpus.n_phones = 30;
    cfg.corpus.n_words = 60;
    cfg.corpus.utterances_per_speaker = 80;
    for s in Severity::ALL {
        cfg.corpus.speakers_per_tier.insert(s, 2);
    }
    cfg.train.peak_lr = 1.5e-3;
    cfg.train.warmup_steps = 20;
    cfg.train.total_steps = 700;
    cfg.train.epochs = 5;
    cfg.train.batch_size = 4;
    cfg.train.stage1_steps = 60;
    cfg.adapter.bottleneck_dim = 16;
    cfg.adapter.aux_proj_dim = 32;
    cfg.fmllr.lda_dim = 8;
    cfg.fmllr.gmm_components = 16;
    cfg.xvector.layer_width = 24;
    cfg.xvector.embed_dim = 16;
    cfg.xvector.epochs = 6;
    cfg
}

fn main() {
    let root = std::env::temp_dir().join("sasr_example_pipeline");
    std::fs::remove_dir_all(&root).ok();
    std::fs::create_dir_all(&root).unwrap();
    let cfg = base_cfg();

    // 1. healthy-control corpus and pretraining
    let mut pre_cfg = cfg.clone();
    pre_cfg.corpus.distortion_base = 0.35;
    pre_cfg.corpus.offset_base = 0.25;
    pre_cfg.corpus.jitter_base = 0.2;
    pre_cfg.corpus.noise_base = 0.25;
    pre_cfg.corpus.speakers_per_tier.clear();
    pre_cfg.corpus.speakers_per_tier.insert(Severity::VeryLow, 6);
    pre_cfg.corpus.speakers_per_tier.insert(Severity::Low, 4);
    pre_cfg.corpus.utterances_per_speaker = 90;
    pre_cfg.train.peak_lr = 2e-3;
    pre_cfg.train.total_steps = 2500;
    pre_cfg.train.epochs = 10;
    let controls = root.join("controls");
    println!("== generate healthy-control corpus ==");
    print!("{}", cmd_generate(&pre_cfg.corpus, 999, &controls).unwrap());

    println!("\n== pretrain ==");
    let log = cmd_pretrain(&pre_cfg, &controls, 5, &root.join("pretrained")).unwrap();
    let last = log.epochs.last().unwrap();
    println!("{} epochs, dev WER {:.2}%", last.epoch, 100.0 * last.dev_wer.overall);
    let ckpt = root.join("pretrained").join(CHECKPOINT_FILE);

    // 2. dysarthric-style corpus
    println!("\n== generate severity-tiered corpus ==");
    let dys = root.join("dysarthric");
    print!("{}", cmd_generate(&cfg.corpus, 100, &dys).unwrap());

    // 3. auxiliary features
    println!("\n== extract fMLLR features and x-vectors ==");
    let feat = root.join("features");
    cmd_extract_fmllr(&cfg, &ckpt, &dys, 0, &feat).unwrap();
    cmd_extract_xvector(&cfg, &dys, 0, &feat).unwrap();
    println!("wrote {} and {}", feat.join(FMLLR_FILE).display(), feat.join(XVECTORS_FILE).display());

    // 4. matched-budget finetuning: plain vs adapters
    let run = |aux: AuxSelection, name: &str| -> PathBuf {
        let mut c = cfg.clone();
        c.aux = aux;
        let out = root.join(name);
        let fm = aux.wants_fmllr().then(|| feat.join(FMLLR_FILE));
        let xv = aux.wants_xvector().then(|| feat.join(XVECTORS_FILE));
        cmd_finetune(&c, &ckpt, std::slice::from_ref(&dys), fm.as_deref(), xv.as_deref(), 0, &out).unwrap();
        out.join(CHECKPOINT_FILE)
    };
    println!("\n== finetune: plain ==");
    let plain = run(AuxSelection::None, "ft_plain");
    println!("== finetune: fMLLR adapter ==");
    let fmllr = run(AuxSelection::Fmllr, "ft_fmllr");
    println!("== finetune: dual adapters ==");
    let dual = run(AuxSelection::Both, "ft_dual");

    // 5. severity reports on the test split
    let manifest = dys.join("manifest_test.tsv");
    println!("\n== score: plain finetuning ==");
    print!("{}", cmd_score(&plain, &manifest, None, None, None).unwrap());
    println!("\n== score: fMLLR adapter (delta rows vs plain) ==");
    print!(
        "{}",
        cmd_score(&fmllr, &manifest, Some(&feat.join(FMLLR_FILE)), None, Some(&plain)).unwrap()
    );
    println!("\n== score: dual adapters (delta rows vs plain) ==");
    print!(
        "{}",
        cmd_score(
            &dual,
            &manifest,
            Some(&feat.join(FMLLR_FILE)),
            Some(&feat.join(XVECTORS_FILE)),
            Some(&plain)
        )
        .unwrap()
    );
}

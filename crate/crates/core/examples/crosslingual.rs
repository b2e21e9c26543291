//! Crosslingual training: generate two language corpora, merge their
//! tagged vocabularies (40 + 35 units -> 75 plus blank), finetune jointly,
//! then score each language separately.
//!
//! ```bash
//! cargo run --release --example crosslingual
//! ```

use sasr::config::ExperimentConfig;
use sasr::corpus::{Severity, Vocabulary};
use sasr::pipeline::*;

fn main() {
    let root = std::env::temp_dir().join("sasr_example_crosslingual");
    std::fs::remove_dir_all(&root).ok();
    std::fs::create_dir_all(&root).unwrap();

    let mut cfg = ExperimentConfig::desk_scale();
    cfg.encoder.hidden_size = 32;
    cfg.encoder.n_blocks = 3;
    cfg.encoder.ffn_width = 96;
    cfg.corpus.n_words = 50;
    cfg.corpus.utterances_per_speaker = 60;
    cfg.corpus.speakers_per_tier.clear();
    cfg.corpus.speakers_per_tier.insert(Severity::Low, 2);
    cfg.corpus.speakers_per_tier.insert(Severity::Mid, 2);
    cfg.train.peak_lr = 2e-3;
    cfg.train.warmup_steps = 20;
    cfg.train.total_steps = 2600;
    cfg.train.epochs = 10;
    cfg.train.stage1_steps = 0;

    // the two languages share nothing but the blank
    let mut en_cfg = cfg.corpus.clone();
    en_cfg.language = "EN".into();
    en_cfg.n_phones = 40;
    en_cfg.template_seed = 7;
    let mut de_cfg = cfg.corpus.clone();
    de_cfg.language = "DE".into();
    de_cfg.n_phones = 35;
    de_cfg.template_seed = 8;

    let en_dir = root.join("en");
    let de_dir = root.join("de");
    cmd_generate(&en_cfg, 1, &en_dir).unwrap();
    cmd_generate(&de_cfg, 2, &de_dir).unwrap();

    let en = Vocabulary::synthetic("EN", 40);
    let de = Vocabulary::synthetic("DE", 35);
    let merged = Vocabulary::merge(&en, &de).unwrap();
    println!(
        "vocabularies: EN {} + DE {} -> {} tagged units, head width {} with the blank",
        en.units(),
        de.units(),
        merged.units(),
        merged.total()
    );

    // a fresh model stands in for the pretrained checkpoint at this scale;
    // its head is replaced automatically when the vocabulary differs
    let seed_corpus = load_corpus_dir(&en_dir).unwrap();
    let model = sasr::encoder::Encoder::new(cfg.encoder.clone(), seed_corpus.vocab.total(), 3).unwrap();
    let ckpt = root.join("init.ckpt");
    sasr::checkpoint::save_checkpoint(&ckpt, &model, &seed_corpus.vocab).unwrap();

    println!("\n== joint finetuning on EN+DE ==");
    let out = root.join("joint");
    let log = cmd_finetune(&cfg, &ckpt, &[en_dir.clone(), de_dir.clone()], None, None, 0, &out).unwrap();
    let last = log.epochs.last().unwrap();
    println!("{} epochs, dev WER {:.2}%", last.epoch, 100.0 * last.dev_wer.overall);

    let joint = out.join(CHECKPOINT_FILE);
    println!("\n== evaluation per language ==");
    println!("EN:");
    print!("{}", cmd_score(&joint, &en_dir.join("manifest_test.tsv"), None, None, None).unwrap());
    println!("DE:");
    print!("{}", cmd_score(&joint, &de_dir.join("manifest_test.tsv"), None, None, None).unwrap());

    // optional per-language refinement from the joint model
    println!("\n== per-language finetuning from the joint checkpoint ==");
    let mut short = cfg.clone();
    short.train.epochs = 2;
    let de_ft = root.join("de_ft");
    cmd_finetune(&short, &joint, std::slice::from_ref(&de_dir), None, None, 1, &de_ft).unwrap();
    println!("DE after DE-only finetuning:");
    print!(
        "{}",
        cmd_score(&de_ft.join(CHECKPOINT_FILE), &de_dir.join("manifest_test.tsv"), None, None, None)
            .unwrap()
    );
}

//! Integration tests over the on-disk pipeline: generation idempotence,
//! extraction contracts, scoring, the sweep CSV, and the stage-1 loss
//! trend on a generated corpus.

use std::path::PathBuf;

use sasr::adapter::{AdapterSpec, AuxKind};
use sasr::archive::read_feature_archive;
use sasr::checkpoint::{load_checkpoint, save_checkpoint};
use sasr::config::ExperimentConfig;
use sasr::corpus::{generate_corpus, Severity, Split};
use sasr::encoder::Encoder;
use sasr::error::Error;
use sasr::pipeline::*;
use sasr::trainer::{train_ctc, AuxFeatures, TrainItem};

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sasr_pl_{name}_{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_scale();
    cfg.encoder.hidden_size = 16;
    cfg.encoder.n_blocks = 2;
    cfg.encoder.n_heads = 2;
    cfg.encoder.ffn_width = 32;
    cfg.corpus.n_phones = 10;
    cfg.corpus.n_words = 15;
    cfg.corpus.utterances_per_speaker = 30;
    cfg.corpus.speakers_per_tier.clear();
    cfg.corpus.speakers_per_tier.insert(Severity::Low, 1);
    cfg.corpus.speakers_per_tier.insert(Severity::High, 1);
    cfg.train.epochs = 2;
    cfg.train.warmup_steps = 4;
    cfg.train.total_steps = 100;
    cfg.train.batch_size = 4;
    cfg.train.stage1_steps = 0;
    cfg.fmllr.lda_dim = 4;
    cfg.fmllr.gmm_components = 4;
    cfg.fmllr.gmm_iters = 4;
    cfg.fmllr.fmllr_iters = 2;
    cfg.xvector.layer_width = 8;
    cfg.xvector.embed_dim = 8;
    cfg.xvector.epochs = 2;
    cfg
}

#[test]
fn generate_is_byte_idempotent() {
    let cfg = tiny_cfg();
    let a = tmp("gen_a");
    let b = tmp("gen_b");
    cmd_generate(&cfg.corpus, 5, &a).unwrap();
    cmd_generate(&cfg.corpus, 5, &b).unwrap();
    for file in [FEATURES_FILE, CLEAN_FILE, LABELS_FILE, "manifest.tsv", "manifest_train.tsv", VOCAB_FILE, SPEAKERS_FILE, STATS_FILE] {
        let x = std::fs::read(a.join(file)).unwrap();
        let y = std::fs::read(b.join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical generations");
    }
    std::fs::remove_dir_all(&a).ok();
    std::fs::remove_dir_all(&b).ok();
}

#[test]
fn stats_table_has_one_row_per_requested_tier() {
    let mut cfg = tiny_cfg();
    for s in Severity::ALL {
        cfg.corpus.speakers_per_tier.insert(s, 1);
    }
    let dir = tmp("gen_tiers");
    let stats = cmd_generate(&cfg.corpus, 1, &dir).unwrap();
    let rows: Vec<&str> = stats.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, sev) in rows.iter().zip(Severity::ALL) {
        assert!(row.starts_with(sev.tag()), "{row}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn generate_rejects_unwritable_out_dir() {
    let dir = tmp("gen_unwritable");
    let blocker = dir.join("blocker");
    std::fs::write(&blocker, b"file").unwrap();
    let out = blocker.join("nested");
    match cmd_generate(&tiny_cfg().corpus, 1, &out) {
        Err(Error::Io(_)) => {}
        other => panic!("expected io error, got {other:?}"),
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fmllr_archive_matches_encoder_frames_and_width() {
    let cfg = tiny_cfg();
    let dir = tmp("extract");
    let corpus_dir = dir.join("corpus");
    cmd_generate(&cfg.corpus, 9, &corpus_dir).unwrap();

    let corpus = load_corpus_dir(&corpus_dir).unwrap();
    let model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), 2).unwrap();
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &model, &corpus.vocab).unwrap();

    let feat_dir = dir.join("features");
    cmd_extract_fmllr(&cfg, &ckpt, &corpus_dir, 0, &feat_dir).unwrap();
    let archive = read_feature_archive(&feat_dir.join(FMLLR_FILE)).unwrap();

    for entry in corpus.entries(Split::Train) {
        let f = &archive[&entry.utt_id];
        let item = corpus.item(entry, &corpus.vocab).unwrap();
        let expected_frames = model.out_frames(item.waveform.rows());
        assert_eq!(f.rows(), expected_frames, "{}", entry.utt_id);
        assert_eq!(f.cols(), cfg.fmllr.lda_dim);
    }

    // re-extraction with the same inputs is value-exact
    let again = dir.join("features2");
    cmd_extract_fmllr(&cfg, &ckpt, &corpus_dir, 0, &again).unwrap();
    let x = std::fs::read(feat_dir.join(FMLLR_FILE)).unwrap();
    let y = std::fs::read(again.join(FMLLR_FILE)).unwrap();
    assert_eq!(x, y);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn score_compare_of_identical_checkpoints_is_all_zero() {
    let cfg = tiny_cfg();
    let dir = tmp("score");
    let corpus_dir = dir.join("corpus");
    cmd_generate(&cfg.corpus, 3, &corpus_dir).unwrap();
    let corpus = load_corpus_dir(&corpus_dir).unwrap();
    let model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), 4).unwrap();
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &model, &corpus.vocab).unwrap();

    let report =
        cmd_score(&ckpt, &corpus_dir.join("manifest_test.tsv"), None, None, Some(&ckpt)).unwrap();
    let delta_line = report.lines().last().unwrap();
    assert!(delta_line.starts_with("delta"));
    for cell in delta_line.split_whitespace().skip(1) {
        assert!(cell == "0.00" || cell == "-0.00" || cell == "-", "unexpected delta {cell}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_single_block_yields_single_row() {
    let cfg = tiny_cfg();
    let dir = tmp("sweep");
    let corpus_dir = dir.join("corpus");
    cmd_generate(&cfg.corpus, 11, &corpus_dir).unwrap();
    let corpus = load_corpus_dir(&corpus_dir).unwrap();
    let model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), 4).unwrap();
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &model, &corpus.vocab).unwrap();
    let feat_dir = dir.join("features");
    cmd_extract_xvector(&cfg, &corpus_dir, 0, &feat_dir).unwrap();

    let csv = cmd_sweep_blocks(
        &cfg,
        &ckpt,
        &corpus_dir,
        &feat_dir.join(XVECTORS_FILE),
        &[2],
        0,
        &dir.join("out"),
    )
    .unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "block,avg_wer");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2,"));

    // out-of-range block indices are rejected
    assert!(cmd_sweep_blocks(
        &cfg,
        &ckpt,
        &corpus_dir,
        &feat_dir.join(XVECTORS_FILE),
        &[9],
        0,
        &dir.join("out2"),
    )
    .is_err());
    std::fs::remove_dir_all(&dir).ok();
}

/// Stage-1 training loss trends downward: the mean over the last window of
/// steps sits below the mean over the first window.
#[test]
fn stage1_loss_trend_decreases() {
    let mut cfg = tiny_cfg();
    cfg.corpus.utterances_per_speaker = 60;
    cfg.train.epochs = 10;
    cfg.train.total_steps = 400;
    cfg.train.warmup_steps = 8;
    cfg.train.stage1_steps = 1_000_000; // whole run in stage 1
    cfg.train.peak_lr = 3e-3;

    let corpus = generate_corpus(&cfg.corpus, 21).unwrap();
    let mut model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), 6).unwrap();
    let mut spec = AdapterSpec::new(2, 8, AuxKind::Xvector, 4);
    spec.aux_proj_dim = 8;
    model.mount(spec, 31).unwrap();

    // per-speaker constant identity vectors stand in for real x-vectors
    let mut aux = AuxFeatures::empty();
    let items: Vec<TrainItem> = corpus
        .records_in(Split::Train)
        .map(|r| {
            let idx = corpus.profiles.iter().position(|p| p.speaker_id == r.speaker_id).unwrap();
            let mut v = vec![0.0; 4];
            v[idx % 4] = 1.0;
            aux.xvectors.insert(r.utt_id.clone(), v);
            TrainItem::from_record(r)
        })
        .collect();

    let log = train_ctc(&mut model, &items, &[], &aux, &cfg.train, true).unwrap();
    assert!(log.steps.iter().all(|s| s.stage == 1));
    let window = 50.min(log.steps.len() / 2);
    let head: f64 =
        log.steps[..window].iter().map(|s| s.loss).sum::<f64>() / window as f64;
    let tail: f64 = log.steps[log.steps.len() - window..]
        .iter()
        .map(|s| s.loss)
        .sum::<f64>()
        / window as f64;
    assert!(
        tail < head,
        "stage-1 loss did not trend down: first-window mean {head:.4}, last-window mean {tail:.4}"
    );
}

#[test]
fn checkpoint_decode_roundtrip_through_disk() {
    let cfg = tiny_cfg();
    let dir = tmp("ckpt_decode");
    let corpus_dir = dir.join("corpus");
    cmd_generate(&cfg.corpus, 13, &corpus_dir).unwrap();
    let corpus = load_corpus_dir(&corpus_dir).unwrap();
    let model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), 8).unwrap();
    let ckpt = dir.join("model.ckpt");
    save_checkpoint(&ckpt, &model, &corpus.vocab).unwrap();
    let (loaded, vocab) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(vocab, corpus.vocab);

    for entry in corpus.entries(Split::Test).iter().take(5) {
        let item = corpus.item(entry, &corpus.vocab).unwrap();
        let a = sasr::trainer::decode(&model, &item, &AuxFeatures::empty()).unwrap();
        let b = sasr::trainer::decode(&loaded, &item, &AuxFeatures::empty()).unwrap();
        assert_eq!(a, b, "{}", entry.utt_id);
    }
    std::fs::remove_dir_all(&dir).ok();
}

/// Same-speaker embeddings are closer than cross-speaker embeddings on a
/// generated corpus.
#[test]
fn xvectors_cluster_by_speaker_on_corpus() {
    let mut cfg = tiny_cfg();
    cfg.corpus.utterances_per_speaker = 40;
    cfg.corpus.speakers_per_tier.clear();
    cfg.corpus.speakers_per_tier.insert(Severity::Mid, 2);
    cfg.corpus.speakers_per_tier.insert(Severity::High, 2);
    cfg.xvector.epochs = 5;

    let dir = tmp("xvec");
    let corpus_dir = dir.join("corpus");
    cmd_generate(&cfg.corpus, 17, &corpus_dir).unwrap();
    let feat_dir = dir.join("features");
    cmd_extract_xvector(&cfg, &corpus_dir, 0, &feat_dir).unwrap();

    let embeddings =
        sasr::archive::load_external_embeddings(&feat_dir.join(XVECTORS_FILE)).unwrap();
    let corpus = load_corpus_dir(&corpus_dir).unwrap();
    let speaker_of: std::collections::BTreeMap<&str, &str> = corpus
        .test
        .iter()
        .map(|e| (e.utt_id.as_str(), e.speaker_id.as_str()))
        .collect();

    let mut same = Vec::new();
    let mut cross = Vec::new();
    let test_ids: Vec<&str> = speaker_of.keys().copied().collect();
    for (i, a) in test_ids.iter().enumerate() {
        for b in test_ids.iter().skip(i + 1) {
            let c = sasr::xvector::cosine(&embeddings[*a], &embeddings[*b]);
            if speaker_of[a] == speaker_of[b] {
                same.push(c);
            } else {
                cross.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&same) > mean(&cross),
        "same-speaker cosine {:.3} not above cross-speaker {:.3}",
        mean(&same),
        mean(&cross)
    );
    std::fs::remove_dir_all(&dir).ok();
}

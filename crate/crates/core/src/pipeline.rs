//! End-to-end workflows behind the command-line interface: corpus
//! generation, pretraining, feature extraction, finetuning, scoring and the
//! adapter-placement sweep. Everything here is a plain function over the
//! library types so the examples and tests drive the same code as the CLI.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::adapter::AdapterSpec;
use crate::adapter::AuxKind;
use crate::archive;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{AuxSelection, ExperimentConfig};
use crate::corpus::{
    generate_corpus, load_manifest, save_manifest, Corpus, CorpusParams, ManifestEntry, Severity,
    Split, Token, Vocabulary,
};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::fmllr::{fmllr_apply, fmllr_estimate, SpeakerTransform};
use crate::gmm::gmm_fit;
use crate::lda::{lda_fit, lda_project};
use crate::tensor::Tensor;
use crate::trainer::{evaluate, train_ctc, AuxFeatures, TrainItem, TrainLog};
use crate::wer::{format_severity_table, score_with_breakdown, WerReport};
use crate::xvector::XvectorExtractor;

pub const FEATURES_FILE: &str = "features.ark";
pub const CLEAN_FILE: &str = "clean.ark";
pub const LABELS_FILE: &str = "labels.ark";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const SPEAKERS_FILE: &str = "speakers.tsv";
pub const STATS_FILE: &str = "stats.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const STEPS_FILE: &str = "steps.tsv";
pub const FMLLR_FILE: &str = "fmllr.ark";
pub const TRANSFORMS_FILE: &str = "transforms.txt";
pub const XVECTORS_FILE: &str = "xvectors.txt";

fn manifest_name(split: Option<Split>) -> &'static str {
    match split {
        None => "manifest.tsv",
        Some(Split::Train) => "manifest_train.tsv",
        Some(Split::Dev) => "manifest_dev.tsv",
        Some(Split::Test) => "manifest_test.tsv",
    }
}

fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for t in vocab.tokens() {
        out.push_str(&format!("{}\t{}\n", t.name, t.lang.as_deref().unwrap_or("-")));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read vocabulary {}: {e}", path.display())))?;
    let mut tokens = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, lang) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("bad vocabulary line: {line:?}")))?;
        let lang = if lang == "-" { None } else { Some(lang.to_string()) };
        tokens.push(Token { name: name.to_string(), lang });
    }
    Vocabulary::new(tokens)
}

/// Corpus statistics in the severity/duration/speakers layout, counting a
/// feature frame as 10 ms.
fn stats_table(corpus: &Corpus) -> String {
    let mut out = format!(
        "{:<10}{:>16}{:>10}{:>12}{:>10}\n",
        "Severity", "Duration (MM:SS)", "Speakers", "Utterances", "Frames"
    );
    for sev in Severity::ALL {
        let speakers = corpus.profiles.iter().filter(|p| p.severity == sev).count();
        if speakers == 0 {
            continue;
        }
        let records: Vec<_> = corpus.records.iter().filter(|r| r.severity == sev).collect();
        let frames: usize = records.iter().map(|r| r.features.rows()).sum();
        let secs = frames / 100;
        out.push_str(&format!(
            "{:<10}{:>13}:{:02}{:>10}{:>12}{:>10}\n",
            sev.tag(),
            secs / 60,
            secs % 60,
            speakers,
            records.len(),
            frames
        ));
    }
    out
}

/// Generate a corpus and write every artifact under `out`: archives,
/// manifests per split, vocabulary, lexicon, speaker registry, statistics.
pub fn cmd_generate(params: &CorpusParams, seed: u64, out: &Path) -> Result<String> {
    let corpus = generate_corpus(params, seed)?;
    std::fs::create_dir_all(out)?;

    let features: Vec<(String, Tensor)> =
        corpus.records.iter().map(|r| (r.utt_id.clone(), r.features.clone())).collect();
    archive::write_feature_archive(&out.join(FEATURES_FILE), &features)?;
    let clean: Vec<(String, Tensor)> = corpus
        .records
        .iter()
        .map(|r| (r.utt_id.clone(), r.clean_features.clone().unwrap()))
        .collect();
    archive::write_feature_archive(&out.join(CLEAN_FILE), &clean)?;
    let labels: Vec<(String, Tensor)> = corpus
        .records
        .iter()
        .map(|r| {
            let vals: Vec<f64> = r.frame_phones.iter().map(|&p| p as f64).collect();
            let n = vals.len();
            (r.utt_id.clone(), Tensor::new(vec![n, 1], vals).unwrap())
        })
        .collect();
    archive::write_feature_archive(&out.join(LABELS_FILE), &labels)?;

    write_vocab(&out.join(VOCAB_FILE), &corpus.vocab)?;

    let mut lexicon = String::new();
    for (i, word) in corpus.lexicon.iter().enumerate() {
        let names: Vec<&str> =
            word.iter().map(|&p| corpus.vocab.token(p).unwrap().name.as_str()).collect();
        lexicon.push_str(&format!("{i}\t{}\n", names.join(" ")));
    }
    std::fs::write(out.join(LEXICON_FILE), lexicon)?;

    let mut speakers = String::new();
    for p in &corpus.profiles {
        let a: Vec<String> = p.transform.iter().map(|v| v.to_string()).collect();
        let b: Vec<String> = p.offset.iter().map(|v| v.to_string()).collect();
        speakers.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            p.speaker_id,
            p.severity,
            p.jitter,
            p.noise,
            p.offset.len(),
            a.join(" "),
            b.join(" ")
        ));
    }
    std::fs::write(out.join(SPEAKERS_FILE), speakers)?;

    let entry = |r: &crate::corpus::UtteranceRecord| ManifestEntry {
        utt_id: r.utt_id.clone(),
        speaker_id: r.speaker_id.clone(),
        severity: r.severity,
        language: r.language.clone(),
        feature_path: PathBuf::from(FEATURES_FILE),
        transcript: r
            .transcript
            .iter()
            .map(|&t| corpus.vocab.token(t).unwrap().name.clone())
            .collect(),
    };
    let all: Vec<ManifestEntry> = corpus.records.iter().map(entry).collect();
    save_manifest(&out.join(manifest_name(None)), &all)?;
    for split in [Split::Train, Split::Dev, Split::Test] {
        let subset: Vec<ManifestEntry> = corpus.records_in(split).map(entry).collect();
        save_manifest(&out.join(manifest_name(Some(split))), &subset)?;
    }

    let stats = stats_table(&corpus);
    std::fs::write(out.join(STATS_FILE), &stats)?;
    Ok(stats)
}

/// A corpus directory reloaded from disk.
pub struct LoadedCorpus {
    pub vocab: Vocabulary,
    pub train: Vec<ManifestEntry>,
    pub dev: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub features: BTreeMap<String, Tensor>,
    pub frame_labels: BTreeMap<String, Vec<usize>>,
}

impl LoadedCorpus {
    pub fn entries(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// Resolve one manifest entry into a training item under `vocab`.
    pub fn item(&self, entry: &ManifestEntry, vocab: &Vocabulary) -> Result<TrainItem> {
        let features = self
            .features
            .get(&entry.utt_id)
            .ok_or_else(|| Error::Data(format!("no features for utterance {}", entry.utt_id)))?;
        let transcript = resolve_transcript(entry, vocab)?;
        let len = features.rows() * features.cols();
        Ok(TrainItem {
            utt_id: entry.utt_id.clone(),
            speaker_id: entry.speaker_id.clone(),
            severity: entry.severity,
            waveform: Tensor::new(vec![len, 1], features.data().to_vec())?,
            transcript,
        })
    }

    pub fn items(&self, split: Split, vocab: &Vocabulary) -> Result<Vec<TrainItem>> {
        self.entries(split).iter().map(|e| self.item(e, vocab)).collect()
    }
}

fn resolve_transcript(entry: &ManifestEntry, vocab: &Vocabulary) -> Result<Vec<usize>> {
    entry
        .transcript
        .iter()
        .map(|name| {
            vocab
                .id_of(name, Some(entry.language.as_str()))
                .or_else(|| vocab.id_of(name, None))
                .ok_or_else(|| {
                    Error::Data(format!(
                        "token {name} ({}) of utterance {} not in vocabulary",
                        entry.language, entry.utt_id
                    ))
                })
        })
        .collect()
}

pub fn load_corpus_dir(dir: &Path) -> Result<LoadedCorpus> {
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let features = archive::read_feature_archive(&dir.join(FEATURES_FILE))?;
    let labels_path = dir.join(LABELS_FILE);
    let frame_labels = if labels_path.exists() {
        archive::read_feature_archive(&labels_path)?
            .into_iter()
            .map(|(id, t)| (id, t.data().iter().map(|&v| v as usize).collect()))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(LoadedCorpus {
        vocab,
        train: load_manifest(&dir.join(manifest_name(Some(Split::Train))))?,
        dev: load_manifest(&dir.join(manifest_name(Some(Split::Dev))))?,
        test: load_manifest(&dir.join(manifest_name(Some(Split::Test))))?,
        features,
        frame_labels,
    })
}

fn write_training_outputs(out: &Path, model: &Encoder, vocab: &Vocabulary, log: &TrainLog) -> Result<()> {
    std::fs::create_dir_all(out)?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), model, vocab)?;
    std::fs::write(out.join(METRICS_FILE), log.epochs_tsv())?;
    std::fs::write(out.join(STEPS_FILE), log.steps_tsv())?;
    Ok(())
}

/// Train a fresh encoder on a (typically clean) corpus with plain CTC.
pub fn cmd_pretrain(cfg: &ExperimentConfig, corpus_dir: &Path, seed: u64, out: &Path) -> Result<TrainLog> {
    cfg.validate()?;
    let corpus = load_corpus_dir(corpus_dir)?;
    let mut model = Encoder::new(cfg.encoder.clone(), corpus.vocab.total(), seed)?;
    let train = corpus.items(Split::Train, &corpus.vocab)?;
    let dev = corpus.items(Split::Dev, &corpus.vocab)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let log = train_ctc(&mut model, &train, &dev, &AuxFeatures::empty(), &train_cfg, false)?;
    write_training_outputs(out, &model, &corpus.vocab, &log)?;
    Ok(log)
}

/// The fMLLR extraction pipeline: final-block features → LDA (on synthetic
/// frame labels) → flat GMM → per-speaker transforms → fMLLR archives for
/// every utterance.
pub fn cmd_extract_fmllr(
    cfg: &ExperimentConfig,
    ckpt: &Path,
    corpus_dir: &Path,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (model, _vocab) = load_checkpoint(ckpt)?;
    let corpus = load_corpus_dir(corpus_dir)?;
    std::fs::create_dir_all(out)?;

    // 1. encoder features for every utterance, in manifest order
    let mut hidden: BTreeMap<String, Tensor> = BTreeMap::new();
    let all: Vec<&ManifestEntry> = corpus
        .train
        .iter()
        .chain(&corpus.dev)
        .chain(&corpus.test)
        .collect();
    for entry in &all {
        let item = corpus.item(entry, &corpus.vocab)?;
        hidden.insert(entry.utt_id.clone(), model.extract_features(&item.waveform)?);
    }

    // 2. LDA on train frames with generator phone labels
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for entry in &corpus.train {
        let h = &hidden[&entry.utt_id];
        let l = corpus.frame_labels.get(&entry.utt_id).ok_or_else(|| {
            Error::Data(format!(
                "utterance {} has no frame labels; fMLLR extraction needs a generated corpus",
                entry.utt_id
            ))
        })?;
        if l.len() != h.rows() {
            return Err(Error::Alignment { left: l.len(), right: h.rows() });
        }
        for t in 0..h.rows() {
            rows.push(h.row(t).to_vec());
            labels.push(l[t]);
        }
    }
    let pooled = Tensor::from_rows(&rows)?;
    let projection = lda_fit(&pooled, &labels, cfg.fmllr.lda_dim)?;

    // 3. flat GMM over projected train frames
    let projected_train = lda_project(&pooled, &projection, cfg.fmllr.lda_dim);
    let gmm = gmm_fit(&projected_train, cfg.fmllr.gmm_components, cfg.fmllr.gmm_iters, seed)?;

    // 4. per-speaker transforms from their train frames
    let mut speaker_rows: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for entry in &corpus.train {
        let proj = lda_project(&hidden[&entry.utt_id], &projection, cfg.fmllr.lda_dim);
        let rows = speaker_rows.entry(entry.speaker_id.clone()).or_default();
        for t in 0..proj.rows() {
            rows.push(proj.row(t).to_vec());
        }
    }
    let mut transforms: BTreeMap<String, SpeakerTransform> = BTreeMap::new();
    for (speaker, rows) in &speaker_rows {
        let frames = Tensor::from_rows(rows)?;
        let est = fmllr_estimate(&frames, &gmm, cfg.fmllr.fmllr_iters, speaker)?;
        transforms.insert(speaker.clone(), est.transform);
    }

    // 5. fMLLR features for every utterance under its speaker's transform
    let mut archives: Vec<(String, Tensor)> = Vec::new();
    for entry in &all {
        let w = transforms.get(&entry.speaker_id).ok_or_else(|| {
            Error::Estimation(format!(
                "speaker {} has no training frames to estimate a transform from",
                entry.speaker_id
            ))
        })?;
        let proj = lda_project(&hidden[&entry.utt_id], &projection, cfg.fmllr.lda_dim);
        archives.push((entry.utt_id.clone(), fmllr_apply(&proj, w)?));
    }
    archive::write_feature_archive(&out.join(FMLLR_FILE), &archives)?;
    let transform_list: Vec<SpeakerTransform> = transforms.into_values().collect();
    archive::write_transforms(&out.join(TRANSFORMS_FILE), &transform_list)?;
    Ok(())
}

/// Train the toy x-vector extractor on the train split and emit one
/// embedding per utterance.
pub fn cmd_extract_xvector(
    cfg: &ExperimentConfig,
    corpus_dir: &Path,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let corpus = load_corpus_dir(corpus_dir)?;
    std::fs::create_dir_all(out)?;

    let mut speakers: Vec<String> =
        corpus.train.iter().map(|e| e.speaker_id.clone()).collect();
    speakers.sort();
    speakers.dedup();
    let index: BTreeMap<&str, usize> =
        speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut pairs: Vec<(Tensor, usize)> = Vec::new();
    for entry in &corpus.train {
        let features = corpus
            .features
            .get(&entry.utt_id)
            .ok_or_else(|| Error::Data(format!("no features for utterance {}", entry.utt_id)))?;
        pairs.push((features.clone(), index[entry.speaker_id.as_str()]));
    }
    let mut xv_cfg = cfg.xvector.clone();
    xv_cfg.seed = seed;
    let extractor = XvectorExtractor::train(&pairs, speakers.len(), &xv_cfg)?;

    let mut embeddings: Vec<(String, Vec<f64>)> = Vec::new();
    for entry in corpus.train.iter().chain(&corpus.dev).chain(&corpus.test) {
        let features = corpus
            .features
            .get(&entry.utt_id)
            .ok_or_else(|| Error::Data(format!("no features for utterance {}", entry.utt_id)))?;
        embeddings.push((entry.utt_id.clone(), extractor.extract(features)?));
    }
    archive::write_embeddings(&out.join(XVECTORS_FILE), &embeddings)?;
    Ok(())
}

/// Mount adapters on `model` according to the selection, sizing auxiliary
/// widths from the supplied feature tables.
pub fn mount_adapters(
    model: &mut Encoder,
    cfg: &ExperimentConfig,
    aux: &AuxFeatures,
    seed: u64,
) -> Result<()> {
    let h = model.config.hidden_size;
    let d = cfg.adapter.bottleneck_for(h);
    if cfg.aux.wants_xvector() {
        let width = aux
            .xvectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Data("x-vector table is empty".into()))?;
        let mut spec = AdapterSpec::new(cfg.adapter.xvector_block, d, AuxKind::Xvector, width);
        spec.aux_proj_dim = cfg.adapter.aux_proj_dim;
        spec.relu_after_up = cfg.adapter.relu_after_up;
        model.mount(spec, seed.wrapping_add(101))?;
    }
    if cfg.aux.wants_fmllr() {
        let width = aux
            .fmllr
            .values()
            .next()
            .map(Tensor::cols)
            .ok_or_else(|| Error::Data("fMLLR table is empty".into()))?;
        let block = cfg.adapter.fmllr_block_for(model.config.n_blocks);
        let mut spec = AdapterSpec::new(block, d, AuxKind::Fmllr, width);
        spec.aux_proj_dim = cfg.adapter.aux_proj_dim;
        spec.relu_after_up = cfg.adapter.relu_after_up;
        model.mount(spec, seed.wrapping_add(202))?;
    }
    Ok(())
}

pub fn load_aux_features(
    selection: AuxSelection,
    fmllr_path: Option<&Path>,
    xvector_path: Option<&Path>,
) -> Result<AuxFeatures> {
    let mut aux = AuxFeatures::empty();
    if selection.wants_fmllr() {
        let path = fmllr_path.ok_or_else(|| {
            Error::Data("aux selection includes fmllr but no fMLLR archive was given".into())
        })?;
        aux.fmllr = archive::read_feature_archive(path)?;
    }
    if selection.wants_xvector() {
        let path = xvector_path.ok_or_else(|| {
            Error::Data("aux selection includes xvector but no embedding file was given".into())
        })?;
        aux.xvectors = archive::load_external_embeddings(path)?;
    }
    Ok(aux)
}

/// Finetune a pretrained checkpoint on one corpus (or two, pooled with a
/// merged vocabulary) with the selected auxiliary features. Adapter
/// configurations run the two-stage schedule.
#[allow(clippy::too_many_arguments)]
pub fn cmd_finetune(
    cfg: &ExperimentConfig,
    ckpt: &Path,
    corpus_dirs: &[PathBuf],
    fmllr_path: Option<&Path>,
    xvector_path: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<TrainLog> {
    cfg.validate()?;
    let (mut model, ckpt_vocab) = load_checkpoint(ckpt)?;
    if corpus_dirs.is_empty() {
        return Err(Error::Data("finetuning needs at least one corpus".into()));
    }
    let corpora: Vec<LoadedCorpus> =
        corpus_dirs.iter().map(|d| load_corpus_dir(d)).collect::<Result<_>>()?;

    let corpus_vocab = match corpora.len() {
        1 => corpora[0].vocab.clone(),
        2 => Vocabulary::merge(&corpora[0].vocab, &corpora[1].vocab)?,
        n => return Err(Error::Config(format!("at most two corpora supported, got {n}"))),
    };
    // keep the checkpoint's output layer whenever it already covers every
    // corpus token (e.g. finetuning a joint crosslingual model on one of
    // its languages); otherwise install a fresh head for the new inventory
    let covered = corpus_vocab
        .tokens()
        .iter()
        .all(|t| ckpt_vocab.id_of(&t.name, t.lang.as_deref()).is_some());
    let vocab = if covered {
        ckpt_vocab
    } else {
        model.replace_head(corpus_vocab.total(), seed.wrapping_add(7))?;
        corpus_vocab
    };

    let mut train = Vec::new();
    let mut dev = Vec::new();
    for corpus in &corpora {
        train.extend(corpus.items(Split::Train, &vocab)?);
        dev.extend(corpus.items(Split::Dev, &vocab)?);
    }

    let aux = load_aux_features(cfg.aux, fmllr_path, xvector_path)?;
    let two_stage = cfg.aux != AuxSelection::None;
    if two_stage {
        mount_adapters(&mut model, cfg, &aux, seed)?;
    }
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    if !two_stage {
        train_cfg.stage1_steps = 0;
    }
    let log = train_ctc(&mut model, &train, &dev, &aux, &train_cfg, two_stage)?;
    write_training_outputs(out, &model, &vocab, &log)?;
    Ok(log)
}

/// Score a checkpoint on a test manifest; with `compare`, also score a
/// second checkpoint and print per-tier deltas.
pub fn cmd_score(
    ckpt: &Path,
    manifest_path: &Path,
    fmllr_path: Option<&Path>,
    xvector_path: Option<&Path>,
    compare: Option<&Path>,
) -> Result<String> {
    let entries = load_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(Error::UndefinedRate);
    }
    let report = |ckpt: &Path| -> Result<WerReport> {
        let (model, vocab) = load_checkpoint(ckpt)?;
        let selection = selection_of(&model);
        let aux = load_aux_features(selection, fmllr_path, xvector_path)?;
        score_entries(&model, &vocab, &entries, &aux)
    };
    let base = report(ckpt)?;
    let mut out = format_severity_table("model", &base);
    if let Some(other) = compare {
        let second = report(other)?;
        out.push_str(&format_severity_table("compare", &second));
        let mut delta = format!("{:<16}", "delta");
        for sev in Severity::ALL {
            match (base.per_severity.get(&sev), second.per_severity.get(&sev)) {
                (Some(a), Some(b)) => delta.push_str(&format!("{:>8.2}", 100.0 * (b - a))),
                _ => delta.push_str(&format!("{:>8}", "-")),
            }
        }
        delta.push_str(&format!("{:>9.2}", 100.0 * (second.overall - base.overall)));
        delta.push('\n');
        out.push_str(&delta);
    }
    Ok(out)
}

fn selection_of(model: &Encoder) -> AuxSelection {
    let has_f = model.adapters().iter().any(|a| a.aux_kind == AuxKind::Fmllr);
    let has_x = model.adapters().iter().any(|a| a.aux_kind == AuxKind::Xvector);
    match (has_f, has_x) {
        (true, true) => AuxSelection::Both,
        (true, false) => AuxSelection::Fmllr,
        (false, true) => AuxSelection::Xvector,
        (false, false) => AuxSelection::None,
    }
}

fn score_entries(
    model: &Encoder,
    vocab: &Vocabulary,
    entries: &[ManifestEntry],
    aux: &AuxFeatures,
) -> Result<WerReport> {
    // entries reference their feature archives; load each archive once
    let mut archives: BTreeMap<PathBuf, BTreeMap<String, Tensor>> = BTreeMap::new();
    let mut scored = Vec::with_capacity(entries.len());
    for entry in entries {
        if !archives.contains_key(&entry.feature_path) {
            archives.insert(
                entry.feature_path.clone(),
                archive::read_feature_archive(&entry.feature_path)?,
            );
        }
        let features = archives[&entry.feature_path]
            .get(&entry.utt_id)
            .ok_or_else(|| {
                Error::Data(format!(
                    "utterance {} missing from {}",
                    entry.utt_id,
                    entry.feature_path.display()
                ))
            })?
            .clone();
        let len = features.rows() * features.cols();
        let item = TrainItem {
            utt_id: entry.utt_id.clone(),
            speaker_id: entry.speaker_id.clone(),
            severity: entry.severity,
            waveform: Tensor::new(vec![len, 1], features.data().to_vec())?,
            transcript: resolve_transcript(entry, vocab)?,
        };
        let hyp = crate::trainer::decode(model, &item, aux)?;
        scored.push((entry.severity, item.transcript, hyp));
    }
    score_with_breakdown(&scored)
}

/// Evaluate a finetuned model on a corpus test split (library-level helper
/// shared by the sweep and the tests).
pub fn test_wer(model: &Encoder, vocab: &Vocabulary, corpus: &LoadedCorpus, aux: &AuxFeatures) -> Result<WerReport> {
    let items = corpus.items(Split::Test, vocab)?;
    let (_, report) = evaluate_items(model, &items, aux)?;
    Ok(report)
}

fn evaluate_items(model: &Encoder, items: &[TrainItem], aux: &AuxFeatures) -> Result<(f64, WerReport)> {
    evaluate(model, items, aux)
}

/// Train one x-vector-adapter model per block index at the configured
/// budget and emit `block,avg_wer` CSV rows.
pub fn cmd_sweep_blocks(
    cfg: &ExperimentConfig,
    ckpt: &Path,
    corpus_dir: &Path,
    xvector_path: &Path,
    blocks: &[usize],
    seed: u64,
    out: &Path,
) -> Result<String> {
    if blocks.is_empty() {
        return Err(Error::Config("block sweep needs at least one block index".into()));
    }
    for &b in blocks {
        if b < 1 || b > cfg.encoder.n_blocks {
            return Err(Error::Config(format!(
                "sweep block {b} outside 1..={}",
                cfg.encoder.n_blocks
            )));
        }
    }
    std::fs::create_dir_all(out)?;
    let corpus = load_corpus_dir(corpus_dir)?;
    let mut csv = String::from("block,avg_wer\n");
    for &block in blocks {
        let (mut model, vocab) = load_checkpoint(ckpt)?;
        let mut sweep_cfg = cfg.clone();
        sweep_cfg.aux = AuxSelection::Xvector;
        sweep_cfg.adapter.xvector_block = block;
        let aux = load_aux_features(AuxSelection::Xvector, None, Some(xvector_path))?;
        mount_adapters(&mut model, &sweep_cfg, &aux, seed)?;
        let train = corpus.items(Split::Train, &vocab)?;
        let dev = corpus.items(Split::Dev, &vocab)?;
        let mut train_cfg = sweep_cfg.train.clone();
        train_cfg.seed = seed;
        train_ctc(&mut model, &train, &dev, &aux, &train_cfg, true)?;
        let report = test_wer(&model, &vocab, &corpus, &aux)?;
        csv.push_str(&format!("{block},{:.6}\n", report.overall));
    }
    std::fs::write(out.join("sweep.csv"), &csv)?;
    Ok(csv)
}

//! Train the toy x-vector extractor on a synthetic corpus and compare
//! same-speaker vs cross-speaker embedding similarity.
//!
//! ```bash
//! cargo run --release --example xvector_similarity
//! ```

use sasr::corpus::{generate_corpus, CorpusParams, Severity, Split};
use sasr::xvector::{cosine, XvectorConfig, XvectorExtractor};

fn main() {
    let mut params = CorpusParams::desk_scale();
    params.n_phones = 16;
    params.n_words = 24;
    params.utterances_per_speaker = 40;
    for s in Severity::ALL {
        params.speakers_per_tier.insert(s, 1);
    }
    let corpus = generate_corpus(&params, 5).unwrap();

    let speakers: Vec<String> = corpus.profiles.iter().map(|p| p.speaker_id.clone()).collect();
    let index = |id: &str| speakers.iter().position(|s| s == id).unwrap();
    let train: Vec<_> = corpus
        .records_in(Split::Train)
        .map(|r| (r.features.clone(), index(&r.speaker_id)))
        .collect();

    let mut cfg = XvectorConfig::desk_scale();
    cfg.epochs = 6;
    let extractor = XvectorExtractor::train(&train, speakers.len(), &cfg).unwrap();
    println!("trained extractor on {} utterances from {} speakers", train.len(), speakers.len());

    // embed held-out utterances
    let mut by_speaker: std::collections::BTreeMap<&str, Vec<Vec<f64>>> = Default::default();
    for r in corpus.records_in(Split::Test) {
        by_speaker
            .entry(r.speaker_id.as_str())
            .or_default()
            .push(extractor.extract(&r.features).unwrap());
    }

    let mut same = Vec::new();
    let mut cross = Vec::new();
    let ids: Vec<&&str> = by_speaker.keys().collect();
    for (i, a) in ids.iter().enumerate() {
        let embs_a = &by_speaker[**a];
        for x in 0..embs_a.len() {
            for y in x + 1..embs_a.len() {
                same.push(cosine(&embs_a[x], &embs_a[y]));
            }
        }
        for b in ids.iter().skip(i + 1) {
            for ea in embs_a {
                for eb in &by_speaker[**b] {
                    cross.push(cosine(ea, eb));
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean same-speaker cosine:  {:.4} over {} pairs", mean(&same), same.len());
    println!("mean cross-speaker cosine: {:.4} over {} pairs", mean(&cross), cross.len());

    // pooling ignores frame order
    let r = corpus.records_in(Split::Test).next().unwrap();
    let forward = extractor.extract(&r.features).unwrap();
    let rows: Vec<Vec<f64>> =
        (0..r.features.rows()).rev().map(|t| r.features.row(t).to_vec()).collect();
    let reversed = extractor.extract(&sasr::tensor::Tensor::from_rows(&rows).unwrap()).unwrap();
    println!("order invariance: cosine(fwd, reversed frames) = {:.9}", cosine(&forward, &reversed));
}

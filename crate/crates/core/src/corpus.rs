//! Synthetic isolated-word corpus with severity-tiered speaker distortions.
//!
//! Each utterance is one word: a short phone sequence rendered from
//! per-phone Gaussian feature templates with duration jitter. A speaker is
//! an invertible affine distortion of feature space plus additive noise;
//! distortion magnitude, jitter and noise all grow with the severity tier,
//! so per-speaker affine normalization (the fMLLR path) has real signal to
//! recover. The undistorted twin of every utterance is kept for oracle
//! tests.
//!
//! Features double as the waveform: a frame of width d becomes d
//! consecutive samples, so a subsample-by-d encoder sees exactly one output
//! frame per feature frame and frame-level phone labels stay aligned.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    VeryLow,
    Low,
    Mid,
    High,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::VeryLow, Severity::Low, Severity::Mid, Severity::High];

    pub fn tag(&self) -> &'static str {
        match self {
            Severity::VeryLow => "VL",
            Severity::Low => "L",
            Severity::Mid => "M",
            Severity::High => "H",
        }
    }

    pub fn parse(s: &str) -> Result<Severity> {
        match s {
            "VL" => Ok(Severity::VeryLow),
            "L" => Ok(Severity::Low),
            "M" => Ok(Severity::Mid),
            "H" => Ok(Severity::High),
            other => Err(Error::Data(format!("unknown severity token: {other}"))),
        }
    }

    /// Distortion scale of the tier.
    pub fn scale(&self) -> f64 {
        match self {
            Severity::VeryLow => 0.1,
            Severity::Low => 0.3,
            Severity::Mid => 0.6,
            Severity::High => 1.0,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub name: String,
    pub lang: Option<String>,
}

/// Ordered token inventory with a reserved blank appended after the units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Token>) -> Result<Vocabulary> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &tokens {
            if !seen.insert((t.name.clone(), t.lang.clone())) {
                return Err(Error::Config(format!(
                    "duplicate token {} ({:?}) in vocabulary",
                    t.name, t.lang
                )));
            }
        }
        Ok(Vocabulary { tokens })
    }

    /// n tagged phone-like units p00..p(n-1).
    pub fn synthetic(lang: &str, n: usize) -> Vocabulary {
        let tokens = (0..n)
            .map(|i| Token { name: format!("p{i:02}"), lang: Some(lang.to_string()) })
            .collect();
        Vocabulary { tokens }
    }

    /// Non-blank unit count.
    pub fn units(&self) -> usize {
        self.tokens.len()
    }

    /// Head width: units plus the blank.
    pub fn total(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn blank(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&Token> {
        self.tokens.get(id)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn id_of(&self, name: &str, lang: Option<&str>) -> Option<usize> {
        self.tokens
            .iter()
            .position(|t| t.name == name && t.lang.as_deref() == lang)
    }

    /// Crosslingual union: every unit keeps its language tag, so shared
    /// phone names stay distinct; output size is the exact sum of the input
    /// unit counts, with a fresh blank on top.
    pub fn merge(a: &Vocabulary, b: &Vocabulary) -> Result<Vocabulary> {
        for (label, v) in [("first", a), ("second", b)] {
            if v.tokens.iter().any(|t| t.lang.is_none()) {
                return Err(Error::Config(format!(
                    "{label} vocabulary has untagged tokens; merging needs language tags"
                )));
            }
        }
        let mut tokens = a.tokens.clone();
        tokens.extend(b.tokens.iter().cloned());
        Vocabulary::new(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub severity: Severity,
    pub language: String,
    /// Distorted feature frames, [T × feature_dim].
    pub features: Tensor,
    /// Undistorted twin, generation-time only.
    pub clean_features: Option<Tensor>,
    /// Token ids into the corpus vocabulary.
    pub transcript: Vec<usize>,
    /// Per-frame phone labels, generation-time only.
    pub frame_phones: Vec<usize>,
    pub split: Split,
}

impl UtteranceRecord {
    /// Render features as a single-channel pseudo-waveform: frame t of
    /// width d occupies samples t·d .. t·d+d. Feeding this to an encoder
    /// whose subsample factor equals d yields one encoder frame per feature
    /// frame.
    pub fn waveform(&self) -> Tensor {
        let t = self.features.rows() * self.features.cols();
        Tensor::new(vec![t, 1], self.features.data().to_vec()).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub severity: Severity,
    /// Row-major feature_dim × feature_dim distortion, ‖A−I‖_F scaled by
    /// the severity tier.
    pub transform: Vec<f64>,
    pub offset: Vec<f64>,
    pub jitter: f64,
    pub noise: f64,
}

impl SpeakerProfile {
    pub fn frobenius_from_identity(&self) -> f64 {
        let d = self.offset.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let delta = self.transform[i * d + j] - if i == j { 1.0 } else { 0.0 };
                s += delta * delta;
            }
        }
        s.sqrt()
    }

    fn distort(&self, frame: &[f64], noise: &mut dyn FnMut() -> f64) -> Vec<f64> {
        let d = frame.len();
        let mut out = crate::linalg::mat_vec(&self.transform, d, d, frame);
        for (o, b) in out.iter_mut().zip(&self.offset) {
            *o += b + self.noise * noise();
        }
        out
    }

    /// Undo the affine part of the distortion (noise remains).
    pub fn invert(&self, frame: &[f64]) -> Vec<f64> {
        let d = frame.len();
        let shifted: Vec<f64> = frame.iter().zip(&self.offset).map(|(f, b)| f - b).collect();
        let lu = crate::linalg::Lu::factor(&self.transform, d).expect("profile transform invertible");
        lu.solve(&shifted)
    }
}

/// Generation parameters. `template_seed` pins the phone templates and the
/// lexicon independently of the corpus seed, so corpora generated for
/// pretraining and finetuning share the same acoustic inventory.
#[derive(Debug, Clone)]
pub struct CorpusParams {
    pub language: String,
    pub n_phones: usize,
    pub n_words: usize,
    pub word_phones_min: usize,
    pub word_phones_max: usize,
    pub speakers_per_tier: BTreeMap<Severity, usize>,
    pub utterances_per_speaker: usize,
    pub feature_dim: usize,
    pub frames_per_phone: usize,
    pub template_seed: u64,
    /// Zero out all distortion, jitter and noise (pretraining corpus).
    pub clean: bool,
    /// Base magnitudes multiplied by the severity-tier scale.
    pub distortion_base: f64,
    pub offset_base: f64,
    pub jitter_base: f64,
    pub noise_base: f64,
}

impl CorpusParams {
    pub fn desk_scale() -> CorpusParams {
        let mut speakers_per_tier = BTreeMap::new();
        for s in Severity::ALL {
            speakers_per_tier.insert(s, 2);
        }
        CorpusParams {
            language: "EN".to_string(),
            n_phones: 40,
            n_words: 60,
            word_phones_min: 2,
            word_phones_max: 4,
            speakers_per_tier,
            utterances_per_speaker: 150,
            feature_dim: 4,
            frames_per_phone: 3,
            template_seed: 7,
            clean: false,
            distortion_base: 1.6,
            offset_base: 1.0,
            jitter_base: 0.35,
            noise_base: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_phones == 0 {
            return Err(Error::Config("vocabulary must not be empty".into()));
        }
        if self.utterances_per_speaker == 0 {
            return Err(Error::Config("utterances per speaker must be >= 1".into()));
        }
        if self.speakers_per_tier.is_empty() || self.speakers_per_tier.values().any(|&c| c == 0) {
            return Err(Error::Config("each requested severity tier needs >= 1 speaker".into()));
        }
        if self.n_words == 0 || self.word_phones_min == 0 || self.word_phones_max < self.word_phones_min {
            return Err(Error::Config("word lexicon parameters are inconsistent".into()));
        }
        if self.feature_dim == 0 || self.frames_per_phone == 0 {
            return Err(Error::Config("feature dim and frames per phone must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Word id → phone token ids.
    pub lexicon: Vec<Vec<usize>>,
    pub records: Vec<UtteranceRecord>,
    pub profiles: Vec<SpeakerProfile>,
    pub params: CorpusParams,
}

impl Corpus {
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn profile(&self, speaker_id: &str) -> Option<&SpeakerProfile> {
        self.profiles.iter().find(|p| p.speaker_id == speaker_id)
    }
}

const TEMPLATE_SPREAD: f64 = 2.0;
const TEMPLATE_MIN_DIST: f64 = 1.6;
const INTRA_PHONE_NOISE: f64 = 0.05;

fn phone_templates(params: &CorpusParams, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = params.feature_dim;
    let mut templates: Vec<Vec<f64>> = Vec::with_capacity(params.n_phones);
    for _ in 0..params.n_phones {
        let mut best: Option<Vec<f64>> = None;
        for _attempt in 0..200 {
            let cand: Vec<f64> = (0..d).map(|_| TEMPLATE_SPREAD * rng.normal()).collect();
            let ok = templates.iter().all(|t| {
                let dist: f64 = t.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                dist >= TEMPLATE_MIN_DIST
            });
            if ok {
                best = Some(cand);
                break;
            }
            best = Some(cand); // fall back to the last candidate
        }
        templates.push(best.unwrap());
    }
    let durations: Vec<usize> = (0..params.n_phones)
        .map(|_| params.frames_per_phone + rng.below(2))
        .collect();
    (templates, durations)
}

fn build_lexicon(params: &CorpusParams, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut lexicon = Vec::with_capacity(params.n_words);
    let mut seen = std::collections::BTreeSet::new();
    while lexicon.len() < params.n_words {
        let len = params.word_phones_min
            + rng.below(params.word_phones_max - params.word_phones_min + 1);
        let word: Vec<usize> = (0..len).map(|_| rng.below(params.n_phones)).collect();
        if seen.insert(word.clone()) {
            lexicon.push(word);
        }
    }
    lexicon
}

fn speaker_profile(
    speaker_id: String,
    severity: Severity,
    params: &CorpusParams,
    rng: &mut Rng,
) -> SpeakerProfile {
    let d = params.feature_dim;
    if params.clean {
        return SpeakerProfile {
            speaker_id,
            severity,
            transform: crate::linalg::identity(d),
            offset: vec![0.0; d],
            jitter: 0.0,
            noise: 0.0,
        };
    }
    let s = severity.scale();
    let mag = params.distortion_base * s;
    let transform = loop {
        let g: Vec<f64> = (0..d * d).map(|_| rng.normal()).collect();
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut a = crate::linalg::identity(d);
        for i in 0..d * d {
            a[i] += mag * g[i] / norm;
        }
        if let Some(lu) = crate::linalg::Lu::factor(&a, d) {
            if lu.det().abs() > 1e-6 {
                break a;
            }
        }
    };
    let raw: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let rnorm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let offset: Vec<f64> = raw.iter().map(|v| params.offset_base * s * v / rnorm).collect();
    SpeakerProfile {
        speaker_id,
        severity,
        transform,
        offset,
        jitter: params.jitter_base * s,
        noise: params.noise_base * s,
    }
}

/// Deterministic synthetic corpus: same params + seed ⇒ identical output.
pub fn generate_corpus(params: &CorpusParams, seed: u64) -> Result<Corpus> {
    params.validate()?;
    let vocab = Vocabulary::synthetic(&params.language, params.n_phones);
    let mut template_rng = Rng::new(params.template_seed);
    let (templates, durations) = phone_templates(params, &mut template_rng);
    let lexicon = build_lexicon(params, &mut template_rng);

    let base = Rng::new(seed);
    let mut profiles = Vec::new();
    let mut records = Vec::new();
    let mut speaker_index = 0usize;
    for severity in Severity::ALL {
        let Some(&count) = params.speakers_per_tier.get(&severity) else { continue };
        for k in 0..count {
            let speaker_id = format!("{}{}{:02}", params.language, severity.tag(), k);
            let mut spk_rng = base.fork(1000 + speaker_index as u64);
            let profile = speaker_profile(speaker_id.clone(), severity, params, &mut spk_rng);

            let n = params.utterances_per_speaker;
            for u in 0..n {
                let word_id = spk_rng.below(lexicon.len());
                let transcript = lexicon[word_id].clone();
                let mut clean_frames: Vec<Vec<f64>> = Vec::new();
                let mut frame_phones = Vec::new();
                for &phone in &transcript {
                    let base_dur = durations[phone] as f64;
                    let stretched = base_dur * (1.0 + profile.jitter * spk_rng.range(-1.0, 1.0));
                    let dur = (stretched.round() as isize).max(1) as usize;
                    for _ in 0..dur {
                        let frame: Vec<f64> = templates[phone]
                            .iter()
                            .map(|&m| m + INTRA_PHONE_NOISE * spk_rng.normal())
                            .collect();
                        clean_frames.push(frame);
                        frame_phones.push(phone);
                    }
                }
                let distorted: Vec<Vec<f64>> = clean_frames
                    .iter()
                    .map(|f| profile.distort(f, &mut || spk_rng.normal()))
                    .collect();

                records.push(UtteranceRecord {
                    utt_id: format!("{speaker_id}_u{u:04}"),
                    speaker_id: speaker_id.clone(),
                    severity,
                    language: params.language.clone(),
                    features: Tensor::from_rows(&distorted)?,
                    clean_features: Some(Tensor::from_rows(&clean_frames)?),
                    transcript,
                    frame_phones,
                    split: Split::Train, // assigned below
                });
            }

            // fixed per-speaker split: 20% test, 10% dev, 70% train
            let mut order: Vec<usize> = (0..n).collect();
            let mut split_rng = base.fork(5000 + speaker_index as u64);
            split_rng.shuffle(&mut order);
            let n_test = (n / 5).max(1);
            let n_dev = (n / 10).max(1);
            let start = records.len() - n;
            for (rank, &u) in order.iter().enumerate() {
                records[start + u].split = if rank < n_test {
                    Split::Test
                } else if rank < n_test + n_dev {
                    Split::Dev
                } else {
                    Split::Train
                };
            }

            profiles.push(profile);
            speaker_index += 1;
        }
    }
    Ok(Corpus { vocab, lexicon, records, profiles, params: params.clone() })
}

/// One manifest line: identity, severity, language, where the features
/// live, and the reference transcript as token names.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub speaker_id: String,
    pub severity: Severity,
    pub language: String,
    pub feature_path: PathBuf,
    pub transcript: Vec<String>,
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            e.utt_id,
            e.speaker_id,
            e.severity,
            e.language,
            e.feature_path.display(),
            e.transcript.join(" ")
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse and validate a manifest. Duplicate utterance ids are rejected with
/// both line numbers; referenced feature files must exist.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!(
                "manifest line {lineno}: expected 6 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let utt_id = fields[0].to_string();
        if let Some(&first) = seen.get(&utt_id) {
            return Err(Error::Data(format!(
                "duplicate utterance id {utt_id} at lines {first} and {lineno}"
            )));
        }
        seen.insert(utt_id.clone(), lineno);
        let severity = Severity::parse(fields[2])
            .map_err(|_| Error::Data(format!("manifest line {lineno}: unknown severity token {}", fields[2])))?;
        let feature_path = PathBuf::from(fields[4]);
        let resolved = if feature_path.is_absolute() {
            feature_path.clone()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(&feature_path)
        };
        if !resolved.exists() {
            return Err(Error::Data(format!(
                "manifest line {lineno}: feature file {} does not exist",
                resolved.display()
            )));
        }
        let transcript: Vec<String> = fields[5].split_whitespace().map(String::from).collect();
        if transcript.is_empty() {
            return Err(Error::Data(format!("manifest line {lineno}: empty transcript")));
        }
        entries.push(ManifestEntry {
            utt_id,
            speaker_id: fields[1].to_string(),
            severity,
            language: fields[3].to_string(),
            feature_path: resolved,
            transcript,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_params() -> CorpusParams {
        let mut p = CorpusParams::desk_scale();
        p.n_phones = 6;
        p.n_words = 8;
        p.utterances_per_speaker = 10;
        for s in Severity::ALL {
            p.speakers_per_tier.insert(s, 1);
        }
        p
    }

    #[test]
    fn merge_forty_and_thirty_five_gives_seventy_five_plus_blank() {
        let en = Vocabulary::synthetic("EN", 40);
        let de = Vocabulary::synthetic("DE", 35);
        let merged = Vocabulary::merge(&en, &de).unwrap();
        assert_eq!(merged.units(), 75);
        assert_eq!(merged.total(), 76);
        assert_eq!(merged.blank(), 75);
    }

    #[test]
    fn merge_disjoint_singletons() {
        let a = Vocabulary::new(vec![Token { name: "x".into(), lang: Some("EN".into()) }]).unwrap();
        let b = Vocabulary::new(vec![Token { name: "y".into(), lang: Some("DE".into()) }]).unwrap();
        assert_eq!(Vocabulary::merge(&a, &b).unwrap().units(), 2);
    }

    #[test]
    fn merge_keeps_shared_names_distinct_via_tags() {
        let a = Vocabulary::synthetic("EN", 3);
        let b = Vocabulary::synthetic("DE", 3);
        let merged = Vocabulary::merge(&a, &b).unwrap();
        assert_eq!(merged.units(), 6);
        assert_ne!(merged.id_of("p00", Some("EN")), merged.id_of("p00", Some("DE")));
    }

    #[test]
    fn vocabulary_rejects_duplicates() {
        let t = Token { name: "x".into(), lang: Some("EN".into()) };
        assert!(Vocabulary::new(vec![t.clone(), t]).is_err());
    }

    #[test]
    fn same_seed_same_corpus() {
        let p = tiny_params();
        let a = generate_corpus(&p, 42).unwrap();
        let b = generate_corpus(&p, 42).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.utt_id, rb.utt_id);
            assert!(ra.features.bit_eq(&rb.features));
            assert_eq!(ra.transcript, rb.transcript);
            assert_eq!(ra.split, rb.split);
        }
    }

    #[test]
    fn clean_profile_emits_templates_exactly() {
        let mut p = tiny_params();
        p.clean = true;
        let corpus = generate_corpus(&p, 1).unwrap();
        for r in &corpus.records {
            let clean = r.clean_features.as_ref().unwrap();
            assert!(r.features.bit_eq(clean));
        }
        for prof in &corpus.profiles {
            assert_eq!(prof.frobenius_from_identity(), 0.0);
            assert_eq!(prof.noise, 0.0);
        }
    }

    #[test]
    fn severity_orders_distortion_magnitude() {
        let corpus = generate_corpus(&tiny_params(), 3).unwrap();
        let mag = |sev: Severity| -> f64 {
            corpus
                .profiles
                .iter()
                .filter(|p| p.severity == sev)
                .map(|p| p.frobenius_from_identity())
                .fold(0.0, f64::max)
        };
        assert!(mag(Severity::High) > mag(Severity::Mid));
        assert!(mag(Severity::Mid) > mag(Severity::Low));
        assert!(mag(Severity::Low) > mag(Severity::VeryLow));
    }

    #[test]
    fn inverse_distortion_recovers_clean_within_noise() {
        let corpus = generate_corpus(&tiny_params(), 9).unwrap();
        for r in corpus.records.iter().take(20) {
            let prof = corpus.profile(&r.speaker_id).unwrap();
            let clean = r.clean_features.as_ref().unwrap();
            let mut worst = 0.0f64;
            for t in 0..r.features.rows() {
                let rec = prof.invert(r.features.row(t));
                for (a, b) in rec.iter().zip(clean.row(t)) {
                    worst = worst.max((a - b).abs());
                }
            }
            // residual is A⁻¹·noise; generously bounded by a few noise sigmas
            let bound = if prof.noise == 0.0 { 1e-9 } else { 8.0 * prof.noise };
            assert!(worst <= bound, "{} residual {worst} vs noise {}", r.utt_id, prof.noise);
        }
    }

    #[test]
    fn waveform_flattens_frames() {
        let corpus = generate_corpus(&tiny_params(), 5).unwrap();
        let r = &corpus.records[0];
        let w = r.waveform();
        assert_eq!(w.rows(), r.features.rows() * r.features.cols());
        assert_eq!(w.data(), r.features.data());
    }

    #[test]
    fn split_fractions_per_speaker() {
        let corpus = generate_corpus(&tiny_params(), 11).unwrap();
        for prof in &corpus.profiles {
            let of_speaker: Vec<_> =
                corpus.records.iter().filter(|r| r.speaker_id == prof.speaker_id).collect();
            let test = of_speaker.iter().filter(|r| r.split == Split::Test).count();
            let dev = of_speaker.iter().filter(|r| r.split == Split::Dev).count();
            assert_eq!(test, 2); // 20% of 10
            assert_eq!(dev, 1); // 10% of 10
        }
    }

    #[test]
    fn rejects_empty_vocab_and_zero_utterances() {
        let mut p = tiny_params();
        p.n_phones = 0;
        assert!(generate_corpus(&p, 0).is_err());
        let mut p = tiny_params();
        p.utterances_per_speaker = 0;
        assert!(generate_corpus(&p, 0).is_err());
    }

    #[test]
    fn manifest_roundtrip_and_validation() {
        let dir = std::env::temp_dir().join(format!("sasr_manifest_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let feat = dir.join("features.ark");
        std::fs::write(&feat, b"stub").unwrap();

        let entries = vec![
            ManifestEntry {
                utt_id: "s1_u0".into(),
                speaker_id: "s1".into(),
                severity: Severity::Low,
                language: "EN".into(),
                feature_path: feat.clone(),
                transcript: vec!["p00".into(), "p01".into()],
            },
            ManifestEntry {
                utt_id: "s1_u1".into(),
                speaker_id: "s1".into(),
                severity: Severity::High,
                language: "EN".into(),
                feature_path: feat.clone(),
                transcript: vec!["p02".into()],
            },
        ];
        let mpath = dir.join("manifest.tsv");
        save_manifest(&mpath, &entries).unwrap();
        let loaded = load_manifest(&mpath).unwrap();
        assert_eq!(loaded, entries);

        // empty manifest → empty list
        let empty = dir.join("empty.tsv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_manifest(&empty).unwrap().is_empty());

        // duplicate id reported with both line numbers
        let dup = dir.join("dup.tsv");
        let line = format!("u0\ts1\tVL\tEN\t{}\tp00", feat.display());
        std::fs::write(&dup, format!("{line}\n{line}\n")).unwrap();
        match load_manifest(&dup) {
            Err(Error::Data(msg)) => {
                assert!(msg.contains("lines 1 and 2"), "{msg}");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }

        // unknown severity
        let bad = dir.join("bad.tsv");
        std::fs::write(&bad, format!("u0\ts1\tXX\tEN\t{}\tp00\n", feat.display())).unwrap();
        assert!(load_manifest(&bad).is_err());

        // missing feature file
        let missing = dir.join("missing.tsv");
        std::fs::write(&missing, "u0\ts1\tVL\tEN\t/nonexistent/f.ark\tp00\n").unwrap();
        assert!(load_manifest(&missing).is_err());

        std::fs::remove_dir_all(&dir).ok();
    }
}

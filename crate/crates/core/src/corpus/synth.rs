//! Synthetic cased and punctuated speech corpus.
//!
//! Each utterance is a stream of sentences over a small word list. Every
//! token is rendered as `r` copies of a prototype feature vector plus
//! Gaussian noise. A word and its capitalized form share one prototype, so
//! casing can only be inferred from context; each punctuation mark has its
//! own prototype.
//!
//! The utterance content depends only on `seed` and the prototypes only on
//! `acoustic_seed`; the segmentation mode draws from its own stream. Two
//! corpora that differ only in `mode` therefore hold the same audio and
//! the same total duration.

use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bucket::DurationWindow;
use super::features::write_features;
use super::record::{write_manifest, SegmentRecord};
use super::text::Vocabulary;
use super::CorpusError;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const FEATURE_DIR: &str = "features";

/// Sentence-final marks with their relative frequencies, then the comma.
const FINAL_MARKS: [(&str, f64); 3] = [(".", 0.6), ("?", 0.2), ("!", 0.2)];
const COMMA: &str = ",";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    /// Segments are cut at arbitrary word boundaries.
    Partial,
    /// Segments are cut only at sentence boundaries.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Lowercase base words; each also appears capitalized.
    pub words: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
    pub comma_prob: f64,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Sentences per segment in complete mode, and the source of the length
    /// distribution that partial mode imitates.
    pub max_sentences_per_segment: usize,
    pub min_frames_per_token: usize,
    pub max_frames_per_token: usize,
    pub noise_sigma: f64,
    pub feature_dim: usize,
    pub frame_sec: f64,
    pub mode: SegmentMode,
    pub utterances: usize,
    /// Segments whose duration falls outside every window are discarded.
    pub windows: Vec<DurationWindow>,
    pub seed: u64,
    pub acoustic_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let words = [
            "the", "a", "cat", "dog", "bird", "sat", "ran", "flew", "on", "over", "under", "mat", "hill", "tree",
            "big", "small", "red", "today",
        ];
        Self {
            words: words.iter().map(|w| w.to_string()).collect(),
            min_words: 3,
            max_words: 8,
            comma_prob: 0.15,
            min_sentences: 2,
            max_sentences: 6,
            max_sentences_per_segment: 2,
            min_frames_per_token: 2,
            max_frames_per_token: 5,
            noise_sigma: 0.3,
            feature_dim: 8,
            frame_sec: 0.1,
            mode: SegmentMode::Complete,
            utterances: 100,
            windows: vec![DurationWindow { lo_sec: 0.0, hi_sec: 20.0 }],
            seed: 0,
            acoustic_seed: 0x5eed,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Invalid(format!("synthetic config: {m}")));
        if self.words.len() < 2 {
            return bad("need at least two words");
        }
        if self.words.iter().any(|w| w.is_empty() || w.chars().any(|c| !c.is_lowercase())) {
            return bad("words must be non-empty and lowercase");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences || self.max_sentences_per_segment == 0 {
            return bad("sentence counts out of range");
        }
        if self.min_frames_per_token == 0 || self.min_frames_per_token > self.max_frames_per_token {
            return bad("need 1 <= min_frames_per_token <= max_frames_per_token");
        }
        if !(self.noise_sigma >= 0.0) || !(self.frame_sec > 0.0) || self.feature_dim == 0 {
            return bad("noise, frame length and feature dim must be valid");
        }
        if !(0.0..=1.0).contains(&self.comma_prob) {
            return bad("comma_prob must be a probability");
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut tokens: Vec<String> = self.words.clone();
        tokens.extend(self.words.iter().map(|w| capitalize(w)));
        tokens.extend(FINAL_MARKS.iter().map(|(m, _)| m.to_string()));
        tokens.push(COMMA.to_string());
        Vocabulary::new(tokens).expect("validated word list")
    }

    /// Acoustic unit of each token id: cased variants share a unit.
    pub fn acoustic_units(&self) -> Vec<usize> {
        let w = self.words.len();
        let vocab = self.vocabulary();
        (0..vocab.len()).map(|id| if id < 2 * w { id % w } else { id - w }).collect()
    }

    pub fn prototypes(&self) -> Array2<f64> {
        let units = self.words.len() + FINAL_MARKS.len() + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.acoustic_seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        Array2::from_shape_fn((units, self.feature_dim), |_| round_f32(normal.sample(&mut rng)))
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// An in-memory corpus: manifest rows plus their feature matrices.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub vocab: Vocabulary,
    pub records: Vec<SegmentRecord>,
    pub features: Vec<Array2<f64>>,
    pub targets: Vec<Vec<usize>>,
    pub discarded: usize,
}

struct Utterance {
    tokens: Vec<usize>,
    /// Index of the first frame of each token, plus the total at the end.
    frame_starts: Vec<usize>,
    /// Token positions right after a sentence-final mark.
    sentence_ends: Vec<usize>,
    /// Token positions where a word starts.
    word_starts: Vec<usize>,
    features: Array2<f64>,
}

fn sample_final<R: Rng>(rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, (_, p)) in FINAL_MARKS.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    FINAL_MARKS.len() - 1
}

fn generate_utterance<R: Rng>(cfg: &SynthConfig, protos: &Array2<f64>, units: &[usize], rng: &mut R) -> Utterance {
    let w = cfg.words.len();
    let period = 2 * w;
    let comma = 2 * w + FINAL_MARKS.len();
    let mut tokens = Vec::new();
    let mut sentence_ends = Vec::new();
    let mut word_starts = Vec::new();
    let n_sent = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
    for _ in 0..n_sent {
        let len = rng.random_range(cfg.min_words..=cfg.max_words);
        let mut prev: Option<usize> = None;
        for i in 0..len {
            let base = loop {
                let b = rng.random_range(0..w);
                if Some(b) != prev {
                    break b;
                }
            };
            prev = Some(base);
            word_starts.push(tokens.len());
            tokens.push(if i == 0 { base + w } else { base });
            if i + 1 < len && rng.random_bool(cfg.comma_prob) {
                tokens.push(comma);
            }
        }
        tokens.push(period + sample_final(rng));
        sentence_ends.push(tokens.len());
    }

    let normal = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut frame_starts = Vec::with_capacity(tokens.len() + 1);
    let mut rows: Vec<f64> = Vec::new();
    let mut frames = 0;
    for &tok in &tokens {
        frame_starts.push(frames);
        let r = rng.random_range(cfg.min_frames_per_token..=cfg.max_frames_per_token);
        let proto = protos.row(units[tok]);
        for _ in 0..r {
            for &p in proto.iter() {
                let noise = if cfg.noise_sigma > 0.0 { normal.sample(rng) } else { 0.0 };
                rows.push(round_f32(p + noise));
            }
        }
        frames += r;
    }
    frame_starts.push(frames);
    let features = Array2::from_shape_vec((frames, cfg.feature_dim), rows).expect("row-major frames");
    Utterance { tokens, frame_starts, sentence_ends, word_starts, features }
}

/// Token-position cut points (excluding 0, including the end) for one utterance.
fn segment_cuts<R: Rng>(cfg: &SynthConfig, utt: &Utterance, rng: &mut R) -> Vec<usize> {
    let total = utt.tokens.len();
    let mut cuts = Vec::new();
    match cfg.mode {
        SegmentMode::Complete => {
            let mut i = 0;
            while i < utt.sentence_ends.len() {
                let k = rng.random_range(1..=cfg.max_sentences_per_segment);
                i = (i + k).min(utt.sentence_ends.len());
                cuts.push(utt.sentence_ends[i - 1]);
            }
        }
        SegmentMode::Partial => {
            // Segment lengths follow the complete-mode scale, but cuts land on
            // arbitrary word starts.
            let mean_sentence = total as f64 / utt.sentence_ends.len() as f64;
            let lo = 2usize;
            let hi = ((cfg.max_sentences_per_segment as f64 + 1.0) * mean_sentence).round().max(3.0) as usize;
            let mut pos = 0;
            loop {
                let want = pos + rng.random_range(lo..=hi);
                match utt.word_starts.iter().find(|&&s| s >= want && s > pos) {
                    Some(&s) => {
                        cuts.push(s);
                        pos = s;
                    }
                    None => {
                        cuts.push(total);
                        break;
                    }
                }
            }
        }
    }
    cuts
}

pub fn gen_synthetic_corpus(cfg: &SynthConfig) -> Result<SyntheticCorpus, CorpusError> {
    cfg.validate()?;
    let vocab = cfg.vocabulary();
    let units = cfg.acoustic_units();
    let protos = cfg.prototypes();
    let mut content_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cut_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut corpus = SyntheticCorpus {
        config: cfg.clone(),
        vocab,
        records: Vec::new(),
        features: Vec::new(),
        targets: Vec::new(),
        discarded: 0,
    };
    for u in 0..cfg.utterances {
        let utt = generate_utterance(cfg, &protos, &units, &mut content_rng);
        let utt_id = format!("{}-{u:06}", cfg.seed);
        let mut start = 0;
        for (seg, end) in segment_cuts(cfg, &utt, &mut cut_rng).into_iter().enumerate() {
            let tokens = utt.tokens[start..end].to_vec();
            let (f0, f1) = (utt.frame_starts[start], utt.frame_starts[end]);
            start = end;
            let duration = (f1 - f0) as f64 * cfg.frame_sec;
            if !cfg.windows.is_empty() && !cfg.windows.iter().any(|w| w.contains(duration)) {
                corpus.discarded += 1;
                continue;
            }
            let segment_id = format!("{utt_id}-{seg:04}");
            let mut rec = SegmentRecord::new(&utt_id, seg as u64, &segment_id, duration, &corpus.vocab.decode(&tokens));
            rec.feature_ref = Some(format!("{FEATURE_DIR}/{segment_id}.feat"));
            corpus.records.push(rec);
            corpus.features.push(utt.features.slice(s![f0..f1, ..]).to_owned());
            corpus.targets.push(tokens);
        }
    }
    Ok(corpus)
}

impl SyntheticCorpus {
    pub fn total_duration_sec(&self) -> f64 {
        self.records.iter().map(|r| r.duration_sec).sum()
    }

    /// Writes `manifest.jsonl`, `vocab.json` and one feature file per segment.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let feat_dir = dir.join(FEATURE_DIR);
        std::fs::create_dir_all(&feat_dir).map_err(|e| CorpusError::io(&feat_dir, e))?;
        for (rec, feats) in self.records.iter().zip(&self.features) {
            let rel = rec.feature_ref.as_deref().expect("synthetic records carry feature refs");
            write_features(&dir.join(rel), feats)?;
        }
        write_manifest(&dir.join(MANIFEST_FILE), &self.records)?;
        let vocab_path = dir.join(VOCAB_FILE);
        let json = serde_json::to_string_pretty(&self.vocab).expect("vocabulary serializes");
        std::fs::write(&vocab_path, json + "\n").map_err(|e| CorpusError::io(&vocab_path, e))
    }
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let v: Vocabulary = serde_json::from_str(&text).map_err(|e| CorpusError::Parse { line: 0, message: e.to_string() })?;
    v.reindex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::text::is_complete_sentence;

    fn small(mode: SegmentMode, seed: u64) -> SynthConfig {
        SynthConfig { utterances: 20, mode, seed, ..SynthConfig::default() }
    }

    #[test]
    fn vocabulary_layout() {
        let cfg = SynthConfig::default();
        let v = cfg.vocabulary();
        assert_eq!(v.len(), 40);
        assert_eq!(v.tokens()[18], "The");
        assert_eq!(&v.tokens()[36..], &[".", "?", "!", ","]);
        let units = cfg.acoustic_units();
        assert_eq!(units[0], units[18]);
        assert_eq!(units[36], 18);
        assert_eq!(units[39], 21);
    }

    #[test]
    fn complete_mode_segments_are_complete() {
        let c = gen_synthetic_corpus(&small(SegmentMode::Complete, 3)).unwrap();
        assert!(!c.records.is_empty());
        for r in &c.records {
            assert!(is_complete_sentence(&r.text), "{}", r.text);
        }
    }

    #[test]
    fn partial_mode_matches_total_duration() {
        let a = gen_synthetic_corpus(&small(SegmentMode::Complete, 4)).unwrap();
        let b = gen_synthetic_corpus(&small(SegmentMode::Partial, 4)).unwrap();
        assert!((a.total_duration_sec() - b.total_duration_sec()).abs() < 1e-9);
        let incomplete = b.records.iter().filter(|r| !is_complete_sentence(&r.text)).count();
        assert!(incomplete * 2 > b.records.len());
    }

    #[test]
    fn texts_and_targets_agree() {
        let c = gen_synthetic_corpus(&small(SegmentMode::Partial, 5)).unwrap();
        for (r, t) in c.records.iter().zip(&c.targets) {
            assert_eq!(&c.vocab.encode(&r.text).unwrap(), t);
        }
        for (r, f) in c.records.iter().zip(&c.features) {
            assert!((r.duration_sec - f.nrows() as f64 * 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_features_are_prototypes() {
        let cfg = SynthConfig {
            utterances: 1,
            min_sentences: 1,
            max_sentences: 1,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let c = gen_synthetic_corpus(&cfg).unwrap();
        let protos = cfg.prototypes();
        let units = cfg.acoustic_units();
        // nearest-prototype frame labels, merged into runs
        let mut decoded_units = Vec::new();
        for row in c.features[0].rows() {
            let best = (0..protos.nrows())
                .min_by(|&a, &b| {
                    let da: f64 = (&row - &protos.row(a)).mapv(|x| x * x).sum();
                    let db: f64 = (&row - &protos.row(b)).mapv(|x| x * x).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(row, protos.row(best));
            if decoded_units.last() != Some(&best) {
                decoded_units.push(best);
            }
        }
        let expected: Vec<usize> = c.targets[0].iter().map(|&t| units[t]).collect();
        assert_eq!(decoded_units, expected);
    }

    #[test]
    fn deterministic_output() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let cfg = small(SegmentMode::Partial, 9);
        gen_synthetic_corpus(&cfg).unwrap().write(dir_a.path()).unwrap();
        gen_synthetic_corpus(&cfg).unwrap().write(dir_b.path()).unwrap();
        let a = std::fs::read(dir_a.path().join(MANIFEST_FILE)).unwrap();
        let b = std::fs::read(dir_b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(a, b);
        let v = read_vocabulary(&dir_a.path().join(VOCAB_FILE)).unwrap();
        assert_eq!(v, cfg.vocabulary());
    }
}

//! Manifests, text normalization, segment merging, bucketing, chunking and
//! the synthetic corpus generator.

use std::path::{Path, PathBuf};

mod bucket;
mod chunk;
mod concat;
mod features;
mod record;
mod sentences;
mod synth;
mod text;

pub use bucket::{bucket_by_duration, check_disjoint, parse_windows, stats_table, Buckets, DurationWindow, WindowStats};
pub use chunk::{chunk_long_audio, Chunk, ChunkBoundary, WordTimestamp};
pub use concat::{greedy_concat, ConcatGroup, ConcatOutput};
pub use features::{decode_features, encode_features, read_features, write_features};
pub use record::{
    manifest_to_string, merged_segment_id, parse_manifest, read_manifest, validate_manifest, write_manifest,
    SegmentRecord,
};
pub use sentences::{complete_sentences, DropReason, DroppedRun, SentenceMerge};
pub use synth::{
    gen_synthetic_corpus, read_vocabulary, SegmentMode, SynthConfig, SyntheticCorpus, FEATURE_DIR, MANIFEST_FILE,
    VOCAB_FILE,
};
pub use text::{
    collapse_whitespace, is_complete_sentence, transform_text, PncSetting, TextTransform, Vocabulary,
    DEFAULT_PUNCTUATION, SENTENCE_FINAL,
};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

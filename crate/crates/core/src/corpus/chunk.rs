use serde::{Deserialize, Serialize};

use super::text::SENTENCE_FINAL;
use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTimestamp {
    pub word: String,
    pub start_sec: f64,
    pub end_sec: f64,
}

impl WordTimestamp {
    pub fn new(word: &str, start_sec: f64, end_sec: f64) -> Self {
        Self { word: word.to_string(), start_sec, end_sec }
    }

    fn ends_sentence(&self) -> bool {
        self.word.chars().last().is_some_and(|c| SENTENCE_FINAL.contains(&c))
    }
}

/// Why a chunk ended where it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkBoundary {
    Sentence,
    /// No sentence end fit under the cap; cut at the widest pause instead.
    GapFallback,
    EndOfStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub start_sec: f64,
    pub end_sec: f64,
    pub text: String,
    /// Index of the first and one past the last word.
    pub first_word: usize,
    pub end_word: usize,
    pub boundary: ChunkBoundary,
}

fn make_chunk(words: &[WordTimestamp], first: usize, end: usize, boundary: ChunkBoundary) -> Chunk {
    Chunk {
        start_sec: words[first].start_sec,
        end_sec: words[end - 1].end_sec,
        text: words[first..end].iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" "),
        first_word: first,
        end_word: end,
        boundary,
    }
}

/// Splits a word stream into chunks of at most `cap_sec`, preferring to cut
/// after sentence-final punctuation.
///
/// A chunk is closed at the first sentence end once it spans `target_sec`.
/// When the next word would push the span past `cap_sec` the chunk is cut
/// after the latest sentence end seen so far, or, failing that, before the
/// word that follows the widest inter-word gap.
pub fn chunk_long_audio(words: &[WordTimestamp], target_sec: f64, cap_sec: f64) -> Result<Vec<Chunk>, CorpusError> {
    if !(target_sec > 0.0 && target_sec <= cap_sec) {
        return Err(CorpusError::Invalid(format!(
            "need 0 < target ({target_sec}) <= cap ({cap_sec})"
        )));
    }
    for (i, w) in words.iter().enumerate() {
        if !(w.start_sec <= w.end_sec) {
            return Err(CorpusError::Invalid(format!("word {i} ends before it starts")));
        }
        if w.end_sec - w.start_sec > cap_sec {
            return Err(CorpusError::Invalid(format!("word {i} alone is longer than the cap")));
        }
        if i > 0 && (w.start_sec < words[i - 1].start_sec || w.end_sec < words[i - 1].end_sec) {
            return Err(CorpusError::Invalid(format!("word {i} is out of order with word {}", i - 1)));
        }
    }

    let mut chunks = Vec::new();
    let mut first = 0;
    let mut last_sentence_end: Option<usize> = None; // one past the word
    let mut i = 0;
    while i < words.len() {
        if words[i].end_sec - words[first].start_sec > cap_sec {
            // word i cannot join the current chunk
            let cut = match last_sentence_end {
                Some(end) => {
                    chunks.push(make_chunk(words, first, end, ChunkBoundary::Sentence));
                    end
                }
                None => {
                    let cut = (first + 1..=i)
                        .max_by(|&a, &b| {
                            let ga = words[a].start_sec - words[a - 1].end_sec;
                            let gb = words[b].start_sec - words[b - 1].end_sec;
                            ga.total_cmp(&gb).then(a.cmp(&b))
                        })
                        .expect("i > first because a single word fits under the cap");
                    chunks.push(make_chunk(words, first, cut, ChunkBoundary::GapFallback));
                    cut
                }
            };
            first = cut;
            last_sentence_end = None;
            // re-scan from the new start so later sentence ends are recorded
            i = first;
            continue;
        }
        if words[i].ends_sentence() {
            last_sentence_end = Some(i + 1);
            if words[i].end_sec - words[first].start_sec >= target_sec {
                chunks.push(make_chunk(words, first, i + 1, ChunkBoundary::Sentence));
                first = i + 1;
                last_sentence_end = None;
            }
        }
        i += 1;
    }
    if first < words.len() {
        let boundary = if words[words.len() - 1].ends_sentence() {
            ChunkBoundary::Sentence
        } else {
            ChunkBoundary::EndOfStream
        };
        chunks.push(make_chunk(words, first, words.len(), boundary));
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `n` sentences of `words_per` words spanning `sec` seconds each.
    fn sentences(n: usize, words_per: usize, sec: f64) -> Vec<WordTimestamp> {
        let step = sec / words_per as f64;
        let mut out = Vec::new();
        for s in 0..n {
            for w in 0..words_per {
                let start = s as f64 * sec + w as f64 * step;
                let word = if w + 1 == words_per { "end.".to_string() } else { format!("w{w}") };
                out.push(WordTimestamp::new(&word, start, start + step * 0.9));
            }
        }
        out
    }

    #[test]
    fn ten_three_minute_sentences() {
        let words = sentences(10, 6, 180.0);
        let chunks = chunk_long_audio(&words, 1200.0, 1200.0).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].end_word, 36);
        assert_eq!(chunks[1].end_word - chunks[1].first_word, 24);
        assert!(chunks[0].end_sec - chunks[0].start_sec <= 1080.0);
        assert!(chunks.iter().all(|c| c.boundary == ChunkBoundary::Sentence));
        assert!(chunks[0].text.ends_with('.'));
    }

    #[test]
    fn short_stream_single_chunk() {
        let words = sentences(2, 3, 10.0);
        let chunks = chunk_long_audio(&words, 60.0, 60.0).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].first_word, chunks[0].end_word), (0, 6));
    }

    #[test]
    fn no_punctuation_uses_widest_gap() {
        let mut words = Vec::new();
        let mut t = 0.0;
        for i in 0..20 {
            let gap = if i == 7 { 2.0 } else { 0.1 };
            t += gap;
            words.push(WordTimestamp::new("w", t, t + 0.5));
            t += 0.5;
        }
        let chunks = chunk_long_audio(&words, 8.0, 8.0).unwrap();
        assert_eq!(chunks[0].boundary, ChunkBoundary::GapFallback);
        assert_eq!(chunks[0].end_word, 7);
        for c in &chunks {
            assert!(c.end_sec - c.start_sec <= 8.0);
        }
        assert_eq!(chunks.last().unwrap().end_word, 20);
    }

    #[test]
    fn target_below_cap_closes_early() {
        let words = sentences(10, 6, 180.0);
        let chunks = chunk_long_audio(&words, 500.0, 1200.0).unwrap();
        // first sentence end at or beyond 500 s is the end of sentence 3 (540 s)
        assert_eq!(chunks[0].end_word, 18);
    }

    #[test]
    fn invalid_inputs() {
        let words = sentences(1, 2, 1.0);
        assert!(chunk_long_audio(&words, 2.0, 1.0).is_err());
        let long = vec![WordTimestamp::new("x.", 0.0, 5.0)];
        assert!(chunk_long_audio(&long, 1.0, 1.0).is_err());
        let unordered = vec![WordTimestamp::new("a", 1.0, 1.5), WordTimestamp::new("b", 0.0, 0.5)];
        assert!(chunk_long_audio(&unordered, 1.0, 1.0).is_err());
        assert!(chunk_long_audio(&[], 1.0, 1.0).unwrap().is_empty());
    }
}

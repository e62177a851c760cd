use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub utterance_id: String,
    pub segment_index: u64,
    pub segment_id: String,
    pub duration_sec: f64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ref: Option<String>,
}

impl SegmentRecord {
    pub fn new(utterance_id: &str, segment_index: u64, segment_id: &str, duration_sec: f64, text: &str) -> Self {
        Self {
            utterance_id: utterance_id.to_string(),
            segment_index,
            segment_id: segment_id.to_string(),
            duration_sec,
            text: text.to_string(),
            feature_ref: None,
        }
    }
}

/// Id of a record merged from several segments: the first id, then `_` and
/// the last `-`-separated component of each following id.
///
/// `["102-129232-0076", "102-129232-0077"]` gives `"102-129232-0076_0077"`.
pub fn merged_segment_id<S: AsRef<str>>(ids: &[S]) -> String {
    let mut out = ids.first().map(|s| s.as_ref().to_string()).unwrap_or_default();
    for id in ids.iter().skip(1) {
        let id = id.as_ref();
        let suffix = id.rsplit('-').next().unwrap_or(id);
        out.push('_');
        out.push_str(suffix);
    }
    out
}

/// Checks non-negative durations and unique `(utterance_id, segment_index)`.
pub fn validate_manifest(records: &[SegmentRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for r in records {
        if !(r.duration_sec >= 0.0) || !r.duration_sec.is_finite() {
            return Err(CorpusError::Invalid(format!(
                "segment {} has invalid duration {}",
                r.segment_id, r.duration_sec
            )));
        }
        if !seen.insert((r.utterance_id.as_str(), r.segment_index)) {
            return Err(CorpusError::Invalid(format!(
                "duplicate (utterance_id, segment_index) = ({}, {})",
                r.utterance_id, r.segment_index
            )));
        }
    }
    Ok(())
}

pub fn parse_manifest(text: &str) -> Result<Vec<SegmentRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SegmentRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    validate_manifest(&out)?;
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<SegmentRecord>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| CorpusError::io(path, e))?);
        text.push('\n');
    }
    parse_manifest(&text)
}

pub fn manifest_to_string(records: &[SegmentRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, records: &[SegmentRecord]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(manifest_to_string(records).as_bytes()).map_err(|e| CorpusError::io(path, e))?;
    w.flush().map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_ids() {
        assert_eq!(merged_segment_id(&["102-129232-0076", "102-129232-0077"]), "102-129232-0076_0077");
        assert_eq!(merged_segment_id(&["a", "b", "c"]), "a_b_c");
        assert_eq!(merged_segment_id(&["x-1"]), "x-1");
    }

    #[test]
    fn manifest_line_format() {
        let mut r = SegmentRecord::new("u", 3, "u-0003", 1.5, "Hi.");
        let line = manifest_to_string(std::slice::from_ref(&r));
        assert_eq!(
            line,
            "{\"utterance_id\":\"u\",\"segment_index\":3,\"segment_id\":\"u-0003\",\"duration_sec\":1.5,\"text\":\"Hi.\"}\n"
        );
        r.feature_ref = Some("f/u-0003.feat".into());
        let back = parse_manifest(&manifest_to_string(std::slice::from_ref(&r))).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn rejects_duplicates_and_bad_lines() {
        let a = SegmentRecord::new("u", 0, "u-0", 1.0, "A.");
        let text = manifest_to_string(&[a.clone(), a]);
        assert!(matches!(parse_manifest(&text), Err(CorpusError::Invalid(_))));
        assert!(matches!(parse_manifest("{not json}\n"), Err(CorpusError::Parse { line: 1, .. })));
        let neg = SegmentRecord::new("u", 0, "u-0", -1.0, "A.");
        assert!(validate_manifest(&[neg]).is_err());
    }
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::record::{merged_segment_id, SegmentRecord};
use super::text::is_complete_sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The utterance (or a contiguous run of it) ended before the text completed.
    RunEnded,
    /// The accumulated text starts lowercase, so no continuation can complete it.
    LowercaseStart,
    /// Empty text.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRun {
    pub segment_ids: Vec<String>,
    pub duration_sec: f64,
    pub reason: DropReason,
}

/// Result of [`complete_sentences`]. `sources[i]` lists the input indices that
/// were merged into `records[i]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SentenceMerge {
    pub records: Vec<SegmentRecord>,
    pub sources: Vec<Vec<usize>>,
    pub dropped: Vec<DroppedRun>,
}

impl SentenceMerge {
    pub fn merged_count(&self) -> usize {
        self.sources.iter().filter(|s| s.len() > 1).count()
    }

    pub fn dropped_segments(&self) -> usize {
        self.dropped.iter().map(|d| d.segment_ids.len()).sum()
    }
}

/// Groups `records` by utterance (first-appearance order), orders each group by
/// `segment_index`, and returns the indices per group.
pub(crate) fn utterance_runs(records: &[SegmentRecord]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry(r.utterance_id.as_str())
            .or_insert_with(|| {
                order.push(r.utterance_id.as_str());
                Vec::new()
            })
            .push(i);
    }
    order
        .into_iter()
        .map(|u| {
            let mut g = groups.remove(u).unwrap_or_default();
            g.sort_by_key(|&i| records[i].segment_index);
            g
        })
        .collect()
}

/// Concatenates consecutive segments into records of a given set of input
/// indices: texts joined by one space, durations summed.
pub(crate) fn merge_records(records: &[SegmentRecord], members: &[usize]) -> SegmentRecord {
    let first = &records[members[0]];
    if members.len() == 1 {
        return first.clone();
    }
    let ids: Vec<&str> = members.iter().map(|&i| records[i].segment_id.as_str()).collect();
    let text = members.iter().map(|&i| records[i].text.trim()).collect::<Vec<_>>().join(" ");
    SegmentRecord {
        utterance_id: first.utterance_id.clone(),
        segment_index: first.segment_index,
        segment_id: merged_segment_id(&ids),
        duration_sec: members.iter().map(|&i| records[i].duration_sec).sum(),
        text,
        feature_ref: None,
    }
}

/// Merges consecutive segments of each utterance until the text forms
/// complete sentences; drops what never completes.
///
/// A gap in `segment_index` ends a run. An accumulation whose first letter is
/// lowercase is dropped at once since appending text cannot fix its start.
pub fn complete_sentences(records: &[SegmentRecord]) -> SentenceMerge {
    let mut out = SentenceMerge::default();
    let drop = |out: &mut SentenceMerge, acc: &mut Vec<usize>, reason| {
        if acc.is_empty() {
            return;
        }
        out.dropped.push(DroppedRun {
            segment_ids: acc.iter().map(|&i| records[i].segment_id.clone()).collect(),
            duration_sec: acc.iter().map(|&i| records[i].duration_sec).sum(),
            reason,
        });
        acc.clear();
    };

    for run in utterance_runs(records) {
        let mut acc: Vec<usize> = Vec::new();
        let mut prev_index: Option<u64> = None;
        for i in run {
            let rec = &records[i];
            if rec.text.trim().is_empty() {
                drop(&mut out, &mut acc, DropReason::RunEnded);
                out.dropped.push(DroppedRun {
                    segment_ids: vec![rec.segment_id.clone()],
                    duration_sec: rec.duration_sec,
                    reason: DropReason::Malformed,
                });
                prev_index = None;
                continue;
            }
            if prev_index.is_some_and(|p| rec.segment_index != p + 1) {
                drop(&mut out, &mut acc, DropReason::RunEnded);
            }
            prev_index = Some(rec.segment_index);
            acc.push(i);

            let text = acc.iter().map(|&j| records[j].text.trim()).collect::<Vec<_>>().join(" ");
            if is_complete_sentence(&text) {
                out.records.push(merge_records(records, &acc));
                out.sources.push(std::mem::take(&mut acc));
            } else if text.chars().find(|c| c.is_alphabetic()).is_some_and(|c| !c.is_uppercase()) {
                drop(&mut out, &mut acc, DropReason::LowercaseStart);
            }
        }
        drop(&mut out, &mut acc, DropReason::RunEnded);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(utt: &str, idx: u64, dur: f64, text: &str) -> SegmentRecord {
        SegmentRecord::new(utt, idx, &format!("{utt}-{idx:04}"), dur, text)
    }

    #[test]
    fn complete_segment_passes_through() {
        let r = vec![rec("u", 0, 2.0, "Hello there.")];
        let m = complete_sentences(&r);
        assert_eq!(m.records, r);
        assert!(m.dropped.is_empty());
    }

    #[test]
    fn completes_at_second_segment_and_drops_tail() {
        let r = vec![
            rec("u", 0, 1.0, "The storm came,"),
            rec("u", 1, 2.0, "and then it left."),
            rec("u", 2, 3.0, "After that we"),
        ];
        let m = complete_sentences(&r);
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].segment_id, "u-0000_0001");
        assert_eq!(m.records[0].text, "The storm came, and then it left.");
        assert_eq!(m.records[0].duration_sec, 3.0);
        assert_eq!(m.sources, vec![vec![0, 1]]);
        assert_eq!(m.dropped.len(), 1);
        assert_eq!(m.dropped[0].segment_ids, vec!["u-0002"]);
        assert_eq!(m.dropped[0].reason, DropReason::RunEnded);
    }

    #[test]
    fn lowercase_start_dropped_immediately() {
        let r = vec![rec("u", 0, 1.0, "and so on"), rec("u", 1, 1.0, "It ended.")];
        let m = complete_sentences(&r);
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].text, "It ended.");
        assert_eq!(m.dropped[0].reason, DropReason::LowercaseStart);
    }

    #[test]
    fn gap_breaks_run() {
        let r = vec![rec("u", 0, 1.0, "It was"), rec("u", 2, 1.0, "over.")];
        let m = complete_sentences(&r);
        assert!(m.records.is_empty());
        assert_eq!(m.dropped_segments(), 2);
    }

    #[test]
    fn utterances_do_not_mix_and_order_is_by_index() {
        let r = vec![
            rec("b", 1, 1.0, "done."),
            rec("a", 0, 1.0, "First"),
            rec("b", 0, 1.0, "We are"),
            rec("a", 1, 1.0, "one."),
        ];
        let m = complete_sentences(&r);
        let ids: Vec<_> = m.records.iter().map(|r| r.segment_id.as_str()).collect();
        assert_eq!(ids, vec!["b-0000_0001", "a-0000_0001"]);
        assert_eq!(m.records[0].text, "We are done.");
    }

    #[test]
    fn empty_text_is_malformed() {
        let m = complete_sentences(&[rec("u", 0, 1.0, "  ")]);
        assert_eq!(m.dropped[0].reason, DropReason::Malformed);
    }
}

use serde::{Deserialize, Serialize};

use super::record::SegmentRecord;
use super::sentences::{merge_records, utterance_runs};
use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatGroup {
    /// Input indices, in order.
    pub members: Vec<usize>,
    pub duration_sec: f64,
    /// A single record longer than the target passed through alone.
    pub oversize: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConcatOutput {
    pub records: Vec<SegmentRecord>,
    pub groups: Vec<ConcatGroup>,
}

/// Greedily packs sequential records of each utterance into groups whose total
/// duration stays within `max_dur_sec`.
pub fn greedy_concat(records: &[SegmentRecord], max_dur_sec: f64) -> Result<ConcatOutput, CorpusError> {
    if !(max_dur_sec > 0.0) || !max_dur_sec.is_finite() {
        return Err(CorpusError::Invalid(format!("max duration must be positive, got {max_dur_sec}")));
    }
    let mut groups = Vec::new();
    for run in utterance_runs(records) {
        let mut cur: Vec<usize> = Vec::new();
        let mut total = 0.0;
        for i in run {
            let d = records[i].duration_sec;
            if !cur.is_empty() && total + d > max_dur_sec {
                groups.push(ConcatGroup { members: std::mem::take(&mut cur), duration_sec: total, oversize: false });
                total = 0.0;
            }
            cur.push(i);
            total += d;
            if cur.len() == 1 && d > max_dur_sec {
                groups.push(ConcatGroup { members: std::mem::take(&mut cur), duration_sec: total, oversize: true });
                total = 0.0;
            }
        }
        if !cur.is_empty() {
            groups.push(ConcatGroup { members: cur, duration_sec: total, oversize: false });
        }
    }
    let records = groups.iter().map(|g| merge_records(records, &g.members)).collect();
    Ok(ConcatOutput { records, groups })
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::SegmentRecord;
use super::CorpusError;

/// Half-open duration range `[lo_sec, hi_sec)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationWindow {
    pub lo_sec: f64,
    pub hi_sec: f64,
}

impl DurationWindow {
    pub fn new(lo_sec: f64, hi_sec: f64) -> Result<Self, CorpusError> {
        if !(lo_sec >= 0.0 && lo_sec < hi_sec) || !hi_sec.is_finite() {
            return Err(CorpusError::Invalid(format!("bad duration window [{lo_sec}, {hi_sec})")));
        }
        Ok(Self { lo_sec, hi_sec })
    }

    pub fn contains(&self, duration_sec: f64) -> bool {
        duration_sec >= self.lo_sec && duration_sec < self.hi_sec
    }

    fn overlaps(&self, other: &DurationWindow) -> bool {
        self.lo_sec < other.hi_sec && other.lo_sec < self.hi_sec
    }
}

impl fmt::Display for DurationWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo_sec, self.hi_sec)
    }
}

/// Parses `"20-40"`.
impl FromStr for DurationWindow {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once('-')
            .ok_or_else(|| CorpusError::Invalid(format!("window {s:?} is not of the form lo-hi")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CorpusError::Invalid(format!("window bound {v:?} is not a number")))
        };
        DurationWindow::new(parse(lo)?, parse(hi)?)
    }
}

/// Parses a comma-separated window list such as `"0-20,20-40,40-60"`.
pub fn parse_windows(s: &str) -> Result<Vec<DurationWindow>, CorpusError> {
    s.split(',').filter(|w| !w.trim().is_empty()).map(str::parse).collect()
}

pub fn check_disjoint(windows: &[DurationWindow]) -> Result<(), CorpusError> {
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if a.overlaps(b) {
                return Err(CorpusError::Invalid(format!("duration windows {a} and {b} overlap")));
            }
        }
    }
    Ok(())
}

/// Segment count, total hours and mean length of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window: DurationWindow,
    pub segments: usize,
    pub total_hours: f64,
    /// 0 when the window is empty.
    pub mean_segment_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buckets {
    pub windows: Vec<DurationWindow>,
    /// Input indices per window, in input order.
    pub members: Vec<Vec<usize>>,
    pub stats: Vec<WindowStats>,
    /// Input indices of records outside every window.
    pub rejects: Vec<usize>,
}

impl Buckets {
    pub fn manifest(&self, records: &[SegmentRecord], window: usize) -> Vec<SegmentRecord> {
        self.members[window].iter().map(|&i| records[i].clone()).collect()
    }
}

pub fn bucket_by_duration(records: &[SegmentRecord], windows: &[DurationWindow]) -> Result<Buckets, CorpusError> {
    check_disjoint(windows)?;
    let mut members = vec![Vec::new(); windows.len()];
    let mut rejects = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match windows.iter().position(|w| w.contains(r.duration_sec)) {
            Some(w) => members[w].push(i),
            None => rejects.push(i),
        }
    }
    let stats = windows
        .iter()
        .zip(&members)
        .map(|(w, m)| {
            let total: f64 = m.iter().map(|&i| records[i].duration_sec).sum();
            WindowStats {
                window: *w,
                segments: m.len(),
                total_hours: total / 3600.0,
                mean_segment_sec: if m.is_empty() { 0.0 } else { total / m.len() as f64 },
            }
        })
        .collect();
    Ok(Buckets { windows: windows.to_vec(), members, stats, rejects })
}

/// Human-readable table with the same columns as the statistics.
pub fn stats_table(stats: &[WindowStats]) -> String {
    let mut out = String::new();
    out.push_str("| Duration Window (sec) | Segments | Duration (hrs) | Avg Segment Duration (sec) |\n");
    out.push_str("|---|---|---|---|\n");
    for s in stats {
        out.push_str(&format!(
            "| {} | {} | {:.4} | {:.2} |\n",
            s.window, s.segments, s.total_hours, s.mean_segment_sec
        ));
    }
    out
}

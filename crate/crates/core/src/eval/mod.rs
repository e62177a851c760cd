//! Word error rate under the four PnC settings, corpus BLEU, and report files.

use thiserror::Error;

mod bleu;
mod report;
mod wer;

pub use bleu::{bleu, bleu_tokenize, bleu_with_smoothing, BleuResult};
pub use report::{emit_report, parse_report, EvalReport, Report, ReportBody, ReportFormat, SettingWer, REPORT_SCHEMA};
pub use wer::{align_counts, evaluate_corpus, evaluate_settings, wer, EditCounts, WerBreakdown};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference is empty, so the error rate is undefined")]
    EmptyReference,
    #[error("{refs} references but {hyps} hypotheses")]
    LengthMismatch { refs: usize, hyps: usize },
    #[error("no hypotheses to report")]
    EmptyHypotheses,
    #[error("report: {0}")]
    Parse(String),
}

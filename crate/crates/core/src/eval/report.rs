//! Report files. The structured form is one JSON object:
//!
//! ```text
//! {"schema":"tdtlab.eval/v1","utterances":N,"metric":{"wer4":{...}}}
//! {"schema":"tdtlab.eval/v1","utterances":N,"metric":{"bleu":{...}}}
//! ```

use serde::{Deserialize, Serialize};

use super::bleu::BleuResult;
use super::wer::WerBreakdown;
use super::EvalError;
use crate::corpus::PncSetting;

pub const REPORT_SCHEMA: &str = "tdtlab.eval/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingWer {
    pub setting: PncSetting,
    pub wer: WerBreakdown,
}

/// Corpus WER under each setting, in `PncSetting::ALL` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub settings: Vec<SettingWer>,
}

impl EvalReport {
    pub fn get(&self, setting: PncSetting) -> Option<&WerBreakdown> {
        self.settings.iter().find(|s| s.setting == setting).map(|s| &s.wer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportBody {
    Wer4(EvalReport),
    Bleu(BleuResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub utterances: usize,
    pub metric: ReportBody,
}

impl Report {
    pub fn wer4(report: EvalReport) -> Self {
        Self { schema: REPORT_SCHEMA.into(), utterances: report.utterances, metric: ReportBody::Wer4(report) }
    }

    pub fn bleu(result: BleuResult, utterances: usize) -> Self {
        Self { schema: REPORT_SCHEMA.into(), utterances, metric: ReportBody::Bleu(result) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Json,
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Result<String, EvalError> {
    if report.utterances == 0 {
        return Err(EvalError::EmptyHypotheses);
    }
    Ok(match format {
        ReportFormat::Json => serde_json::to_string(report).expect("report serializes") + "\n",
        ReportFormat::Table => match &report.metric {
            ReportBody::Wer4(r) => {
                let mut out = String::from("| Setting | WER (%) | Sub | Del | Ins | Ref words |\n|---|---|---|---|---|---|\n");
                for s in &r.settings {
                    let w = &s.wer;
                    out.push_str(&format!(
                        "| {} | {:.2} | {} | {} | {} | {} |\n",
                        s.setting,
                        100.0 * w.wer,
                        w.substitutions,
                        w.deletions,
                        w.insertions,
                        w.ref_words
                    ));
                }
                out
            }
            ReportBody::Bleu(b) => format!(
                "BLEU = {:.2} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3} hyp_len = {} ref_len = {})\n",
                b.score,
                100.0 * b.precisions[0],
                100.0 * b.precisions[1],
                100.0 * b.precisions[2],
                100.0 * b.precisions[3],
                b.brevity_penalty,
                b.hyp_len,
                b.ref_len
            ),
        },
    })
}

pub fn parse_report(text: &str) -> Result<Report, EvalError> {
    let report: Report = serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    if report.schema != REPORT_SCHEMA {
        return Err(EvalError::Parse(format!("unsupported schema {:?}", report.schema)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{bleu, evaluate_corpus};

    fn fixture() -> Report {
        let refs = ["The cat sat.", "Where is the dog?"];
        let hyps = ["the cat sat", "Where is a dog?"];
        Report::wer4(evaluate_corpus(&refs, &hyps).unwrap())
    }

    #[test]
    fn json_round_trip() {
        let r = fixture();
        let text = emit_report(&r, ReportFormat::Json).unwrap();
        assert_eq!(parse_report(&text).unwrap(), r);
        let b = Report::bleu(bleu(&["a b c d e"], &["a b c d"]).unwrap(), 1);
        assert_eq!(parse_report(&emit_report(&b, ReportFormat::Json).unwrap()).unwrap(), b);
    }

    #[test]
    fn golden_table() {
        let expected = "\
| Setting | WER (%) | Sub | Del | Ins | Ref words |
|---|---|---|---|---|---|
| PnC | 42.86 | 3 | 0 | 0 | 7 |
| OnlyCap | 28.57 | 2 | 0 | 0 | 7 |
| OnlyPun | 28.57 | 2 | 0 | 0 | 7 |
| NoPnC | 14.29 | 1 | 0 | 0 | 7 |
";
        assert_eq!(emit_report(&fixture(), ReportFormat::Table).unwrap(), expected);
    }

    #[test]
    fn empty_is_error() {
        let mut r = fixture();
        r.utterances = 0;
        assert_eq!(emit_report(&r, ReportFormat::Json), Err(EvalError::EmptyHypotheses));
        assert!(parse_report("{\"schema\":\"other\",\"utterances\":1,\"metric\":{\"bleu\":{}}}").is_err());
    }
}

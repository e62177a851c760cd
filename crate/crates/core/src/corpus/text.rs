use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Characters that end a sentence.
pub const SENTENCE_FINAL: [char; 3] = ['.', '!', '?'];

/// Punctuation stripped by the transforms unless configured otherwise.
pub const DEFAULT_PUNCTUATION: [char; 8] = ['.', ',', '!', '?', ';', ':', '"', '\''];

/// Text is complete when its first alphabetic character is uppercase and its
/// last non-space character is `.`, `!` or `?`.
pub fn is_complete_sentence(text: &str) -> bool {
    let starts_upper = text.chars().find(|c| c.is_alphabetic()).is_some_and(|c| c.is_uppercase());
    let ends_final = text.trim_end().chars().last().is_some_and(|c| SENTENCE_FINAL.contains(&c));
    starts_upper && ends_final
}

/// The four evaluation settings, named for what survives the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PncSetting {
    #[serde(rename = "PnC")]
    Pnc,
    #[serde(rename = "OnlyCap")]
    OnlyCap,
    #[serde(rename = "OnlyPun")]
    OnlyPun,
    #[serde(rename = "NoPnC")]
    NoPnc,
}

impl PncSetting {
    pub const ALL: [PncSetting; 4] = [PncSetting::Pnc, PncSetting::OnlyCap, PncSetting::OnlyPun, PncSetting::NoPnc];

    pub fn name(self) -> &'static str {
        match self {
            PncSetting::Pnc => "PnC",
            PncSetting::OnlyCap => "OnlyCap",
            PncSetting::OnlyPun => "OnlyPun",
            PncSetting::NoPnc => "NoPnC",
        }
    }

    fn keeps_case(self) -> bool {
        matches!(self, PncSetting::Pnc | PncSetting::OnlyCap)
    }

    fn keeps_punctuation(self) -> bool {
        matches!(self, PncSetting::Pnc | PncSetting::OnlyPun)
    }
}

impl fmt::Display for PncSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PncSetting {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PncSetting::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CorpusError::Invalid(format!("unknown PnC setting {s:?}")))
    }
}

/// Text normalizer for the four settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextTransform {
    punctuation: Vec<char>,
}

impl Default for TextTransform {
    fn default() -> Self {
        Self { punctuation: DEFAULT_PUNCTUATION.to_vec() }
    }
}

impl TextTransform {
    pub fn with_punctuation(punctuation: impl IntoIterator<Item = char>) -> Self {
        Self { punctuation: punctuation.into_iter().collect() }
    }

    pub fn apply(&self, text: &str, setting: PncSetting) -> String {
        let mut kept = String::with_capacity(text.len());
        for c in text.chars() {
            if !setting.keeps_punctuation() && self.punctuation.contains(&c) {
                continue;
            }
            if setting.keeps_case() {
                kept.push(c);
            } else {
                kept.extend(c.to_lowercase());
            }
        }
        collapse_whitespace(&kept)
    }
}

/// Transform with the default punctuation set.
pub fn transform_text(text: &str, setting: PncSetting) -> String {
    TextTransform::default().apply(text, setting)
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Token inventory mapping text to ids. Punctuation tokens are split off the
/// end of the word they are attached to and re-attached on detokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CorpusError::Invalid(format!("bad vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(CorpusError::Invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn is_punctuation_token(token: &str) -> bool {
        let mut chars = token.chars();
        matches!((chars.next(), chars.next()), (Some(c), None) if !c.is_alphanumeric())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, CorpusError> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            let mut core = word;
            let mut trailing = Vec::new();
            while let Some(c) = core.chars().last() {
                let s = c.to_string();
                if core.len() > c.len_utf8() && Self::is_punctuation_token(&s) && self.index.contains_key(&s) {
                    trailing.push(s);
                    core = &core[..core.len() - c.len_utf8()];
                } else {
                    break;
                }
            }
            let id = self
                .id(core)
                .ok_or_else(|| CorpusError::Invalid(format!("token {core:?} not in vocabulary")))?;
            ids.push(id);
            for p in trailing.iter().rev() {
                ids.push(self.index[p]);
            }
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            let Some(tok) = self.tokens.get(id) else { continue };
            if Self::is_punctuation_token(tok) && !out.is_empty() {
                out.push_str(tok);
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(mut self) -> Result<Self, CorpusError> {
        let tokens = std::mem::take(&mut self.tokens);
        Self::new(tokens)
    }
}

//! Raw scripture text handling: annotation filtering, sentence segmentation
//! and glossary-driven proper-noun tagging.

mod filter;
mod glossary;
mod segment;
mod tagging;

pub use filter::{filter_scripture, RemovalRule};
pub use glossary::{Category, Glossary, GlossaryEntry};
pub use segment::{segment_sentences, sentence_length, DELIMITERS};
pub use tagging::{tag_proper_nouns, PnSpan, Side, TaggedSentence};

use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("invalid removal rule `{rule}`: {reason}")]
    BadRule { rule: String, reason: &'static str },
    #[error("glossary line {line}: {reason}")]
    BadGlossary { line: usize, reason: String },
    #[error("unknown language `{0}` (expected zh or en)")]
    BadLanguage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Language {
    Zh,
    En,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Zh => "zh",
            Language::En => "en",
        })
    }
}

impl FromStr for Language {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zh" => Ok(Language::Zh),
            "en" => Ok(Language::En),
            other => Err(TextError::BadLanguage(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub text: String,
    pub language: Language,
    pub source_id: String,
}

impl RawDocument {
    pub fn new(text: impl Into<String>, language: Language, source_id: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            language,
            source_id: source_id.into(),
        }
    }
}

/// Splits a sentence into word tokens: characters for Chinese, whitespace
/// tokens for English. Sentence delimiters are dropped in both cases.
pub fn word_tokens(sentence: &str, language: Language) -> Vec<String> {
    match language {
        Language::Zh => sentence
            .chars()
            .filter(|c| !c.is_whitespace() && !DELIMITERS.contains(c))
            .map(String::from)
            .collect(),
        Language::En => sentence
            .split_whitespace()
            .map(|w| w.trim_end_matches(|c| DELIMITERS.contains(&c)))
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect(),
    }
}

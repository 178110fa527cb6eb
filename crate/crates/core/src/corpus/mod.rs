//! Conversational machine reading examples: data model, dataset files,
//! token layout and a seeded synthetic generator.

mod io;
mod layout;
pub mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{validate_links, DiscourseLink};

pub use io::{load_dataset, parse_dataset, save_dataset, to_jsonl, Record};
pub use layout::{layout_sequence, Segments, TokenizedInput, Vocabulary, DEFAULT_MAX_LEN};
pub use synth::{generate_synthetic, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("{context}validation error: {message}")]
    Validation { context: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Self::Validation { context: String::new(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    #[serde(alias = "Yes")]
    Yes,
    #[serde(alias = "No")]
    No,
    #[serde(alias = "Inquire")]
    Inquire,
    #[serde(alias = "Irrelevant")]
    Irrelevant,
}

impl Decision {
    pub const ALL: [Decision; 4] = [Self::Yes, Self::No, Self::Inquire, Self::Irrelevant];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Yes => "Yes",
            Self::No => "No",
            Self::Inquire => "Inquire",
            Self::Irrelevant => "Irrelevant",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Decision {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::invalid(format!("unknown decision `{s}`")))
    }
}

/// Fulfillment state of one rule EDU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntailmentState {
    Entailment,
    Contradiction,
    Unmentioned,
}

impl EntailmentState {
    pub const ALL: [EntailmentState; 3] = [Self::Entailment, Self::Contradiction, Self::Unmentioned];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    #[serde(alias = "Yes")]
    Yes,
    #[serde(alias = "No")]
    No,
}

impl Answer {
    pub fn token(self) -> &'static str {
        match self {
            Self::Yes => "yes",
            Self::No => "no",
        }
    }
}

/// One follow-up question already asked, with the user's answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryTurn {
    pub question: Vec<String>,
    pub answer: Answer,
}

/// Under-specified span: inclusive token offsets within one EDU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldSpan {
    pub edu: usize,
    pub start: usize,
    pub end: usize,
}

/// One flattened dialog turn.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub example_id: String,
    pub tree_id: String,
    pub rule_edus: Vec<Vec<String>>,
    pub relation_links: Vec<DiscourseLink>,
    pub question: Vec<String>,
    pub scenario: Vec<String>,
    pub history: Vec<HistoryTurn>,
    /// One state per EDU, or empty for inference-only records.
    pub gold_entailment: Vec<EntailmentState>,
    pub gold_decision: Decision,
    pub gold_span: Option<GoldSpan>,
}

impl Example {
    pub fn edu_count(&self) -> usize {
        self.rule_edus.len()
    }

    pub fn has_entailment_labels(&self) -> bool {
        !self.gold_entailment.is_empty()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.rule_edus.is_empty() {
            return Err(CorpusError::invalid("rule document has no EDUs"));
        }
        validate_links(self.edu_count(), &self.relation_links)
            .map_err(|e| CorpusError::invalid(e.to_string()))?;
        if self.has_entailment_labels() && self.gold_entailment.len() != self.edu_count() {
            return Err(CorpusError::invalid(format!(
                "{} entailment labels for {} EDUs",
                self.gold_entailment.len(),
                self.edu_count()
            )));
        }
        match (self.gold_decision, self.gold_span) {
            (Decision::Inquire, None) => {
                return Err(CorpusError::invalid("decision Inquire requires a gold span"))
            }
            (d, Some(_)) if d != Decision::Inquire => {
                return Err(CorpusError::invalid(format!("decision {d} must not carry a span")))
            }
            _ => {}
        }
        if let Some(s) = self.gold_span {
            let len = self.rule_edus.get(s.edu).map(Vec::len).unwrap_or(0);
            if s.start > s.end || s.end >= len {
                return Err(CorpusError::invalid(format!(
                    "span ({}, {}, {}) outside EDU of {len} tokens",
                    s.edu, s.start, s.end
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationType;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    pub(crate) fn sample() -> Example {
        Example {
            example_id: "e1".into(),
            tree_id: "t1".into(),
            rule_edus: vec![toks("be a farmer"), toks("live in wales")],
            relation_links: vec![DiscourseLink::new(0, 1, RelationType::Continuation)],
            question: toks("can i apply"),
            scenario: toks("i farm sheep"),
            history: vec![HistoryTurn { question: toks("are you a farmer"), answer: Answer::Yes }],
            gold_entailment: vec![EntailmentState::Entailment, EntailmentState::Unmentioned],
            gold_decision: Decision::Inquire,
            gold_span: Some(GoldSpan { edu: 1, start: 0, end: 2 }),
        }
    }

    #[test]
    fn valid_sample() {
        sample().validate().unwrap();
    }

    #[test]
    fn inquire_needs_span() {
        let mut ex = sample();
        ex.gold_span = None;
        assert!(matches!(ex.validate(), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn span_only_for_inquire() {
        let mut ex = sample();
        ex.gold_decision = Decision::Yes;
        assert!(ex.validate().is_err());
    }

    #[test]
    fn entailment_length_must_match() {
        let mut ex = sample();
        ex.gold_entailment.pop();
        assert!(ex.validate().is_err());
        ex.gold_entailment.clear();
        ex.validate().unwrap();
    }

    #[test]
    fn span_bounds() {
        let mut ex = sample();
        ex.gold_span = Some(GoldSpan { edu: 1, start: 1, end: 3 });
        assert!(ex.validate().is_err());
        ex.gold_span = Some(GoldSpan { edu: 2, start: 0, end: 0 });
        assert!(ex.validate().is_err());
    }

    #[test]
    fn decision_names() {
        assert_eq!("inquire".parse::<Decision>().unwrap(), Decision::Inquire);
        assert_eq!("Irrelevant".parse::<Decision>().unwrap(), Decision::Irrelevant);
        assert!("maybe".parse::<Decision>().is_err());
    }
}

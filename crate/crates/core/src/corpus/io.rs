use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, Answer, CorpusError, Decision, EntailmentState, Example, GoldSpan, HistoryTurn};
use crate::graph::DiscourseLink;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRecord {
    pub q: String,
    pub a: Answer,
}

/// One JSON Lines record of a dataset file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub example_id: String,
    pub tree_id: String,
    pub rule_edus: Vec<String>,
    pub relation_links: Vec<DiscourseLink>,
    pub question: String,
    pub scenario: String,
    pub history: Vec<HistoryRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entailment: Option<Vec<EntailmentState>>,
    pub gold_decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<GoldSpan>,
}

impl From<&Example> for Record {
    fn from(ex: &Example) -> Self {
        Self {
            example_id: ex.example_id.clone(),
            tree_id: ex.tree_id.clone(),
            rule_edus: ex.rule_edus.iter().map(|e| e.join(" ")).collect(),
            relation_links: ex.relation_links.clone(),
            question: ex.question.join(" "),
            scenario: ex.scenario.join(" "),
            history: ex
                .history
                .iter()
                .map(|t| HistoryRecord { q: t.question.join(" "), a: t.answer })
                .collect(),
            gold_entailment: ex.has_entailment_labels().then(|| ex.gold_entailment.clone()),
            gold_decision: ex.gold_decision,
            gold_span: ex.gold_span,
        }
    }
}

impl From<Record> for Example {
    fn from(r: Record) -> Self {
        Self {
            example_id: r.example_id,
            tree_id: r.tree_id,
            rule_edus: r.rule_edus.iter().map(|e| tokenize(e)).collect(),
            relation_links: r.relation_links,
            question: tokenize(&r.question),
            scenario: tokenize(&r.scenario),
            history: r
                .history
                .into_iter()
                .map(|h| HistoryTurn { question: tokenize(&h.q), answer: h.a })
                .collect(),
            gold_entailment: r.gold_entailment.unwrap_or_default(),
            gold_decision: r.gold_decision,
            gold_span: r.gold_span,
        }
    }
}

/// Parses JSON Lines text; blank lines are skipped, line numbers are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<Example>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        let ex = Example::from(record);
        ex.validate().map_err(|e| match e {
            CorpusError::Validation { message, .. } => CorpusError::Validation {
                context: format!("line {line_no} ({}): ", ex.example_id),
                message,
            },
            other => other,
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Example>, CorpusError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(&Record::from(ex)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(to_jsonl(examples).as_bytes())?;
    w.flush()?;
    Ok(())
}

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Example};

pub const DEFAULT_MAX_LEN: usize = 256;

/// Closed whitespace-token vocabulary with reserved marker ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let mut v = Self::empty();
        for t in r.tokens.into_iter().skip(Vocabulary::RESERVED.len()) {
            v.insert(t);
        }
        v
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.tokens }
    }
}

impl Vocabulary {
    pub const UNK: usize = 0;
    pub const CLS: usize = 1;
    pub const SEP: usize = 2;
    pub const RULE: usize = 3;
    pub const RESERVED: [&'static str; 4] = ["[UNK]", "[CLS]", "[SEP]", "[RULE]"];

    fn empty() -> Self {
        let tokens: Vec<String> = Self::RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Every token of `examples` (plus the answer words), in sorted order.
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut seen = BTreeSet::new();
        seen.insert("yes".to_string());
        seen.insert("no".to_string());
        for ex in examples {
            let turns = ex.history.iter().flat_map(|t| &t.question);
            for t in ex.rule_edus.iter().flatten().chain(&ex.question).chain(&ex.scenario).chain(turns) {
                seen.insert(t.clone());
            }
        }
        let mut v = Self::empty();
        for t in seen {
            v.insert(t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

/// Content ranges of each segment; each is followed by its closing `[SEP]`
/// except the rule region, which runs to the end of the sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub question: Range<usize>,
    pub scenario: Range<usize>,
    pub history: Vec<Range<usize>>,
    pub rule: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedInput {
    pub ids: Vec<usize>,
    /// EDU containing each token; `None` outside the rule region.
    pub edu_of_token: Vec<Option<usize>>,
    pub rule_markers: Vec<usize>,
    /// Positions of each EDU's word tokens (markers excluded).
    pub edu_tokens: Vec<Vec<usize>>,
    pub segments: Segments,
    /// History turns dropped (oldest first) to fit the length limit.
    pub dropped_history: usize,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// EDU indices over the rule region only.
    pub fn rule_edu_index(&self) -> Vec<usize> {
        self.edu_of_token[self.segments.rule.clone()]
            .iter()
            .map(|e| e.expect("rule region tokens belong to an EDU"))
            .collect()
    }
}

/// Lays out `[CLS] q [SEP] s [SEP] (turn [SEP])* [RULE] edu_1 [RULE] edu_2 ...`.
///
/// A history turn is its question tokens followed by the answer word. When
/// the sequence exceeds `max_len`, whole history turns are dropped oldest
/// first, then scenario, question and the longest EDUs are trimmed from the
/// tail. `[RULE]` markers are never removed.
pub fn layout_sequence(
    example: &Example,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenizedInput, CorpusError> {
    let n = example.edu_count();
    let minimum = 3 + n;
    if minimum > max_len {
        return Err(CorpusError::Layout(format!(
            "{n} EDUs need at least {minimum} positions, limit is {max_len}"
        )));
    }

    let mut question: Vec<&str> = example.question.iter().map(String::as_str).collect();
    let mut scenario: Vec<&str> = example.scenario.iter().map(String::as_str).collect();
    let mut turns: Vec<Vec<&str>> = example
        .history
        .iter()
        .map(|t| {
            let mut v: Vec<&str> = t.question.iter().map(String::as_str).collect();
            v.push(t.answer.token());
            v
        })
        .collect();
    let mut edus: Vec<Vec<&str>> = example
        .rule_edus
        .iter()
        .map(|e| e.iter().map(String::as_str).collect())
        .collect();

    let total = |q: &[&str], s: &[&str], h: &[Vec<&str>], e: &[Vec<&str>]| {
        3 + q.len() + s.len() + h.iter().map(|t| t.len() + 1).sum::<usize>() + n
            + e.iter().map(Vec::len).sum::<usize>()
    };
    let original_turns = turns.len();
    while total(&question, &scenario, &turns, &edus) > max_len {
        if !turns.is_empty() {
            turns.remove(0);
        } else if !scenario.is_empty() {
            scenario.pop();
        } else if !question.is_empty() {
            question.pop();
        } else {
            let longest = (0..n).max_by_key(|&k| (edus[k].len(), std::cmp::Reverse(k))).unwrap();
            edus[longest].pop();
        }
    }

    let mut ids = vec![Vocabulary::CLS];
    let push_segment = |ids: &mut Vec<usize>, toks: &[&str]| {
        let start = ids.len();
        ids.extend(toks.iter().map(|t| vocab.id(t)));
        let range = start..ids.len();
        ids.push(Vocabulary::SEP);
        range
    };
    let q_range = push_segment(&mut ids, &question);
    let s_range = push_segment(&mut ids, &scenario);
    let h_ranges: Vec<_> = turns.iter().map(|t| push_segment(&mut ids, t)).collect();

    let rule_start = ids.len();
    let mut edu_of_token = vec![None; rule_start];
    let mut rule_markers = Vec::with_capacity(n);
    let mut edu_tokens = Vec::with_capacity(n);
    for (k, edu) in edus.iter().enumerate() {
        rule_markers.push(ids.len());
        ids.push(Vocabulary::RULE);
        edu_of_token.push(Some(k));
        let positions: Vec<usize> = (ids.len()..ids.len() + edu.len()).collect();
        ids.extend(edu.iter().map(|t| vocab.id(t)));
        edu_of_token.extend(std::iter::repeat(Some(k)).take(edu.len()));
        edu_tokens.push(positions);
    }
    let rule_end = ids.len();

    Ok(TokenizedInput {
        ids,
        edu_of_token,
        rule_markers,
        edu_tokens,
        segments: Segments {
            question: q_range,
            scenario: s_range,
            history: h_ranges,
            rule: rule_start..rule_end,
        },
        dropped_history: original_turns - turns.len(),
    })
}

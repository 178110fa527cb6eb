//! Under-specified span labeling and extractive span selection.

use serde::{Deserialize, Serialize};

use crate::corpus::GoldSpan;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpanError {
    #[error("follow-up question is empty")]
    EmptyQuestion,
    #[error("rule document has no tokens")]
    NoTokens,
    #[error("{predictions} predictions for {golds} gold spans")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("EDU {edu}: {starts} start scores but {ends} end scores")]
    ScoreShape { edu: usize, starts: usize, ends: usize },
}

/// A span `start..=end` of EDU `edu` with its score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanCandidate {
    pub edu: usize,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl SpanCandidate {
    pub fn position(&self) -> GoldSpan {
        GoldSpan { edu: self.edu, start: self.start, end: self.end }
    }
}

/// Whether the best span maximizes or minimizes `w_s·t_i + w_e·t_j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanObjective {
    #[default]
    Max,
    Min,
}

/// Token-level Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (c, y) in b.iter().enumerate() {
            let sub = prev[c] + usize::from(x != y);
            cur[c + 1] = sub.min(prev[c + 1] + 1).min(cur[c] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The single-EDU span closest to `question` in token edit distance.
///
/// Ties go to the shortest span, then the earliest EDU, then the earliest
/// start. The returned score is the distance.
pub fn gold_span_label<S: AsRef<str>>(
    rule_edus: &[Vec<S>],
    question: &[S],
) -> Result<SpanCandidate, SpanError> {
    if question.is_empty() {
        return Err(SpanError::EmptyQuestion);
    }
    let q: Vec<&str> = question.iter().map(AsRef::as_ref).collect();
    let mut best: Option<(usize, usize, SpanCandidate)> = None;
    let mut prev = vec![0usize; q.len() + 1];
    let mut cur = vec![0usize; q.len() + 1];
    for (k, edu) in rule_edus.iter().enumerate() {
        for i in 0..edu.len() {
            // Row for the empty span edu[i..i].
            for (c, p) in prev.iter_mut().enumerate() {
                *p = c;
            }
            for j in i..edu.len() {
                let tok = edu[j].as_ref();
                cur[0] = j - i + 1;
                for c in 1..=q.len() {
                    let sub = prev[c - 1] + usize::from(tok != q[c - 1]);
                    cur[c] = sub.min(prev[c] + 1).min(cur[c - 1] + 1);
                }
                std::mem::swap(&mut prev, &mut cur);
                let dist = prev[q.len()];
                let len = j - i + 1;
                if best.as_ref().is_none_or(|(d, l, _)| (dist, len) < (*d, *l)) {
                    let cand = SpanCandidate { edu: k, start: i, end: j, score: dist as f64 };
                    best = Some((dist, len, cand));
                }
            }
        }
    }
    best.map(|(_, _, c)| c).ok_or(SpanError::NoTokens)
}

/// Best `(k, i <= j)` by `start[k][i] + end[k][j]`.
///
/// Ties go to the lexicographically smallest `(k, i, j)`. EDUs without
/// tokens are skipped.
pub fn best_span(
    start_scores: &[Vec<f64>],
    end_scores: &[Vec<f64>],
    objective: SpanObjective,
) -> Result<SpanCandidate, SpanError> {
    if start_scores.len() != end_scores.len() {
        return Err(SpanError::LengthMismatch {
            predictions: start_scores.len(),
            golds: end_scores.len(),
        });
    }
    let better = |a: f64, b: f64| match objective {
        SpanObjective::Max => a > b,
        SpanObjective::Min => a < b,
    };
    let mut best: Option<SpanCandidate> = None;
    for (k, (s, e)) in start_scores.iter().zip(end_scores).enumerate() {
        if s.len() != e.len() {
            return Err(SpanError::ScoreShape { edu: k, starts: s.len(), ends: e.len() });
        }
        // Running best start over 0..=j; the earliest one on ties.
        let mut arg = 0;
        for j in 0..s.len() {
            if better(s[j], s[arg]) {
                arg = j;
            }
            let score = s[arg] + e[j];
            if best.is_none_or(|b| better(score, b.score)) {
                best = Some(SpanCandidate { edu: k, start: arg, end: j, score });
            }
        }
    }
    best.ok_or(SpanError::NoTokens)
}

/// Learned start and end vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanParams {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

/// Scores every token of every EDU with `params` and picks the best span.
pub fn extract_span(
    token_reps: &[Vec<Vec<f64>>],
    params: &SpanParams,
    objective: SpanObjective,
) -> Result<SpanCandidate, SpanError> {
    let dot = |w: &[f64], t: &[f64]| w.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
    let starts: Vec<Vec<f64>> = token_reps
        .iter()
        .map(|edu| edu.iter().map(|t| dot(&params.start, t)).collect())
        .collect();
    let ends: Vec<Vec<f64>> = token_reps
        .iter()
        .map(|edu| edu.iter().map(|t| dot(&params.end, t)).collect())
        .collect();
    best_span(&starts, &ends, objective)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanMetrics {
    pub exact_match: f64,
    pub f1: f64,
    pub count: usize,
}

/// Exact match and token-position F1, averaged over aligned pairs.
pub fn span_metrics(predictions: &[GoldSpan], golds: &[GoldSpan]) -> Result<SpanMetrics, SpanError> {
    if predictions.len() != golds.len() {
        return Err(SpanError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Ok(SpanMetrics { exact_match: 0.0, f1: 0.0, count: 0 });
    }
    let mut em = 0.0;
    let mut f1 = 0.0;
    for (p, g) in predictions.iter().zip(golds) {
        if p == g {
            em += 1.0;
        }
        let overlap = if p.edu == g.edu {
            let lo = p.start.max(g.start);
            let hi = p.end.min(g.end);
            if lo <= hi { hi - lo + 1 } else { 0 }
        } else {
            0
        };
        let size = (p.end - p.start + 1) + (g.end - g.start + 1);
        f1 += 2.0 * overlap as f64 / size as f64;
    }
    let n = golds.len() as f64;
    Ok(SpanMetrics { exact_match: em / n, f1: f1 / n, count: golds.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(edit_distance(&toks("a b c"), &toks("a b c")), 0);
        assert_eq!(edit_distance(&toks("a b c"), &toks("a c")), 1);
        assert_eq!(edit_distance::<String>(&[], &toks("x y")), 2);
        assert_eq!(edit_distance(&toks("k i t t e n"), &toks("s i t t i n g")), 3);
    }

    #[test]
    fn identical_edu_is_selected() {
        let edus = vec![toks("live in wales"), toks("be a farmer")];
        let s = gold_span_label(&edus, &toks("be a farmer")).unwrap();
        assert_eq!((s.edu, s.start, s.end, s.score), (1, 0, 2, 0.0));
    }

    #[test]
    fn empty_question_is_an_error() {
        let edus = vec![toks("a")];
        assert_eq!(gold_span_label(&edus, &[] as &[String]), Err(SpanError::EmptyQuestion));
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert_eq!(gold_span_label(&empty, &toks("a")), Err(SpanError::NoTokens));
    }

    #[test]
    fn zero_weights_pick_first_token() {
        let reps = vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]], vec![vec![5.0, 6.0]]];
        let p = SpanParams { start: vec![0.0; 2], end: vec![0.0; 2] };
        let s = extract_span(&reps, &p, SpanObjective::Max).unwrap();
        assert_eq!((s.edu, s.start, s.end), (0, 0, 0));
    }

    #[test]
    fn dominant_token_is_singleton() {
        let reps = vec![vec![vec![0.1], vec![-0.2]], vec![vec![0.0], vec![5.0], vec![0.3]]];
        let p = SpanParams { start: vec![1.0], end: vec![1.0] };
        let s = extract_span(&reps, &p, SpanObjective::Max).unwrap();
        assert_eq!((s.edu, s.start, s.end), (1, 1, 1));
        assert_eq!(s.score, 10.0);
        let m = extract_span(&reps, &p, SpanObjective::Min).unwrap();
        assert_eq!((m.edu, m.start, m.end), (0, 1, 1));
    }

    #[test]
    fn metrics_examples() {
        let a = GoldSpan { edu: 0, start: 0, end: 3 };
        let b = GoldSpan { edu: 0, start: 2, end: 5 };
        let c = GoldSpan { edu: 1, start: 0, end: 3 };
        let same = span_metrics(&[a, c], &[a, c]).unwrap();
        assert_eq!((same.exact_match, same.f1), (1.0, 1.0));
        assert_eq!(span_metrics(&[a], &[c]).unwrap().f1, 0.0);
        let half = span_metrics(&[a], &[b]).unwrap();
        assert_eq!((half.exact_match, half.f1), (0.0, 0.5));
        assert!(span_metrics(&[a], &[]).is_err());
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::corpus::{Decision, Example, GoldSpan, Vocabulary};
use crate::model::{self, Bound, ModelParams, Prediction, Prepared};
use crate::numerics::ComputeGraph;
use crate::span::{span_metrics, SpanMetrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub micro: f64,
    /// Mean of the per-class accuracies over classes present in gold.
    #[serde(rename = "macro")]
    pub macro_: f64,
    /// Indexed by [`Decision::index`]; `None` for classes absent from gold.
    pub per_class: [Option<f64>; 4],
    pub support: [usize; 4],
    /// Over EDUs of examples with entailment labels.
    pub entailment_accuracy: Option<f64>,
    /// Over examples whose gold and predicted decisions are both Inquire.
    pub span: Option<SpanMetrics>,
}

/// Micro, macro and per-class accuracy of aligned decisions.
pub fn decision_report(predicted: &[Decision], gold: &[Decision]) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(HarnessError::Contract("cannot evaluate an empty dataset".into()));
    }
    if predicted.len() != gold.len() {
        return Err(HarnessError::Contract(format!(
            "{} predictions for {} gold decisions",
            predicted.len(),
            gold.len()
        )));
    }
    let mut support = [0usize; 4];
    let mut hits = [0usize; 4];
    for (p, g) in predicted.iter().zip(gold) {
        support[g.index()] += 1;
        hits[g.index()] += usize::from(p == g);
    }
    let per_class: [Option<f64>; 4] =
        std::array::from_fn(|c| (support[c] > 0).then(|| hits[c] as f64 / support[c] as f64));
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(EvalReport {
        count: gold.len(),
        micro: hits.iter().sum::<usize>() as f64 / gold.len() as f64,
        macro_: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
        support,
        entailment_accuracy: None,
        span: None,
    })
}

/// Full report from model predictions against gold examples.
pub fn evaluate_predictions(predictions: &[Prediction], gold: &[Example]) -> Result<EvalReport> {
    let decisions: Vec<Decision> = predictions.iter().map(|p| p.decision).collect();
    let golds: Vec<Decision> = gold.iter().map(|e| e.gold_decision).collect();
    let mut report = decision_report(&decisions, &golds)?;

    let (mut right, mut total) = (0usize, 0usize);
    let mut span_pred: Vec<GoldSpan> = Vec::new();
    let mut span_gold: Vec<GoldSpan> = Vec::new();
    for (p, ex) in predictions.iter().zip(gold) {
        if ex.has_entailment_labels() {
            total += ex.gold_entailment.len();
            right += p.entailment.iter().zip(&ex.gold_entailment).filter(|(a, b)| a == b).count();
        }
        if p.decision == Decision::Inquire && ex.gold_decision == Decision::Inquire {
            if let (Some(ps), Some(gs)) = (p.span, ex.gold_span) {
                span_pred.push(ps);
                span_gold.push(gs);
            }
        }
    }
    report.entailment_accuracy = (total > 0).then(|| right as f64 / total as f64);
    if !span_gold.is_empty() {
        report.span = Some(span_metrics(&span_pred, &span_gold).map_err(model::ModelError::from)?);
    }
    Ok(report)
}

pub(crate) fn evaluate_prepared(params: &ModelParams, set: &[(Example, Prepared)]) -> Result<EvalReport> {
    let mut predictions = Vec::with_capacity(set.len());
    for (_, prep) in set {
        let g = ComputeGraph::new();
        let b = Bound::constants(&g, &params.store);
        let fwd = model::forward(&b, params, prep)?;
        predictions.push(model::read_prediction(&g, params, &fwd)?);
    }
    let gold: Vec<Example> = set.iter().map(|(e, _)| e.clone()).collect();
    evaluate_predictions(&predictions, &gold)
}

pub fn evaluate(params: &ModelParams, vocab: &Vocabulary, dataset: &[Example]) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(HarnessError::Contract("cannot evaluate an empty dataset".into()));
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    for ex in dataset {
        predictions.push(model::predict(params, vocab, ex)?);
    }
    evaluate_predictions(&predictions, dataset)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>7} {:>7} {:>7} {:>7} {:>9} {:>11}", "examples", "micro", "macro", "Yes", "No", "Inquire", "Irrelevant")?;
        writeln!(
            f,
            "{:>8} {:>7} {:>7} {:>7} {:>7} {:>9} {:>11}",
            self.count,
            pct(Some(self.micro)),
            pct(Some(self.macro_)),
            pct(self.per_class[0]),
            pct(self.per_class[1]),
            pct(self.per_class[2]),
            pct(self.per_class[3]),
        )?;
        writeln!(f, "support: {:?} (macro averages present classes only)", self.support)?;
        writeln!(f, "entailment accuracy: {}", pct(self.entailment_accuracy))?;
        match &self.span {
            Some(s) => write!(f, "span EM {:.1} F1 {:.1} over {} inquire/inquire examples", 100.0 * s.exact_match, 100.0 * s.f1, s.count),
            None => write!(f, "span: no inquire/inquire examples"),
        }
    }
}

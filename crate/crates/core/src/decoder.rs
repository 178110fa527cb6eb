//! Interaction layer, entailment and decision heads, and the joint loss.

use crate::corpus::{Decision, EntailmentState};
use crate::encoder::multi_head_attention;
use crate::model::{AttentionParams, Bound, Linear, ModelConfig, ModelError, ParamStore, Result};
use crate::numerics::{ComputeGraph, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub interaction: AttentionParams,
    /// `W_f`, `b_f`: `d -> 3`.
    pub entailment: Linear,
    /// `w_alpha`, `b_alpha`: `d + 3 -> 1`.
    pub attention: Linear,
    /// `W_z`, `b_z`: `d + 3 -> 4`.
    pub decision: Linear,
}

impl DecoderParams {
    pub(crate) fn new(store: &mut ParamStore, config: &ModelConfig) -> Self {
        let d = config.d;
        Self {
            interaction: AttentionParams::new(store, "interaction", d, config.heads),
            entailment: Linear::new(store, "entail", d, 3),
            attention: Linear::new(store, "decision_attn", d + 3, 1),
            decision: Linear::new(store, "decision", d + 3, 4),
        }
    }
}

pub struct DecoderOutput {
    /// `r~`: refined EDU rows, `n x d`.
    pub refined: Var,
    /// `f`: `n x 3`.
    pub entailment_logits: Var,
    /// `alpha~`: `1 x n`.
    pub attention: Var,
    /// `z`: `1 x 4`.
    pub decision_logits: Var,
}

/// Unmasked self-attention over the stacked element rows.
pub fn interaction_layer(b: &Bound, params: &DecoderParams, inputs: Var) -> Result<Var> {
    multi_head_attention(b, &params.interaction, inputs, None)
}

/// `f_i = r~_i W_f + b_f`, one row per EDU.
pub fn entailment_scores(b: &Bound, params: &DecoderParams, refined: Var) -> Result<Var> {
    params.entailment.apply(b, refined)
}

/// Attention-pooled decision logits over `[f_i; r~_i]`; returns `(z, alpha~)`.
pub fn decision_scores(b: &Bound, params: &DecoderParams, entail: Var, refined: Var) -> Result<(Var, Var)> {
    let g = b.graph;
    let x = g.concat_cols(&[entail, refined])?;
    let alpha = g.softmax(g.transpose(params.attention.apply(b, x)?)?)?;
    let z = params.decision.apply(b, g.matmul(alpha, x)?)?;
    Ok((z, alpha))
}

/// Interaction layer over `[r; segments]` followed by both heads.
pub fn decode(b: &Bound, params: &DecoderParams, combined: Var, segments: Var) -> Result<DecoderOutput> {
    let g = b.graph;
    let (n, _) = g.dims(combined);
    if n == 0 {
        return Err(ModelError::Contract("no EDU rows to decode".into()));
    }
    let stacked = g.concat_rows(&[combined, segments])?;
    let all = interaction_layer(b, params, stacked)?;
    let refined = g.gather_rows(all, &(0..n).collect::<Vec<_>>())?;
    let entailment_logits = entailment_scores(b, params, refined)?;
    let (decision_logits, attention) = decision_scores(b, params, entailment_logits, refined)?;
    Ok(DecoderOutput { refined, entailment_logits, attention, decision_logits })
}

pub struct LossParts {
    /// `L_dec + lambda * L_ent`.
    pub total: Var,
    pub decision: Var,
    /// Absent when `lambda = 0` and the example has no entailment labels.
    pub entailment: Option<Var>,
}

/// Decision cross-entropy plus `lambda` times the per-EDU mean entailment
/// cross-entropy. With `lambda = 0`, `total` is the decision loss itself.
pub fn compute_loss(
    g: &ComputeGraph,
    out: &DecoderOutput,
    gold_entailment: &[EntailmentState],
    gold_decision: Decision,
    lambda: f64,
) -> Result<LossParts> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ModelError::Config(format!("loss weight {lambda} must be finite and nonnegative")));
    }
    let decision = g.cross_entropy(out.decision_logits, &[gold_decision.index()])?;
    let (n, _) = g.dims(out.entailment_logits);
    if gold_entailment.is_empty() && lambda == 0.0 {
        return Ok(LossParts { total: decision, decision, entailment: None });
    }
    if gold_entailment.len() != n {
        return Err(ModelError::Contract(format!(
            "{} gold entailment labels for {n} EDUs",
            gold_entailment.len()
        )));
    }
    let targets: Vec<usize> = gold_entailment.iter().map(|s| s.index()).collect();
    let entailment = g.cross_entropy(out.entailment_logits, &targets)?;
    let total = if lambda == 0.0 {
        decision
    } else {
        g.add(decision, g.scale(entailment, lambda))?
    };
    Ok(LossParts { total, decision, entailment: Some(entailment) })
}

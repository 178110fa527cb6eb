//! Learnable parameters and the end-to-end forward pass.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    layout_sequence, CorpusError, Decision, EntailmentState, Example, GoldSpan, TokenizedInput,
    Vocabulary,
};
use crate::decoder::{self, DecoderOutput, DecoderParams, LossParts};
use crate::encoder::{self, EncoderOutput, EncoderParams};
use crate::graph::{build_levi_graph, GraphError, LeviGraph};
use crate::numerics::{ComputeGraph, NumericsError, Tensor, Var};
use crate::span::{best_span, SpanError, SpanObjective};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Components switched off for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Drop the Levi-graph GCN contribution.
    pub disable_explicit_graph: bool,
    /// Use raw rule embeddings in place of the fused attention output.
    pub disable_implicit_graph: bool,
    /// Mean-pool EDU tokens instead of reading `[RULE]` positions.
    pub disable_rule_marker: bool,
}

impl Ablation {
    pub fn label(&self) -> String {
        match (self.disable_explicit_graph, self.disable_implicit_graph, self.disable_rule_marker) {
            (false, false, false) => "DGM".into(),
            (true, false, false) => "w/o Explicit Discourse Graph".into(),
            (false, true, false) => "w/o Implicit Discourse Graph".into(),
            (true, true, false) => "w/o both".into(),
            (false, false, true) => "w/o [RULE]".into(),
            (e, i, r) => {
                let mut parts = Vec::new();
                if e {
                    parts.push("explicit");
                }
                if i {
                    parts.push("implicit");
                }
                if r {
                    parts.push("[RULE]");
                }
                format!("w/o {}", parts.join(" + "))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub ablation: Ablation,
    pub span_objective: SpanObjective,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.vocab_size < Vocabulary::RESERVED.len() {
            return Err(ModelError::Config(format!(
                "d = {}, heads = {}, vocab = {} must be positive",
                self.d, self.heads, self.vocab_size
            )));
        }
        if self.d % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "d = {} is not divisible by {} heads",
                self.d, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub(crate) fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(Tensor::zeros(rows, cols));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Parameter group of a tensor name: its prefix up to the last `.`.
    pub fn group_of(name: &str) -> &str {
        name.rsplit_once('.').map_or(name, |(g, _)| g)
    }
}

/// Weight (`in x out`) and bias (`1 x out`) of a fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub(crate) fn new(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), input, output),
            bias: store.add(format!("{name}.bias"), 1, output),
        }
    }

    pub fn apply(&self, b: &Bound, x: Var) -> Result<Var> {
        let g = b.graph;
        Ok(g.add_row(g.matmul(x, b.var(self.weight))?, b.var(self.bias))?)
    }
}

/// Multi-head attention projections, each `d x d`, without biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
    pub heads: usize,
}

impl AttentionParams {
    pub(crate) fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize) -> Self {
        Self {
            query: store.add(format!("{name}.query"), d, d),
            key: store.add(format!("{name}.key"), d, d),
            value: store.add(format!("{name}.value"), d, d),
            output: store.add(format!("{name}.output"), d, d),
            heads,
        }
    }
}

/// Start and end vectors of the span head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanHeadParams {
    pub start: ParamId,
    pub end: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub span: SpanHeadParams,
}

impl ModelParams {
    /// All-zero parameters with the layout implied by `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let encoder = EncoderParams::new(&mut store, &config);
        let decoder = DecoderParams::new(&mut store, &config);
        let span = SpanHeadParams {
            start: store.add("span.start", config.d, 1),
            end: store.add("span.end", config.d, 1),
        };
        Ok(Self { config, store, encoder, decoder, span })
    }

    /// Seeded initialization: uniform Xavier bounds for matrices,
    /// `±sqrt(3/d)` for embedding rows, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let mut rng = Pcg64::seed_from_u64(seed);
        let d = params.config.d as f64;
        for (name, t) in params.store.names.iter().zip(params.store.tensors.iter_mut()) {
            let bound = if name.ends_with(".bias") {
                0.0
            } else if name.starts_with("embed.") {
                (3.0 / d).sqrt()
            } else {
                (6.0 / (t.rows() + t.cols()) as f64).sqrt()
            };
            if bound > 0.0 {
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
            }
        }
        Ok(params)
    }
}

/// Parameters recorded on one [`ComputeGraph`].
pub struct Bound<'g> {
    pub graph: &'g ComputeGraph,
    vars: Vec<Var>,
}

impl<'g> Bound<'g> {
    /// Tracked leaves, for training.
    pub fn variables(graph: &'g ComputeGraph, store: &ParamStore) -> Self {
        let vars = store.tensors.iter().map(|t| graph.variable(t.clone())).collect();
        Self { graph, vars }
    }

    /// Untracked leaves, for inference.
    pub fn constants(graph: &'g ComputeGraph, store: &ParamStore) -> Self {
        let vars = store.tensors.iter().map(|t| graph.constant(t.clone())).collect();
        Self { graph, vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient per parameter, zero-filled where nothing flowed.
    pub fn gradients(&self, store: &ParamStore) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&store.tensors)
            .map(|(v, t)| {
                self.graph
                    .grad(*v)
                    .unwrap_or_else(|| Tensor::new(t.shape().to_vec(), vec![0.0; t.numel()]).unwrap())
            })
            .collect()
    }
}

/// Recorded forward pass of one example.
pub struct Forward {
    pub encoder: EncoderOutput,
    pub decoder: DecoderOutput,
    /// `N x 1` start and end scores over all EDU tokens, EDU-major.
    pub span_start: Option<Var>,
    pub span_end: Option<Var>,
    /// EDU of each scored token and its offset within the EDU.
    pub span_tokens: Vec<(usize, usize)>,
}

/// Plain-value predictions for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub decision: Decision,
    pub decision_logits: [f64; 4],
    pub attention: Vec<f64>,
    pub entailment: Vec<EntailmentState>,
    pub entailment_logits: Vec<[f64; 3]>,
    pub span: Option<GoldSpan>,
}

/// First index of the maximum; lower indices win ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Prepared inputs for one example.
pub struct Prepared {
    pub input: TokenizedInput,
    pub graph: LeviGraph,
}

pub fn prepare(example: &Example, vocab: &Vocabulary, max_len: usize) -> Result<Prepared> {
    let input = layout_sequence(example, vocab, max_len)?;
    let graph = build_levi_graph(example.edu_count(), &example.relation_links)?;
    Ok(Prepared { input, graph })
}

/// Encoder, decoder and span head over one prepared example.
pub fn forward(b: &Bound, params: &ModelParams, prepared: &Prepared) -> Result<Forward> {
    let g = b.graph;
    let enc = encoder::encode(b, &params.encoder, &params.config, &prepared.input, &prepared.graph)?;
    let dec = decoder::decode(b, &params.decoder, enc.combined, enc.segments)?;

    let mut span_tokens = Vec::new();
    let mut rows = Vec::new();
    for (k, positions) in enc.edu_token_rows.iter().enumerate() {
        for (offset, row) in positions.iter().enumerate() {
            span_tokens.push((k, offset));
            rows.push(*row);
        }
    }
    let (span_start, span_end) = if rows.is_empty() {
        (None, None)
    } else {
        let edus: Vec<usize> = span_tokens.iter().map(|(k, _)| *k).collect();
        let reps = g.add(g.gather_rows(enc.fused, &rows)?, g.gather_rows(dec.refined, &edus)?)?;
        (
            Some(g.matmul(reps, b.var(params.span.start))?),
            Some(g.matmul(reps, b.var(params.span.end))?),
        )
    };
    Ok(Forward { encoder: enc, decoder: dec, span_start, span_end, span_tokens })
}

/// Scalar training objective of one example and its parts.
pub struct ExampleLoss {
    pub total: Var,
    pub parts: LossParts,
    pub span: Option<Var>,
}

/// Joint decision/entailment loss plus `span_weight` times the span
/// start/end cross-entropy on examples with a gold span.
pub fn example_loss(
    b: &Bound,
    fwd: &Forward,
    example: &Example,
    lambda: f64,
    span_weight: f64,
) -> Result<ExampleLoss> {
    let g = b.graph;
    let parts = decoder::compute_loss(
        g,
        &fwd.decoder,
        &example.gold_entailment,
        example.gold_decision,
        lambda,
    )?;
    let mut total = parts.total;
    let mut span = None;
    if let (Some(gold), Some(s), Some(e), true) =
        (example.gold_span, fwd.span_start, fwd.span_end, span_weight > 0.0)
    {
        let locate = |offset: usize| {
            fwd.span_tokens
                .iter()
                .position(|&(k, o)| k == gold.edu && o == offset)
                .ok_or_else(|| ModelError::Contract(format!("gold span {gold:?} was truncated")))
        };
        let (si, ei) = (locate(gold.start)?, locate(gold.end)?);
        let ls = g.cross_entropy(g.transpose(s)?, &[si])?;
        let le = g.cross_entropy(g.transpose(e)?, &[ei])?;
        let l = g.add(ls, le)?;
        total = g.add(total, g.scale(l, span_weight))?;
        span = Some(l);
    }
    Ok(ExampleLoss { total, parts, span })
}

pub fn predict(params: &ModelParams, vocab: &Vocabulary, example: &Example) -> Result<Prediction> {
    let prepared = prepare(example, vocab, params.config.max_len)?;
    let g = ComputeGraph::new();
    let b = Bound::constants(&g, &params.store);
    let fwd = forward(&b, params, &prepared)?;
    read_prediction(&g, params, &fwd)
}

pub fn read_prediction(g: &ComputeGraph, params: &ModelParams, fwd: &Forward) -> Result<Prediction> {
    let z = g.value(fwd.decoder.decision_logits);
    let decision_logits: [f64; 4] = z.data().try_into().expect("four decision logits");
    let decision = Decision::ALL[argmax(&decision_logits)];
    let f = g.value(fwd.decoder.entailment_logits);
    let entailment_logits: Vec<[f64; 3]> =
        (0..f.rows()).map(|i| f.row(i).try_into().expect("three states")).collect();
    let entailment = entailment_logits
        .iter()
        .map(|row| EntailmentState::ALL[argmax(row)])
        .collect();
    let attention = g.value(fwd.decoder.attention).into_data();

    let span = match (decision, fwd.span_start, fwd.span_end) {
        (Decision::Inquire, Some(s), Some(e)) => {
            let (s, e) = (g.value(s), g.value(e));
            let n = fwd.encoder.edu_token_rows.len();
            let mut starts = vec![Vec::new(); n];
            let mut ends = vec![Vec::new(); n];
            for (row, &(k, _)) in fwd.span_tokens.iter().enumerate() {
                starts[k].push(s.data()[row]);
                ends[k].push(e.data()[row]);
            }
            Some(best_span(&starts, &ends, params.config.span_objective)?.position())
        }
        _ => None,
    };
    Ok(Prediction { decision, decision_logits, attention, entailment, entailment_logits, span })
}

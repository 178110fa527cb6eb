//! Explicit (gated relational GCN over the Levi graph) and implicit (masked
//! self-attention with gated fusion) encoders.

use crate::corpus::{TokenizedInput, Vocabulary};
use crate::graph::{EdgeType, LeviGraph, VertexKind};
use crate::model::{AttentionParams, Bound, Linear, ModelConfig, ModelError, ParamId, ParamStore, Result};
use crate::numerics::{MaskMatrix, Tensor, Var};

/// Message weight `w_r` (`d x d`) and sender gate `W_{r,g}` (`d x 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GcnEdgeParams {
    pub weight: ParamId,
    pub gate: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: ParamId,
    pub relation_embedding: ParamId,
    /// Indexed by layer, then by [`EdgeType::index`].
    pub gcn: Vec<Vec<GcnEdgeParams>>,
    pub attention: AttentionParams,
    pub fuse_local: Linear,
    pub fuse_context: Linear,
    pub fuse_gate: Linear,
}

impl EncoderParams {
    pub(crate) fn new(store: &mut ParamStore, config: &ModelConfig) -> Self {
        let d = config.d;
        let token_embedding = store.add("embed.token", config.vocab_size, d);
        let relation_embedding = store.add("embed.relation", 16, d);
        let gcn = (0..config.layers)
            .map(|l| {
                EdgeType::ALL
                    .iter()
                    .map(|ty| GcnEdgeParams {
                        weight: store.add(format!("gcn{l}.{}.weight", ty.name()), d, d),
                        gate: store.add(format!("gcn{l}.{}.gate", ty.name()), d, 1),
                    })
                    .collect()
            })
            .collect();
        Self {
            token_embedding,
            relation_embedding,
            gcn,
            attention: AttentionParams::new(store, "implicit", d, config.heads),
            fuse_local: Linear::new(store, "fuse.local", 4 * d, d),
            fuse_context: Linear::new(store, "fuse.context", 4 * d, d),
            fuse_gate: Linear::new(store, "fuse.gate", 2 * d, d),
        }
    }
}

pub struct EncoderOutput {
    /// `G`: GCN states of the EDU vertices, `n x d`; absent when ablated.
    pub explicit: Option<Var>,
    /// `C`: fused rule-region states, `s x d`.
    pub fused: Var,
    /// `r`: one row per EDU, `n x d`.
    pub combined: Var,
    /// `[u_q; u_s; h_1..h_m]`, one row per non-rule segment.
    pub segments: Var,
    /// Rows of `fused` holding each EDU's word tokens.
    pub edu_token_rows: Vec<Vec<usize>>,
}

/// Initial vertex states: EDU rows from `rule_vectors`, relation rows from
/// the relation embedding table, the global row from `scenario`.
pub fn init_vertex_states(
    b: &Bound,
    params: &EncoderParams,
    graph: &LeviGraph,
    rule_vectors: Var,
    scenario: Var,
) -> Result<Var> {
    let g = b.graph;
    let (n, _) = g.dims(rule_vectors);
    if n != graph.edu_count() {
        return Err(ModelError::Contract(format!(
            "{n} rule vectors for {} EDU vertices",
            graph.edu_count()
        )));
    }
    let relations: Vec<usize> = graph
        .vertices()
        .iter()
        .filter_map(|v| match v {
            VertexKind::Relation(r) => Some(r.index()),
            _ => None,
        })
        .collect();
    let mut parts = vec![rule_vectors];
    if !relations.is_empty() {
        parts.push(g.gather_rows(b.var(params.relation_embedding), &relations)?);
    }
    parts.push(scenario);
    Ok(g.concat_rows(&parts)?)
}

/// Row-normalized in-neighbour matrix of one edge type, if it has edges.
fn adjacency(graph: &LeviGraph, ty: EdgeType) -> Option<Tensor> {
    let v = graph.vertex_count();
    let neighbors = graph.in_neighbors(ty);
    if neighbors.iter().all(Vec::is_empty) {
        return None;
    }
    let mut a = Tensor::zeros(v, v);
    for (p, qs) in neighbors.iter().enumerate() {
        for &q in qs {
            let cur = a.get(p, q);
            a.set(p, q, cur + 1.0 / qs.len() as f64);
        }
    }
    Some(a)
}

/// One gated relational GCN layer:
/// `h'_p = ReLU(sum_r sum_{q in N_r(p)} sigmoid(h_q W_{r,g}) / c_{p,r} * h_q w_r)`.
pub fn gcn_layer(b: &Bound, params: &EncoderParams, graph: &LeviGraph, h: Var, layer: usize) -> Result<Var> {
    let g = b.graph;
    let (v, d) = g.dims(h);
    let weights = params
        .gcn
        .get(layer)
        .ok_or_else(|| ModelError::Contract(format!("no GCN layer {layer}")))?;
    let expected = g.dims(b.var(weights[0].weight)).0;
    if v != graph.vertex_count() || d != expected {
        return Err(ModelError::Contract(format!(
            "vertex states are {v} x {d}, graph has {} vertices and d = {expected}",
            graph.vertex_count()
        )));
    }
    let mut acc: Option<Var> = None;
    for ty in EdgeType::ALL {
        let Some(a) = adjacency(graph, ty) else { continue };
        let p = weights[ty.index()];
        let gate = g.sigmoid(g.matmul(h, b.var(p.gate))?);
        let msg = g.mul_col(g.matmul(h, b.var(p.weight))?, gate)?;
        let agg = g.matmul(g.constant(a), msg)?;
        acc = Some(match acc {
            Some(x) => g.add(x, agg)?,
            None => agg,
        });
    }
    Ok(match acc {
        Some(x) => g.relu(x),
        None => g.constant(Tensor::zeros(v, d)),
    })
}

/// Local (same EDU) and contextual (other EDUs) attention masks.
pub fn build_masks(edu_index: &[usize]) -> (MaskMatrix, MaskMatrix) {
    let n = edu_index.len();
    let local = MaskMatrix::from_fn(n, |i, j| edu_index[i] == edu_index[j]);
    let context = MaskMatrix::from_fn(n, |i, j| edu_index[i] != edu_index[j]);
    (local, context)
}

/// Multi-head self-attention; `mask` is added to every head's logits.
/// Rows whose mask is fully closed come out as zeros.
pub fn multi_head_attention(b: &Bound, params: &AttentionParams, x: Var, mask: Option<&MaskMatrix>) -> Result<Var> {
    let g = b.graph;
    let (s, d) = g.dims(x);
    if s == 0 {
        return Err(ModelError::Contract("attention over an empty sequence".into()));
    }
    let heads = params.heads;
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::Config(format!("d = {d} is not divisible by {heads} heads")));
    }
    if let Some(m) = mask {
        if m.size() != s {
            return Err(ModelError::Contract(format!("{s} x {s} attention with a {0} x {0} mask", m.size())));
        }
    }
    let dh = d / heads;
    let q = g.matmul(x, b.var(params.query))?;
    let k = g.matmul(x, b.var(params.key))?;
    let v = g.matmul(x, b.var(params.value))?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (g.slice_cols(q, lo, hi)?, g.slice_cols(k, lo, hi)?, g.slice_cols(v, lo, hi)?)
        };
        let logits = g.scale(g.matmul(qh, g.transpose(kh)?)?, scale);
        let weights = match mask {
            Some(m) => g.masked_softmax(logits, m.as_tensor())?,
            None => g.softmax(logits)?,
        };
        outs.push(g.matmul(weights, vh)?);
    }
    let joined = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    Ok(g.matmul(joined, b.var(params.output))?)
}

/// `G_i = MHSA(E, M_i)` over the rule region.
pub fn implicit_encode(b: &Bound, params: &EncoderParams, e: Var, mask: &MaskMatrix) -> Result<Var> {
    multi_head_attention(b, &params.attention, e, Some(mask))
}

/// Gated fusion `C = g * G_l + (1 - g) * G_c`.
pub fn gated_fuse(b: &Bound, params: &EncoderParams, e: Var, local: Var, context: Var) -> Result<Var> {
    let g = b.graph;
    let (de, dl, dc) = (g.dims(e), g.dims(local), g.dims(context));
    if de != dl || de != dc {
        return Err(ModelError::Contract(format!("fusion inputs {de:?}, {dl:?}, {dc:?} differ")));
    }
    let features = |other: Var| -> Result<Var> {
        Ok(g.concat_cols(&[e, other, g.sub(e, other)?, g.mul(e, other)?])?)
    };
    let e1 = g.relu(params.fuse_local.apply(b, features(local)?)?);
    let e2 = g.relu(params.fuse_context.apply(b, features(context)?)?);
    let gate = g.sigmoid(params.fuse_gate.apply(b, g.concat_cols(&[e1, e2])?)?);
    Ok(g.add(context, g.mul(gate, g.sub(local, context)?)?)?)
}

/// Averaging matrix whose row `r` is uniform over `groups[r]`.
fn pooling(groups: &[Vec<usize>], width: usize) -> Tensor {
    let mut t = Tensor::zeros(groups.len(), width);
    for (r, cols) in groups.iter().enumerate() {
        for &c in cols {
            t.set(r, c, 1.0 / cols.len() as f64);
        }
    }
    t
}

/// Full encoder over one laid-out example and its Levi graph.
pub fn encode(
    b: &Bound,
    params: &EncoderParams,
    config: &ModelConfig,
    input: &TokenizedInput,
    graph: &LeviGraph,
) -> Result<EncoderOutput> {
    let g = b.graph;
    let n = input.rule_markers.len();
    if n != graph.edu_count() {
        return Err(ModelError::Contract(format!(
            "{n} EDUs in the input, {} in the graph",
            graph.edu_count()
        )));
    }
    let ablation = config.ablation;
    let rule = input.segments.rule.clone();
    let s = rule.len();
    let table = b.var(params.token_embedding);

    let markers: Vec<usize> = input.rule_markers.iter().map(|m| m - rule.start).collect();
    let edu_rows: Vec<Vec<usize>> = input
        .edu_tokens
        .iter()
        .map(|ps| ps.iter().map(|p| p - rule.start).collect())
        .collect();

    // Each [RULE] row also carries the mean embedding of its EDU's words.
    let raw = g.gather_rows(table, &input.ids[rule.clone()])?;
    let e = if ablation.disable_rule_marker || edu_rows.iter().all(Vec::is_empty) {
        raw
    } else {
        let mut groups = vec![Vec::new(); s];
        for (k, &m) in markers.iter().enumerate() {
            groups[m] = edu_rows[k].clone();
        }
        g.add(raw, g.matmul(g.constant(pooling(&groups, s)), raw)?)?
    };

    let read = |x: Var| -> Result<Var> {
        if ablation.disable_rule_marker {
            let groups: Vec<Vec<usize>> = (0..n)
                .map(|k| if edu_rows[k].is_empty() { vec![markers[k]] } else { edu_rows[k].clone() })
                .collect();
            Ok(g.matmul(g.constant(pooling(&groups, s)), x)?)
        } else {
            Ok(g.gather_rows(x, &markers)?)
        }
    };

    // Segment vectors average their content and closing [SEP].
    let seg = &input.segments;
    let span = |r: &std::ops::Range<usize>| (r.start..=r.end).collect::<Vec<usize>>();
    let mut groups = vec![span(&seg.question), span(&seg.scenario)];
    groups.extend(seg.history.iter().map(span));
    let prefix = g.gather_rows(table, &input.ids[..rule.start])?;
    let segments = g.matmul(g.constant(pooling(&groups, rule.start)), prefix)?;
    debug_assert_eq!(input.ids[seg.scenario.end], Vocabulary::SEP);

    let explicit = if ablation.disable_explicit_graph {
        None
    } else {
        let scenario = g.gather_rows(segments, &[1])?;
        let mut h = init_vertex_states(b, params, graph, read(e)?, scenario)?;
        for layer in 0..params.gcn.len() {
            h = gcn_layer(b, params, graph, h, layer)?;
        }
        Some(g.gather_rows(h, &(0..n).collect::<Vec<_>>())?)
    };

    let fused = if ablation.disable_implicit_graph {
        e
    } else {
        let (local, context) = build_masks(&input.rule_edu_index());
        let gl = implicit_encode(b, params, e, &local)?;
        let gc = implicit_encode(b, params, e, &context)?;
        gated_fuse(b, params, e, gl, gc)?
    };

    let mut combined = read(fused)?;
    if let Some(x) = explicit {
        combined = g.add(combined, x)?;
    }
    Ok(EncoderOutput { explicit, fused, combined, segments, edu_token_rows: edu_rows })
}

//! Explicit discourse graph.
//!
//! Each labeled discourse link `head -> dep` becomes its own relation vertex
//! sitting between the two EDUs, so relation types are carried by vertices
//! rather than edge labels. A single global vertex (the user scenario) is
//! attached to everything.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Example;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("invalid link {index}: {reason}")]
    InvalidLink { index: usize, reason: String },
    #[error("graph parse error: {0}")]
    Parse(String),
    #[error("unknown relation type `{0}`")]
    UnknownRelation(String),
}

/// The sixteen dialogue discourse relations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationType {
    Comment,
    ClarificationQuestion,
    Elaboration,
    Acknowledgement,
    Continuation,
    Explanation,
    Conditional,
    QuestionAnswer,
    Alternation,
    QuestionElaboration,
    Result,
    Background,
    Narration,
    Correction,
    Parallel,
    Contrast,
}

impl RelationType {
    pub const ALL: [RelationType; 16] = [
        Self::Comment,
        Self::ClarificationQuestion,
        Self::Elaboration,
        Self::Acknowledgement,
        Self::Continuation,
        Self::Explanation,
        Self::Conditional,
        Self::QuestionAnswer,
        Self::Alternation,
        Self::QuestionElaboration,
        Self::Result,
        Self::Background,
        Self::Narration,
        Self::Correction,
        Self::Parallel,
        Self::Contrast,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Comment => "comment",
            Self::ClarificationQuestion => "clarification-question",
            Self::Elaboration => "elaboration",
            Self::Acknowledgement => "acknowledgement",
            Self::Continuation => "continuation",
            Self::Explanation => "explanation",
            Self::Conditional => "conditional",
            Self::QuestionAnswer => "question-answer",
            Self::Alternation => "alternation",
            Self::QuestionElaboration => "question-elaboration",
            Self::Result => "result",
            Self::Background => "background",
            Self::Narration => "narration",
            Self::Correction => "correction",
            Self::Parallel => "parallel",
            Self::Contrast => "contrast",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = GraphError;

    /// Case-insensitive; `_` and `-` are interchangeable and the
    /// `-pair` suffix of `question-answer-pair` is accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = norm.strip_suffix("-pair").unwrap_or(&norm);
        Self::ALL
            .into_iter()
            .find(|r| r.name() == norm)
            .ok_or_else(|| GraphError::UnknownRelation(s.to_string()))
    }
}

/// A typed dependency between two EDUs of one rule document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscourseLink {
    pub head: usize,
    pub dep: usize,
    pub relation: RelationType,
}

impl DiscourseLink {
    pub fn new(head: usize, dep: usize, relation: RelationType) -> Self {
        Self { head, dep, relation }
    }
}

pub fn validate_links(edu_count: usize, links: &[DiscourseLink]) -> Result<(), GraphError> {
    for (index, l) in links.iter().enumerate() {
        let reason = if l.head == l.dep {
            format!("self-link on EDU {}", l.head)
        } else if l.head >= edu_count || l.dep >= edu_count {
            format!("({}, {}) outside {} EDUs", l.head, l.dep, edu_count)
        } else {
            continue;
        };
        return Err(GraphError::InvalidLink { index, reason });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeType {
    DefaultIn,
    DefaultOut,
    ReverseIn,
    ReverseOut,
    #[serde(rename = "self")]
    SelfLoop,
    Global,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        Self::DefaultIn,
        Self::DefaultOut,
        Self::ReverseIn,
        Self::ReverseOut,
        Self::SelfLoop,
        Self::Global,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DefaultIn => "default-in",
            Self::DefaultOut => "default-out",
            Self::ReverseIn => "reverse-in",
            Self::ReverseOut => "reverse-out",
            Self::SelfLoop => "self",
            Self::Global => "global",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexKind {
    Edu(usize),
    Relation(RelationType),
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "type")]
    pub ty: EdgeType,
}

/// Levi graph over EDU, relation-instance and global vertices.
///
/// Vertex order is canonical: EDUs by index, then one relation vertex per
/// link in link order, then the global vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeviGraph {
    edu_count: usize,
    vertices: Vec<VertexKind>,
    edges: Vec<Edge>,
}

/// Builds the Levi graph of a rule document.
///
/// For a link `(u1, R, u2)` with relation vertex `v`:
/// `u1 -> v` default-in, `v -> u2` default-out, `u2 -> v` reverse-in,
/// `v -> u1` reverse-out. Every vertex has a self edge, and the global
/// vertex has a global edge to and from every other vertex.
pub fn build_levi_graph(edu_count: usize, links: &[DiscourseLink]) -> Result<LeviGraph, GraphError> {
    validate_links(edu_count, links)?;
    let mut vertices: Vec<VertexKind> = (0..edu_count).map(VertexKind::Edu).collect();
    vertices.extend(links.iter().map(|l| VertexKind::Relation(l.relation)));
    vertices.push(VertexKind::Global);

    let global = vertices.len() - 1;
    let mut edges = Vec::with_capacity(4 * links.len() + 3 * vertices.len());
    for (i, l) in links.iter().enumerate() {
        let v = edu_count + i;
        edges.push(Edge { src: l.head, dst: v, ty: EdgeType::DefaultIn });
        edges.push(Edge { src: v, dst: l.dep, ty: EdgeType::DefaultOut });
        edges.push(Edge { src: l.dep, dst: v, ty: EdgeType::ReverseIn });
        edges.push(Edge { src: v, dst: l.head, ty: EdgeType::ReverseOut });
    }
    for p in 0..vertices.len() {
        edges.push(Edge { src: p, dst: p, ty: EdgeType::SelfLoop });
    }
    for p in 0..global {
        edges.push(Edge { src: global, dst: p, ty: EdgeType::Global });
        edges.push(Edge { src: p, dst: global, ty: EdgeType::Global });
    }
    Ok(LeviGraph { edu_count, vertices, edges })
}

impl LeviGraph {
    pub fn edu_count(&self) -> usize {
        self.edu_count
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[VertexKind] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn global_vertex(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn count_edges(&self, ty: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.ty == ty).count()
    }

    /// In-neighbours of every vertex under edge type `ty`.
    pub fn in_neighbors(&self, ty: EdgeType) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for e in self.edges.iter().filter(|e| e.ty == ty) {
            out[e.dst].push(e.src);
        }
        out
    }

    pub fn in_degree(&self, v: usize, filter: impl Fn(EdgeType) -> bool) -> usize {
        self.edges.iter().filter(|e| e.dst == v && filter(e.ty)).count()
    }

    pub fn out_degree(&self, v: usize, filter: impl Fn(EdgeType) -> bool) -> usize {
        self.edges.iter().filter(|e| e.src == v && filter(e.ty)).count()
    }
}

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: usize,
    kind: String,
    payload: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    vertices: Vec<VertexRecord>,
    edges: Vec<Edge>,
}

/// Pretty JSON dump with `vertices[{id, kind, payload}]` and `edges[{src, dst, type}]`.
pub fn serialize_graph(graph: &LeviGraph) -> String {
    let vertices = graph
        .vertices
        .iter()
        .enumerate()
        .map(|(id, v)| {
            let (kind, payload) = match v {
                VertexKind::Edu(i) => ("edu", serde_json::json!(i)),
                VertexKind::Relation(r) => ("relation", serde_json::json!(r.name())),
                VertexKind::Global => ("global", serde_json::Value::Null),
            };
            VertexRecord { id, kind: kind.into(), payload }
        })
        .collect();
    let doc = GraphDocument { vertices, edges: graph.edges.clone() };
    serde_json::to_string_pretty(&doc).expect("graph document serializes")
}

pub fn deserialize_graph(text: &str) -> Result<LeviGraph, GraphError> {
    let doc: GraphDocument =
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let parse = |msg: String| GraphError::Parse(msg);

    let mut vertices = Vec::with_capacity(doc.vertices.len());
    for (pos, rec) in doc.vertices.iter().enumerate() {
        if rec.id != pos {
            return Err(parse(format!("vertex id {} at position {pos}", rec.id)));
        }
        let kind = match rec.kind.as_str() {
            "edu" => {
                let i = rec
                    .payload
                    .as_u64()
                    .ok_or_else(|| parse(format!("vertex {pos}: EDU payload must be an index")))?;
                VertexKind::Edu(i as usize)
            }
            "relation" => {
                let name = rec
                    .payload
                    .as_str()
                    .ok_or_else(|| parse(format!("vertex {pos}: relation payload must be a name")))?;
                VertexKind::Relation(name.parse()?)
            }
            "global" => VertexKind::Global,
            other => return Err(parse(format!("vertex {pos}: unknown kind `{other}`"))),
        };
        vertices.push(kind);
    }

    let edu_count = vertices.iter().take_while(|v| matches!(v, VertexKind::Edu(_))).count();
    for (i, v) in vertices.iter().enumerate() {
        let ok = match v {
            VertexKind::Edu(k) => i < edu_count && *k == i,
            VertexKind::Relation(_) => i >= edu_count && i + 1 < vertices.len(),
            VertexKind::Global => i + 1 == vertices.len(),
        };
        if !ok {
            return Err(parse(format!("vertex {i} out of canonical order")));
        }
    }
    if !matches!(vertices.last(), Some(VertexKind::Global)) {
        return Err(parse("missing global vertex".into()));
    }
    if let Some(e) = doc.edges.iter().find(|e| e.src >= vertices.len() || e.dst >= vertices.len()) {
        return Err(parse(format!("edge {} -> {} references a missing vertex", e.src, e.dst)));
    }
    Ok(LeviGraph { edu_count, vertices, edges: doc.edges })
}

/// Link counts per relation type; every type is present, absent ones as 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationHistogram(BTreeMap<RelationType, usize>);

impl RelationHistogram {
    pub fn get(&self, r: RelationType) -> usize {
        self.0[&r]
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RelationType, usize)> + '_ {
        self.0.iter().map(|(r, c)| (*r, *c))
    }
}

impl fmt::Display for RelationHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>8}", "Relation Types", "Count")?;
        writeln!(f, "{:-<33}", "")?;
        for (r, c) in self.iter() {
            writeln!(f, "{:<24} {:>8}", r.name(), c)?;
        }
        writeln!(f, "{:-<33}", "")?;
        write!(f, "{:<24} {:>8}", "total", self.total())
    }
}

pub fn relation_histogram(dataset: &[Example]) -> RelationHistogram {
    let mut counts: BTreeMap<RelationType, usize> =
        RelationType::ALL.iter().map(|r| (*r, 0)).collect();
    for link in dataset.iter().flat_map(|ex| &ex.relation_links) {
        *counts.get_mut(&link.relation).expect("all types present") += 1;
    }
    RelationHistogram(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_edus_one_continuation() {
        let g = build_levi_graph(2, &[DiscourseLink::new(0, 1, RelationType::Continuation)]).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edges().len(), 14);
        assert_eq!(g.count_edges(EdgeType::SelfLoop), 4);
        assert_eq!(g.count_edges(EdgeType::Global), 6);
        for ty in &EdgeType::ALL[..4] {
            assert_eq!(g.count_edges(*ty), 1);
        }
        assert_eq!(g.vertices()[2], VertexKind::Relation(RelationType::Continuation));
        assert!(g.edges().contains(&Edge { src: 0, dst: 2, ty: EdgeType::DefaultIn }));
        assert!(g.edges().contains(&Edge { src: 2, dst: 1, ty: EdgeType::DefaultOut }));
        assert!(g.edges().contains(&Edge { src: 1, dst: 2, ty: EdgeType::ReverseIn }));
        assert!(g.edges().contains(&Edge { src: 2, dst: 0, ty: EdgeType::ReverseOut }));
    }

    #[test]
    fn single_edu_no_links() {
        let g = build_levi_graph(1, &[]).unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edges().len(), 4);
        assert_eq!(g.global_vertex(), 1);
    }

    #[test]
    fn rejects_bad_links() {
        let self_link = [DiscourseLink::new(1, 1, RelationType::Comment)];
        assert!(matches!(
            build_levi_graph(2, &self_link),
            Err(GraphError::InvalidLink { index: 0, .. })
        ));
        let out_of_range = [
            DiscourseLink::new(0, 1, RelationType::Comment),
            DiscourseLink::new(0, 5, RelationType::Comment),
        ];
        assert!(matches!(
            build_levi_graph(2, &out_of_range),
            Err(GraphError::InvalidLink { index: 1, .. })
        ));
    }

    #[test]
    fn relation_names_parse() {
        for r in RelationType::ALL {
            assert_eq!(r.name().parse::<RelationType>().unwrap(), r);
        }
        assert_eq!(
            "Question-answer_pair".parse::<RelationType>().unwrap(),
            RelationType::QuestionAnswer
        );
        assert_eq!(
            "Clarification_question".parse::<RelationType>().unwrap(),
            RelationType::ClarificationQuestion
        );
        assert!("sarcasm".parse::<RelationType>().is_err());
    }

    #[test]
    fn serde_names_match_display() {
        for r in RelationType::ALL {
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.name()));
        }
        for t in EdgeType::ALL {
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
    }

    #[test]
    fn dump_round_trip_and_canonical_bytes() {
        let links = [
            DiscourseLink::new(0, 1, RelationType::Continuation),
            DiscourseLink::new(1, 2, RelationType::Alternation),
        ];
        let a = build_levi_graph(3, &links).unwrap();
        let b = build_levi_graph(3, &links).unwrap();
        let text = serialize_graph(&a);
        assert_eq!(text, serialize_graph(&b));
        assert_eq!(deserialize_graph(&text).unwrap(), a);
    }

    #[test]
    fn malformed_dump() {
        assert!(matches!(deserialize_graph("{"), Err(GraphError::Parse(_))));
        let no_global = r#"{"vertices":[{"id":0,"kind":"edu","payload":0}],"edges":[]}"#;
        assert!(deserialize_graph(no_global).is_err());
        let bad_edge = r#"{"vertices":[{"id":0,"kind":"global","payload":null}],
            "edges":[{"src":0,"dst":3,"type":"self"}]}"#;
        assert!(deserialize_graph(bad_edge).is_err());
        let bad_type = r#"{"vertices":[{"id":0,"kind":"global","payload":null}],
            "edges":[{"src":0,"dst":0,"type":"sideways"}]}"#;
        assert!(deserialize_graph(bad_type).is_err());
    }
}

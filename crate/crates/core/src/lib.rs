//! Dialogue graph modeling for conversational machine reading.
//!
//! A rule document split into EDUs is encoded twice: as a Levi graph of its
//! discourse relations run through a gated relational GCN, and as token-level
//! self-attention under complementary intra-EDU / inter-EDU masks. The fused
//! EDU vectors feed an interaction layer, per-EDU entailment scores, an
//! attention-pooled decision head and an extractive span head.

pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod graph;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod span;

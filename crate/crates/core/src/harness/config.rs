use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, Result};
use crate::corpus::DEFAULT_MAX_LEN;
use crate::model::{Ablation, ModelConfig};
use crate::span::SpanObjective;

/// Hyperparameters of one training run. Read from flat TOML; a `preset`
/// key (`toy` or `paper`, default `toy`) supplies the values not given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub lambda: f64,
    pub span_weight: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub max_len: usize,
    pub span_objective: SpanObjective,
    pub disable_explicit_graph: bool,
    pub disable_implicit_graph: bool,
    pub disable_rule_marker: bool,
}

impl TrainConfig {
    pub fn toy(seed: u64) -> Self {
        Self {
            seed,
            d: 64,
            layers: 2,
            heads: 4,
            lambda: 1.0,
            span_weight: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 200,
            clip_norm: 2.0,
            max_len: DEFAULT_MAX_LEN,
            span_objective: SpanObjective::Max,
            disable_explicit_graph: false,
            disable_implicit_graph: false,
            disable_rule_marker: false,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            d: 1024,
            learning_rate: 5e-5,
            batch_size: 16,
            epochs: 5,
            heads: 16,
            ..Self::toy(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy(seed)),
            "paper" => Ok(Self::paper(seed)),
            other => Err(HarnessError::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))?;
        let preset = match table.remove("preset") {
            None => "toy".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(v) => return Err(HarnessError::Config(format!("preset must be a string, got {v}"))),
        };
        if !table.contains_key("seed") {
            return Err(HarnessError::Config("seed is required".into()));
        }
        let base = toml::Table::try_from(Self::preset(&preset, 0)?)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut merged = base;
        merged.extend(table);
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ablation(&self) -> Ablation {
        Ablation {
            disable_explicit_graph: self.disable_explicit_graph,
            disable_implicit_graph: self.disable_implicit_graph,
            disable_rule_marker: self.disable_rule_marker,
        }
    }

    pub fn with_ablation(&self, ablation: Ablation) -> Self {
        Self {
            disable_explicit_graph: ablation.disable_explicit_graph,
            disable_implicit_graph: ablation.disable_implicit_graph,
            disable_rule_marker: ablation.disable_rule_marker,
            ..self.clone()
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d: self.d,
            layers: self.layers,
            heads: self.heads,
            max_len: self.max_len,
            ablation: self.ablation(),
            span_objective: self.span_objective,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        for (name, v) in [
            ("d", self.d),
            ("layers", self.layers),
            ("heads", self.heads),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d % self.heads != 0 {
            return bad(format!("d = {} is not divisible by {} heads", self.d, self.heads));
        }
        for (name, v) in [("lambda", self.lambda), ("span_weight", self.span_weight), ("learning_rate", self.learning_rate)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} = {v} must be finite and nonnegative"));
            }
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad(format!("clip_norm = {} must be positive", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

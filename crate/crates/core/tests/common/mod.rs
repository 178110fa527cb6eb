#![allow(dead_code)]

use dgm_core::corpus::{generate_synthetic, Example, SynthConfig, Vocabulary};
use dgm_core::harness::TrainConfig;
use dgm_core::model::{Ablation, ModelConfig, ModelParams};
use dgm_core::numerics::Tensor;

pub fn small_config(vocab: usize) -> ModelConfig {
    ModelConfig { d: 8, heads: 2, ..TrainConfig::toy(0).model_config(vocab) }
}

pub fn with_ablation(mut config: ModelConfig, ablation: Ablation) -> ModelConfig {
    config.ablation = ablation;
    config
}

pub fn corpus(seed: u64, examples: usize) -> Vec<Example> {
    generate_synthetic(&SynthConfig { examples, ..SynthConfig::default() }, seed).unwrap()
}

/// First generated example with exactly `edus` EDUs and a gold span when
/// `inquire` is set.
pub fn example_with(edus: usize, inquire: bool, seed: u64) -> Example {
    let cfg = SynthConfig { examples: 400, min_edus: edus, max_edus: edus, ..SynthConfig::default() };
    generate_synthetic(&cfg, seed)
        .unwrap()
        .into_iter()
        .find(|e| e.gold_span.is_some() == inquire && !e.relation_links.is_empty())
        .expect("generator produces such an example")
}

pub fn small_model(examples: &[Example], seed: u64) -> (Vocabulary, ModelParams) {
    let vocab = Vocabulary::build(examples);
    let params = ModelParams::init(small_config(vocab.len()), seed).unwrap();
    (vocab, params)
}

pub fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

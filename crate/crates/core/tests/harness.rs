mod common;

use common::*;
use dgm_core::corpus::{generate_synthetic, SynthConfig, Vocabulary};
use dgm_core::harness::{
    evaluate, gradient_check, load_checkpoint, run_ablation, save_checkpoint, train, Checkpoint, HarnessError,
    TrainConfig, Trainer,
};
use dgm_core::model::{prepare, Ablation, ModelParams};

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig { d: 8, heads: 2, batch_size: 8, epochs: 2, ..TrainConfig::toy(seed) }
}

fn data(seed: u64, n: usize) -> Vec<dgm_core::corpus::Example> {
    generate_synthetic(&SynthConfig { examples: n, ..SynthConfig::default() }, seed).unwrap()
}

#[test]
fn training_is_bitwise_deterministic() {
    let (tr, dev) = (data(1, 40), data(2, 20));
    let a = train(&tiny_config(3), &tr, &dev).unwrap();
    let b = train(&tiny_config(3), &tr, &dev).unwrap();
    let log = |o: &dgm_core::harness::TrainOutcome| serde_json::to_string(&o.log).unwrap();
    assert_eq!(log(&a), log(&b));
    let ck = |o: dgm_core::harness::TrainOutcome| Checkpoint { config: o.config, vocab: o.vocab, params: o.params }.to_json();
    assert_eq!(ck(a), ck(b));
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let tr = data(4, 30);
    let cfg = TrainConfig { learning_rate: 0.0, ..tiny_config(4) };
    let mut t = Trainer::new(cfg, &tr, &[]).unwrap();
    let before = t.params().clone();
    t.run_epoch().unwrap();
    assert_eq!(t.params(), &before);
}

#[test]
fn checkpoint_round_trip_reproduces_report() {
    let (tr, dev) = (data(5, 30), data(6, 30));
    let out = train(&tiny_config(5), &tr, &dev).unwrap();
    let report = evaluate(&out.params, &out.vocab, &dev).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&path, &Checkpoint { config: out.config.clone(), vocab: out.vocab.clone(), params: out.params.clone() }).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, out.params);
    assert_eq!(evaluate(&back.params, &back.vocab, &dev).unwrap(), report);

    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("\"seed\":5", "\"seed\":6", 1);
    assert!(matches!(Checkpoint::from_json(&tampered), Err(HarnessError::Checkpoint(_))));
}

#[test]
fn micro_is_support_weighted_mean_of_classes() {
    let (tr, dev) = (data(7, 30), data(8, 80));
    let out = train(&tiny_config(7), &tr, &[]).unwrap();
    let r = evaluate(&out.params, &out.vocab, &dev).unwrap();
    let weighted: f64 = r
        .per_class
        .iter()
        .zip(&r.support)
        .map(|(acc, n)| acc.unwrap_or(0.0) * *n as f64)
        .sum::<f64>()
        / r.count as f64;
    assert!((weighted - r.micro).abs() < 1e-12);
    for v in [r.micro, r.macro_] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn non_finite_loss_names_the_batch() {
    let tr = data(9, 20);
    let cfg = tiny_config(9);
    let vocab = Vocabulary::build(&tr);
    let mut params = ModelParams::init(cfg.model_config(vocab.len()), 9).unwrap();
    params.store.get_mut(params.decoder.decision.bias).data_mut()[0] = f64::NAN;
    let mut t = Trainer::resume(cfg, vocab, params, &tr, &[]).unwrap();
    let err = t.run_epoch().unwrap_err();
    assert!(matches!(err, HarnessError::NonFinite { epoch: 1, batch: 0, .. }), "{err}");
    assert!(err.to_string().contains("batch 0"), "{err}");
}

#[test]
fn empty_inputs_are_rejected() {
    assert!(train(&tiny_config(1), &[], &[]).is_err());
    let out = train(&tiny_config(1), &data(1, 10), &[]).unwrap();
    assert!(evaluate(&out.params, &out.vocab, &[]).is_err());
}

#[test]
fn ablation_identity_row_matches_plain_run() {
    let (tr, te) = (data(10, 24), data(11, 24));
    let cfg = tiny_config(10);
    let variants = [Ablation::default(), Ablation { disable_explicit_graph: true, ..Ablation::default() }];
    let report = run_ablation(&cfg, &tr, &[], &te, &variants, &[10]).unwrap();
    assert_eq!(report.rows.len(), 2);
    let plain = train(&cfg, &tr, &[]).unwrap();
    let r = evaluate(&plain.params, &plain.vocab, &te).unwrap();
    assert_eq!(report.rows[0].micro, vec![r.micro]);
    assert_eq!(report.rows[0].macro_, vec![r.macro_]);
}

/// Groups whose every coordinate is checked on a small model.
fn check_all(edus: usize, inquire: bool, seed: u64) {
    let ex = example_with(edus, inquire, seed);
    let (vocab, params) = small_model(std::slice::from_ref(&ex), seed);
    let prep = prepare(&ex, &vocab, 256).unwrap();
    let checks = gradient_check(&params, &prep, &ex, 1.0, 1.0, 1e-5, None, seed).unwrap();
    assert_eq!(checks.len(), params.store.len());
    for c in checks {
        assert!(c.rel_error < 1e-4, "{}: {:e} (|g| {:e})", c.name, c.rel_error, c.analytic_norm);
    }
}

#[test]
fn encoder_and_decoder_gradients_on_two_edus() {
    check_all(2, true, 21);
}

#[test]
fn encoder_and_decoder_gradients_on_three_edus() {
    check_all(3, false, 22);
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_prepared, EvalReport};
use super::optim::{clip_global_norm, Adam};
use super::{HarnessError, Result, TrainConfig};
use crate::corpus::{Example, Vocabulary};
use crate::model::{self, argmax, Bound, ModelParams, Prepared};
use crate::numerics::ComputeGraph;

/// Loss and accuracies after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub decision_loss: f64,
    pub entailment_loss: f64,
    pub span_loss: f64,
    /// Decision accuracy of the training forward passes during the epoch.
    pub train_accuracy: f64,
    pub grad_norm: f64,
    pub dev_micro: Option<f64>,
    pub dev_macro: Option<f64>,
}

/// Per-example loss components and parameter gradients.
pub struct ExampleGradients {
    pub loss: f64,
    pub decision_loss: f64,
    pub entailment_loss: f64,
    pub span_loss: f64,
    pub correct: bool,
    pub grads: Vec<Vec<f64>>,
}

pub fn example_gradients(
    params: &ModelParams,
    prepared: &Prepared,
    example: &Example,
    lambda: f64,
    span_weight: f64,
) -> model::Result<ExampleGradients> {
    let g = ComputeGraph::new();
    let b = Bound::variables(&g, &params.store);
    let fwd = model::forward(&b, params, prepared)?;
    let loss = model::example_loss(&b, &fwd, example, lambda, span_weight)?;
    g.backward(loss.total)?;
    let z = g.value(fwd.decoder.decision_logits);
    Ok(ExampleGradients {
        loss: g.value(loss.total).item(),
        decision_loss: g.value(loss.parts.decision).item(),
        entailment_loss: loss.parts.entailment.map_or(0.0, |v| g.value(v).item()),
        span_loss: loss.span.map_or(0.0, |v| g.value(v).item()),
        correct: argmax(z.data()) == example.gold_decision.index(),
        grads: b.gradients(&params.store).into_iter().map(|t| t.into_data()).collect(),
    })
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best dev micro accuracy (the last
    /// epoch when there is no dev set).
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub log: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Epoch-at-a-time trainer.
pub struct Trainer {
    config: TrainConfig,
    vocab: Vocabulary,
    params: ModelParams,
    optimizer: Adam,
    rng: Pcg64,
    train: Vec<(Example, Prepared)>,
    dev: Vec<(Example, Prepared)>,
    epoch: usize,
    best: Option<(f64, usize, ModelParams)>,
    log: Vec<EpochMetrics>,
}

impl Trainer {
    /// Builds the vocabulary from `train` and initializes parameters from
    /// the config seed.
    pub fn new(config: TrainConfig, train: &[Example], dev: &[Example]) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(HarnessError::Contract("training set is empty".into()));
        }
        let vocab = Vocabulary::build(train);
        let params = ModelParams::init(config.model_config(vocab.len()), config.seed)?;
        Self::resume(config, vocab, params, train, dev)
    }

    /// Continues from given parameters with a fresh optimizer state.
    pub fn resume(
        config: TrainConfig,
        vocab: Vocabulary,
        params: ModelParams,
        train: &[Example],
        dev: &[Example],
    ) -> Result<Self> {
        let prep = |set: &[Example]| -> Result<Vec<(Example, Prepared)>> {
            set.iter()
                .map(|ex| Ok((ex.clone(), model::prepare(ex, &vocab, config.max_len)?)))
                .collect()
        };
        let train = prep(train)?;
        let dev = prep(dev)?;
        let optimizer = Adam::new(
            params.store.tensors(),
            config.learning_rate,
            config.beta1,
            config.beta2,
            config.adam_eps,
        );
        let rng = Pcg64::seed_from_u64(config.seed ^ 0x5eed_da7a);
        Ok(Self { config, vocab, params, optimizer, rng, train, dev, epoch: 0, best: None, log: Vec::new() })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn log(&self) -> &[EpochMetrics] {
        &self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn evaluate_train(&self) -> Result<EvalReport> {
        evaluate_prepared(&self.params, &self.train)
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);

        let mut totals = [0.0; 4];
        let mut correct = 0usize;
        let mut last_norm = 0.0;
        for (batch_no, batch) in order.chunks(self.config.batch_size).enumerate() {
            let mut acc: Vec<Vec<f64>> = self.params.store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
            for &i in batch {
                let (ex, prep) = &self.train[i];
                let eg = example_gradients(&self.params, prep, ex, self.config.lambda, self.config.span_weight)?;
                if !eg.loss.is_finite() || eg.grads.iter().flatten().any(|g| !g.is_finite()) {
                    let ids: Vec<&str> = batch.iter().map(|&j| self.train[j].0.example_id.as_str()).collect();
                    return Err(HarnessError::NonFinite {
                        epoch: self.epoch,
                        batch: batch_no,
                        examples: ids.join(", "),
                        detail: format!("loss {} on {}", eg.loss, ex.example_id),
                    });
                }
                for (a, g) in acc.iter_mut().zip(&eg.grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                totals[0] += eg.loss;
                totals[1] += eg.decision_loss;
                totals[2] += eg.entailment_loss;
                totals[3] += eg.span_loss;
                correct += usize::from(eg.correct);
            }
            let scale = 1.0 / batch.len() as f64;
            acc.iter_mut().flatten().for_each(|g| *g *= scale);
            last_norm = clip_global_norm(&mut acc, self.config.clip_norm);
            let clipped = super::optim::global_norm(&acc);
            assert!(
                clipped <= self.config.clip_norm * (1.0 + 1e-12),
                "post-clip gradient norm {clipped} exceeds {}",
                self.config.clip_norm
            );
            self.optimizer.update(self.params.store.tensors_mut(), &acc);
        }

        let n = self.train.len() as f64;
        let (dev_micro, dev_macro) = if self.dev.is_empty() {
            (None, None)
        } else {
            let r = evaluate_prepared(&self.params, &self.dev)?;
            (Some(r.micro), Some(r.macro_))
        };
        let key = dev_micro.unwrap_or(f64::NEG_INFINITY);
        if self.best.as_ref().is_none_or(|(b, _, _)| key > *b) || self.dev.is_empty() {
            self.best = Some((key, self.epoch, self.params.clone()));
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            loss: totals[0] / n,
            decision_loss: totals[1] / n,
            entailment_loss: totals[2] / n,
            span_loss: totals[3] / n,
            train_accuracy: correct as f64 / n,
            grad_norm: last_norm,
            dev_micro,
            dev_macro,
        };
        self.log.push(metrics.clone());
        Ok(metrics)
    }

    pub fn finish(self) -> TrainOutcome {
        let (params, best_epoch) = match self.best {
            Some((_, e, p)) => (p, e),
            None => (self.params, 0),
        };
        TrainOutcome { params, vocab: self.vocab, config: self.config, log: self.log, best_epoch }
    }
}

/// Runs `config.epochs` epochs and keeps the best dev checkpoint.
pub fn train(config: &TrainConfig, train_set: &[Example], dev_set: &[Example]) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), train_set, dev_set)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

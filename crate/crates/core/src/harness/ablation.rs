use std::fmt;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, HarnessError, Result, TrainConfig};
use crate::corpus::Example;
use crate::model::Ablation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub label: String,
    /// Test accuracies, one per seed.
    pub micro: Vec<f64>,
    pub macro_: Vec<f64>,
}

impl AblationRow {
    pub fn mean_micro(&self) -> f64 {
        self.micro.iter().sum::<f64>() / self.micro.len() as f64
    }

    pub fn mean_macro(&self) -> f64 {
        self.macro_.iter().sum::<f64>() / self.macro_.len() as f64
    }
}

/// One row per requested flag combination; deltas are against the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

/// Trains and tests one model per `(variant, seed)`. All variants share
/// each seed, so the all-off variant equals a plain train/evaluate run.
pub fn run_ablation(
    config: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
    test_set: &[Example],
    variants: &[Ablation],
    seeds: &[u64],
) -> Result<AblationReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Config("ablation needs at least one variant and one seed".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for &ablation in variants {
        let mut row = AblationRow { ablation, label: ablation.label(), micro: Vec::new(), macro_: Vec::new() };
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..config.with_ablation(ablation) };
            let out = train(&cfg, train_set, dev_set)?;
            let report = evaluate(&out.params, &out.vocab, test_set)?;
            row.micro.push(report.micro);
            row.macro_.push(report.macro_);
        }
        rows.push(row);
    }
    Ok(AblationReport { seeds: seeds.to_vec(), rows })
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:>7} {:>7} {:>7} {:>7}", "model", "micro", "d", "macro", "d")?;
        let (base_micro, base_macro) = self.rows.first().map_or((0.0, 0.0), |r| (r.mean_micro(), r.mean_macro()));
        for (i, r) in self.rows.iter().enumerate() {
            let (m, mm) = (r.mean_micro(), r.mean_macro());
            let delta = |x: f64, base: f64| if i == 0 { "-".to_string() } else { format!("{:+.1}", 100.0 * (x - base)) };
            writeln!(
                f,
                "{:<32} {:>7.1} {:>7} {:>7.1} {:>7}",
                r.label,
                100.0 * m,
                delta(m, base_micro),
                100.0 * mm,
                delta(mm, base_macro)
            )?;
        }
        write!(f, "averaged over seeds {:?}", self.seeds)
    }
}

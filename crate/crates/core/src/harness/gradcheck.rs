use rand::seq::index::sample;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::train::example_gradients;
use super::Result;
use crate::corpus::Example;
use crate::model::{self, Bound, ModelParams, Prepared};
use crate::numerics::{finite_difference_gradient, relative_error, ComputeGraph};

/// Analytic vs central-difference agreement on one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub size: usize,
    pub analytic_norm: f64,
    pub rel_error: f64,
}

/// Scalar training loss of one example, without recording gradients.
pub fn example_loss_value(
    params: &ModelParams,
    prepared: &Prepared,
    example: &Example,
    lambda: f64,
    span_weight: f64,
) -> model::Result<f64> {
    let g = ComputeGraph::new();
    let b = Bound::constants(&g, &params.store);
    let fwd = model::forward(&b, params, prepared)?;
    let loss = model::example_loss(&b, &fwd, example, lambda, span_weight)?;
    Ok(g.value(loss.total).item())
}

/// Compares backprop gradients of the full loss with central differences
/// for every parameter tensor. `max_per_tensor` samples that many
/// coordinates per tensor (seeded); `None` checks all of them.
pub fn gradient_check(
    params: &ModelParams,
    prepared: &Prepared,
    example: &Example,
    lambda: f64,
    span_weight: f64,
    eps: f64,
    max_per_tensor: Option<usize>,
    seed: u64,
) -> Result<Vec<GroupCheck>> {
    let analytic = example_gradients(params, prepared, example, lambda, span_weight)?.grads;
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut work = params.clone();
    let mut out = Vec::new();
    for (i, name) in params.store.names().iter().enumerate() {
        let size = analytic[i].len();
        let coords: Vec<usize> = match max_per_tensor {
            Some(k) if k < size => {
                let mut v = sample(&mut rng, size, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..size).collect(),
        };
        let id = work.store.find(name).expect("name from the same layout");
        let start: Vec<f64> = coords.iter().map(|&c| params.store.get(id).data()[c]).collect();
        let mut failure = None;
        let numeric = finite_difference_gradient(
            |x| {
                let t = work.store.get_mut(id);
                for (&c, &v) in coords.iter().zip(x) {
                    t.data_mut()[c] = v;
                }
                match example_loss_value(&work, prepared, example, lambda, span_weight) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &start,
            eps,
        );
        if let Some(e) = failure {
            return Err(e.into());
        }
        let numeric = numeric.map_err(model::ModelError::from)?;
        let picked: Vec<f64> = coords.iter().map(|&c| analytic[i][c]).collect();
        out.push(GroupCheck {
            name: name.clone(),
            checked: coords.len(),
            size,
            analytic_norm: picked.iter().map(|v| v * v).sum::<f64>().sqrt(),
            rel_error: relative_error(&picked, &numeric),
        });
        // Restore the coordinates touched by the last evaluation.
        *work.store.get_mut(id) = params.store.get(id).clone();
    }
    Ok(out)
}

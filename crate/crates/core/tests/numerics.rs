use dgm_core::numerics::{
    finite_difference_gradient, masked_softmax, relative_error, ComputeGraph, MaskMatrix, Tensor, Var, NEG_INF,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

const TRIALS: usize = 100;
const TOL: f64 = 1e-6;

fn random_tensor(rng: &mut Pcg64, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect())
}

/// Checks d/dx sum(op(x) * w) for a fixed random weighting `w` of the output.
fn check_op<F>(inputs: Vec<Tensor>, op: F, rng: &mut Pcg64) -> f64
where
    F: Fn(&ComputeGraph, &[Var]) -> Var,
{
    let g = ComputeGraph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = op(&g, &vars);
    let (r, c) = g.dims(out);
    let w = random_tensor(rng, r, c);
    let loss = g.sum_all(g.mul(out, g.constant(w.clone())).unwrap());
    g.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[i]).map_or(vec![0.0; input.numel()], Tensor::into_data);
        let numeric = finite_difference_gradient(
            |x| {
                let h = ComputeGraph::new();
                let vs: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        if j == i {
                            h.constant(Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap())
                        } else {
                            h.constant(t.clone())
                        }
                    })
                    .collect();
                let o = op(&h, &vs);
                h.value(o).data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
            },
            input.data(),
            1e-6,
        )
        .unwrap();
        // Relative error, or absolute when the gradient is too small for
        // central differences to resolve relatively.
        let scale = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = if scale < 1e-4 {
            analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        } else {
            relative_error(&analytic, &numeric)
        };
        worst = worst.max(e);
    }
    worst
}

fn run_trials<F>(name: &str, seed: u64, mut make: F)
where
    F: FnMut(&mut Pcg64) -> (Vec<Tensor>, Box<dyn Fn(&ComputeGraph, &[Var]) -> Var>),
{
    let mut rng = Pcg64::seed_from_u64(seed);
    for trial in 0..TRIALS {
        let (inputs, op) = make(&mut rng);
        let err = check_op(inputs, op, &mut rng);
        assert!(err < TOL, "{name} trial {trial}: relative error {err:e}");
    }
}

fn dims(rng: &mut Pcg64) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

#[test]
fn matmul_gradients() {
    run_trials("matmul", 1, |rng| {
        let (m, k) = dims(rng);
        let n = rng.random_range(1..5);
        (
            vec![random_tensor(rng, m, k), random_tensor(rng, k, n)],
            Box::new(|g, v| g.matmul(v[0], v[1]).unwrap()),
        )
    });
}

#[test]
fn elementwise_gradients() {
    run_trials("add", 2, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n), random_tensor(rng, m, n)], Box::new(|g, v| g.add(v[0], v[1]).unwrap()))
    });
    run_trials("sub", 3, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n), random_tensor(rng, m, n)], Box::new(|g, v| g.sub(v[0], v[1]).unwrap()))
    });
    run_trials("mul", 4, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n), random_tensor(rng, m, n)], Box::new(|g, v| g.mul(v[0], v[1]).unwrap()))
    });
    run_trials("affine", 5, |rng| {
        let (m, n) = dims(rng);
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        (vec![random_tensor(rng, m, n)], Box::new(move |g, v| g.affine(v[0], a, b)))
    });
}

#[test]
fn broadcast_gradients() {
    run_trials("add_row", 6, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n), random_tensor(rng, 1, n)], Box::new(|g, v| g.add_row(v[0], v[1]).unwrap()))
    });
    run_trials("mul_col", 7, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n), random_tensor(rng, m, 1)], Box::new(|g, v| g.mul_col(v[0], v[1]).unwrap()))
    });
}

#[test]
fn nonlinearity_gradients() {
    run_trials("relu", 8, |rng| {
        let (m, n) = dims(rng);
        // Keep inputs away from the kink so central differences are exact.
        let mut t = random_tensor(rng, m, n);
        t.data_mut().iter_mut().for_each(|x| {
            if x.abs() < 1e-3 {
                *x = 0.5
            }
        });
        (vec![t], Box::new(|g, v| g.relu(v[0])))
    });
    run_trials("sigmoid", 9, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n)], Box::new(|g, v| g.sigmoid(v[0])))
    });
    run_trials("softmax", 10, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n)], Box::new(|g, v| g.softmax(v[0]).unwrap()))
    });
    run_trials("masked_softmax", 11, |rng| {
        let n = rng.random_range(1..6);
        let keep: Vec<bool> = (0..n * n).map(|_| rng.random_bool(0.6)).collect();
        let mask = Tensor::matrix(n, n, keep.iter().map(|&k| if k { 0.0 } else { NEG_INF }).collect());
        (vec![random_tensor(rng, n, n)], Box::new(move |g, v| g.masked_softmax(v[0], &mask).unwrap()))
    });
}

#[test]
fn structural_gradients() {
    run_trials("transpose", 12, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n)], Box::new(|g, v| g.transpose(v[0]).unwrap()))
    });
    run_trials("concat_cols", 13, |rng| {
        let (m, n) = dims(rng);
        let k = rng.random_range(1..4);
        (
            vec![random_tensor(rng, m, n), random_tensor(rng, m, k)],
            Box::new(|g, v| g.concat_cols(&[v[0], v[1], v[0]]).unwrap()),
        )
    });
    run_trials("concat_rows", 14, |rng| {
        let (m, n) = dims(rng);
        let k = rng.random_range(1..4);
        (
            vec![random_tensor(rng, m, n), random_tensor(rng, k, n)],
            Box::new(|g, v| g.concat_rows(&[v[1], v[0]]).unwrap()),
        )
    });
    run_trials("slice_cols", 15, |rng| {
        let m = rng.random_range(1..5);
        let n = rng.random_range(2..7);
        let lo = rng.random_range(0..n - 1);
        let hi = rng.random_range(lo + 1..=n);
        (vec![random_tensor(rng, m, n)], Box::new(move |g, v| g.slice_cols(v[0], lo, hi).unwrap()))
    });
    run_trials("gather_rows", 16, |rng| {
        let (m, n) = dims(rng);
        let idx: Vec<usize> = (0..rng.random_range(1..7)).map(|_| rng.random_range(0..m)).collect();
        (vec![random_tensor(rng, m, n)], Box::new(move |g, v| g.gather_rows(v[0], &idx).unwrap()))
    });
    run_trials("mean_rows", 17, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n)], Box::new(|g, v| g.mean_rows(v[0]).unwrap()))
    });
    run_trials("sum_all", 18, |rng| {
        let (m, n) = dims(rng);
        (vec![random_tensor(rng, m, n)], Box::new(|g, v| g.sum_all(v[0])))
    });
}

#[test]
fn cross_entropy_gradients() {
    run_trials("cross_entropy", 19, |rng| {
        let (m, n) = dims(rng);
        let targets: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        (vec![random_tensor(rng, m, n)], Box::new(move |g, v| g.cross_entropy(v[0], &targets).unwrap()))
    });
}

#[test]
fn composite_attention_gradient() {
    // softmax(x Wq (x Wk)^T) x Wv, the core of one attention head.
    run_trials("attention", 20, |rng| {
        let s = rng.random_range(1..5);
        let d = rng.random_range(1..4);
        (
            [(s, d), (d, d), (d, d), (d, d)]
                .iter()
                .map(|&(r, c)| random_tensor(rng, r, c).map(|x| 0.5 * x))
                .collect(),
            Box::new(|g, v| {
                let q = g.matmul(v[0], v[1]).unwrap();
                let k = g.matmul(v[0], v[2]).unwrap();
                let a = g.softmax(g.matmul(q, g.transpose(k).unwrap()).unwrap()).unwrap();
                g.matmul(a, g.matmul(v[0], v[3]).unwrap()).unwrap()
            }),
        )
    });
}

fn mask_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<bool>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-50.0f64..50.0, n * n),
            prop::collection::vec(any::<bool>(), n * n),
        )
    })
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions_or_zero((n, logits, keep) in mask_strategy()) {
        let mask = MaskMatrix::from_fn(n, |i, j| keep[i * n + j]);
        let p = masked_softmax(&Tensor::matrix(n, n, logits), mask.as_tensor()).unwrap();
        for i in 0..n {
            let row = p.row(i);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            let open = (0..n).any(|j| keep[i * n + j]);
            let sum: f64 = row.iter().sum();
            if open {
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for j in 0..n {
                    if !keep[i * n + j] {
                        prop_assert!(row[j] < 1e-300);
                    }
                }
            } else {
                prop_assert!(row.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant((n, logits, keep) in mask_strategy(), shift in -100.0f64..100.0) {
        let mask = MaskMatrix::from_fn(n, |i, j| keep[i * n + j]);
        let a = masked_softmax(&Tensor::matrix(n, n, logits.clone()), mask.as_tensor()).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        let b = masked_softmax(&Tensor::matrix(n, n, shifted), mask.as_tensor()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_preserves_order(row in prop::collection::vec(-20.0f64..20.0, 1..10)) {
        let n = row.len();
        let p = masked_softmax(&Tensor::matrix(1, n, row.clone()), &Tensor::zeros(1, n)).unwrap();
        for i in 0..n {
            for j in 0..n {
                if row[i] > row[j] {
                    prop_assert!(p.data()[i] >= p.data()[j]);
                }
            }
        }
    }
}

#[test]
fn gradient_of_unused_input_is_absent() {
    let g = ComputeGraph::new();
    let a = g.variable(Tensor::scalar(2.0));
    let b = g.variable(Tensor::scalar(3.0));
    let loss = g.scale(a, 4.0);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(a).unwrap().item(), 4.0);
    assert!(g.grad(b).is_none());
}

use super::{NumericsError, Result};

/// Central-difference gradient of `f` at `params`.
///
/// Each coordinate is perturbed by `±eps` in turn and restored afterwards.
pub fn finite_difference_gradient<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(NumericsError::Contract(format!("step must be positive, got {eps}")));
    }
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFinite(format!(
                "objective at coordinate {i}: {plus} / {minus}"
            )));
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or `0` when both are (numerically) zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = l2(analytic).max(l2(numeric));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_difference_gradient(|p| p[0] * p[0], &[3.0], 1e-3).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn constant_function() {
        let g = finite_difference_gradient(|_| 4.2, &[1.0, -2.0, 0.5], 1e-4).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        assert!(finite_difference_gradient(|p| p[0], &[1.0], 0.0).is_err());
        assert!(matches!(
            finite_difference_gradient(|p| p[0].ln(), &[0.0], 1e-3),
            Err(NumericsError::NonFinite(_))
        ));
    }

    #[test]
    fn relative_error_is_scale_free() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let e = relative_error(&[1.0, 0.0], &[1.0, 1e-6]);
        assert!((e - 1e-6).abs() < 1e-12);
    }
}

//! Central-difference gradient verification.

use crate::numerics::{Node, NumericsError, ParameterSet, Result};

/// Compare analytic gradients against central differences.
///
/// `f` must be a deterministic scalar function of the parameter values (it is
/// re-evaluated with each coordinate nudged by ±eps). Returns the largest
/// relative error |a − n| / max(1e-8, |a| + |n|) over all coordinates.
pub fn grad_check(
    params: &ParameterSet,
    eps: f64,
    f: impl Fn() -> Result<Node>,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(NumericsError::InvalidArgument(format!(
            "grad_check eps {eps} outside [1e-7, 1e-3]"
        )));
    }

    // One analytic pass.
    params.zero_grads();
    let loss = f()?;
    if !loss.value().all_finite() {
        return Err(NumericsError::NonFinite("grad_check loss".into()));
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, node)| node.grad_clone().data().to_vec())
        .collect();

    let mut worst: f64 = 0.0;
    for (pi, (_, node)) in params.iter().enumerate() {
        let count = node.value().len();
        for ci in 0..count {
            let original = node.value().data()[ci];
            node.update_value(|t| t.data_mut()[ci] = original + eps);
            let up = f()?.value().scalar_value();
            node.update_value(|t| t.data_mut()[ci] = original - eps);
            let down = f()?.value().scalar_value();
            node.update_value(|t| t.data_mut()[ci] = original);
            if !up.is_finite() || !down.is_finite() {
                return Err(NumericsError::NonFinite("grad_check probe".into()));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi][ci];
            let err = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quadratic_matches_to_high_precision() {
        let mut params = ParameterSet::new();
        let x = params.insert("x", Tensor::vector(vec![1.0, -2.0, 3.0]));
        let err = grad_check(&params, 1e-5, || Ok(x.mul(&x)?.sum())).unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn linear_is_exact_to_machine_precision() {
        let mut params = ParameterSet::new();
        let x = params.insert("x", Tensor::vector(vec![0.5, 0.25]));
        let err = grad_check(&params, 1e-4, || Ok(x.scale(3.0).sum())).unwrap();
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn eps_bounds_enforced() {
        let mut params = ParameterSet::new();
        let x = params.insert("x", Tensor::vector(vec![1.0]));
        assert!(grad_check(&params, 1e-2, || Ok(x.sum())).is_err());
        assert!(grad_check(&params, 1e-8, || Ok(x.sum())).is_err());
    }
}

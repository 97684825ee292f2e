//! Bounded Levenberg-Marquardt least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{evaluate_with_jacobian, ConstitutiveModel, ModelError, Values};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Stop when the relative change in the residual sum of squares drops below this.
    pub ss_tolerance: f64,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            initial_lambda: 1e-3,
            ss_tolerance: 1e-9,
            step_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Values,
    pub residual_ss: f64,
    /// Residual sum of squares after each accepted step, starting point first.
    pub ss_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fit the parameters named in `free` to observed `(time, strain)` points,
/// holding every other parameter at its value in `initial`.
pub fn fit_parameters(
    model: &ConstitutiveModel,
    initial: &Values,
    conditions: &Values,
    observations: &[(f64, f64)],
    free: &[String],
    options: FitOptions,
) -> Result<FitResult, ModelError> {
    if observations.len() < free.len() + 1 {
        return Err(ModelError::InsufficientData {
            needed: free.len() + 1,
            got: observations.len(),
        });
    }
    let times: Vec<f64> = observations.iter().map(|o| o.0).collect();
    let observed = DVector::from_iterator(observations.len(), observations.iter().map(|o| o.1));
    let mut params = initial.clone();
    for name in free {
        let spec = model
            .parameter(name)
            .ok_or_else(|| ModelError::UnboundSymbol(name.clone()))?;
        let v = *params.get(name).unwrap_or(&spec.default);
        params.insert(name.clone(), spec.clamp(v));
    }

    let residuals = |p: &Values| -> Result<(DVector<f64>, DMatrix<f64>), ModelError> {
        let (pred, jac) = evaluate_with_jacobian(model, p, conditions, &times, free)?;
        let r = &observed - DVector::from_vec(pred);
        let j = DMatrix::from_fn(times.len(), free.len(), |i, k| jac[i][k]);
        Ok((r, j))
    };

    let (mut r, mut j) = residuals(&params)?;
    let mut ss = r.norm_squared();
    let mut ss_history = vec![ss];
    let mut lambda = options.initial_lambda;
    let mut converged = free.is_empty() || ss == 0.0;
    let mut iterations = 0;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let diag = jtj.diagonal();
        if let Some(k) = diag.iter().position(|d| *d == 0.0 || !d.is_finite()) {
            return Err(ModelError::SingularJacobian(format!(
                "parameter '{}' has no influence on the fit",
                free[k]
            )));
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..free.len() {
                a[(k, k)] += lambda * diag[k];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params.clone();
            for (k, name) in free.iter().enumerate() {
                let spec = model.parameter(name).expect("checked above");
                trial.insert(name.clone(), spec.clamp(params[name] + step[k]));
            }
            let outcome = residuals(&trial);
            let (tr, tj) = match outcome {
                Ok(v) => v,
                Err(ModelError::NumericalOverflow(_)) => {
                    lambda *= 10.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let trial_ss = tr.norm_squared();
            if trial_ss.is_finite() && trial_ss <= ss {
                let moved: f64 = free
                    .iter()
                    .map(|n| (trial[n] - params[n]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = free.iter().map(|n| params[n].powi(2)).sum::<f64>().sqrt().max(1e-300);
                let rel = if ss > 0.0 { (ss - trial_ss) / ss } else { 0.0 };
                params = trial;
                r = tr;
                j = tj;
                ss = trial_ss;
                ss_history.push(ss);
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < options.ss_tolerance || moved / scale < options.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No step reduces the residual: the current point is a local minimum.
            converged = true;
        }
    }
    Ok(FitResult {
        params,
        residual_ss: ss,
        ss_history,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{evaluate, Catalog};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_power_law() {
        let catalog = Catalog::builtin();
        let model = catalog.get("norton_bailey").unwrap();
        let cond: Values = [("sigma".to_string(), 1.0)].into();
        let truth: Values = [("A".to_string(), 1e-4), ("n".to_string(), 1.0), ("m".to_string(), 0.4)].into();
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 200.0).collect();
        let clean = evaluate(model, &truth, &cond, &times).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs: Vec<(f64, f64)> = times
            .iter()
            .zip(&clean)
            .map(|(t, e)| (*t, e * (1.0 + rng.gen_range(-0.005..0.005))))
            .collect();
        let start: Values = [("A".to_string(), 1e-3), ("n".to_string(), 1.0), ("m".to_string(), 0.3)].into();
        let free = vec!["A".to_string(), "m".to_string()];
        let fit = fit_parameters(model, &start, &cond, &obs, &free, FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params["A"] / 1e-4 - 1.0).abs() < 0.05, "{:?}", fit.params);
        assert!((fit.params["m"] / 0.4 - 1.0).abs() < 0.02, "{:?}", fit.params);
        assert!(fit.ss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn singular_when_parameter_has_no_effect() {
        let catalog = Catalog::builtin();
        let model = catalog.get("norton_bailey").unwrap();
        // With sigma = 1 the stress exponent cannot change the prediction.
        let cond: Values = [("sigma".to_string(), 1.0)].into();
        let start = model.defaults();
        let obs: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 0.001 * i as f64)).collect();
        let err = fit_parameters(model, &start, &cond, &obs, &["n".to_string()], FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::SingularJacobian(_)));
    }
}

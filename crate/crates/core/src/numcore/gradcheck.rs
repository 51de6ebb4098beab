//! Finite-difference verification of the tape's backward pass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{CoreError, Result};
use crate::numcore::params::ParamStore;
use crate::numcore::tape::{Tape, Value};

/// Options for [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates sampled per trainable tensor (all of them if the tensor is
    /// smaller).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            samples_per_param: 6,
            seed: 0x5eed,
        }
    }
}

/// Verify analytic gradients of a scalar loss against central differences.
///
/// `loss_fn` must deterministically build the loss on the provided tape from
/// the given parameters. Returns the maximum over sampled coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &ParamStore, loss_fn: F, opts: &GradCheckOptions) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Value>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        let v = tape.scalar(loss)?;
        if !v.is_finite() {
            return Err(CoreError::numeric("grad_check: non-finite loss"));
        }
        Ok(v)
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, params)?;
    tape.backward(loss)?;
    let mut analytic = ParamStore::new();
    for name in params.trainable_names() {
        analytic.insert(name, crate::numcore::Tensor::zeros(params.tensor(name)?.shape().to_vec()))?;
    }
    tape.accumulate_param_grads(&mut analytic)?;

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut max_rel = 0.0f64;

    let names: Vec<String> = params.trainable_names().map(|s| s.to_string()).collect();
    for name in &names {
        let len = params.tensor(name)?.len();
        let mut coords: Vec<usize> = (0..len).collect();
        if len > opts.samples_per_param {
            coords.shuffle(&mut rng);
            coords.truncate(opts.samples_per_param);
            coords.sort_unstable();
        }
        for &i in &coords {
            let orig = work.tensor(name)?.data()[i];
            work.tensor_mut(name)?.data_mut()[i] = orig + opts.h;
            let plus = eval(&work)?;
            work.tensor_mut(name)?.data_mut()[i] = orig - opts.h;
            let minus = eval(&work)?;
            work.tensor_mut(name)?.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic
                .grad(name)
                .map(|g| g.data()[i])
                .unwrap_or(0.0);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    #[test]
    fn quadratic_is_exact_under_central_differences() {
        // loss = sum(theta^2) at theta = [1, -2]: analytic [2, -4].
        let mut params = ParamStore::new();
        params
            .insert("theta", Tensor::vector(vec![1.0, -2.0]))
            .unwrap();
        let err = grad_check(
            &params,
            |tape, store| {
                let theta = tape.param(store, "theta")?;
                tape.dot(theta, theta)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(err < 1e-8, "central differences are exact on quadratics: {err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut params = ParamStore::new();
        params.insert("theta", Tensor::vector(vec![0.3])).unwrap();
        let err = grad_check(
            &params,
            |tape, store| {
                let theta = tape.param(store, "theta")?;
                let zero = tape.scale(theta, 0.0)?;
                tape.element(zero, 0)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn nonfinite_loss_is_numeric_error() {
        let mut params = ParamStore::new();
        params.insert("theta", Tensor::vector(vec![710.0])).unwrap();
        let res = grad_check(
            &params,
            |tape, store| {
                let theta = tape.param(store, "theta")?;
                // exp(710) overflows f64
                let s = tape.sigmoid(theta)?; // fine
                let big = tape.scale(theta, 1e308)?;
                let bigger = tape.mul(big, big);
                match bigger {
                    Ok(v) => tape.element(v, 0),
                    Err(e) => Err(e),
                }
                .and_then(|v| {
                    let _ = s;
                    Ok(v)
                })
            },
            &GradCheckOptions::default(),
        );
        assert!(res.is_err());
    }

    #[test]
    fn layer_norm_chain_matches_finite_differences() {
        let mut params = ParamStore::new();
        params
            .insert("w", Tensor::matrix(3, 4, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect()).unwrap())
            .unwrap();
        params
            .insert("x", Tensor::vector(vec![0.2, -0.4, 0.6, 0.8]))
            .unwrap();
        let err = grad_check(
            &params,
            |tape, store| {
                let w = tape.param(store, "w")?;
                let x = tape.param(store, "x")?;
                let y = tape.matvec(w, x)?;
                let (n, _, _) = tape.layer_norm(y, crate::numcore::LAYER_NORM_EPS)?;
                let t = tape.tanh(n)?;
                let s = tape.softmax(t)?;
                let picked = tape.element(s, 1)?;
                let d = tape.dot(t, t)?;
                tape.add(picked, d)
            },
            &GradCheckOptions {
                samples_per_param: 16,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(err < 1e-5, "composite chain gradcheck: {err}");
    }
}

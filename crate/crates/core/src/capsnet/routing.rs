//! Routing by agreement between child and parent capsules.

use crate::tensor::{Tensor, TensorError};

/// Squash nonlinearity: v = (|s|^2 / (1 + |s|^2)) * s / |s|, with
/// squash(0) = 0. Output norm is strictly below 1, direction is preserved.
pub fn squash(s: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.len()];
    crate::tensor::squash_into(s, &mut out);
    out
}

/// Result of the routing iterations.
#[derive(Debug, Clone)]
pub struct RoutingOutcome {
    /// Squashed parent vectors, shape [classes, dim].
    pub parents: Tensor,
    /// Final coupling coefficients, shape [children, classes]; every row
    /// sums to one.
    pub couplings: Tensor,
}

/// Dynamic routing over prediction vectors [children, classes, dim].
///
/// Logits start at zero. Each iteration takes the per-child softmax of the
/// logits over classes, forms every parent as the coupling-weighted sum of
/// its predictions, squashes it, and (on all but the last iteration) adds
/// the prediction/parent agreement dot product to the logits.
pub fn dynamic_routing(predictions: &Tensor, iterations: usize) -> Result<RoutingOutcome, TensorError> {
    let (outcome, _) = dynamic_routing_traced(predictions, iterations)?;
    Ok(outcome)
}

/// [`dynamic_routing`] that also returns every iteration's couplings.
pub fn dynamic_routing_traced(
    predictions: &Tensor,
    iterations: usize,
) -> Result<(RoutingOutcome, Vec<Tensor>), TensorError> {
    if predictions.rank() != 3 {
        return Err(TensorError::shape(
            "dynamic_routing",
            format!("predictions must be [children, classes, dim], got {:?}", predictions.shape()),
        ));
    }
    if iterations == 0 {
        return Err(TensorError::shape("dynamic_routing", "iterations must be >= 1".to_string()));
    }
    let (n, k, d) = (
        predictions.shape()[0],
        predictions.shape()[1],
        predictions.shape()[2],
    );
    let preds = predictions.data();

    let mut logits = Tensor::zeros(&[n, k]);
    let mut couplings = Tensor::zeros(&[n, k]);
    let mut parents = Tensor::zeros(&[k, d]);
    let mut trace = Vec::with_capacity(iterations);

    for iter in 0..iterations {
        crate::tensor::softmax_into(logits.data(), &[n, k], 1, couplings.data_mut());
        trace.push(couplings.clone());

        // parent inputs: s_j = sum_i c_ij * u_ij
        parents.data_mut().fill(0.0);
        for i in 0..n {
            for j in 0..k {
                let c = couplings.data()[i * k + j];
                let row = (i * k + j) * d;
                for e in 0..d {
                    parents.data_mut()[j * d + e] += c * preds[row + e];
                }
            }
        }
        // v_j = squash(s_j), in place
        for j in 0..k {
            let row = parents.data()[j * d..(j + 1) * d].to_vec();
            crate::tensor::squash_into(&row, &mut parents.data_mut()[j * d..(j + 1) * d]);
        }

        // agreement update, skipped after the final parents are formed
        if iter + 1 < iterations {
            for i in 0..n {
                for j in 0..k {
                    let row = (i * k + j) * d;
                    let mut dot = 0.0;
                    for e in 0..d {
                        dot += preds[row + e] * parents.data()[j * d + e];
                    }
                    logits.data_mut()[i * k + j] += dot;
                }
            }
        }
    }

    Ok((RoutingOutcome { parents, couplings }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_preserves_direction_below_unit_norm() {
        let v = squash(&[3.0, 4.0]); // |s| = 5
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!((norm - 25.0 / 26.0).abs() < 1e-12);
        assert!((v[0] / v[1] - 3.0 / 4.0).abs() < 1e-12);
        assert_eq!(squash(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn single_pair_routes_to_squashed_prediction() {
        let u = vec![0.6, -0.8, 0.2];
        let preds = Tensor::from_vec(&[1, 1, 3], u.clone()).unwrap();
        let outcome = dynamic_routing(&preds, 3).unwrap();
        assert_eq!(outcome.couplings.data(), &[1.0]);
        let expected = squash(&u);
        for (got, want) in outcome.parents.data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_classes_split_couplings_evenly() {
        // Two classes receiving identical predictions stay at 0.5/0.5 by
        // symmetry at every iteration.
        let mut data = Vec::new();
        for i in 0..3 {
            let v = [i as f64 * 0.1 + 0.2, -0.3, 0.5];
            data.extend_from_slice(&v);
            data.extend_from_slice(&v);
        }
        let preds = Tensor::from_vec(&[3, 2, 3], data).unwrap();
        let (outcome, trace) = dynamic_routing_traced(&preds, 3).unwrap();
        assert_eq!(trace.len(), 3);
        for couplings in &trace {
            for c in couplings.data() {
                assert!((c - 0.5).abs() < 1e-12);
            }
        }
        let p = outcome.parents.data();
        for e in 0..3 {
            assert!((p[e] - p[3 + e]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_iterations_is_an_error() {
        let preds = Tensor::zeros(&[2, 2, 2]);
        assert!(dynamic_routing(&preds, 0).is_err());
    }
}

//! Central finite-difference gradients, the oracle the tape is checked
//! against.
//!
//! This function deliberately knows nothing about tapes: it perturbs one
//! parameter coordinate at a time and differences the black-box scalar
//! function, so agreement with [`Tape::backward`](super::Tape::backward) is
//! evidence, not circularity.

use super::{NumError, ParamSet};

/// `(f(p + h·e_i) − f(p − h·e_i)) / 2h` for every coordinate of `params`.
///
/// `f` must be deterministic. A non-finite probe value is reported with the
/// entry name and flat index that produced it.
pub fn finite_diff_grad(
    mut f: impl FnMut(&ParamSet) -> f64,
    params: &ParamSet,
    h: f64,
) -> Result<ParamSet, NumError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    for slot in 0..params.len() {
        for i in 0..params.by_slot(slot).len() {
            let orig = params.by_slot(slot).as_slice()[i];
            probe.by_slot_mut(slot).as_mut_slice()[i] = orig + h;
            let up = f(&probe);
            probe.by_slot_mut(slot).as_mut_slice()[i] = orig - h;
            let down = f(&probe);
            probe.by_slot_mut(slot).as_mut_slice()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(NumError::NonFinite {
                    context: "finite_diff_grad probe",
                    index: i,
                });
            }
            grads.by_slot_mut(slot).as_mut_slice()[i] = (up - down) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Worst-case relative disagreement between two same-schema gradient sets,
/// with the denominator floored so near-zero gradients compare absolutely.
pub fn max_rel_err(analytic: &ParamSet, numeric: &ParamSet, floor: f64) -> f64 {
    assert!(analytic.same_schema(numeric));
    let mut worst = 0.0_f64;
    for slot in 0..analytic.len() {
        let a = analytic.by_slot(slot).as_slice();
        let n = numeric.by_slot(slot).as_slice();
        for (x, y) in a.iter().zip(n) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    #[test]
    fn square_function_gradient() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::scalar(3.0)).unwrap();
        let g = finite_diff_grad(|ps| ps.get("p").item().powi(2), &p, 1e-5).unwrap();
        assert!((g.get("p").item() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_gradient_is_zero() {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let g = finite_diff_grad(|_| 4.25, &p, 1e-5).unwrap();
        assert!(g.get("p").as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_probe_is_reported() {
        // The downward probe of sqrt at 0 lands on a negative argument.
        let mut p = ParamSet::new();
        p.insert("p", Tensor::scalar(0.0)).unwrap();
        let r = finite_diff_grad(|ps| ps.get("p").item().sqrt(), &p, 1e-5);
        assert!(matches!(r, Err(NumError::NonFinite { .. })));
    }
}

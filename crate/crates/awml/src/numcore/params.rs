//! Named, ordered parameter collections.
//!
//! A [`ParamSet`] is the unit everything model-level operates on: optimizers
//! step it, the EMA blend mixes two of them, checkpoints serialize it, and
//! tapes bind leaves to its entries by slot index. Iteration follows
//! insertion order, so two sets built by the same schema code are combinable
//! and serialize identically across processes.

use std::collections::HashMap;

use super::{NumError, Tensor};

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    /// Appends a named tensor. Names must be unique within the set.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<usize, NumError> {
        if self.index.contains_key(name) {
            return Err(NumError::DuplicateParam(name.to_string()));
        }
        let slot = self.tensors.len();
        self.index.insert(name.to_string(), slot);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters across all entries.
    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let slot = self
            .slot(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"));
        &self.tensors[slot]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let slot = self
            .slot(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"));
        &mut self.tensors[slot]
    }

    pub fn by_slot(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn by_slot_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn name_of(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    /// Same names, same order, same shapes.
    pub fn same_schema(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.same_shape(b))
    }

    fn require_same_schema(&self, other: &ParamSet, context: &'static str) -> Result<(), NumError> {
        if self.same_schema(other) {
            Ok(())
        } else {
            Err(NumError::Schema {
                context,
                detail: format!(
                    "left has {} entries / {} params, right has {} entries / {} params",
                    self.len(),
                    self.total_len(),
                    other.len(),
                    other.total_len()
                ),
            })
        }
    }

    /// FNV-1a over names, shapes, and exact value bits, in insertion order.
    ///
    /// Bit-identical sets checksum equal; any flipped bit changes the
    /// digest. Used to assert that frozen parameters stay frozen.
    pub fn checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |byte: u8| {
            h ^= u64::from(byte);
            h = h.wrapping_mul(PRIME);
        };
        for (name, t) in self.iter() {
            for b in name.as_bytes() {
                eat(*b);
            }
            for d in t.shape() {
                for b in (*d as u64).to_le_bytes() {
                    eat(b);
                }
            }
            for v in t.as_slice() {
                for b in v.to_bits().to_le_bytes() {
                    eat(b);
                }
            }
        }
        h
    }

    /// Zero-valued set with this set's schema.
    pub fn zeros_like(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in self.iter() {
            out.insert(name, Tensor::zeros(t.shape())).expect("schema names unique");
        }
        out
    }

    /// In-place exponential moving average: `self = gamma·self + (1−gamma)·new`.
    ///
    /// This is the old-model update rule; `gamma` must lie strictly inside
    /// (0, 1) and the schemas must match.
    pub fn ema_blend_from(&mut self, newer: &ParamSet, gamma: f64) -> Result<(), NumError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(NumError::Config(format!("ema gamma must be in (0,1), got {gamma}")));
        }
        self.require_same_schema(newer, "ema_blend")?;
        for (t, s) in self.tensors.iter_mut().zip(&newer.tensors) {
            let dst = t.as_mut_slice();
            let src = s.as_slice();
            for i in 0..dst.len() {
                dst[i] = gamma * dst[i] + (1.0 - gamma) * src[i];
            }
        }
        Ok(())
    }

    /// Euclidean distance between two same-schema sets.
    pub fn l2_distance(&self, other: &ParamSet) -> Result<f64, NumError> {
        self.require_same_schema(other, "l2_distance")?;
        let mut acc = 0.0;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                let d = x - y;
                acc += d * d;
            }
        }
        Ok(acc.sqrt())
    }

    /// Copies values from a same-schema set (a snapshot assignment).
    pub fn copy_from(&mut self, src: &ParamSet) -> Result<(), NumError> {
        self.require_same_schema(src, "copy_from")?;
        for (t, s) in self.tensors.iter_mut().zip(&src.tensors) {
            t.as_mut_slice().copy_from_slice(s.as_slice());
        }
        Ok(())
    }
}

/// Functional form of the EMA blend: returns `gamma·old + (1−gamma)·new`.
pub fn ema_blend(old: &ParamSet, newer: &ParamSet, gamma: f64) -> Result<ParamSet, NumError> {
    let mut out = old.clone();
    out.ema_blend_from(newer, gamma)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (ParamSet, ParamSet) {
        let mut a = ParamSet::new();
        a.insert("w", Tensor::filled(&[2, 2], 0.0)).unwrap();
        a.insert("b", Tensor::filled(&[1, 2], 0.0)).unwrap();
        let mut b = ParamSet::new();
        b.insert("w", Tensor::filled(&[2, 2], 1.0)).unwrap();
        b.insert("b", Tensor::filled(&[1, 2], 1.0)).unwrap();
        (a, b)
    }

    #[test]
    fn insert_rejects_duplicates() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(p.insert("w", Tensor::scalar(2.0)), Err(NumError::DuplicateParam(_))));
    }

    #[test]
    fn iteration_follows_insertion_order() {
        let (_, b) = pair();
        let names: Vec<&str> = b.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["w", "b"]);
        assert_eq!(b.total_len(), 6);
    }

    #[test]
    fn ema_blend_basic() {
        let (old, new) = pair();
        let out = ema_blend(&old, &new, 0.9).unwrap();
        for (_, t) in out.iter() {
            for &v in t.as_slice() {
                assert!((v - 0.1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ema_blend_identity_when_equal() {
        let (_, new) = pair();
        let out = ema_blend(&new.clone(), &new, 0.5).unwrap();
        for (name, t) in out.iter() {
            assert_eq!(t, new.get(name));
        }
    }

    #[test]
    fn ema_blend_rejects_bad_gamma_and_schema() {
        let (old, new) = pair();
        assert!(ema_blend(&old, &new, 0.0).is_err());
        assert!(ema_blend(&old, &new, 1.0).is_err());
        let mut other = ParamSet::new();
        other.insert("w", Tensor::filled(&[2, 2], 1.0)).unwrap();
        assert!(ema_blend(&old, &other, 0.5).is_err());
    }

    #[test]
    fn repeated_blends_match_direct_geometric_sum() {
        // k blends against a fixed sequence theta_1..theta_k equal
        // (1-g) * sum_i g^(k-i) theta_i + g^k theta_init.
        let gamma = 0.7_f64;
        let k = 12;
        let theta_init = 0.25_f64;
        let seq: Vec<f64> = (1..=k).map(|i| (i as f64 * 0.37).sin()).collect();

        let mut old = ParamSet::new();
        old.insert("p", Tensor::scalar(theta_init)).unwrap();
        for &v in &seq {
            let mut newer = ParamSet::new();
            newer.insert("p", Tensor::scalar(v)).unwrap();
            old.ema_blend_from(&newer, gamma).unwrap();
        }

        let mut direct = gamma.powi(k as i32) * theta_init;
        for (i, &v) in seq.iter().enumerate() {
            direct += (1.0 - gamma) * gamma.powi((k - 1 - i) as i32) * v;
        }
        assert!((old.get("p").item() - direct).abs() < 1e-10);
    }

    #[test]
    fn blend_is_convex_per_coordinate() {
        let mut old = ParamSet::new();
        old.insert("p", Tensor::from_vec(&[1, 3], vec![-1.0, 0.5, 2.0]).unwrap()).unwrap();
        let mut new = ParamSet::new();
        new.insert("p", Tensor::from_vec(&[1, 3], vec![1.0, 0.0, -3.0]).unwrap()).unwrap();
        let out = ema_blend(&old, &new, 0.3).unwrap();
        for i in 0..3 {
            let (a, b) = (old.get("p").as_slice()[i], new.get("p").as_slice()[i]);
            let v = out.get("p").as_slice()[i];
            assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn l2_distance_and_copy() {
        let (mut a, b) = pair();
        assert!((a.l2_distance(&b).unwrap() - (6.0_f64).sqrt()).abs() < 1e-12);
        a.copy_from(&b).unwrap();
        assert_eq!(a.l2_distance(&b).unwrap(), 0.0);
    }
}

//! Dense row-major f64 tensors.
//!
//! Everything downstream (LSTMs, Q-nets, losses) is built from 2-D tensors,
//! so this type stays deliberately small: shape + flat data, no views, no
//! broadcasting. Construction validates shape/data agreement and finiteness;
//! shape mismatches inside tape operations are programming errors and panic.

use serde::{Deserialize, Serialize};

use super::NumError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor. Shape dimensions must be positive.
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor shape must be non-empty with positive dims, got {shape:?}"
        );
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Builds a tensor from externally supplied data, validating length and
    /// finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, NumError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.iter().any(|&d| d == 0) || n != data.len() {
            return Err(NumError::Shape {
                context: "from_vec",
                expected: format!("{shape:?} (len {n})"),
                got: format!("data len {}", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { context: "from_vec", index: i });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// 1×1 tensor holding a single value.
    pub fn scalar(v: f64) -> Tensor {
        Tensor { shape: vec![1, 1], data: vec![v] }
    }

    /// Single-row matrix wrapping a flat vector.
    pub fn row(data: Vec<f64>) -> Result<Tensor, NumError> {
        let n = data.len();
        Tensor::from_vec(&[1, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count, treating 1-D shapes as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Column count of a 1-D or 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows() && c < self.cols());
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        debug_assert!(r < self.rows() && c < cols);
        self.data[r * cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single element of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(&[], vec![]).is_err());
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = Tensor::from_vec(&[1, 2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, NumError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::from_vec(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(t.at(0, 2), 2.0);
        assert_eq!(t.at(1, 0), 3.0);
        assert_eq!(t.row_slice(1), &[3.0, 4.0, 5.0]);
    }
}

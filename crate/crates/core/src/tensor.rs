//! Dense row-major `f64` matrices. A vector is a matrix with one column.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting wrong lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                op: "tensor",
                detail: format!("{} values for {rows}x{cols}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Unchecked constructor for internal arithmetic; finiteness is checked by the graph.
    pub(crate) fn raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor::raw(rows, cols, vec![value; rows * cols])
    }

    pub fn column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Tensor::new(n, 1, values)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Tensor::new(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        Tensor::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor::raw(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a 1x1 tensor.
    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.dims(), (1, 1));
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self += scale * other`, dims must agree.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// Plain matrix product without dimension checks beyond debug asserts.
    pub(crate) fn matmul(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, other.rows);
        let (m, n, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::raw(m, p, out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub(crate) fn t_matmul(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.rows, other.rows);
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * p];
        for k in 0..n {
            let b_row = &other.data[k * p..(k + 1) * p];
            for i in 0..m {
                let a = self.data[k * m + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * p..(i + 1) * p];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::raw(m, p, out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub(crate) fn matmul_t(&self, other: &Tensor) -> Tensor {
        debug_assert_eq!(self.cols, other.cols);
        let (m, n, p) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let a_row = &self.data[i * n..(i + 1) * n];
            for j in 0..p {
                let b_row = &other.data[j * n..(j + 1) * n];
                out[i * p + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::raw(m, p, out)
    }
}

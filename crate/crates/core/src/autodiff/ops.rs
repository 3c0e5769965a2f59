use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Graph primitives. Vectors are column vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    CwiseMul,
    Tanh,
    Logistic,
    Softplus,
    Exp,
    Log,
    Square,
    ConcatRows,
    ConcatCols,
    SumElems,
    /// Softmax of a column vector, computed with max subtraction.
    Softmax,
    /// `-log softmax(v)[i]` as one fused primitive.
    PickNegLogSoftmax(usize),
    ScalarMul(f64),
    /// `Σ_{r,c} A[r,c] · B[c,r]`.
    TraceOfProduct,
    Transpose,
    /// Adds a column vector to every column of a matrix.
    AddColumn,
    /// Selects one row of a matrix as a column vector (embedding lookup).
    RowLookup(usize),
    SliceRows {
        start: usize,
        len: usize,
    },
    /// Windowed read of an n-vector into a `(2k+1) × n` matrix:
    /// `out[d][i] = v[i + d - k]`, zero outside `0..n` and for offsets
    /// `d - k > reach`.
    Window {
        k: usize,
        reach: usize,
    },
}

fn mismatch(op: &'static str, detail: String) -> Error {
    Error::DimMismatch { op, detail }
}

fn arity(op: &'static str, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(mismatch(
            op,
            format!("expected {n} inputs, got {}", inputs.len()),
        ));
    }
    Ok(())
}

fn same_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(mismatch(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn column_vector(op: &'static str, a: &Tensor) -> Result<()> {
    if a.cols() != 1 || a.rows() == 0 {
        return Err(mismatch(
            op,
            format!("expected a column vector, got {:?}", a.dims()),
        ));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::raw(
        a.rows(),
        a.cols(),
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(*x, *y))
            .collect(),
    )
}

pub(crate) fn stable_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softmax_values(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::CwiseMul => "cwise-mul",
            Primitive::Tanh => "tanh",
            Primitive::Logistic => "logistic",
            Primitive::Softplus => "softplus",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Square => "square",
            Primitive::ConcatRows => "concat-rows",
            Primitive::ConcatCols => "concat-cols",
            Primitive::SumElems => "sum-elems",
            Primitive::Softmax => "softmax",
            Primitive::PickNegLogSoftmax(_) => "pick-neg-log-softmax",
            Primitive::ScalarMul(_) => "scalar-mul",
            Primitive::TraceOfProduct => "trace-of-product",
            Primitive::Transpose => "transpose",
            Primitive::AddColumn => "add-column",
            Primitive::RowLookup(_) => "row-lookup",
            Primitive::SliceRows { .. } => "slice-rows",
            Primitive::Window { .. } => "window",
        }
    }

    pub(crate) fn forward(&self, x: &[&Tensor]) -> Result<Tensor> {
        let op = self.name();
        match *self {
            Primitive::MatMul => {
                arity(op, x, 2)?;
                if x[0].cols() != x[1].rows() {
                    return Err(mismatch(
                        op,
                        format!("{:?} x {:?}", x[0].dims(), x[1].dims()),
                    ));
                }
                Ok(x[0].matmul(x[1]))
            }
            Primitive::Add | Primitive::Sub | Primitive::CwiseMul => {
                arity(op, x, 2)?;
                same_dims(op, x[0], x[1])?;
                Ok(match self {
                    Primitive::Add => zip_map(x[0], x[1], |a, b| a + b),
                    Primitive::Sub => zip_map(x[0], x[1], |a, b| a - b),
                    _ => zip_map(x[0], x[1], |a, b| a * b),
                })
            }
            Primitive::Tanh => unary(op, x, f64::tanh),
            Primitive::Logistic => unary(op, x, stable_logistic),
            Primitive::Softplus => unary(op, x, stable_softplus),
            Primitive::Exp => unary(op, x, f64::exp),
            Primitive::Log => unary(op, x, f64::ln),
            Primitive::Square => unary(op, x, |v| v * v),
            Primitive::ScalarMul(c) => unary(op, x, |v| c * v),
            Primitive::ConcatRows => {
                let first = x.first().ok_or_else(|| mismatch(op, "no inputs".into()))?;
                let cols = first.cols();
                if let Some(bad) = x.iter().find(|t| t.cols() != cols) {
                    return Err(mismatch(op, format!("{} cols vs {}", bad.cols(), cols)));
                }
                let rows = x.iter().map(|t| t.rows()).sum();
                let data = x.iter().flat_map(|t| t.data().iter().copied()).collect();
                Ok(Tensor::raw(rows, cols, data))
            }
            Primitive::ConcatCols => {
                let first = x.first().ok_or_else(|| mismatch(op, "no inputs".into()))?;
                let rows = first.rows();
                if let Some(bad) = x.iter().find(|t| t.rows() != rows) {
                    return Err(mismatch(op, format!("{} rows vs {}", bad.rows(), rows)));
                }
                let cols: usize = x.iter().map(|t| t.cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for t in x {
                        data.extend_from_slice(t.row(r));
                    }
                }
                Ok(Tensor::raw(rows, cols, data))
            }
            Primitive::SumElems => {
                arity(op, x, 1)?;
                Ok(Tensor::raw(1, 1, vec![x[0].data().iter().sum()]))
            }
            Primitive::Softmax => {
                arity(op, x, 1)?;
                column_vector(op, x[0])?;
                Ok(Tensor::raw(x[0].rows(), 1, softmax_values(x[0].data())))
            }
            Primitive::PickNegLogSoftmax(i) => {
                arity(op, x, 1)?;
                column_vector(op, x[0])?;
                let v = x[0].data();
                if i >= v.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        len: v.len(),
                    });
                }
                Ok(Tensor::raw(1, 1, vec![log_sum_exp(v) - v[i]]))
            }
            Primitive::TraceOfProduct => {
                arity(op, x, 2)?;
                let (a, b) = (x[0], x[1]);
                if a.rows() != b.cols() || a.cols() != b.rows() {
                    return Err(mismatch(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
                }
                let mut acc = 0.0;
                for r in 0..a.rows() {
                    for c in 0..a.cols() {
                        acc += a.get(r, c) * b.get(c, r);
                    }
                }
                Ok(Tensor::raw(1, 1, vec![acc]))
            }
            Primitive::Transpose => {
                arity(op, x, 1)?;
                Ok(x[0].transpose())
            }
            Primitive::AddColumn => {
                arity(op, x, 2)?;
                let (m, v) = (x[0], x[1]);
                if v.cols() != 1 || v.rows() != m.rows() {
                    return Err(mismatch(op, format!("{:?} + {:?}", m.dims(), v.dims())));
                }
                Ok(Tensor::from_fn(m.rows(), m.cols(), |r, c| {
                    m.get(r, c) + v.get(r, 0)
                }))
            }
            Primitive::RowLookup(row) => {
                arity(op, x, 1)?;
                if row >= x[0].rows() {
                    return Err(Error::IndexOutOfRange {
                        index: row,
                        len: x[0].rows(),
                    });
                }
                Ok(Tensor::raw(x[0].cols(), 1, x[0].row(row).to_vec()))
            }
            Primitive::SliceRows { start, len } => {
                arity(op, x, 1)?;
                if start + len > x[0].rows() || len == 0 {
                    return Err(Error::IndexOutOfRange {
                        index: start + len,
                        len: x[0].rows(),
                    });
                }
                let cols = x[0].cols();
                Ok(Tensor::raw(
                    len,
                    cols,
                    x[0].data()[start * cols..(start + len) * cols].to_vec(),
                ))
            }
            Primitive::Window { k, reach } => {
                arity(op, x, 1)?;
                column_vector(op, x[0])?;
                let v = x[0].data();
                let n = v.len();
                Ok(Tensor::from_fn(2 * k + 1, n, |d, i| {
                    window_source(i, d, k, reach, n).map_or(0.0, |s| v[s])
                }))
            }
        }
    }

    /// Input gradients given the upstream gradient `dy`. Entries for inputs
    /// with `wanted[i] == false` may be `None`.
    pub(crate) fn backward(
        &self,
        x: &[&Tensor],
        y: &Tensor,
        dy: &Tensor,
        wanted: &[bool],
    ) -> Vec<Option<Tensor>> {
        let want = |i: usize| wanted[i];
        match *self {
            Primitive::MatMul => vec![
                want(0).then(|| dy.matmul_t(x[1])),
                want(1).then(|| x[0].t_matmul(dy)),
            ],
            Primitive::Add => vec![want(0).then(|| dy.clone()), want(1).then(|| dy.clone())],
            Primitive::Sub => vec![want(0).then(|| dy.clone()), want(1).then(|| dy.map(|v| -v))],
            Primitive::CwiseMul => vec![
                want(0).then(|| zip_map(dy, x[1], |d, b| d * b)),
                want(1).then(|| zip_map(dy, x[0], |d, a| d * a)),
            ],
            Primitive::Tanh => vec![Some(zip_map(dy, y, |d, t| d * (1.0 - t * t)))],
            Primitive::Logistic => vec![Some(zip_map(dy, y, |d, s| d * s * (1.0 - s)))],
            Primitive::Softplus => {
                vec![Some(zip_map(dy, x[0], |d, v| d * stable_logistic(v)))]
            }
            Primitive::Exp => vec![Some(zip_map(dy, y, |d, e| d * e))],
            Primitive::Log => vec![Some(zip_map(dy, x[0], |d, v| d / v))],
            Primitive::Square => vec![Some(zip_map(dy, x[0], |d, v| 2.0 * d * v))],
            Primitive::ScalarMul(c) => vec![Some(dy.map(|d| c * d))],
            Primitive::ConcatRows => {
                let cols = dy.cols();
                let mut offset = 0;
                x.iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let n = t.len();
                        let part = want(i).then(|| {
                            Tensor::raw(t.rows(), cols, dy.data()[offset..offset + n].to_vec())
                        });
                        offset += n;
                        part
                    })
                    .collect()
            }
            Primitive::ConcatCols => {
                let mut offset = 0;
                x.iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let c0 = offset;
                        offset += t.cols();
                        want(i)
                            .then(|| Tensor::from_fn(t.rows(), t.cols(), |r, c| dy.get(r, c0 + c)))
                    })
                    .collect()
            }
            Primitive::SumElems => {
                let d = dy.scalar_value();
                vec![Some(Tensor::filled(x[0].rows(), x[0].cols(), d))]
            }
            Primitive::Softmax => {
                let dot: f64 = y.data().iter().zip(dy.data()).map(|(s, d)| s * d).sum();
                vec![Some(zip_map(y, dy, |s, d| s * (d - dot)))]
            }
            Primitive::PickNegLogSoftmax(i) => {
                let d = dy.scalar_value();
                let mut g = softmax_values(x[0].data());
                g[i] -= 1.0;
                g.iter_mut().for_each(|v| *v *= d);
                vec![Some(Tensor::raw(x[0].rows(), 1, g))]
            }
            Primitive::TraceOfProduct => {
                let d = dy.scalar_value();
                vec![
                    want(0).then(|| x[1].transpose().map(|v| d * v)),
                    want(1).then(|| x[0].transpose().map(|v| d * v)),
                ]
            }
            Primitive::Transpose => vec![Some(dy.transpose())],
            Primitive::AddColumn => vec![
                want(0).then(|| dy.clone()),
                want(1).then(|| {
                    Tensor::raw(
                        dy.rows(),
                        1,
                        (0..dy.rows()).map(|r| dy.row(r).iter().sum()).collect(),
                    )
                }),
            ],
            Primitive::RowLookup(row) => {
                let mut g = Tensor::zeros(x[0].rows(), x[0].cols());
                let cols = x[0].cols();
                g.data_mut()[row * cols..(row + 1) * cols].copy_from_slice(dy.data());
                vec![Some(g)]
            }
            Primitive::SliceRows { start, len } => {
                let mut g = Tensor::zeros(x[0].rows(), x[0].cols());
                let cols = x[0].cols();
                g.data_mut()[start * cols..(start + len) * cols].copy_from_slice(dy.data());
                vec![Some(g)]
            }
            Primitive::Window { k, reach } => {
                let n = x[0].rows();
                let mut g = vec![0.0; n];
                for d in 0..2 * k + 1 {
                    for i in 0..n {
                        if let Some(s) = window_source(i, d, k, reach, n) {
                            g[s] += dy.get(d, i);
                        }
                    }
                }
                vec![Some(Tensor::raw(n, 1, g))]
            }
        }
    }
}

fn unary(op: &'static str, x: &[&Tensor], f: impl Fn(f64) -> f64) -> Result<Tensor> {
    arity(op, x, 1)?;
    Ok(x[0].map(f))
}

/// Source index read by window row `d` at position `i`, if any.
#[inline]
fn window_source(i: usize, d: usize, k: usize, reach: usize, n: usize) -> Option<usize> {
    if d > k + reach {
        return None;
    }
    let s = (i + d).checked_sub(k)?;
    (s < n).then_some(s)
}

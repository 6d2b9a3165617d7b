//! Differentiable operations on [`Var`].

use std::rc::Rc;

use super::tensor::gemm;
use super::{AutodiffError, Tensor, Var};

type Result<T> = std::result::Result<T, AutodiffError>;

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(AutodiffError::ShapeMismatch { op, lhs: s.to_vec(), rhs: vec![] }),
    }
}

/// Column sums of a `[n, m]` buffer.
fn column_sums(g: &Tensor) -> Tensor {
    let cols = g.cols();
    let mut out = vec![0.0; cols];
    for row in g.data().chunks_exact(cols) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    Tensor::vector(out)
}

impl<'t> Var<'t> {
    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let (n, k) = require_matrix("matmul", &self.value)?;
        let (k2, m) = require_matrix("matmul", &other.value)?;
        if k != k2 {
            return Err(mismatch("matmul", &self.value, &other.value));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, self.value.data(), false, other.value.data(), false, 0.0, &mut out);
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));
        Ok(self.tape.record(&[self, other], Tensor::matrix(n, m, out)?, move |g| {
            let mut ga = vec![0.0; n * k];
            gemm(n, m, k, g.data(), false, b.data(), true, 0.0, &mut ga);
            let mut gb = vec![0.0; k * m];
            gemm(k, n, m, a.data(), true, g.data(), false, 0.0, &mut gb);
            vec![Tensor::matrix(n, k, ga).ok(), Tensor::matrix(k, m, gb).ok()]
        }))
    }

    /// Affine layer `x W + b` for `x: [n, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
    pub fn linear(&self, w: &Var<'t>, b: &Var<'t>) -> Result<Var<'t>> {
        let (n, din) = require_matrix("linear", &self.value)?;
        let (din2, dout) = require_matrix("linear", &w.value)?;
        if din != din2 {
            return Err(mismatch("linear", &self.value, &w.value));
        }
        if b.value.shape() != [dout] {
            return Err(mismatch("linear", &w.value, &b.value));
        }
        let mut out = Vec::with_capacity(n * dout);
        for _ in 0..n {
            out.extend_from_slice(b.value.data());
        }
        gemm(n, din, dout, self.value.data(), false, w.value.data(), false, 1.0, &mut out);
        let (x, wv) = (Rc::clone(&self.value), Rc::clone(&w.value));
        let x_tracked = self.is_tracked();
        Ok(self.tape.record(&[self, w, b], Tensor::matrix(n, dout, out)?, move |g| {
            let gx = x_tracked.then(|| {
                let mut gx = vec![0.0; n * din];
                gemm(n, dout, din, g.data(), false, wv.data(), true, 0.0, &mut gx);
                Tensor::matrix(n, din, gx).unwrap()
            });
            let mut gw = vec![0.0; din * dout];
            gemm(din, n, dout, x.data(), true, g.data(), false, 0.0, &mut gw);
            vec![gx, Tensor::matrix(din, dout, gw).ok(), Some(column_sums(g))]
        }))
    }

    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        if self.value.shape() != other.value.shape() {
            return Err(mismatch(op, &self.value, &other.value));
        }
        Ok(())
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "add")?;
        let value = self.value.zip_map(&other.value, |a, b| a + b);
        Ok(self.tape.record(&[self, other], value, |g| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "sub")?;
        let value = self.value.zip_map(&other.value, |a, b| a - b);
        Ok(self.tape.record(&[self, other], value, |g| vec![Some(g.clone()), Some(g.map(|x| -x))]))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "mul")?;
        let value = self.value.zip_map(&other.value, |a, b| a * b);
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&other.value));
        Ok(self.tape.record(&[self, other], value, move |g| {
            vec![Some(g.zip_map(&b, |g, b| g * b)), Some(g.zip_map(&a, |g, a| g * a))]
        }))
    }

    fn row_operand(&self, row: &Var<'t>, op: &'static str) -> Result<usize> {
        let cols = self.value.cols();
        if row.value.shape() != [cols] {
            return Err(mismatch(op, &self.value, &row.value));
        }
        Ok(cols)
    }

    /// Adds the vector `row: [m]` to every row of `self: [n, m]`.
    pub fn add_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        let cols = self.row_operand(row, "add_row")?;
        let mut value = (*self.value).clone();
        for r in value.data_mut().chunks_exact_mut(cols) {
            for (x, b) in r.iter_mut().zip(row.value.data()) {
                *x += b;
            }
        }
        Ok(self.tape.record(&[self, row], value, |g| vec![Some(g.clone()), Some(column_sums(g))]))
    }

    pub fn sub_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        self.add_row(&row.neg())
    }

    /// Multiplies every row of `self: [n, m]` elementwise by `row: [m]`.
    pub fn mul_row(&self, row: &Var<'t>) -> Result<Var<'t>> {
        let cols = self.row_operand(row, "mul_row")?;
        let mut value = (*self.value).clone();
        for r in value.data_mut().chunks_exact_mut(cols) {
            for (x, b) in r.iter_mut().zip(row.value.data()) {
                *x *= b;
            }
        }
        let (a, b) = (Rc::clone(&self.value), Rc::clone(&row.value));
        Ok(self.tape.record(&[self, row], value, move |g| {
            let mut ga = g.clone();
            let mut gb = vec![0.0; cols];
            for ((gr, ar), gar) in g
                .data()
                .chunks_exact(cols)
                .zip(a.data().chunks_exact(cols))
                .zip(ga.data_mut().chunks_exact_mut(cols))
            {
                for j in 0..cols {
                    gar[j] = gr[j] * b.data()[j];
                    gb[j] += gr[j] * ar[j];
                }
            }
            vec![Some(ga), Some(Tensor::vector(gb))]
        }))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        let value = self.value.map(|x| x * s);
        self.tape.record(&[self], value, move |g| vec![Some(g.map(|x| x * s))])
    }

    pub fn add_scalar(&self, s: f64) -> Var<'t> {
        let value = self.value.map(|x| x + s);
        self.tape.record(&[self], value, |g| vec![Some(g.clone())])
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    /// Rectifier; the subgradient at 0 is 0.
    pub fn relu(&self) -> Var<'t> {
        let value = self.value.map(|x| x.max(0.0));
        let x = Rc::clone(&self.value);
        self.tape.record(&[self], value, move |g| {
            vec![Some(g.zip_map(&x, |g, x| if x > 0.0 { g } else { 0.0 }))]
        })
    }

    pub fn tanh(&self) -> Var<'t> {
        let value = self.value.map(f64::tanh);
        let y = value.clone();
        self.tape.record(&[self], value, move |g| vec![Some(g.zip_map(&y, |g, y| g * (1.0 - y * y)))])
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<'t> {
        let value = self.value.map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        let x = Rc::clone(&self.value);
        self.tape.record(&[self], value, move |g| {
            vec![Some(g.zip_map(&x, |g, x| g / (1.0 + (-x).exp())))]
        })
    }

    /// Elementwise square root; the gradient is unbounded at 0.
    pub fn sqrt(&self) -> Var<'t> {
        let value = self.value.map(f64::sqrt);
        let y = value.clone();
        self.tape.record(&[self], value, move |g| vec![Some(g.zip_map(&y, |g, y| 0.5 * g / y))])
    }

    pub fn square(&self) -> Var<'t> {
        let value = self.value.map(|x| x * x);
        let x = Rc::clone(&self.value);
        self.tape.record(&[self], value, move |g| vec![Some(g.zip_map(&x, |g, x| 2.0 * g * x))])
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self) -> Var<'t> {
        let value = Tensor::scalar(self.value.data().iter().sum());
        let shape = self.value.shape().to_vec();
        self.tape.record(&[self], value, move |g| vec![Some(Tensor::filled(&shape, g.item()))])
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&self) -> Var<'t> {
        self.sum().scale(1.0 / self.value.len() as f64)
    }

    /// Column means of `[n, m]`, giving `[m]`.
    pub fn mean_rows(&self) -> Result<Var<'t>> {
        let (n, m) = require_matrix("mean_rows", &self.value)?;
        let value = column_sums(&self.value).map(|x| x / n as f64);
        Ok(self.tape.record(&[self], value, move |g| {
            let mut out = Vec::with_capacity(n * m);
            for _ in 0..n {
                out.extend(g.data().iter().map(|x| x / n as f64));
            }
            vec![Tensor::matrix(n, m, out).ok()]
        }))
    }

    /// Column maxima of `[n, m]`, giving `[m]`. The gradient goes to the
    /// first row attaining each maximum.
    pub fn max_pool_rows(&self) -> Result<Var<'t>> {
        let (n, m) = require_matrix("max_pool_rows", &self.value)?;
        let mut best = self.value.row(0).to_vec();
        let mut arg = vec![0usize; m];
        for i in 1..n {
            for (j, &x) in self.value.row(i).iter().enumerate() {
                if x > best[j] {
                    best[j] = x;
                    arg[j] = i;
                }
            }
        }
        Ok(self.tape.record(&[self], Tensor::vector(best), move |g| {
            let mut out = vec![0.0; n * m];
            for (j, &i) in arg.iter().enumerate() {
                out[i * m + j] = g.data()[j];
            }
            vec![Tensor::matrix(n, m, out).ok()]
        }))
    }

    /// Rows `index[i]` of `self: [n, m]`, giving `[index.len(), m]`.
    pub fn gather_rows(&self, index: Rc<Vec<usize>>) -> Result<Var<'t>> {
        let (n, m) = require_matrix("gather_rows", &self.value)?;
        if index.is_empty() {
            return Err(AutodiffError::BadShape(vec![0, m]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(AutodiffError::IndexOutOfRange { index: bad, len: n });
        }
        let mut out = Vec::with_capacity(index.len() * m);
        for &i in index.iter() {
            out.extend_from_slice(self.value.row(i));
        }
        let value = Tensor::matrix(index.len(), m, out)?;
        Ok(self.tape.record(&[self], value, move |g| {
            let mut acc = vec![0.0; n * m];
            for (r, &i) in index.iter().enumerate() {
                for j in 0..m {
                    acc[i * m + j] += g.data()[r * m + j];
                }
            }
            vec![Tensor::matrix(n, m, acc).ok()]
        }))
    }

    /// Sparse row mixing: output row `r` is `sum w * self[i]` over
    /// `(i, w)` in `terms[r]`.
    pub fn combine_rows(&self, terms: Rc<Vec<Vec<(usize, f64)>>>) -> Result<Var<'t>> {
        let (n, m) = require_matrix("combine_rows", &self.value)?;
        if terms.is_empty() {
            return Err(AutodiffError::BadShape(vec![0, m]));
        }
        let mut out = vec![0.0; terms.len() * m];
        for (r, row_terms) in terms.iter().enumerate() {
            for &(i, w) in row_terms {
                if i >= n {
                    return Err(AutodiffError::IndexOutOfRange { index: i, len: n });
                }
                for (o, x) in out[r * m..(r + 1) * m].iter_mut().zip(self.value.row(i)) {
                    *o += w * x;
                }
            }
        }
        let value = Tensor::matrix(terms.len(), m, out)?;
        Ok(self.tape.record(&[self], value, move |g| {
            let mut acc = vec![0.0; n * m];
            for (r, row_terms) in terms.iter().enumerate() {
                for &(i, w) in row_terms {
                    for j in 0..m {
                        acc[i * m + j] += w * g.data()[r * m + j];
                    }
                }
            }
            vec![Tensor::matrix(n, m, acc).ok()]
        }))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let value = self.value.reshaped(shape)?;
        let original = self.value.shape().to_vec();
        Ok(self.tape.record(&[self], value, move |g| vec![g.reshaped(original.clone()).ok()]))
    }
}

/// Weighted sum of one-element vars.
pub fn weighted_sum<'t>(terms: &[(f64, &Var<'t>)]) -> Result<Var<'t>> {
    let (first, rest) = terms.split_first().ok_or(AutodiffError::BadShape(vec![0]))?;
    let mut acc = first.1.scale(first.0);
    for (w, v) in rest {
        acc = acc.add(&v.scale(*w))?;
    }
    Ok(acc)
}

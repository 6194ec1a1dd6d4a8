//! Dense row-major `f64` matrices sized for desk-scale training.
//!
//! Everything downstream (blocks, classifiers, losses) works on `Tensor2`;
//! there is no broadcasting and no views beyond row slices. Backward passes
//! use the transposed-product helpers instead of materializing transposes.

use serde::{Deserialize, Serialize};

use crate::error::{KpgError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Tensor2 { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor2 { rows: r, cols: c, data }
    }

    pub fn from_row(row: &[f64]) -> Self {
        Tensor2 {
            rows: 1,
            cols: row.len(),
            data: row.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor2::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(indices.len(), self.cols);
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    /// `self (r x k) * other (k x c)`, ikj loop order.
    pub fn matmul(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.cols, other.rows, "matmul inner dims");
        let mut out = Tensor2::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T (k x r)^T=(r x k) ... ` i.e. returns `self^T * other` with
    /// `self (k x r)`, `other (k x c)` -> `(r x c)`.
    pub fn matmul_tn(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.rows, other.rows, "matmul_tn outer dims");
        let mut out = Tensor2::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Returns `self * other^T` with `self (r x k)`, `other (c x k)` -> `(r x c)`.
    pub fn matmul_nt(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(self.cols, other.cols, "matmul_nt inner dims");
        let mut out = Tensor2::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scaled_add_assign(&mut self, other: &Tensor2, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Mean over rows; zero vector when the matrix has no rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        if self.rows == 0 {
            return out;
        }
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for o in &mut out {
            *o *= inv;
        }
        out
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn concat_cols(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        assert_eq!(a.rows, b.rows, "concat_cols row mismatch");
        let mut out = Tensor2::zeros(a.rows, a.cols + b.cols);
        for i in 0..a.rows {
            out.row_mut(i)[..a.cols].copy_from_slice(a.row(i));
            out.row_mut(i)[a.cols..].copy_from_slice(b.row(i));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(KpgError::Input(format!(
                "{context}: non-finite value in {}x{} tensor",
                self.rows, self.cols
            )))
        }
    }
}

/// `x (1 x r as slice) * w (r x c)` -> length-c vector.
pub fn vec_matmul(x: &[f64], w: &Tensor2) -> Vec<f64> {
    assert_eq!(x.len(), w.rows(), "vec_matmul inner dims");
    let mut out = vec![0.0; w.cols()];
    for (k, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(w.row(k)) {
            *o += a * b;
        }
    }
    out
}

/// `dy (1 x c) * w^T (c x r)` -> length-r vector.
pub fn vec_matmul_t(dy: &[f64], w: &Tensor2) -> Vec<f64> {
    assert_eq!(dy.len(), w.cols(), "vec_matmul_t inner dims");
    let mut out = vec![0.0; w.rows()];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (&d, &b) in dy.iter().zip(w.row(k)) {
            acc += d * b;
        }
        *o = acc;
    }
    out
}

/// Accumulates the outer product `x^T * dy` into `grad`.
pub fn outer_acc(grad: &mut Tensor2, x: &[f64], dy: &[f64]) {
    assert_eq!(grad.rows(), x.len());
    assert_eq!(grad.cols(), dy.len());
    for (i, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (g, &d) in grad.row_mut(i).iter_mut().zip(dy) {
            *g += a * d;
        }
    }
}

pub fn add_vec(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_triple_loop() {
        let a = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let b = Tensor2::from_rows(&[vec![7.0, 8.0], vec![9.0, 10.0], vec![11.0, 12.0]]);
        let c = a.matmul(&b);
        // independent naive oracle
        let mut expect = Tensor2::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a.get(i, k) * b.get(k, j);
                }
                expect.set(i, j, s);
            }
        }
        assert_eq!(c, expect);
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let a = Tensor2::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![2.0, 1.0]]);
        let b = Tensor2::from_rows(&[vec![1.0, 0.0, 2.0], vec![-1.0, 1.0, 0.5], vec![3.0, 2.0, 1.0]]);
        assert_eq!(a.matmul_tn(&b), a.transpose().matmul(&b));
        let c = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(a.matmul_nt(&c), a.matmul(&c.transpose()));
    }

    #[test]
    fn push_row_and_gather() {
        let mut t = Tensor2::zeros(0, 0);
        t.push_row(&[1.0, 2.0]);
        t.push_row(&[3.0, 4.0]);
        t.push_row(&[5.0, 6.0]);
        assert_eq!(t.rows(), 3);
        let g = t.gather_rows(&[2, 0]);
        assert_eq!(g.row(0), &[5.0, 6.0]);
        assert_eq!(g.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn mean_row_of_empty_is_zero() {
        let t = Tensor2::zeros(0, 3);
        assert_eq!(t.mean_row(), vec![0.0; 3]);
    }
}

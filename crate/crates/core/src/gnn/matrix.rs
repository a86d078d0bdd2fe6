use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<Vec<f64>>,
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        let values = m.data.chunks(m.cols.max(1)).take(m.rows).map(<[f64]>::to_vec).collect();
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            values,
        }
    }
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        if raw.values.len() != raw.rows || raw.values.iter().any(|r| r.len() != raw.cols) {
            return Err(Error::Shape(format!(
                "matrix declared {}×{} but values do not match",
                raw.rows, raw.cols
            )));
        }
        Ok(Matrix {
            rows: raw.rows,
            cols: raw.cols,
            data: raw.values.into_iter().flatten().collect(),
        })
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        RawMatrix {
            rows: rows.len(),
            cols: rows.first().map_or(0, Vec::len),
            values: rows.to_vec(),
        }
        .try_into()
    }

    /// Entries drawn uniformly from [−1/√cols, 1/√cols].
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self · x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += selfᵀ · dy`
    pub fn tmul_vec_add(&self, dy: &[f64], out: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&d, row) in dy.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if d != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += d * a;
                }
            }
        }
    }

    /// `self += dy · xᵀ`
    pub fn add_outer(&mut self, dy: &[f64], x: &[f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (&d, row) in dy.iter().zip(self.data.chunks_exact_mut(self.cols.max(1))) {
            if d != 0.0 {
                for (a, b) in row.iter_mut().zip(x) {
                    *a += d * b;
                }
            }
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

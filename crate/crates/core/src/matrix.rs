//! Dense row-major matrices and the kernels every alignment stage is built on.
//!
//! Storage is always `f64`; feature files are `f32` on disk and widened on load.
//! Row-parallel kernels compute each output row with a fixed reduction order,
//! so results are bitwise identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data).expect("finite literal matrix")
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub(crate) fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn min_value(&self) -> Option<f64> {
        self.data.iter().copied().reduce(f64::min)
    }

    pub fn max_value(&self) -> Option<f64> {
        self.data.iter().copied().reduce(f64::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// Elementwise sum.
    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Column-wise concatenation `[self | other]`.
    pub fn hconcat(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Permutes columns so that `out[i][perm[j]] = self[i][j]`.
    pub fn permute_cols(&self, perm: &[usize]) -> DenseMatrix {
        assert_eq!(perm.len(), self.cols);
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, &pj) in perm.iter().enumerate() {
                out.data[i * self.cols + pj] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn check_finite(self, what: &str) -> Result<DenseMatrix> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(format!("{what} overflowed")))
        }
    }
}

/// Standard product `a · b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, m) = (a.rows, b.cols);
    let mut out = DenseMatrix::zeros(n, m);
    if m == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    });
    out.check_finite("matmul")
}

/// `a · bᵀ`, i.e. all pairwise row dot products.
pub fn matmul_bt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.cols {
        return Err(Error::Dimension(format!(
            "matmul_bt {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let (n, m) = (a.rows, b.rows);
    let mut out = DenseMatrix::zeros(n, m);
    if m == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        let ai = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = ai.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    });
    out.check_finite("matmul_bt")
}

/// Max-composition: `out[i][j] = max over (s, t) of a[i][s] · (x[s][t] · b_t[j][t])`.
///
/// `b_t` holds the target side with one row per output column, so the shapes
/// line up as `a ∘ x ∘ b_tᵀ`. Empty reductions yield 0.
pub fn max_compose(a: &DenseMatrix, x: &DenseMatrix, b_t: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != x.rows || x.cols != b_t.cols {
        return Err(Error::Dimension(format!(
            "max_compose {:?} ∘ {:?} ∘ {:?}ᵀ",
            a.shape(),
            x.shape(),
            b_t.shape()
        )));
    }
    let out = if a.is_nonnegative() {
        max_compose_factored(a, x, b_t)
    } else {
        max_compose_full(a, x, b_t)
    };
    out.check_finite("max_compose")
}

// For a[i][s] >= 0, rounding of `a[i][s] * y` is monotone in `y`, so the inner
// max over t can be taken first without changing any output value. Signs of
// x and b_t do not matter.
fn max_compose_factored(a: &DenseMatrix, x: &DenseMatrix, b_t: &DenseMatrix) -> DenseMatrix {
    let (n, m) = (a.rows, b_t.rows);
    let mut out = DenseMatrix::zeros(n, m);
    if m == 0 || a.cols == 0 || x.cols == 0 {
        return out;
    }
    // bridge[s][j] = max_t x[s][t] * b_t[j][t]
    // Zero entries of b_t contribute exactly 0, so only the nonzero ones are scanned.
    let support: Vec<(bool, Vec<(usize, f64)>)> = (0..m)
        .map(|j| {
            let nz: Vec<(usize, f64)> = b_t
                .row(j)
                .iter()
                .copied()
                .enumerate()
                .filter(|&(_, v)| v != 0.0)
                .collect();
            (nz.len() < b_t.cols, nz)
        })
        .collect();
    let mut bridge = DenseMatrix::zeros(x.rows, m);
    bridge.data.par_chunks_mut(m).enumerate().for_each(|(s, row)| {
        let xs = x.row(s);
        for (o, (has_zero, nz)) in row.iter_mut().zip(&support) {
            let mut best = if *has_zero { 0.0 } else { f64::NEG_INFINITY };
            for &(t, bv) in nz {
                let p = xs[t] * bv;
                if p > best {
                    best = p;
                }
            }
            *o = best;
        }
    });
    out.data.par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        let ai = a.row(i);
        // Zero weights contribute exactly 0 whatever the bridge value.
        let floor = if ai.contains(&0.0) { 0.0 } else { f64::NEG_INFINITY };
        out_row.iter_mut().for_each(|o| *o = floor);
        for (s, &ais) in ai.iter().enumerate() {
            if ais == 0.0 {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(bridge.row(s)) {
                let p = ais * bv;
                if p > *o {
                    *o = p;
                }
            }
        }
    });
    out
}

fn max_compose_full(a: &DenseMatrix, x: &DenseMatrix, b_t: &DenseMatrix) -> DenseMatrix {
    let (n, m) = (a.rows, b_t.rows);
    let mut out = DenseMatrix::zeros(n, m);
    if m == 0 {
        return out;
    }
    let empty = a.cols == 0 || x.cols == 0;
    out.data.par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        let ai = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            if empty {
                *o = 0.0;
                continue;
            }
            let bj = b_t.row(j);
            let mut best = f64::NEG_INFINITY;
            for (s, &ais) in ai.iter().enumerate() {
                for (&xv, &bv) in x.row(s).iter().zip(bj) {
                    let p = ais * (xv * bv);
                    if p > best {
                        best = p;
                    }
                }
            }
            *o = best;
        }
    });
    out
}

/// Scales every nonzero row to unit Euclidean norm; zero rows stay zero.
pub fn row_l2_normalize(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    if m.cols == 0 {
        return out;
    }
    for row in out.data.chunks_mut(m.cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Affine map of all entries onto `[0, 1]`. A constant matrix maps to zeros.
pub fn minmax_scale(m: &DenseMatrix) -> DenseMatrix {
    let (Some(lo), Some(hi)) = (m.min_value(), m.max_value()) else {
        return m.clone();
    };
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return DenseMatrix::zeros(m.rows, m.cols);
    }
    let data = m.data.iter().map(|&v| (v - lo) / span).collect();
    DenseMatrix {
        rows: m.rows,
        cols: m.cols,
        data,
    }
}

/// Per row, the smallest column index attaining the row maximum.
pub fn row_argmax(m: &DenseMatrix) -> Result<Vec<usize>> {
    if m.cols == 0 {
        return Err(Error::Dimension("row_argmax on a matrix with zero columns".into()));
    }
    Ok((0..m.rows)
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

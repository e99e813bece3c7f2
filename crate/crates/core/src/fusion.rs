//! Modality fusion: sum the per-modality matrices and rescale the result with
//! a fixed number of Sinkhorn iterations.

use std::collections::BTreeMap;

pub use crate::config::PipelineConfig;
use crate::config::ModalityKind;
use crate::error::{Error, Result};
use crate::matrix::{self, DenseMatrix};
use crate::msp::SimMatrix;

/// `k` rounds of row normalization followed by column normalization, starting
/// from `exp(x - max(x))`.
///
/// Subtracting the global maximum only rescales every entry by one constant,
/// which both normalizations cancel. Rectangular inputs normalize each row and
/// column by its own sum.
pub fn sinkhorn(x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid("sinkhorn on an empty matrix".into()));
    }
    if k == 0 {
        return Err(Error::Config("sinkhorn needs at least one iteration".into()));
    }
    let max = x.max_value().expect("non-empty");
    let mut s: Vec<f64> = x.as_slice().iter().map(|&v| (v - max).exp()).collect();
    let mut col_sums = vec![0.0f64; cols];
    for _ in 0..k {
        for row in s.chunks_mut(cols) {
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        col_sums.iter_mut().for_each(|c| *c = 0.0);
        for row in s.chunks(cols) {
            for (c, &v) in col_sums.iter_mut().zip(row) {
                *c += v;
            }
        }
        for row in s.chunks_mut(cols) {
            for (v, &c) in row.iter_mut().zip(&col_sums) {
                *v /= c;
            }
        }
    }
    let out = DenseMatrix::from_vec(rows, cols, s)?;
    if out.as_slice().iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonFinite(
            "sinkhorn underflowed to zero; input spread too large".into(),
        ));
    }
    Ok(out)
}

/// Elementwise sum of the modality matrices, each min-max scaled first when
/// `config.prescale` is set.
pub fn combine(matrices: &BTreeMap<ModalityKind, SimMatrix>, config: &PipelineConfig) -> Result<SimMatrix> {
    let mut iter = matrices.iter();
    let (first_kind, first) = iter
        .next()
        .ok_or_else(|| Error::Invalid("fusion needs at least one modality matrix".into()))?;
    let prep = |m: &SimMatrix| {
        if config.prescale {
            matrix::minmax_scale(m)
        } else {
            m.clone()
        }
    };
    let mut acc = prep(first);
    for (kind, m) in iter {
        if m.shape() != first.shape() {
            return Err(Error::Dimension(format!(
                "{kind} matrix is {:?} but {first_kind} matrix is {:?}",
                m.shape(),
                first.shape()
            )));
        }
        acc = acc.add(&prep(m))?;
    }
    Ok(acc)
}

/// Fused mapping matrix in the source → target direction.
pub fn fuse(matrices: &BTreeMap<ModalityKind, SimMatrix>, config: &PipelineConfig) -> Result<SimMatrix> {
    sinkhorn(&combine(matrices, config)?, config.sinkhorn_k)
}

/// Fused mapping matrix in the target → source direction, computed from the
/// transposed modality matrices rather than by transposing [`fuse`].
pub fn fuse_backward(matrices: &BTreeMap<ModalityKind, SimMatrix>, config: &PipelineConfig) -> Result<SimMatrix> {
    let transposed: BTreeMap<ModalityKind, SimMatrix> =
        matrices.iter().map(|(&k, m)| (k, m.transpose())).collect();
    fuse(&transposed, config)
}

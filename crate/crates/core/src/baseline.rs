//! Non-transfer comparators: low-rank plus sparse alternating projections on
//! the target alone, and plain truncated-SVD PCA.
//!
//! The alternating-projection baseline is the transfer loop run with no
//! anchored directions and a zero sparse anchor, so any difference between
//! the two estimators comes from the anchors alone.

use crate::error::{Error, Result};
use crate::matcore::{truncated_svd, DenseMatrix};
use crate::project::AnchoredBasis;
use crate::transfer::{transfer_altproj, TransferConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub l_hat: DenseMatrix,
    pub s_hat: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

pub fn altproj_lowrank_sparse(
    y: &DenseMatrix,
    rank: usize,
    sparsity: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<BaselineResult> {
    let (p, q) = y.shape();
    if rank > p.min(q) {
        return Err(Error::shape(format!("rank {rank} exceeds min dimension of {p}x{q}")));
    }
    let basis = AnchoredBasis::empty(p, q, rank)?;
    let cfg = TransferConfig {
        tolerance,
        max_iterations,
        ..TransferConfig::new(rank, sparsity)
    };
    let res = transfer_altproj(y, &basis, &DenseMatrix::zeros(p, q), &cfg)?;
    Ok(BaselineResult {
        l_hat: res.l_hat2.value,
        s_hat: res.s_hat2,
        iterations: res.iterations,
        converged: res.converged,
        objective_trace: res.objective_trace,
    })
}

/// Rank-`rank` truncated SVD reconstruction.
pub fn pca_truncate(y: &DenseMatrix, rank: usize) -> Result<DenseMatrix> {
    Ok(truncated_svd(y, rank)?.reconstruct())
}

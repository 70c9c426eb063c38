//! Anchored transfer by alternating projections, source estimation, and the
//! incoherence diagnostic.

use crate::baseline::altproj_lowrank_sparse;
use crate::embed::{embed_factor, embed_matrix, EmbedShape};
use crate::error::{Error, Result};
use crate::matcore::{frob_norm, full_svd, nnz, truncated_svd, DenseMatrix, SvdTriple};
use crate::project::{anchored_lowrank_proj_from, sparse_edit_proj, AnchoredBasis, AnchoredLowRank};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

/// Floor applied to the norms in the relative-change stopping rule.
const CHANGE_FLOOR: f64 = 1e-12;

/// Estimated source decomposition `(L1, S1)` with the rank-r1 factors of `L1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    pub l_hat: DenseMatrix,
    pub s_hat: DenseMatrix,
    pub svd: SvdTriple,
    pub rank: usize,
    pub sparsity: usize,
}

impl SourceEstimate {
    /// Wraps known source components, e.g. ground truth used as an oracle
    /// anchor. `l` is factored at the given rank.
    pub fn from_parts(l: DenseMatrix, s: DenseMatrix, rank: usize) -> Result<Self> {
        if l.shape() != s.shape() {
            return Err(Error::shape("source low-rank and sparse parts differ in shape"));
        }
        let svd = truncated_svd(&l, rank)?;
        let sparsity = nnz(&s, 0.0);
        Ok(Self {
            l_hat: l,
            s_hat: s,
            svd,
            rank,
            sparsity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    pub rank_increment: usize,
    pub edit_budget: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Only used by diagnostics; never enforced during fitting.
    pub incoherence_mu: Option<f64>,
}

impl TransferConfig {
    pub fn new(rank_increment: usize, edit_budget: usize) -> Self {
        Self {
            rank_increment,
            edit_budget,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            incoherence_mu: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if let Some(mu) = self.incoherence_mu {
            if !(mu > 0.0) {
                return Err(Error::invalid(format!("incoherence_mu must be positive, got {mu}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub l_hat2: AnchoredLowRank,
    pub s_hat2: DenseMatrix,
    /// Number of passes through the loop, including the pass that detected
    /// convergence.
    pub iterations: usize,
    pub converged: bool,
    /// `0.5 * ||Y - L_t - S_t||_F^2`, starting with the initial point
    /// `(0, s0)` and then one entry per pass.
    pub objective_trace: Vec<f64>,
}

impl TransferResult {
    /// `L + S`, the denoised observation.
    pub fn fitted(&self) -> DenseMatrix {
        &self.l_hat2.value + &self.s_hat2
    }
}

fn half_sq_residual(y: &DenseMatrix, l: &DenseMatrix, s: &DenseMatrix) -> f64 {
    let mut acc = 0.0;
    for ((a, b), c) in y.as_slice().iter().zip(l.as_slice()).zip(s.as_slice()) {
        let r = a - b - c;
        acc += r * r;
    }
    0.5 * acc
}

/// Source decomposition of `y1`: truncated SVD when `sparsity == 0`,
/// otherwise the low-rank plus sparse baseline with default settings.
pub fn estimate_source(y1: &DenseMatrix, rank: usize, sparsity: usize) -> Result<SourceEstimate> {
    if rank > y1.rows().min(y1.cols()) {
        return Err(Error::shape(format!(
            "source rank {rank} exceeds min dimension of {}x{}",
            y1.rows(),
            y1.cols()
        )));
    }
    if sparsity == 0 {
        let svd = truncated_svd(y1, rank)?;
        return Ok(SourceEstimate {
            l_hat: svd.reconstruct(),
            s_hat: DenseMatrix::zeros(y1.rows(), y1.cols()),
            svd,
            rank,
            sparsity,
        });
    }
    let fit = altproj_lowrank_sparse(y1, rank, sparsity, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)?;
    if !fit.converged {
        log::debug!("source estimate stopped after {} iterations without converging", fit.iterations);
    }
    let svd = truncated_svd(&fit.l_hat, rank)?;
    Ok(SourceEstimate {
        l_hat: fit.l_hat,
        s_hat: fit.s_hat,
        svd,
        rank,
        sparsity,
    })
}

/// Embeds the source factors and sparse part into the `p2 x q2` target space.
pub fn make_anchors(
    src: &SourceEstimate,
    p2: usize,
    q2: usize,
    delta_r: usize,
) -> Result<(AnchoredBasis, DenseMatrix)> {
    let u = embed_factor(&src.svd.u, p2)?;
    let v = embed_factor(&src.svd.v, q2)?;
    let basis = AnchoredBasis::new(u, v, delta_r)?;
    let s0 = embed_matrix(&src.s_hat, EmbedShape::new(p2, q2))?;
    Ok((basis, s0))
}

/// Alternating projections from `L = 0, S = s0` until the summed relative
/// change of `L` and `S` drops to `cfg.tolerance` or the iteration cap.
pub fn transfer_altproj(
    y2: &DenseMatrix,
    basis: &AnchoredBasis,
    s0: &DenseMatrix,
    cfg: &TransferConfig,
) -> Result<TransferResult> {
    cfg.validate()?;
    if cfg.rank_increment != basis.rank_increment() {
        return Err(Error::invalid(format!(
            "config rank increment {} does not match basis rank increment {}",
            cfg.rank_increment,
            basis.rank_increment()
        )));
    }
    if y2.shape() != basis.target_shape() || s0.shape() != y2.shape() {
        return Err(Error::shape(format!(
            "observation {}x{}, sparse anchor {}x{}, basis {:?} must agree",
            y2.rows(),
            y2.cols(),
            s0.rows(),
            s0.cols(),
            basis.target_shape()
        )));
    }

    let mut l: Option<AnchoredLowRank> = None;
    let mut l_val = DenseMatrix::zeros(y2.rows(), y2.cols());
    let mut s = s0.clone();
    let mut trace = vec![half_sq_residual(y2, &l_val, &s)];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let s_next = sparse_edit_proj(&(y2 - &l_val), s0, cfg.edit_budget)?;
        let l_next = anchored_lowrank_proj_from(&(y2 - &s_next), basis, l.as_ref())?;

        let dl = frob_norm(&(&l_next.value - &l_val)) / frob_norm(&l_val).max(CHANGE_FLOOR);
        let ds = frob_norm(&(&s_next - &s)) / frob_norm(&s).max(CHANGE_FLOOR);

        l_val = l_next.value.clone();
        l = Some(l_next);
        s = s_next;
        trace.push(half_sq_residual(y2, &l_val, &s));

        if dl + ds <= cfg.tolerance {
            converged = true;
            break;
        }
    }

    let l_hat2 = match l {
        Some(l) => l,
        None => unreachable!("max_iterations >= 1 guarantees one pass"),
    };
    Ok(TransferResult {
        l_hat2,
        s_hat2: s,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Outcome of the incoherence diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incoherence {
    pub passes: bool,
    /// `max(sqrt(p/r) ||U||_{2,inf}, sqrt(q/r) ||V||_{2,inf})` over the
    /// numerically nonzero singular directions.
    pub coherence: f64,
}

/// Coherence of the nonzero singular subspaces of `m`; zero for `m = 0`.
pub fn measure_coherence(m: &DenseMatrix) -> Result<f64> {
    let svd = full_svd(m)?;
    let r = svd.rank();
    if r == 0 {
        return Ok(0.0);
    }
    let max_row = |f: &DenseMatrix| {
        (0..f.rows())
            .map(|i| f.row(i)[..r].iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    let (p, q) = m.shape();
    let cu = max_row(svd.u.matrix()) * (p as f64 / r as f64).sqrt();
    let cv = max_row(svd.v.matrix()) * (q as f64 / r as f64).sqrt();
    Ok(cu.max(cv))
}

pub fn incoherence_check(l: &AnchoredLowRank, mu: f64) -> Result<Incoherence> {
    let coherence = measure_coherence(&l.value)?;
    Ok(Incoherence {
        passes: coherence <= mu,
        coherence,
    })
}

//! The two structured projections alternated by the transfer estimator.
//!
//! * Anchored low-rank projection: the closest matrix (in Frobenius norm)
//!   whose column and row spaces contain the anchored subspaces, with at
//!   most `rank_increment` extra directions on each side.
//! * Sparse-edit projection: the closest matrix that differs from a fixed
//!   anchor in at most `edit_budget` entries.
//!
//! The low-rank projection starts from the innovation directions given by
//! the truncated SVD of the doubly projected residual
//! `(I - P_U) M (I - P_V)` and then refines them by block-coordinate ascent
//! on the captured energy `||U_full^T M V_full||_F^2`. The residual SVD
//! alone ignores the coupling blocks `U^T M (I - P_V)` and
//! `(I - P_U) M V`, so it is not always the constrained minimizer; each
//! refinement sweep is an exact maximization over one side and can only
//! improve on it.

use crate::error::{Error, Result};
use crate::matcore::{
    complete_orthonormal, frob_norm, hard_threshold_topk, truncated_svd, DenseMatrix,
    OrthoFactor, SvdTriple,
};

/// Cap on refinement sweeps per starting point.
pub const MAX_REFINE_SWEEPS: usize = 50;

/// Singular directions beyond the leading `delta` from which cold starts
/// choose their seeds.
const EXTRA_SEED_DIRECTIONS: usize = 3;

/// Relative energy gain below which refinement stops.
const REFINE_TOL: f64 = 1e-13;

/// Embedded source subspaces plus the number of innovation directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredBasis {
    u_anchor: OrthoFactor,
    v_anchor: OrthoFactor,
    rank_increment: usize,
}

impl AnchoredBasis {
    pub fn new(u_anchor: OrthoFactor, v_anchor: OrthoFactor, rank_increment: usize) -> Result<Self> {
        if u_anchor.cols() != v_anchor.cols() {
            return Err(Error::shape(format!(
                "anchor ranks differ: {} left vs {} right",
                u_anchor.cols(),
                v_anchor.cols()
            )));
        }
        let total = u_anchor.cols() + rank_increment;
        let limit = u_anchor.rows().min(v_anchor.rows());
        if total > limit {
            return Err(Error::shape(format!(
                "anchored rank {} + increment {rank_increment} exceeds min dimension {limit}",
                u_anchor.cols()
            )));
        }
        Ok(Self {
            u_anchor,
            v_anchor,
            rank_increment,
        })
    }

    /// No anchored directions: plain rank-`rank` projection in `rows x cols`.
    pub fn empty(rows: usize, cols: usize, rank: usize) -> Result<Self> {
        Self::new(OrthoFactor::empty(rows), OrthoFactor::empty(cols), rank)
    }

    pub fn u_anchor(&self) -> &OrthoFactor {
        &self.u_anchor
    }

    pub fn v_anchor(&self) -> &OrthoFactor {
        &self.v_anchor
    }

    pub fn rank_increment(&self) -> usize {
        self.rank_increment
    }

    /// Number of anchored directions r1.
    pub fn anchor_rank(&self) -> usize {
        self.u_anchor.cols()
    }

    /// `(rows, cols)` of the matrices this basis projects.
    pub fn target_shape(&self) -> (usize, usize) {
        (self.u_anchor.rows(), self.v_anchor.rows())
    }

    /// `(I - P_U) m (I - P_V)` without forming the projectors.
    pub fn doubly_projected_residual(&self, m: &DenseMatrix) -> DenseMatrix {
        let u = self.u_anchor.matrix();
        let v = self.v_anchor.matrix();
        if u.cols() == 0 {
            return m.clone();
        }
        let utm = u.t_matmul(m); // r1 x q
        let mv = m.matmul(v); // p x r1
        let utmv = utm.matmul(v); // r1 x r1
        let mut out = m - &u.matmul(&utm);
        out = &out - &mv.matmul_t(v);
        &out + &u.matmul(&utmv).matmul_t(v)
    }
}

/// Output of the anchored low-rank projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredLowRank {
    /// `[U_anchor U_delta]`; the first r1 columns are the anchor, bit for bit.
    pub u_full: OrthoFactor,
    /// `[V_anchor V_delta]`.
    pub v_full: OrthoFactor,
    /// `u_full^T M v_full`.
    pub coeff: DenseMatrix,
    /// `u_full coeff v_full^T`.
    pub value: DenseMatrix,
    anchor_rank: usize,
}

impl AnchoredLowRank {
    /// All-zero estimate with the given anchors and completed innovation
    /// directions.
    pub fn zero(basis: &AnchoredBasis) -> Result<Self> {
        let (p, q) = basis.target_shape();
        let m = DenseMatrix::zeros(p, q);
        residual_svd_projection(&m, basis)
    }

    pub fn anchor_rank(&self) -> usize {
        self.anchor_rank
    }

    pub fn total_rank(&self) -> usize {
        self.u_full.cols()
    }

    /// Innovation block `U_delta`.
    pub fn u_innovation(&self) -> DenseMatrix {
        self.u_full
            .matrix()
            .columns(self.anchor_rank, self.total_rank() - self.anchor_rank)
    }

    /// Innovation block `V_delta`.
    pub fn v_innovation(&self) -> DenseMatrix {
        self.v_full
            .matrix()
            .columns(self.anchor_rank, self.total_rank() - self.anchor_rank)
    }
}

fn check_shape(m: &DenseMatrix, basis: &AnchoredBasis) -> Result<()> {
    if m.shape() != basis.target_shape() {
        let (p, q) = basis.target_shape();
        return Err(Error::shape(format!(
            "matrix is {}x{} but anchors live in {p}x{q}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Makes `cand` (columns) orthonormal and orthogonal to `anchor`, keeping
/// its span where possible; lost directions are completed deterministically.
fn clean_innovation(anchor: &DenseMatrix, cand: &DenseMatrix) -> Result<DenseMatrix> {
    let n = anchor.rows();
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(cand.cols());
    let anchor_cols: Vec<Vec<f64>> = (0..anchor.cols()).map(|j| anchor.column(j)).collect();
    for j in 0..cand.cols() {
        let mut x = cand.column(j);
        for _ in 0..2 {
            for b in anchor_cols.iter().chain(kept.iter()) {
                let c: f64 = x.iter().zip(b).map(|(a, b)| a * b).sum();
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= c * bi);
            }
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            x.iter_mut().for_each(|v| *v /= nrm);
            kept.push(x);
        } else {
            break;
        }
    }
    let missing = cand.cols() - kept.len();
    let mut cols = kept;
    if missing > 0 {
        let sofar = DenseMatrix::from_columns(n, &cols);
        let extra = complete_orthonormal(&anchor.hcat(&sofar), missing)?;
        cols.extend((0..missing).map(|j| extra.column(j)));
    }
    Ok(DenseMatrix::from_columns(n, &cols))
}

/// Top-`k` left singular vectors of `g`, restricted to directions with a
/// nonzero singular value.
fn leading_left(g: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let svd = truncated_svd(g, k.min(g.rows().min(g.cols())))?;
    let r = svd.rank().min(k);
    Ok(svd.u.matrix().columns(0, r))
}

fn assemble(
    m: &DenseMatrix,
    basis: &AnchoredBasis,
    u_delta: &DenseMatrix,
    v_delta: &DenseMatrix,
) -> AnchoredLowRank {
    let u_full = basis.u_anchor.matrix().hcat(u_delta);
    let v_full = basis.v_anchor.matrix().hcat(v_delta);
    let coeff = u_full.t_matmul(m).matmul(&v_full);
    let value = u_full.matmul(&coeff).matmul_t(&v_full);
    AnchoredLowRank {
        u_full: OrthoFactor::from_trusted(u_full),
        v_full: OrthoFactor::from_trusted(v_full),
        coeff,
        value,
        anchor_rank: basis.anchor_rank(),
    }
}

/// Innovation directions straight from the truncated SVD of the doubly
/// projected residual, with no refinement.
pub fn residual_svd_projection(m: &DenseMatrix, basis: &AnchoredBasis) -> Result<AnchoredLowRank> {
    check_shape(m, basis)?;
    let resid = truncated_svd(&basis.doubly_projected_residual(m), basis.rank_increment)?;
    let (u_delta, v_delta) = residual_svd_start(&resid, basis)?;
    Ok(assemble(m, basis, &u_delta, &v_delta))
}

/// Leading `delta` pairs of the residual SVD `resid`, cleaned against the
/// anchors. Directions with zero singular value are replaced by completions.
fn residual_svd_start(resid: &SvdTriple, basis: &AnchoredBasis) -> Result<(DenseMatrix, DenseMatrix)> {
    let delta = basis.rank_increment;
    let r = resid.rank().min(delta);
    let (p, q) = basis.target_shape();
    let u = pad_cols(resid.u.matrix().columns(0, r), delta);
    let v = pad_cols(resid.v.matrix().columns(0, r), delta);
    debug_assert_eq!((u.rows(), v.rows()), (p, q));
    Ok((
        clean_innovation(basis.u_anchor.matrix(), &u)?,
        clean_innovation(basis.v_anchor.matrix(), &v)?,
    ))
}

/// Energy `||[U_a U_d]^T m [V_a V_d]||_F^2` captured by a candidate.
fn captured_energy(
    m: &DenseMatrix,
    basis: &AnchoredBasis,
    u_delta: &DenseMatrix,
    v_delta: &DenseMatrix,
) -> f64 {
    let u_full = basis.u_anchor.matrix().hcat(u_delta);
    let v_full = basis.v_anchor.matrix().hcat(v_delta);
    let c = u_full.t_matmul(m).matmul(&v_full);
    let f = frob_norm(&c);
    f * f
}

/// Alternating exact maximization over `U_delta` (with `V` fixed) and
/// `V_delta` (with `U` fixed). With `v_first` the first half-step updates
/// `V_delta`, so only the `U_delta` seed matters. Returns the best pair seen
/// and its energy.
fn refine(
    m: &DenseMatrix,
    mt: &DenseMatrix,
    basis: &AnchoredBasis,
    mut u_delta: DenseMatrix,
    mut v_delta: DenseMatrix,
    v_first: bool,
) -> Result<(DenseMatrix, DenseMatrix, f64)> {
    let delta = basis.rank_increment;
    let ua = basis.u_anchor.matrix();
    let va = basis.v_anchor.matrix();
    let mut best = captured_energy(m, basis, &u_delta, &v_delta);
    if delta == 0 {
        return Ok((u_delta, v_delta, best));
    }
    let mut skip_u = v_first;
    for _ in 0..MAX_REFINE_SWEEPS {
        let prev = best;

        // U-step: maximize ||U_d^T (I - P_U) m V_full||.
        if !skip_u {
            let v_full = va.hcat(&v_delta);
            let g = remove_span(ua, &m.matmul(&v_full));
            let cand_u = clean_innovation(ua, &pad_cols(leading_left(&g, delta)?, delta))?;
            let e = captured_energy(m, basis, &cand_u, &v_delta);
            if e > best {
                best = e;
                u_delta = cand_u;
            }
        }
        skip_u = false;

        // V-step: maximize ||V_d^T (I - P_V) m^T U_full||.
        let u_full = ua.hcat(&u_delta);
        let h = remove_span(va, &mt.matmul(&u_full));
        let cand_v = clean_innovation(va, &pad_cols(leading_left(&h, delta)?, delta))?;
        let e = captured_energy(m, basis, &u_delta, &cand_v);
        if e > best {
            best = e;
            v_delta = cand_v;
        }

        if best - prev <= REFINE_TOL * best.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok((u_delta, v_delta, best))
}

/// `(I - Q Q^T) x`.
fn remove_span(q: &DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    if q.cols() == 0 {
        return x.clone();
    }
    x - &q.matmul(&q.t_matmul(x))
}

/// All `k`-element subsets of `0..n` in lexicographic order.
fn column_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Columns of `m` listed in `cols`, zero-padded where `m` is too narrow.
fn pick_columns(m: &DenseMatrix, cols: &[usize]) -> DenseMatrix {
    let rows = m.rows();
    let picked: Vec<Vec<f64>> = cols
        .iter()
        .map(|&c| if c < m.cols() { m.column(c) } else { vec![0.0; rows] })
        .collect();
    DenseMatrix::from_columns(rows, &picked)
}

fn pad_cols(m: DenseMatrix, k: usize) -> DenseMatrix {
    if m.cols() >= k {
        return m;
    }
    m.hcat(&DenseMatrix::zeros(m.rows(), k - m.cols()))
}

/// Anchored low-rank projection of `m`.
pub fn anchored_lowrank_proj(m: &DenseMatrix, basis: &AnchoredBasis) -> Result<AnchoredLowRank> {
    anchored_lowrank_proj_from(m, basis, None)
}

/// Anchored low-rank projection with an extra starting point taken from the
/// innovation directions of `warm` (typically the previous iterate). The
/// result captures at least as much energy as `warm`'s directions do on `m`.
pub fn anchored_lowrank_proj_from(
    m: &DenseMatrix,
    basis: &AnchoredBasis,
    warm: Option<&AnchoredLowRank>,
) -> Result<AnchoredLowRank> {
    check_shape(m, basis)?;
    let delta = basis.rank_increment;
    let (p, q) = m.shape();
    let room = (p - basis.anchor_rank()).min(q - basis.anchor_rank());
    // A warm start already guarantees no loss against the previous iterate,
    // so the extra seeds are only tried on cold calls.
    let extra = if basis.anchor_rank() > 0 && warm.is_none() {
        (room - delta).min(EXTRA_SEED_DIRECTIONS)
    } else {
        0
    };
    let want = delta + extra;
    let resid = truncated_svd(&basis.doubly_projected_residual(m), want)?;
    let (u0, v0) = residual_svd_start(&resid, basis)?;
    if delta == 0 {
        return Ok(assemble(m, basis, &u0, &v0));
    }
    let mt = m.transpose();
    let mut best = refine(m, &mt, basis, u0.clone(), v0.clone(), false)?;
    let mut consider = |cand: (DenseMatrix, DenseMatrix, f64)| {
        if cand.2 > best.2 {
            best = cand;
        }
    };

    if let Some(w) = warm {
        if w.anchor_rank() == basis.anchor_rank() && w.total_rank() == basis.anchor_rank() + delta {
            consider(refine(m, &mt, basis, w.u_innovation(), w.v_innovation(), false)?);
        }
    }

    if basis.anchor_rank() > 0 && warm.is_none() {
        // The energy is not jointly concave, so a few more seeds are tried:
        // every choice of `delta` among the leading singular directions of the one-sided residuals
        // (I - P_U) m and (I - P_V) m^T, and of the doubly projected one.
        let ua = basis.u_anchor.matrix();
        let va = basis.v_anchor.matrix();
        let left = truncated_svd(&remove_span(ua, m), want)?;
        let right = truncated_svd(&remove_span(va, &mt), want)?;
        for (k, cols) in column_subsets(want, delta).iter().enumerate() {
            let su = clean_innovation(ua, &pick_columns(left.u.matrix(), cols))?;
            consider(refine(m, &mt, basis, su, v0.clone(), true)?);
            let sv = clean_innovation(va, &pick_columns(right.u.matrix(), cols))?;
            consider(refine(m, &mt, basis, u0.clone(), sv, false)?);
            if k > 0 {
                let ru = clean_innovation(ua, &pick_columns(resid.u.matrix(), cols))?;
                let rv = clean_innovation(va, &pick_columns(resid.v.matrix(), cols))?;
                consider(refine(m, &mt, basis, ru, rv, false)?);
            }
        }
    }

    Ok(assemble(m, basis, &best.0, &best.1))
}

/// `anchor + H_budget(m - anchor)`.
pub fn sparse_edit_proj(m: &DenseMatrix, anchor_s0: &DenseMatrix, edit_budget: usize) -> Result<DenseMatrix> {
    if m.shape() != anchor_s0.shape() {
        return Err(Error::shape(format!(
            "sparse anchor is {}x{} but matrix is {}x{}",
            anchor_s0.rows(),
            anchor_s0.cols(),
            m.rows(),
            m.cols()
        )));
    }
    let edits = hard_threshold_topk(&(m - anchor_s0), edit_budget)?;
    Ok(anchor_s0 + &edits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{max_norm, orthonormalize_columns};
    use proptest::prelude::*;

    fn e1(n: usize) -> OrthoFactor {
        OrthoFactor::new(DenseMatrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 })).unwrap()
    }

    #[test]
    fn closed_form_delta_zero() {
        let basis = AnchoredBasis::new(e1(2), e1(2), 0).unwrap();
        let m = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let out = anchored_lowrank_proj(&m, &basis).unwrap();
        assert_eq!(out.value, DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap());
        assert_eq!(out.coeff, DenseMatrix::from_rows(&[[1.0]]).unwrap());
    }

    #[test]
    fn anchored_span_is_fixed_point() {
        let u = orthonormalize_columns(
            &DenseMatrix::from_rows(&[[1.0, 0.5], [0.2, 1.0], [-0.3, 0.4], [0.7, 0.1]]).unwrap(),
        )
        .unwrap();
        let v = orthonormalize_columns(
            &DenseMatrix::from_rows(&[[0.4, 1.0], [1.0, -0.2], [0.3, 0.3]]).unwrap(),
        )
        .unwrap();
        let c = DenseMatrix::from_rows(&[[2.0, -1.0], [0.5, 3.0]]).unwrap();
        let m = u.matrix().matmul(&c).matmul_t(v.matrix());
        let basis = AnchoredBasis::new(u, v, 0).unwrap();
        let out = anchored_lowrank_proj(&m, &basis).unwrap();
        assert!(out.value.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn empty_anchor_is_best_rank_k() {
        let basis = AnchoredBasis::empty(2, 2, 1).unwrap();
        let m = DenseMatrix::from_diag(&[3.0, 1.0]);
        let out = anchored_lowrank_proj(&m, &basis).unwrap();
        let oracle = truncated_svd(&m, 1).unwrap().reconstruct();
        assert!(out.value.max_abs_diff(&oracle) < 1e-14);
        assert!(out.value.max_abs_diff(&DenseMatrix::from_diag(&[3.0, 0.0])) < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(AnchoredBasis::new(e1(2), e1(3), 1).is_ok());
        assert!(AnchoredBasis::new(e1(2), e1(3), 2).is_err());
        assert!(AnchoredBasis::new(e1(2), OrthoFactor::empty(2), 0).is_err());
        let basis = AnchoredBasis::new(e1(2), e1(2), 1).unwrap();
        assert!(anchored_lowrank_proj(&DenseMatrix::zeros(3, 2), &basis).is_err());
        assert!(sparse_edit_proj(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(2, 3), 1).is_err());
    }

    #[test]
    fn innovation_orthogonal_even_when_residual_is_rank_deficient() {
        // Residual outside the anchor is zero: innovation must be completed
        // orthogonally to the anchor.
        let u = orthonormalize_columns(&DenseMatrix::from_rows(&[[1.0], [1.0], [1.0]]).unwrap()).unwrap();
        let m = u.matrix().matmul_t(u.matrix()).scale(2.0);
        let basis = AnchoredBasis::new(u.clone(), u.clone(), 2).unwrap();
        let out = anchored_lowrank_proj(&m, &basis).unwrap();
        assert!(max_norm(&out.u_innovation().t_matmul(u.matrix())) < 1e-10);
        assert!(max_norm(&out.v_innovation().t_matmul(u.matrix())) < 1e-10);
        assert!(OrthoFactor::new(out.u_full.matrix().clone()).is_ok());
        assert!(out.value.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn sparse_examples() {
        let m = DenseMatrix::from_rows(&[[5.0, 0.0], [0.0, 0.0]]).unwrap();
        let s0 = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(sparse_edit_proj(&m, &s0, 0).unwrap(), s0);
        assert_eq!(
            sparse_edit_proj(&m, &s0, 1).unwrap(),
            DenseMatrix::from_rows(&[[5.0, 0.0], [0.0, 2.0]]).unwrap()
        );
        let z = DenseMatrix::zeros(2, 2);
        let a = DenseMatrix::from_rows(&[[3.0, -5.0], [1.0, 2.0]]).unwrap();
        assert_eq!(sparse_edit_proj(&a, &z, 2).unwrap(), hard_threshold_topk(&a, 2).unwrap());
    }

    fn anchored_case() -> impl Strategy<Value = (DenseMatrix, AnchoredBasis)> {
        (0usize..3, 0usize..3).prop_flat_map(|(r1, delta)| {
            (
                prop::collection::vec(-5.0f64..5.0, 30),
                prop::collection::vec(-1.0f64..1.0, 6 * r1.max(1)),
                prop::collection::vec(-1.0f64..1.0, 5 * r1.max(1)),
            )
                .prop_map(move |(m, a, b)| {
                    let m = DenseMatrix::new(6, 5, m).unwrap();
                    let u = orthonormalize_columns(&DenseMatrix::new(6, r1.max(1), a).unwrap()).unwrap();
                    let v = orthonormalize_columns(&DenseMatrix::new(5, r1.max(1), b).unwrap()).unwrap();
                    let (u, v) = if r1 == 0 {
                        (OrthoFactor::empty(6), OrthoFactor::empty(5))
                    } else {
                        (u, v)
                    };
                    (m, AnchoredBasis::new(u, v, delta).unwrap())
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lowrank_is_idempotent((m, basis) in anchored_case()) {
            let once = anchored_lowrank_proj(&m, &basis).unwrap();
            let twice = anchored_lowrank_proj(&once.value, &basis).unwrap();
            prop_assert!(twice.value.max_abs_diff(&once.value) <= 1e-9 * (1.0 + frob_norm(&m)));
        }

        #[test]
        fn factors_are_orthonormal_and_keep_anchor((m, basis) in anchored_case()) {
            let out = anchored_lowrank_proj(&m, &basis).unwrap();
            let r1 = basis.anchor_rank();
            prop_assert!(OrthoFactor::new(out.u_full.matrix().clone()).is_ok());
            prop_assert!(OrthoFactor::new(out.v_full.matrix().clone()).is_ok());
            prop_assert_eq!(out.u_full.matrix().columns(0, r1), basis.u_anchor().matrix().clone());
            prop_assert_eq!(out.v_full.matrix().columns(0, r1), basis.v_anchor().matrix().clone());
            prop_assert_eq!(out.total_rank(), r1 + basis.rank_increment());
            prop_assert!(max_norm(&out.u_innovation().t_matmul(basis.u_anchor().matrix())) < 1e-10);
            prop_assert!(max_norm(&out.v_innovation().t_matmul(basis.v_anchor().matrix())) < 1e-10);
        }

        #[test]
        fn refinement_never_worse_than_residual_start((m, basis) in anchored_case()) {
            let refined = anchored_lowrank_proj(&m, &basis).unwrap();
            let start = residual_svd_projection(&m, &basis).unwrap();
            let err = |x: &DenseMatrix| frob_norm(&(&m - x));
            prop_assert!(err(&refined.value) <= err(&start.value) + 1e-10 * (1.0 + frob_norm(&m)));
        }

        #[test]
        fn sparse_is_idempotent_and_anchored(
            m in prop::collection::vec(-5.0f64..5.0, 12),
            s0 in prop::collection::vec(-1.0f64..1.0, 12),
            budget in 0usize..13,
        ) {
            let m = DenseMatrix::new(3, 4, m).unwrap();
            let s0 = DenseMatrix::new(3, 4, s0).unwrap();
            let once = sparse_edit_proj(&m, &s0, budget).unwrap();
            prop_assert_eq!(sparse_edit_proj(&once, &s0, budget).unwrap(), once.clone());
            let changed = (0..3)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .filter(|&(i, j)| once.get(i, j) != s0.get(i, j))
                .count();
            prop_assert!(changed <= budget);
        }
    }
}
